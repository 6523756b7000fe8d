#pragma once

#include <functional>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "worcs/session.hpp"

namespace worcs::service {

struct HttpOptions {
  std::string host = "127.0.0.1";
  int port = 0;                    // 0 = pick a free port
  std::string cors_origin = "*";   // no auth in v1: bind to localhost unless you mean it
};

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_reply(httplib::Response& res, const Reply& r) {
  if (!r.etag.empty()) res.set_header("ETag", r.etag);
  if (r.replayed) res.set_header("Idempotent-Replay", "true");
  if (r.status == 304) {
    res.status = 304;
    return;
  }
  send_json(res, r.status, r.body);
}

inline nlohmann::json parse_body(const httplib::Request& req, int status) {
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception&) {
    throw ApiError(status, "invalid_body", "request body is not valid JSON");
  }
}

template <class F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ApiError& e) {
      send_json(res, e.status(), e.body());
    } catch (const std::exception& e) {
      send_json(res, 500, {{"code", "internal"}, {"message", e.what()}});
    }
  };
}

}  // namespace detail

/// Registers the /v1 routes on `server`.
inline void install_routes(httplib::Server& server, SessionStore& store, const HttpOptions& opt) {
  server.set_default_headers({{"Access-Control-Allow-Origin", opt.cors_origin},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type, If-None-Match"},
                              {"Access-Control-Expose-Headers", "ETag, Idempotent-Replay"}});

  server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server.Get("/v1/healthz", detail::guarded([&store](const httplib::Request&, httplib::Response& res) {
               detail::send_json(res, 200, {{"status", "ok"}, {"v", kSchemaVersion}, {"sessions", store.size()}});
             }));

  server.Post("/v1/sessions", detail::guarded([&store](const httplib::Request& req, httplib::Response& res) {
                detail::send_reply(res, store.create(detail::parse_body(req, 400)));
              }));

  server.Post(R"(/v1/sessions/([^/]+)/observations)",
              detail::guarded([&store](const httplib::Request& req, httplib::Response& res) {
                detail::send_reply(res, store.post(req.matches[1], detail::parse_body(req, 422)));
              }));

  server.Get(R"(/v1/sessions/([^/]+))", detail::guarded([&store](const httplib::Request& req, httplib::Response& res) {
               std::optional<std::uint64_t> since;
               if (req.has_param("since")) {
                 const auto v = parse_count(req.get_param_value("since"));
                 if (!v) throw ApiError(400, "invalid_query", "since must be a nonnegative integer", "since");
                 since = *v;
               }
               detail::send_reply(res, store.get(req.matches[1], since, req.get_header_value("If-None-Match")));
             }));

  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty() && res.status == 404) detail::send_json(res, 404, {{"code", "not_found"}, {"message", "no such route"}});
  });
}

/// A bound (not yet listening) server. bind() returns the port or throws.
class HttpService {
 public:
  HttpService(SessionStore& store, HttpOptions opt) : store_(store), opt_(std::move(opt)) {
    install_routes(server_, store_, opt_);
    // SO_REUSEADDR only: a port held by another process must fail to bind.
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
  }

  int bind() {
    if (opt_.port == 0) {
      port_ = server_.bind_to_any_port(opt_.host);
    } else {
      port_ = server_.bind_to_port(opt_.host, opt_.port) ? opt_.port : -1;
    }
    if (port_ <= 0) throw std::runtime_error("cannot bind " + opt_.host + ":" + std::to_string(opt_.port));
    return port_;
  }

  /// Blocks until stop().
  bool listen() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  bool running() const { return server_.is_running(); }
  void wait_until_ready() const { server_.wait_until_ready(); }
  int port() const noexcept { return port_; }

 private:
  SessionStore& store_;
  HttpOptions opt_;
  httplib::Server server_;
  int port_ = -1;
};

}  // namespace worcs::service
