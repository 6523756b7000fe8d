#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include <json.hpp>

#include "worcs/monitor.hpp"
#include "worcs/random.hpp"

namespace worcs::service {

/// An error destined for an HTTP response body {code, message, field?}.
class ApiError : public std::runtime_error {
 public:
  ApiError(int status, std::string code, const std::string& message, std::string field = {})
      : std::runtime_error(message), status_(status), code_(std::move(code)), field_(std::move(field)) {}

  int status() const noexcept { return status_; }
  const std::string& code() const noexcept { return code_; }
  const std::string& field() const noexcept { return field_; }

  nlohmann::json body() const {
    nlohmann::json j{{"code", code_}, {"message", what()}};
    if (!field_.empty()) j["field"] = field_;
    return j;
  }

 private:
  int status_;
  std::string code_;
  std::string field_;
};

struct Reply {
  int status = 200;
  nlohmann::json body;
  std::string etag;
  bool replayed = false;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Thread-safe registry of sessions with optional persistence.
///
/// Persistence keeps two files: `<state>` is a checkpoint (full JSON,
/// replaced atomically) and `<state>.log` an append-only JSON-lines log of
/// creations and observations since that checkpoint. Snapshots are never
/// stored; they are recomputed by replaying observations.
class SessionStore {
 public:
  struct Options {
    std::size_t max_sessions = 10'000;
    std::optional<std::filesystem::path> state_file;
    std::size_t checkpoint_every = 256;  // log records between checkpoints
  };

  SessionStore() : SessionStore(Options{}) {}

  explicit SessionStore(Options opt) : opt_(std::move(opt)) {
    std::random_device rd;
    id_gen_ = SplitMix64((static_cast<std::uint64_t>(rd()) << 32) ^ rd() ^
                         static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()));
    if (opt_.state_file) restore();
  }

  ~SessionStore() {
    try {
      flush();
    } catch (...) {
    }
  }

  SessionStore(const SessionStore&) = delete;
  SessionStore& operator=(const SessionStore&) = delete;

  std::size_t size() const {
    std::shared_lock lock(map_mu_);
    return sessions_.size();
  }

  Reply create(const nlohmann::json& config_json) {
    MonitorConfig cfg;
    std::unique_ptr<Monitor> monitor;
    try {
      cfg = monitor_config_from_json(config_json);
      monitor = std::make_unique<Monitor>(cfg);
    } catch (const ConfigError& e) {
      throw ApiError(400, "invalid_config", e.what(), e.field());
    } catch (const DomainError& e) {
      throw ApiError(400, "invalid_config", e.what());
    }
    auto session = std::make_shared<Session>();
    session->created_at = utc_timestamp();
    session->monitor = std::move(monitor);
    {
      std::shared_lock persist(persist_mu_);
      std::optional<std::string> evicted;
      {
        std::unique_lock lock(map_mu_);
        if (sessions_.size() >= opt_.max_sessions) evicted = evict_one_locked();
        do session->id = new_id_locked();
        while (sessions_.count(session->id));
        sessions_[session->id] = session;
        touch_locked(session->id);
      }
      if (evicted) append_log({{"op", "evict"}, {"id", *evicted}});
      append_log({{"op", "create"}, {"id", session->id}, {"created_at", session->created_at}, {"config", to_json(cfg)}});
    }
    maybe_checkpoint();
    std::lock_guard slock(session->mu);
    Reply r;
    r.status = 201;
    r.body = {{"id", session->id}, {"created_at", session->created_at}, {"config", to_json(cfg)},
              {"status", session->monitor->status_json()}, {"snapshot", snapshot_json(*session, session->monitor->latest())}};
    r.etag = etag(*session);
    return r;
  }

  /// Appends one observation. A repeated idempotency key returns the stored
  /// body without touching state.
  Reply post(const std::string& id, const nlohmann::json& body) {
    if (!body.is_object()) throw ApiError(422, "invalid_body", "body must be a JSON object");
    if (!body.contains("value")) throw ApiError(422, "invalid_body", "value is required", "value");
    const auto& v = body["value"];
    double x;
    if (v.is_boolean()) {
      x = v.get<bool>() ? 1.0 : 0.0;
    } else if (v.is_number()) {
      x = v.get<double>();
    } else {
      throw ApiError(422, "out_of_domain", "value must be a number", "value");
    }
    std::optional<std::string> key;
    if (body.contains("idempotency_key") && !body["idempotency_key"].is_null()) {
      if (!body["idempotency_key"].is_string()) throw ApiError(422, "invalid_body", "idempotency_key must be a string", "idempotency_key");
      key = body["idempotency_key"].get<std::string>();
    }
    Reply r;
    {
      std::shared_lock persist(persist_mu_);
      auto session = find(id);
      std::lock_guard slock(session->mu);
      if (key) {
        if (auto it = session->idempotent.find(*key); it != session->idempotent.end()) {
          if (it->second.value != x) {
            throw ApiError(422, "idempotency_conflict", "idempotency key reused with a different value", "idempotency_key");
          }
          r.body = nlohmann::json::parse(it->second.body);
          r.etag = etag(*session);
          r.replayed = true;
          return r;
        }
      }
      r.body = apply(*session, x, key);
      r.etag = etag(*session);
      nlohmann::json rec{{"op", "obs"}, {"id", id}, {"value", x}};
      if (key) rec["key"] = *key;
      append_log(rec);
    }
    {
      std::unique_lock lock(map_mu_);
      if (sessions_.count(id)) touch_locked(id);
    }
    maybe_checkpoint();
    return r;
  }

  /// Config, status and snapshots with t > since (all of them when since is
  /// absent). 304 when the client's ETag is current or nothing is newer.
  Reply get(const std::string& id, std::optional<std::uint64_t> since, const std::string& if_none_match = {}) {
    auto session = find(id);
    std::lock_guard slock(session->mu);
    Reply r;
    r.etag = etag(*session);
    const auto& m = *session->monitor;
    if ((!if_none_match.empty() && if_none_match == r.etag) || (since && *since >= m.t())) {
      r.status = 304;
      return r;
    }
    auto snaps = nlohmann::json::array();
    for (const auto& s : m.history()) {
      if (!since || s.t > *since) snaps.push_back(snapshot_json(*session, s));
    }
    r.body = {{"id", id}, {"created_at", session->created_at}, {"config", to_json(m.config())},
              {"status", m.status_json()}, {"snapshots", snaps}};
    return r;
  }

  /// Writes the checkpoint atomically and truncates the log.
  void flush() {
    if (!opt_.state_file) return;
    std::unique_lock persist(persist_mu_);
    checkpoint_locked();
  }

  /// Snapshot history of one session (for tests and the CLI).
  std::vector<CsSnapshot> history(const std::string& id) {
    auto session = find(id);
    std::lock_guard slock(session->mu);
    return session->monitor->history();
  }

 private:
  struct Idempotent {
    double value = 0.0;
    std::string body;
  };

  struct Session {
    std::string id;
    std::string created_at;
    std::mutex mu;
    std::unique_ptr<Monitor> monitor;
    std::unordered_map<std::string, Idempotent> idempotent;
    std::optional<std::list<std::string>::iterator> lru;
  };

  static std::string etag(const Session& s) {
    return "\"" + s.id + ":" + std::to_string(s.monitor->t()) + "\"";
  }

  static nlohmann::json snapshot_json(const Session& s, const CsSnapshot& snap) {
    return to_json(snap, s.monitor->config().emit_set);
  }

  /// Caller holds the session mutex.
  nlohmann::json apply(Session& s, double x, const std::optional<std::string>& key) {
    auto& m = *s.monitor;
    try {
      m.check(x);
    } catch (const StateError& e) {
      throw ApiError(409, "exhausted", e.what());
    } catch (const DomainError& e) {
      throw ApiError(422, "out_of_domain", e.what(), "value");
    }
    const auto& snap = m.observe(x);
    nlohmann::json body{{"id", s.id}, {"status", m.status_json()}, {"snapshot", snapshot_json(s, snap)}};
    if (key) s.idempotent[*key] = Idempotent{x, body.dump()};
    return body;
  }

  std::shared_ptr<Session> find(const std::string& id) {
    std::shared_lock lock(map_mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ApiError(404, "not_found", "no session with id \"" + id + "\"");
    return it->second;
  }

  std::string new_id_locked() {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(id_gen_()));
    return buf;
  }

  void touch_locked(const std::string& id) {
    auto& s = *sessions_.at(id);
    if (s.lru) lru_.erase(*s.lru);
    lru_.push_front(id);
    s.lru = lru_.begin();
  }

  /// Drops the least recently used exhausted session. Active and stopped
  /// sessions are never evicted.
  std::string evict_one_locked() {
    for (auto it = lru_.rbegin(); it != lru_.rend(); ++it) {
      auto s = sessions_.at(*it);
      std::lock_guard slock(s->mu);
      if (s->monitor->exhausted()) {
        const auto id = *it;
        lru_.erase(std::next(it).base());
        sessions_.erase(id);
        return id;
      }
    }
    throw ApiError(503, "capacity", "session limit of " + std::to_string(opt_.max_sessions) +
                                        " reached and no exhausted session can be evicted");
  }

  // ---- persistence -------------------------------------------------------

  std::filesystem::path log_path() const { return opt_.state_file->string() + ".log"; }

  // Lock order: persist_mu_, map_mu_, session mutex, log_mu_.

  /// Caller holds persist_mu_ (shared) and, for observations, the session mutex.
  void append_log(const nlohmann::json& rec) {
    if (!opt_.state_file) return;
    std::lock_guard log_lock(log_mu_);
    if (!log_.is_open()) log_.open(log_path(), std::ios::app | std::ios::binary);
    log_ << rec.dump() << '\n';
    log_.flush();
    ++log_records_;
  }

  void maybe_checkpoint() {
    if (!opt_.state_file) return;
    {
      std::lock_guard log_lock(log_mu_);
      if (log_records_ < opt_.checkpoint_every) return;
    }
    flush();
  }

  /// Caller holds persist_mu_ exclusively, so no mutation is in flight.
  void checkpoint_locked() {
    nlohmann::json sessions = nlohmann::json::array();
    std::vector<std::shared_ptr<Session>> all;
    {
      std::shared_lock lock(map_mu_);
      // Oldest first so replay reproduces the LRU order.
      for (auto it = lru_.rbegin(); it != lru_.rend(); ++it) all.push_back(sessions_.at(*it));
    }
    for (const auto& s : all) {
      std::lock_guard slock(s->mu);
      nlohmann::json keys = nlohmann::json::object();
      // Keys map to their observation index; bodies are recomputed on restore.
      for (const auto& [k, v] : s->idempotent) keys[k] = nlohmann::json::parse(v.body)["snapshot"]["t"];
      sessions.push_back({{"id", s->id},
                          {"created_at", s->created_at},
                          {"config", to_json(s->monitor->config())},
                          {"observations", s->monitor->observations()},
                          {"idempotency_keys", keys}});
    }
    const nlohmann::json doc{{"v", kSchemaVersion}, {"sessions", sessions}};
    const auto tmp = opt_.state_file->string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << doc.dump() << '\n';
      out.flush();
      if (!out) throw IntegrityError("cannot write checkpoint " + tmp);
    }
    std::filesystem::rename(tmp, *opt_.state_file);
    std::lock_guard log_lock(log_mu_);
    if (log_.is_open()) log_.close();
    std::ofstream(log_path(), std::ios::binary | std::ios::trunc);
    log_records_ = 0;
  }

  void restore_session(const std::string& id, const std::string& created_at, const nlohmann::json& config) {
    auto s = std::make_shared<Session>();
    s->id = id;
    s->created_at = created_at;
    s->monitor = std::make_unique<Monitor>(monitor_config_from_json(config));
    sessions_[id] = s;
    touch_locked(id);
  }

  void replay_observation(const std::string& id, double x, const std::optional<std::string>& key) {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return;  // evicted after logging
    apply(*it->second, x, key);
    touch_locked(id);
  }

  void restore() {
    const auto& path = *opt_.state_file;
    std::unique_lock lock(map_mu_);
    if (std::filesystem::exists(path)) {
      std::ifstream in(path, std::ios::binary);
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw IntegrityError("state file " + path.string() + " is not valid JSON: " + e.what());
      }
      for (const auto& js : doc.at("sessions")) {
        const auto id = js.at("id").get<std::string>();
        restore_session(id, js.at("created_at").get<std::string>(), js.at("config"));
        std::map<std::uint64_t, std::string> key_at;
        const auto keys = js.value("idempotency_keys", nlohmann::json::object());
        for (const auto& [k, t] : keys.items()) key_at[t.get<std::uint64_t>()] = k;
        std::uint64_t t = 0;
        for (const auto& x : js.at("observations")) {
          ++t;
          auto k = key_at.find(t);
          replay_observation(id, x.get<double>(), k == key_at.end() ? std::nullopt : std::optional<std::string>(k->second));
        }
      }
    }
    if (std::filesystem::exists(log_path())) {
      std::ifstream in(log_path(), std::ios::binary);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
          rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
          break;  // torn final line from a crash mid-write
        }
        const auto op = rec.at("op").get<std::string>();
        const auto id = rec.at("id").get<std::string>();
        if (op == "create") {
          restore_session(id, rec.at("created_at").get<std::string>(), rec.at("config"));
        } else if (op == "evict") {
          if (auto it = sessions_.find(id); it != sessions_.end()) {
            if (it->second->lru) lru_.erase(*it->second->lru);
            sessions_.erase(it);
          }
        } else if (op == "obs") {
          replay_observation(id, rec.at("value").get<double>(),
                             rec.contains("key") ? std::optional<std::string>(rec["key"].get<std::string>()) : std::nullopt);
        }
      }
    }
    lock.unlock();
    flush();
  }

  Options opt_;
  mutable std::shared_mutex map_mu_;
  std::unordered_map<std::string, std::shared_ptr<Session>> sessions_;
  std::list<std::string> lru_;  // most recent first
  std::shared_mutex persist_mu_;
  SplitMix64 id_gen_{0};
  std::mutex log_mu_;
  std::ofstream log_;
  std::size_t log_records_ = 0;
};

}  // namespace worcs::service
