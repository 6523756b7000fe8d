// worcs: command-line front end for without-replacement confidence sequences.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <pthread.h>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "worcs/bounded.hpp"
#include "worcs/http.hpp"
#include "worcs/inference.hpp"
#include "worcs/monitor.hpp"
#include "worcs/session.hpp"
#include "worcs/sim.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitInternal = 3;

/// Validation error with an input line number attached.
struct LineError : worcs::DomainError {
  LineError(std::size_t line, const std::string& msg) : worcs::DomainError("line " + std::to_string(line) + ": " + msg) {}
};

std::string flag_name(const std::string& field) {
  if (field.empty()) return {};
  std::string f = field;
  for (auto& c : f) {
    if (c == '_') c = '-';
  }
  return "--" + f;
}

/// Non-empty, non-comment lines with their 1-based line numbers.
std::vector<std::pair<std::size_t, std::string>> read_lines(const std::string& input) {
  std::ifstream file;
  std::istream* in = &std::cin;
  if (!input.empty() && input != "-") {
    file.open(input);
    if (!file) throw worcs::DomainError("cannot open input file \"" + input + "\"");
    in = &file;
  }
  std::vector<std::pair<std::size_t, std::string>> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(*in, line)) {
    ++n;
    const auto t = worcs::trim(line);
    if (t.empty() || t.front() == '#') continue;
    out.emplace_back(n, std::string(t));
  }
  return out;
}

double parse_value(std::size_t line, const std::string& text) {
  const auto v = worcs::parse_double(text);
  if (!v || !std::isfinite(*v)) throw LineError(line, "malformed observation \"" + text + "\"");
  return *v;
}

std::vector<double> read_values(const std::string& input) {
  std::vector<double> out;
  for (const auto& [n, text] : read_lines(input)) out.push_back(parse_value(n, text));
  return out;
}

void emit(const nlohmann::json& j) {
  std::cout << j.dump() << '\n';
}

// ---------------------------------------------------------------------------
// stream
// ---------------------------------------------------------------------------

struct StreamArgs {
  worcs::MonitorConfig cfg;
  std::vector<double> prior;
  std::string input;
  std::string format = "json";
  bool no_intersect = false;
};

void add_monitor_flags(CLI::App* cmd, StreamArgs& a) {
  auto& c = a.cfg;
  cmd->add_option("--method", c.method,
                  "ppr: prior-posterior-ratio set for the count of ones (binary data)\n"
                  "dirmult: multivariate prior-posterior-ratio set for 2 or 3 category counts\n"
                  "hoeffding: without-replacement Hoeffding confidence sequence for a bounded mean\n"
                  "eb: without-replacement empirical-Bernstein confidence sequence for a bounded mean\n"
                  "bm: Hoeffding-Serfling baseline band (fixed tuning time)")
      ->required()
      ->check(CLI::IsMember({"ppr", "dirmult", "hoeffding", "eb", "bm"}));
  cmd->add_option("--N,--population-size", c.N, "population size N (items sampled without replacement)")->required();
  cmd->add_option("--alpha", c.alpha, "miscoverage level; sets are (1 - alpha) confidence sequences")->default_val(0.05);
  cmd->add_option("--lower", c.lower, "lower bound of every population value (bounded methods)");
  cmd->add_option("--upper", c.upper, "upper bound of every population value (bounded methods)");
  cmd->add_option("--schedule", c.schedule,
                  "predictable betting sequence lambda_t:\n"
                  "  spread: time-uniform default (~1/sqrt(t log t)), capped at 1/c (hoeffding) or 1/(2c) (eb)\n"
                  "  fixed_opt: constant lambda minimising the Hoeffding width at --t0\n"
                  "  eb_t0: variance-adaptive lambda tuned for --t0\n"
                  "  constant: lambda = --lambda at every step");
  cmd->add_option("--t0", c.t0, "tuning time for fixed_opt / eb_t0; for bm, the time n its band is tuned at (default N/2)");
  cmd->add_option("--lambda", c.lambda, "constant betting fraction for --schedule constant");
  cmd->add_option("--prior-a", c.prior_a, "beta working-prior parameter a for ppr (default 1)");
  cmd->add_option("--prior-b", c.prior_b, "beta working-prior parameter b for ppr (default 1)");
  cmd->add_option("--prior", a.prior, "Dirichlet working-prior concentration per category (dirmult)")->delimiter(',');
  cmd->add_option("--categories", c.categories, "number of categories for dirmult (2 or 3); observations are 0..K-1");
  cmd->add_option("--null", c.null,
                  "composite null for anytime p-values and e-values: count_leq:D, count_geq:D, count_in:a,b,...,\n"
                  "mean_leq:m or mean_geq:m");
  cmd->add_option("--stop-when", c.stop,
                  "optional stopping rule (repeatable): reject_null (anytime p <= alpha), excludes:v (the CS excludes v),\n"
                  "width_below:w (the CS is narrower than w)");
  cmd->add_flag("--no-intersect", a.no_intersect, "report the raw set at each t instead of the running intersection");
  cmd->add_flag("--emit-set", c.emit_set, "include the full set members (ppr) or lattice points (dirmult) in every snapshot");
}

int run_stream(StreamArgs& a) {
  a.cfg.intersect = !a.no_intersect;
  a.cfg.prior = a.prior;
  worcs::Monitor monitor(a.cfg);
  const bool csv = a.format == "csv";
  if (csv) std::cout << worcs::snapshot_csv_header() << '\n';
  for (const auto& [line, text] : read_lines(a.input)) {
    const double x = parse_value(line, text);
    try {
      monitor.check(x);
    } catch (const std::exception& e) {
      throw LineError(line, e.what());
    }
    const auto& snap = monitor.observe(x);
    if (csv) {
      std::cout << worcs::snapshot_csv_row(snap) << '\n';
    } else {
      emit(worcs::to_json(snap, a.cfg.emit_set));
    }
    if (snap.stop) {
      if (!csv) emit({{"v", worcs::kSchemaVersion}, {"type", "stop"}, {"reason", snap.stop->reason}, {"t", snap.stop->t}});
      break;
    }
  }
  std::cout.flush();
  return kExitOk;
}

// ---------------------------------------------------------------------------
// ci
// ---------------------------------------------------------------------------

struct CiArgs {
  std::string method;
  std::uint64_t N = 0;
  double lower = 0.0;
  double upper = 1.0;
  double alpha = 0.05;
  std::optional<std::uint64_t> perm_seed;
  std::string input;
};

int run_ci(const CiArgs& a) {
  const auto data = read_values(a.input);
  worcs::MeanInterval ci;
  if (a.method == "eb") {
    if (!a.perm_seed) throw worcs::ConfigError("perm_seed", "eb intervals permute the sample and need --perm-seed");
    ci = worcs::eb_ci(data, a.N, a.lower, a.upper, a.alpha, *a.perm_seed);
  } else {
    if (a.perm_seed) throw worcs::ConfigError("perm_seed", "--perm-seed only applies to --method eb");
    ci = worcs::hoeffding_ci(data, a.N, a.lower, a.upper, a.alpha);
  }
  emit({{"v", worcs::kSchemaVersion},
        {"method", a.method},
        {"n", data.size()},
        {"N", a.N},
        {"alpha", a.alpha},
        {"center", ci.center},
        {"half_width", ci.half_width},
        {"lo", ci.interval.lo},
        {"hi", ci.interval.hi}});
  return kExitOk;
}

// ---------------------------------------------------------------------------
// pvalue
// ---------------------------------------------------------------------------

int run_pvalue(StreamArgs& a) {
  if (!a.cfg.null) throw worcs::ConfigError("null", "pvalue needs --null");
  a.cfg.intersect = !a.no_intersect;
  worcs::Monitor monitor(a.cfg);
  std::optional<std::uint64_t> crossing;
  for (const auto& [line, text] : read_lines(a.input)) {
    const double x = parse_value(line, text);
    try {
      monitor.check(x);
    } catch (const std::exception& e) {
      throw LineError(line, e.what());
    }
    const auto& s = monitor.observe(x);
    if (!crossing && s.p_value && *s.p_value <= a.cfg.alpha) crossing = s.t;
  }
  const auto& s = monitor.latest();
  nlohmann::json j{{"v", worcs::kSchemaVersion}, {"method", a.cfg.method}, {"null", *a.cfg.null}, {"t", s.t},
                   {"alpha", a.cfg.alpha}, {"p_value", worcs::detail::number(s.p_value.value_or(1.0))},
                   {"e_value", worcs::detail::number(s.e_value.value_or(1.0))}};
  j["first_crossing_t"] = crossing ? nlohmann::json(*crossing) : nlohmann::json(nullptr);
  emit(j);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// simexp
// ---------------------------------------------------------------------------

struct SimArgs {
  std::string scenario;
  std::string config_path;
  std::string out = "results";
  std::optional<std::uint64_t> replications;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> parallelism;
  std::optional<std::uint64_t> N;
  std::optional<double> alpha;
};

int run_simexp(const SimArgs& a) {
  nlohmann::json j = nlohmann::json::object();
  if (!a.config_path.empty()) {
    std::ifstream in(a.config_path);
    if (!in) throw worcs::DomainError("cannot open config \"" + a.config_path + "\"");
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw worcs::DomainError("config \"" + a.config_path + "\" is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw worcs::DomainError("config must be a JSON object");
  }
  auto set = [&](const char* key, const auto& flag) {
    if (!flag) return;
    const nlohmann::json v = *flag;
    if (j.contains(key) && j[key] != v) {
      throw worcs::ConfigError(key, std::string("--") + key + " conflicts with the config file value " + j[key].dump());
    }
    j[key] = v;
  };
  if (j.contains("scenario") && j["scenario"] != a.scenario) {
    throw worcs::ConfigError("scenario", "scenario argument conflicts with the config file");
  }
  j["scenario"] = a.scenario;
  set("replications", a.replications);
  set("seed", a.seed);
  set("parallelism", a.parallelism);
  set("N", a.N);
  set("alpha", a.alpha);
  const auto cfg = worcs::sim::config_from_json(j);
  const auto result = worcs::sim::run_experiment(cfg);
  worcs::sim::write_outputs(result, a.out);
  emit(result.manifest());
  for (const auto& c : result.checks) {
    std::fprintf(stderr, "%s %s: %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// serve
// ---------------------------------------------------------------------------

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string state_file;
  std::size_t max_sessions = 10'000;
  std::string cors_origin = "*";
};

int run_serve(const ServeArgs& a) {
  // Block termination signals in every thread; a dedicated thread waits for them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGTERM);
  sigaddset(&signals, SIGINT);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  worcs::service::SessionStore::Options opt;
  opt.max_sessions = a.max_sessions;
  if (!a.state_file.empty()) opt.state_file = a.state_file;
  worcs::service::SessionStore store(opt);
  worcs::service::HttpService service(store, {a.host, a.port, a.cors_origin});
  int port;
  try {
    port = service.bind();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "worcs serve: %s\n", e.what());
    return kExitUsage;
  }
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    service.stop();
  });
  std::thread server([&] { service.listen(); });
  service.wait_until_ready();
  emit({{"v", worcs::kSchemaVersion}, {"event", "ready"}, {"host", a.host}, {"port", port}});
  std::cout.flush();
  server.join();
  store.flush();
  if (waiter.joinable()) {
    // The server only stops via the waiter, so it has already returned.
    waiter.join();
  }
  emit({{"v", worcs::kSchemaVersion}, {"event", "stopped"}, {"sessions", store.size()}});
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"worcs: anytime-valid confidence sequences for sampling without replacement"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "print help for every verb");

  StreamArgs stream_args;
  auto* stream = app.add_subcommand("stream", "read observations one per line and emit one snapshot per observation");
  add_monitor_flags(stream, stream_args);
  stream->add_option("--input", stream_args.input, "observation file, one value per line (default: stdin)");
  stream->add_option("--format", stream_args.format, "json (NDJSON, default) or csv (flat fields only)")
      ->check(CLI::IsMember({"json", "csv"}));

  CiArgs ci_args;
  auto* ci = app.add_subcommand("ci", "fixed-sample confidence interval for a bounded mean from a finished sample");
  ci->add_option("--method", ci_args.method,
                 "hoeffding: without-replacement Hoeffding interval (constant lambda, width-optimal at n)\n"
                 "eb: empirical-Bernstein interval from the sequential construction tuned for n")
      ->required()
      ->check(CLI::IsMember({"hoeffding", "eb"}));
  ci->add_option("--N,--population-size", ci_args.N, "population size N")->required();
  ci->add_option("--lower", ci_args.lower, "lower bound of population values")->default_val(0.0);
  ci->add_option("--upper", ci_args.upper, "upper bound of population values")->default_val(1.0);
  ci->add_option("--alpha", ci_args.alpha, "miscoverage level")->default_val(0.05);
  ci->add_option("--perm-seed", ci_args.perm_seed, "seed of the random permutation the eb interval feeds the sample in");
  ci->add_option("--input", ci_args.input, "sample file, one value per line (default: stdin)");

  StreamArgs pv_args;
  auto* pvalue = app.add_subcommand("pvalue", "anytime-valid p-value and e-value for a composite null after the data");
  add_monitor_flags(pvalue, pv_args);
  pvalue->add_option("--input", pv_args.input, "observation file, one value per line (default: stdin)");

  SimArgs sim_args;
  auto* simexp = app.add_subcommand("simexp", "simulation experiments");
  simexp->require_subcommand(1);
  auto* simrun = simexp->add_subcommand("run", "run one scenario and write <out>/<scenario>.csv and .manifest.json");
  std::vector<std::string> scenario_names;
  for (const auto& [_, name] : worcs::sim::scenario_names()) scenario_names.push_back(name);
  simrun->add_option("scenario", sim_args.scenario, "scenario name")->required()->check(CLI::IsMember(scenario_names));
  simrun->add_option("--config", sim_args.config_path, "experiment config JSON (flags must agree with it)");
  simrun->add_option("--out", sim_args.out, "output directory")->default_val("results");
  simrun->add_option("--replications", sim_args.replications, "Monte-Carlo replications (default per scenario)");
  simrun->add_option("--seed", sim_args.seed, "master seed; fully determines every replication");
  simrun->add_option("--parallelism", sim_args.parallelism, "worker threads (0 = all cores); results do not depend on it");
  simrun->add_option("--N", sim_args.N, "population size");
  simrun->add_option("--alpha", sim_args.alpha, "miscoverage level");

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "HTTP session service under /v1 (no authentication: bind to localhost)");
  serve->add_option("--host", serve_args.host, "interface to bind")->default_val("127.0.0.1");
  serve->add_option("--port", serve_args.port, "port; 0 picks a free one (printed on the readiness line)")->default_val(8080);
  serve->add_option("--state-file", serve_args.state_file, "checkpoint file; <file>.log holds the observation log");
  serve->add_option("--max-sessions", serve_args.max_sessions, "session cap; least recently used exhausted sessions are evicted")
      ->default_val(10'000);
  serve->add_option("--cors-origin", serve_args.cors_origin, "Access-Control-Allow-Origin value")->default_val("*");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*stream) return run_stream(stream_args);
    if (*ci) return run_ci(ci_args);
    if (*pvalue) return run_pvalue(pv_args);
    if (*simrun) return run_simexp(sim_args);
    if (*serve) return run_serve(serve_args);
  } catch (const worcs::ConfigError& e) {
    std::cout.flush();
    const auto flag = flag_name(e.field());
    std::fprintf(stderr, "worcs: %s%s%s\n", flag.c_str(), flag.empty() ? "" : ": ", e.what());
    return kExitUsage;
  } catch (const worcs::DomainError& e) {
    std::cout.flush();
    std::fprintf(stderr, "worcs: %s\n", e.what());
    return kExitUsage;
  } catch (const worcs::StateError& e) {
    std::cout.flush();
    std::fprintf(stderr, "worcs: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cout.flush();
    std::fprintf(stderr, "worcs: internal error: %s\n", e.what());
    return kExitInternal;
  }
  return kExitUsage;
}
