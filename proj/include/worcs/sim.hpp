#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "worcs/bounded.hpp"
#include "worcs/inference.hpp"
#include "worcs/population.hpp"
#include "worcs/ppr.hpp"
#include "worcs/random.hpp"

#ifndef WORCS_GIT_DESCRIBE
#define WORCS_GIT_DESCRIBE "unknown"
#endif

namespace worcs::sim {

// Desk-scale reproductions of the experiments: coverage, width comparisons,
// the four worked examples, fixed-time versus time-uniform widths, timing.
// Every result is a pure function of the config and master seed; the
// timing scenario is the one exception and says so in its output.

enum class Scenario {
  miscoverage,
  width_compare,
  survey_A,
  permutation_B,
  shapley_C,
  intervention_D,
  fixed_vs_uniform_G,
  timing_H,
};

inline const std::vector<std::pair<Scenario, std::string>>& scenario_names() {
  static const std::vector<std::pair<Scenario, std::string>> names{
      {Scenario::miscoverage, "miscoverage"},         {Scenario::width_compare, "width_compare"},
      {Scenario::survey_A, "survey_A"},               {Scenario::permutation_B, "permutation_B"},
      {Scenario::shapley_C, "shapley_C"},             {Scenario::intervention_D, "intervention_D"},
      {Scenario::fixed_vs_uniform_G, "fixed_vs_uniform_G"}, {Scenario::timing_H, "timing_H"},
  };
  return names;
}

inline std::string to_string(Scenario s) {
  for (const auto& [k, name] : scenario_names()) {
    if (k == s) return name;
  }
  return "unknown";
}

inline Scenario parse_scenario(const std::string& name) {
  for (const auto& [k, n] : scenario_names()) {
    if (n == name) return k;
  }
  throw DomainError("unknown scenario \"" + name + "\"");
}

struct ExperimentConfig {
  Scenario scenario = Scenario::miscoverage;
  std::uint64_t N = 1000;
  double alpha = 0.05;
  std::uint64_t replications = 0;  // 0 = scenario default
  std::uint64_t seed = 1;
  unsigned parallelism = 0;        // 0 = hardware concurrency
  std::vector<std::string> methods;  // empty = scenario default
  nlohmann::json options = nlohmann::json::object();  // scenario-specific knobs
};

inline std::uint64_t default_replications(Scenario s) {
  switch (s) {
    case Scenario::miscoverage: return 5000;
    case Scenario::width_compare: return 100;
    case Scenario::survey_A: return 200;
    case Scenario::permutation_B: return 200;
    case Scenario::shapley_C: return 200;
    case Scenario::intervention_D: return 200;
    case Scenario::fixed_vs_uniform_G: return 20;
    case Scenario::timing_H: return 100;
  }
  return 1;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"scenario", to_string(c.scenario)}, {"N", c.N},           {"alpha", c.alpha},
          {"replications", c.replications},    {"seed", c.seed},     {"methods", c.methods},
          {"options", c.options}};
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"scenario", "N", "alpha", "replications", "seed", "parallelism", "methods", "options"};
  if (!j.is_object()) throw DomainError("experiment config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw DomainError("unknown experiment config field \"" + key + "\"");
  }
  ExperimentConfig c;
  try {
    if (j.contains("scenario")) c.scenario = parse_scenario(j["scenario"].get<std::string>());
    c.N = j.value("N", c.N);
    c.alpha = j.value("alpha", c.alpha);
    c.replications = j.value("replications", c.replications);
    c.seed = j.value("seed", c.seed);
    c.parallelism = j.value("parallelism", c.parallelism);
    c.methods = j.value("methods", c.methods);
    if (j.contains("options")) c.options = j["options"];
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("malformed experiment config: ") + e.what());
  }
  require_alpha(c.alpha);
  if (c.N < 2) throw DomainError("experiments need N >= 2");
  if (!c.options.is_object()) throw DomainError("experiment options must be a JSON object");
  return c;
}

/// 64-bit FNV-1a of the canonical (sorted-key, compact) JSON form.
inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(c).dump())));
  return buf;
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

/// A CSV cell: text, integer or real (printed with 12 significant digits).
struct Cell {
  std::variant<std::string, std::int64_t, double> v;
  Cell(std::string s) : v(std::move(s)) {}
  Cell(const char* s) : v(std::string(s)) {}
  Cell(std::int64_t i) : v(i) {}
  Cell(std::uint64_t i) : v(static_cast<std::int64_t>(i)) {}
  Cell(int i) : v(static_cast<std::int64_t>(i)) {}
  Cell(double d) : v(d) {}

  std::string str() const {
    if (const auto* s = std::get_if<std::string>(&v)) return *s;
    if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    const double d = std::get<double>(v);
    if (std::isnan(d)) return "";
    if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", d);
    return buf;
  }
};

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  std::string to_csv() const {
    std::string out;
    for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + columns[i];
    out += '\n';
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i].str();
      out += '\n';
    }
    return out;
  }
};

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ExperimentResult {
  ExperimentConfig config;
  Table table;
  nlohmann::json summary = nlohmann::json::object();
  std::vector<Check> checks;
  double wall_seconds = 0.0;
  bool deterministic = true;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }

  const Check* find(const std::string& name) const {
    for (const auto& c : checks) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }

  nlohmann::json manifest() const {
    nlohmann::json checks_json = nlohmann::json::array();
    for (const auto& c : checks) checks_json.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    return {{"v", 1},
            {"scenario", to_string(config.scenario)},
            {"config", to_json(config)},
            {"config_hash", config_hash(config)},
            {"seed", config.seed},
            {"git_describe", WORCS_GIT_DESCRIBE},
            {"wall_time_seconds", wall_seconds},
            {"deterministic", deterministic},
            {"summary", summary},
            {"checks", checks_json}};
  }
};

/// Writes <dir>/<scenario>.csv and <dir>/<scenario>.manifest.json.
inline void write_outputs(const ExperimentResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto stem = to_string(r.config.scenario);
  std::ofstream(dir / (stem + ".csv"), std::ios::binary) << r.table.to_csv();
  std::ofstream(dir / (stem + ".manifest.json"), std::ios::binary) << r.manifest().dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Replication runner
// ---------------------------------------------------------------------------

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

inline std::uint64_t replication_seed(std::uint64_t master, std::uint64_t rep) { return split_seed(master, rep); }

/// Runs f(rep, seed) for rep in [0, reps) on `threads` workers. Results are
/// stored by index, so any reduction done afterwards in index order is
/// identical for every degree of parallelism.
template <class R>
std::vector<R> run_replications(std::uint64_t reps, std::uint64_t master_seed, unsigned threads,
                                const std::function<R(std::uint64_t, std::uint64_t)>& f) {
  std::vector<R> out(reps);
  std::atomic<std::uint64_t> next{0};
  std::mutex mu;
  std::optional<std::uint64_t> failed_rep;
  std::string failure;
  auto worker = [&] {
    for (;;) {
      const auto i = next.fetch_add(1);
      if (i >= reps) return;
      {
        std::lock_guard lock(mu);
        if (failed_rep) return;
      }
      try {
        out[i] = f(i, replication_seed(master_seed, i));
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        if (!failed_rep || i < *failed_rep) {
          failed_rep = i;
          failure = e.what();
        }
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(resolve_threads(threads), static_cast<unsigned>(std::max<std::uint64_t>(reps, 1))));
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failed_rep) {
    char seed_hex[17];
    std::snprintf(seed_hex, sizeof seed_hex, "%016llx",
                  static_cast<unsigned long long>(replication_seed(master_seed, *failed_rep)));
    throw IntegrityError("replication " + std::to_string(*failed_rep) + " (seed 0x" + seed_hex + ") failed: " + failure);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr std::uint64_t kPopulationTag = 0x706f70756c617465ULL;

// Summation-order rounding when a band collapses onto the sample mean.
inline constexpr double kRoundingSlack = 1e-9;

inline double slack(double alpha, std::uint64_t reps) {
  return 3.0 * std::sqrt(alpha * (1.0 - alpha) / static_cast<double>(reps));
}

/// Wilson score interval at 95%.
inline std::pair<double, double> wilson(std::uint64_t hits, std::uint64_t n) {
  if (n == 0) return {0.0, 1.0};
  const double z = 1.959963984540054, nd = static_cast<double>(n), p = static_cast<double>(hits) / nd;
  const double denom = 1 + z * z / nd;
  const double centre = (p + z * z / (2 * nd)) / denom;
  const double half = z * std::sqrt(p * (1 - p) / nd + z * z / (4 * nd * nd)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

inline BoundedPopulation uniform_population(std::uint64_t N, std::uint64_t master) {
  SplitMix64 gen(split_seed(master, kPopulationTag));
  std::vector<double> v(N);
  for (auto& x : v) x = gen.uniform();
  return {std::move(v), 0.0, 1.0};
}

inline BoundedCsConfig bounded_config(std::uint64_t N, double lower, double upper, double alpha, BoundedMethod method,
                                      LambdaSchedule schedule, bool intersect = true) {
  BoundedCsConfig cfg;
  cfg.N = N;
  cfg.lower = lower;
  cfg.upper = upper;
  cfg.alpha = alpha;
  cfg.method = method;
  cfg.schedule = std::move(schedule);
  cfg.intersect = intersect;
  return cfg;
}

inline double opt_double(const ExperimentConfig& c, const char* key, double fallback) {
  return c.options.contains(key) ? c.options[key].get<double>() : fallback;
}

inline std::uint64_t opt_count(const ExperimentConfig& c, const char* key, std::uint64_t fallback) {
  return c.options.contains(key) ? c.options[key].get<std::uint64_t>() : fallback;
}

inline std::vector<std::string> methods_or(const ExperimentConfig& c, std::vector<std::string> fallback) {
  return c.methods.empty() ? fallback : c.methods;
}

inline std::uint64_t reps(const ExperimentConfig& c) {
  return c.replications ? c.replications : default_replications(c.scenario);
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::string fmt(double d) { return Cell(d).str(); }

/// Evenly spaced grid of about `points` times in [1, N], always including N.
inline std::vector<std::uint64_t> time_grid(std::uint64_t N, std::uint64_t points) {
  std::vector<std::uint64_t> g;
  const std::uint64_t step = std::max<std::uint64_t>(1, N / points);
  for (std::uint64_t t = step; t < N; t += step) g.push_back(t);
  g.push_back(N);
  return g;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Miscoverage
// ---------------------------------------------------------------------------

/// Per-method first miscoverage time (0 = never) and intersected widths on
/// a grid.
struct CoverageTrace {
  std::vector<std::uint64_t> first_miss;
  std::vector<std::vector<double>> widths;
};

namespace detail {

inline CoverageTrace coverage_replication(const PopulationSpec& pop, const std::vector<std::string>& methods,
                                          double alpha, const std::vector<std::uint64_t>& grid, std::uint64_t seed,
                                          const std::shared_ptr<const LogFactorialTable>& table) {
  const auto N = population_size(pop);
  const bool binary = std::holds_alternative<BinaryPopulation>(pop);
  const double mu = population_mean(pop);
  CoverageTrace out;
  out.first_miss.assign(methods.size(), 0);
  out.widths.assign(methods.size(), std::vector<double>(grid.size(), std::nan("")));

  std::vector<std::optional<BoundedCsState>> bounded(methods.size());
  std::vector<std::optional<BmConfidenceSequence>> bm(methods.size());
  std::optional<PprState> ppr;
  std::optional<PprRatioKernel> kernel;
  std::uint64_t n_plus = 0;
  std::size_t ppr_index = methods.size();
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const auto& name = methods[m];
    if (name == "ppr") {
      if (!binary) continue;
      n_plus = std::get<BinaryPopulation>(pop).n_plus;
      ppr = PprState{N, 0, 0, 1.0, 1.0};
      kernel.emplace(table);
      ppr_index = m;
    } else if (name == "hoeffding") {
      bounded[m] = make_bounded_state(bounded_config(N, 0, 1, alpha, BoundedMethod::hoeffding, LambdaSchedule::hoeffding_spread()));
    } else if (name == "eb") {
      bounded[m] = make_bounded_state(bounded_config(N, 0, 1, alpha, BoundedMethod::empirical_bernstein, LambdaSchedule::eb_spread()));
    } else if (name == "bm") {
      bm[m].emplace(N, N / 2, 0.0, 1.0, alpha);
    } else {
      throw DomainError("unknown coverage method \"" + name + "\"");
    }
  }

  const double threshold = -std::log(alpha);
  auto stream = draw_stream(pop, seed);
  std::size_t g = 0;
  for (std::uint64_t t = 1; t <= N; ++t) {
    const double x = stream.next();
    const bool on_grid = g < grid.size() && grid[g] == t;
    for (std::size_t m = 0; m < methods.size(); ++m) {
      Interval band{0, 0};
      bool have_band = false;
      if (m == ppr_index) {
        *ppr = ppr_update(*ppr, static_cast<int>(x));
        kernel->prepare(*ppr);
        if (out.first_miss[m] == 0 && (*kernel)(n_plus) >= threshold) out.first_miss[m] = t;
        continue;
      }
      if (bounded[m]) {
        const auto s = bounded_cs_update(*bounded[m], x);
        band = {*s.lo_intersected, *s.hi_intersected};
        have_band = true;
      } else if (bm[m]) {
        const auto s = bm[m]->update(x);
        band = {*s.lo_intersected, *s.hi_intersected};
        have_band = true;
      }
      if (!have_band) continue;
      if (out.first_miss[m] == 0 && !Interval{band.lo - kRoundingSlack, band.hi + kRoundingSlack}.contains(mu)) out.first_miss[m] = t;
      if (on_grid) out.widths[m][g] = std::max(0.0, band.width());
    }
    if (on_grid) ++g;
  }
  return out;
}

}  // namespace detail

inline ExperimentResult run_miscoverage(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult r;
  r.config = cfg;
  const auto reps = detail::reps(cfg);
  const auto methods = detail::methods_or(cfg, {"ppr", "hoeffding", "eb", "bm"});
  const auto grid = detail::time_grid(cfg.N, detail::opt_count(cfg, "grid_points", 50));

  std::vector<std::pair<std::string, PopulationSpec>> pops{
      {"binary_half", BinaryPopulation{cfg.N, cfg.N / 2}},
      {"uniform", detail::uniform_population(cfg.N, cfg.seed)},
  };
  auto table = std::make_shared<const LogFactorialTable>(cfg.N);

  r.table.columns = {"population", "method", "t", "miscoverage_rate", "ci_lo", "ci_hi", "mean_width"};
  const double bound = cfg.alpha + detail::slack(cfg.alpha, reps);
  std::map<std::string, std::map<std::string, std::vector<double>>> mean_widths;  // pop -> method -> grid

  for (std::size_t p = 0; p < pops.size(); ++p) {
    const auto& [pop_name, pop] = pops[p];
    const bool binary = std::holds_alternative<BinaryPopulation>(pop);
    const auto traces = run_replications<CoverageTrace>(
        reps, split_seed(cfg.seed, p), cfg.parallelism,
        [&](std::uint64_t, std::uint64_t seed) { return detail::coverage_replication(pop, methods, cfg.alpha, grid, seed, table); });
    for (std::size_t m = 0; m < methods.size(); ++m) {
      if (methods[m] == "ppr" && !binary) continue;
      // rate(t) = fraction of replications with a miss at or before t.
      std::vector<double> width_sum(grid.size(), 0.0);
      std::vector<std::uint64_t> width_n(grid.size(), 0);
      std::vector<std::uint64_t> misses_by_t(cfg.N + 1, 0);
      for (const auto& tr : traces) {
        if (tr.first_miss[m]) ++misses_by_t[tr.first_miss[m]];
        for (std::size_t g = 0; g < grid.size(); ++g) {
          if (!std::isnan(tr.widths[m][g])) {
            width_sum[g] += tr.widths[m][g];
            ++width_n[g];
          }
        }
      }
      std::uint64_t cumulative = 0, t_prev = 0;
      auto& mw = mean_widths[pop_name][methods[m]];
      r.table.rows.push_back({pop_name, methods[m], std::uint64_t{0}, 0.0, 0.0, 0.0, std::nan("")});
      for (std::size_t g = 0; g < grid.size(); ++g) {
        for (std::uint64_t t = t_prev + 1; t <= grid[g]; ++t) cumulative += misses_by_t[t];
        t_prev = grid[g];
        const auto [lo, hi] = detail::wilson(cumulative, reps);
        const double w = width_n[g] ? width_sum[g] / static_cast<double>(width_n[g]) : std::nan("");
        mw.push_back(w);
        r.table.rows.push_back({pop_name, methods[m], grid[g], static_cast<double>(cumulative) / static_cast<double>(reps), lo, hi, w});
      }
      const double final_rate = static_cast<double>(cumulative) / static_cast<double>(reps);
      r.summary["final_miscoverage"][pop_name][methods[m]] = final_rate;
      r.checks.push_back({"coverage/" + pop_name + "/" + methods[m], final_rate <= bound,
                          "rate " + detail::fmt(final_rate) + " <= " + detail::fmt(bound)});
    }
  }
  r.summary["bound"] = bound;
  r.summary["replications"] = reps;

  // Width crossover between the two bounded methods across populations.
  if (std::find(methods.begin(), methods.end(), "hoeffding") != methods.end() &&
      std::find(methods.begin(), methods.end(), "eb") != methods.end()) {
    bool eb_wins = false, h_wins = false;
    for (const auto& [pop_name, by_method] : mean_widths) {
      const auto& h = by_method.at("hoeffding");
      const auto& e = by_method.at("eb");
      for (std::size_t g = 0; g < grid.size() && grid[g] < cfg.N; ++g) {
        eb_wins = eb_wins || e[g] < h[g];
        h_wins = h_wins || h[g] < e[g];
      }
    }
    r.checks.push_back({"no_uniform_dominance", eb_wins && h_wins,
                        std::string("eb narrower somewhere: ") + (eb_wins ? "yes" : "no") +
                            ", hoeffding narrower somewhere: " + (h_wins ? "yes" : "no")});
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// ---------------------------------------------------------------------------
// Width comparisons
// ---------------------------------------------------------------------------

namespace detail {

/// Unclipped two-sided half-width of a bounded CS after t steps with a
/// data-independent schedule.
inline double hoeffding_half_width(const LambdaSchedule& schedule, std::uint64_t t, std::uint64_t N, double c,
                                   double alpha) {
  auto st = make_bounded_state(bounded_config(N, 0, c, alpha, BoundedMethod::hoeffding, schedule));
  for (std::uint64_t i = 0; i < t; ++i) bounded_cs_update(st, 0.0);
  return (st.penalty() + std::log(2.0 / alpha)) / st.sum_weighted_den;
}

inline std::vector<double> spread_vs_fixed_ratios(std::uint64_t N, double alpha, const std::vector<std::uint64_t>& ts) {
  std::vector<double> out;
  auto st = make_bounded_state(bounded_config(N, 0, 1, alpha, BoundedMethod::hoeffding, LambdaSchedule::hoeffding_spread()));
  std::size_t k = 0;
  for (std::uint64_t t = 1; t <= N && k < ts.size(); ++t) {
    bounded_cs_update(st, 0.0);
    if (t == ts[k]) {
      out.push_back((st.penalty() + std::log(2.0 / alpha)) / st.sum_weighted_den / wor_hoeffding_half_width(t, N, 1.0, alpha));
      ++k;
    }
  }
  return out;
}

}  // namespace detail

inline ExperimentResult run_width_compare(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult r;
  r.config = cfg;
  const auto reps = detail::reps(cfg);
  const auto N = cfg.N;
  const double alpha = cfg.alpha;
  r.table.columns = {"panel", "population", "method", "t", "mean_width"};
  const auto grid = detail::time_grid(N, detail::opt_count(cfg, "grid_points", 50));
  const std::uint64_t burn_in = detail::opt_count(cfg, "burn_in", 50);

  // Variance adaptivity: EB versus Hoeffding (both variance-free spread schedules).
  struct VarianceRun {
    std::vector<double> eb, h;  // intersected widths at every t
  };
  const std::vector<std::pair<std::string, PopulationSpec>> variance_pops{
      {"zero_variance", BoundedPopulation{std::vector<double>(N, 0.5), 0, 1}},
      {"binary_half", BinaryPopulation{N, N / 2}},
  };
  for (std::size_t p = 0; p < variance_pops.size(); ++p) {
    const auto& [pop_name, pop] = variance_pops[p];
    const auto runs = run_replications<VarianceRun>(reps, split_seed(cfg.seed, 100 + p), cfg.parallelism, [&](std::uint64_t, std::uint64_t seed) {
      VarianceRun f;
      auto h = make_bounded_state(detail::bounded_config(N, 0, 1, alpha, BoundedMethod::hoeffding, LambdaSchedule::hoeffding_spread()));
      auto e = make_bounded_state(detail::bounded_config(N, 0, 1, alpha, BoundedMethod::empirical_bernstein, LambdaSchedule::eb_spread()));
      auto stream = draw_stream(pop, seed);
      while (!stream.exhausted()) {
        const double x = stream.next();
        const auto sh = bounded_cs_update(h, x);
        const auto se = bounded_cs_update(e, x);
        f.h.push_back(*sh.hi_intersected - *sh.lo_intersected);
        f.eb.push_back(*se.hi_intersected - *se.lo_intersected);
      }
      return f;
    });
    for (const auto t : grid) {
      double sh = 0, se = 0;
      for (const auto& f : runs) {
        sh += f.h[t - 1];
        se += f.eb[t - 1];
      }
      r.table.rows.push_back({"variance", pop_name, "hoeffding", t, sh / static_cast<double>(reps)});
      r.table.rows.push_back({"variance", pop_name, "eb", t, se / static_cast<double>(reps)});
    }
    if (pop_name == "zero_variance") {
      std::uint64_t good = 0;
      for (const auto& f : runs) {
        bool all = true;
        for (std::uint64_t t = burn_in; t < N && all; ++t) all = f.eb[t - 1] < f.h[t - 1];
        good += all;
      }
      const double frac = static_cast<double>(good) / static_cast<double>(reps);
      r.summary["eb_narrower_all_t_fraction"] = frac;
      r.checks.push_back({"variance/zero_variance_eb_narrower", frac >= 0.9,
                          "fraction of seeds with EB narrower for all t >= " + std::to_string(burn_in) + ": " + detail::fmt(frac)});
    } else {
      std::uint64_t good = 0;
      for (const auto& f : runs) good += f.h[N / 2 - 1] < f.eb[N / 2 - 1];
      const double frac = static_cast<double>(good) / static_cast<double>(reps);
      r.summary["hoeffding_narrower_at_half_fraction"] = frac;
      r.checks.push_back({"variance/binary_hoeffding_edge", frac >= 0.5,
                          "fraction of seeds with Hoeffding narrower at t = N/2: " + detail::fmt(frac)});
    }
  }

  // Hoeffding tuned at n = N/2 versus the Hoeffding-Serfling band tuned at n.
  {
    const std::uint64_t n = N / 2;
    const auto pop = detail::uniform_population(N, cfg.seed);
    const std::vector<std::uint64_t> ts{N / 10, n, 9 * N / 10};
    struct BmRun {
      std::vector<double> ours, bm;
    };
    const auto runs = run_replications<BmRun>(reps, split_seed(cfg.seed, 200), cfg.parallelism, [&](std::uint64_t, std::uint64_t seed) {
      BmRun f;
      auto ours = make_bounded_state(detail::bounded_config(N, 0, 1, alpha, BoundedMethod::hoeffding, LambdaSchedule::fixed_opt(n), false));
      BmConfidenceSequence bm(N, n, 0, 1, alpha);
      auto stream = draw_stream(pop, seed);
      std::size_t k = 0;
      for (std::uint64_t t = 1; t <= N && k < ts.size(); ++t) {
        const double x = stream.next();
        const auto so = bounded_cs_update(ours, x);
        const auto sb = bm.update(x);
        if (t == ts[k]) {
          f.ours.push_back(*so.hi - *so.lo);
          f.bm.push_back(*sb.hi - *sb.lo);
          ++k;
        }
      }
      return f;
    });
    std::vector<double> ours(ts.size(), 0), bm(ts.size(), 0);
    for (const auto& f : runs) {
      for (std::size_t k = 0; k < ts.size(); ++k) {
        ours[k] += f.ours[k] / static_cast<double>(reps);
        bm[k] += f.bm[k] / static_cast<double>(reps);
      }
    }
    for (std::size_t k = 0; k < ts.size(); ++k) {
      r.table.rows.push_back({"bm_compare", "uniform", "hoeffding_fixed_opt", ts[k], ours[k]});
      r.table.rows.push_back({"bm_compare", "uniform", "bm", ts[k], bm[k]});
      r.summary["bm_compare"][std::to_string(ts[k])] = {{"hoeffding", ours[k]}, {"bm", bm[k]}};
    }
    r.checks.push_back({"bm_compare/at_n", ours[1] <= bm[1], detail::fmt(ours[1]) + " <= " + detail::fmt(bm[1])});
    r.checks.push_back({"bm_compare/early", ours[0] < bm[0], detail::fmt(ours[0]) + " < " + detail::fmt(bm[0])});
    r.checks.push_back({"bm_compare/late", ours[2] < bm[2], detail::fmt(ours[2]) + " < " + detail::fmt(bm[2])});
  }

  // Time-uniform versus fixed-time (data-independent widths).
  {
    const std::vector<std::uint64_t> ts{50, 100, 200};
    const auto ratios = detail::spread_vs_fixed_ratios(N, alpha, ts);
    const double limit = detail::opt_double(cfg, "fixed_time_ratio_limit", 1.35);
    bool ok = true;
    std::string detail_text;
    for (std::size_t k = 0; k < ts.size(); ++k) {
      r.table.rows.push_back({"fixed_vs_uniform", "binary_half", "spread_over_fixed_time", ts[k], ratios[k]});
      ok = ok && ratios[k] <= limit;
      detail_text += (k ? ", " : "") + std::string("t=") + std::to_string(ts[k]) + ": " + detail::fmt(ratios[k]);
    }
    r.checks.push_back({"fixed_vs_uniform/ratio", ok, detail_text + " (limit " + detail::fmt(limit) + ")"});
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// ---------------------------------------------------------------------------
// Example A: opinion survey
// ---------------------------------------------------------------------------

inline ExperimentResult run_survey_experiment(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult r;
  r.config = cfg;
  const auto reps = detail::reps(cfg);
  const std::uint64_t N = cfg.N;
  const std::uint64_t ones = detail::opt_count(cfg, "n_plus", N * 65 / 100);
  const BinaryPopulation pop{N, ones};
  struct Run {
    std::uint64_t stop = 0;
  };
  const auto runs = run_replications<Run>(reps, cfg.seed, cfg.parallelism, [&](std::uint64_t, std::uint64_t seed) {
    PprConfidenceSequence green(N, {cfg.alpha, 1, 1, true}), red(N, {cfg.alpha, 1, 1, true});
    auto stream = draw_stream(pop, seed);
    while (!stream.exhausted()) {
      const int x = static_cast<int>(stream.next());
      green.update(x);
      red.update(1 - x);
      const auto g = green.reported_set(), rd = red.reported_set();
      if (g.members.empty() || rd.members.empty() || g.hi() < rd.lo() || rd.hi() < g.lo()) return Run{green.t()};
    }
    return Run{0};
  });
  r.table.columns = {"replication", "stop_t"};
  std::vector<double> stops;
  bool all_stop = true;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    r.table.rows.push_back({std::uint64_t{i}, runs[i].stop});
    all_stop = all_stop && runs[i].stop > 0 && runs[i].stop < N;
    stops.push_back(static_cast<double>(runs[i].stop));
  }
  r.summary["median_stop"] = detail::median(stops);
  r.checks.push_back({"survey/stops_before_exhaustion", all_stop, "median stop " + detail::fmt(detail::median(stops))});
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// ---------------------------------------------------------------------------
// Example B: permutation p-value (lady tasting tea)
// ---------------------------------------------------------------------------

struct PermutationOracle {
  std::uint64_t patterns = 0;  // C(12, 6)
  std::uint64_t extreme = 0;   // patterns at least as good as the observed guess
};

/// Enumerates every 6-of-12 guess and counts those with >= `observed_correct`
/// cups right (a guess overlapping the truth in m milk-first cups gets 2m right).
inline PermutationOracle lady_tasting_tea(unsigned cups = 12, unsigned observed_correct = 10) {
  const unsigned half = cups / 2;
  PermutationOracle o;
  for (unsigned mask = 0; mask < (1u << cups); ++mask) {
    if (static_cast<unsigned>(__builtin_popcount(mask)) != half) continue;
    ++o.patterns;
    const unsigned overlap = static_cast<unsigned>(__builtin_popcount(mask & ((1u << half) - 1)));
    if (2 * overlap >= observed_correct) ++o.extreme;
  }
  return o;
}

enum class Side { undecided, below, above };

/// First t at which the running-intersected PPR CS for N+ lies entirely on
/// one side of `boundary` (a count).
inline std::pair<std::uint64_t, Side> ppr_side_stop(const BinaryPopulation& pop, double a, double b, double alpha,
                                                     double boundary, std::uint64_t seed) {
  PprConfidenceSequence cs(pop.N, {alpha, a, b, true});
  auto stream = draw_stream(pop, seed);
  while (!stream.exhausted()) {
    cs.update(static_cast<int>(stream.next()));
    const auto set = cs.reported_set();
    if (set.members.empty()) continue;
    if (static_cast<double>(set.hi()) < boundary) return {cs.t(), Side::below};
    if (static_cast<double>(set.lo()) > boundary) return {cs.t(), Side::above};
  }
  return {pop.N, Side::undecided};
}

inline ExperimentResult run_permutation_experiment(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult r;
  r.config = cfg;
  const auto reps = detail::reps(cfg);
  const auto oracle = lady_tasting_tea();
  const BinaryPopulation pop{oracle.patterns, oracle.extreme};
  const double level = detail::opt_double(cfg, "decision_level", 0.05);
  const double kappa = detail::opt_double(cfg, "prior_concentration", 100.0);
  const double boundary = level * static_cast<double>(pop.N);
  const auto coupled = decision_coupled_prior(level, kappa);
  const Side truth = static_cast<double>(pop.n_plus) < boundary ? Side::below : Side::above;

  struct Run {
    std::uint64_t uniform_t = 0, coupled_t = 0;
    Side uniform_side = Side::undecided, coupled_side = Side::undecided;
  };
  const auto runs = run_replications<Run>(reps, cfg.seed, cfg.parallelism, [&](std::uint64_t, std::uint64_t seed) {
    Run run;
    std::tie(run.uniform_t, run.uniform_side) = ppr_side_stop(pop, 1, 1, cfg.alpha, boundary, seed);
    std::tie(run.coupled_t, run.coupled_side) = ppr_side_stop(pop, coupled.a, coupled.b, cfg.alpha, boundary, seed);
    return run;
  });
  auto side_name = [](Side s) { return s == Side::below ? "below" : s == Side::above ? "above" : "undecided"; };
  r.table.columns = {"replication", "uniform_stop_t", "uniform_side", "coupled_stop_t", "coupled_side"};
  std::vector<double> ut, ct;
  std::uint64_t uniform_correct = 0, coupled_correct = 0;
  bool stops_before_end = true;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& run = runs[i];
    r.table.rows.push_back({std::uint64_t{i}, run.uniform_t, side_name(run.uniform_side), run.coupled_t, side_name(run.coupled_side)});
    ut.push_back(static_cast<double>(run.uniform_t));
    ct.push_back(static_cast<double>(run.coupled_t));
    uniform_correct += run.uniform_side == truth;
    coupled_correct += run.coupled_side == truth;
    stops_before_end = stops_before_end && run.uniform_side != Side::undecided && run.uniform_t <= pop.N;
  }
  const double p_perm = static_cast<double>(oracle.extreme) / static_cast<double>(oracle.patterns);
  const double correct_frac = static_cast<double>(uniform_correct) / static_cast<double>(reps);
  r.summary["patterns"] = oracle.patterns;
  r.summary["extreme_patterns"] = oracle.extreme;
  r.summary["p_perm"] = p_perm;
  r.summary["coupled_prior"] = {{"a", coupled.a}, {"b", coupled.b}};
  r.summary["median_stop_uniform"] = detail::median(ut);
  r.summary["median_stop_coupled"] = detail::median(ct);
  r.summary["correct_side_fraction_uniform"] = correct_frac;
  r.summary["correct_side_fraction_coupled"] = static_cast<double>(coupled_correct) / static_cast<double>(reps);
  r.checks.push_back({"permutation/exact_p", oracle.patterns == 924 && oracle.extreme == 37,
                      std::to_string(oracle.extreme) + "/" + std::to_string(oracle.patterns) + " = " + detail::fmt(p_perm)});
  r.checks.push_back({"permutation/correct_side", correct_frac >= 0.95, "uniform prior: " + detail::fmt(correct_frac)});
  r.checks.push_back({"permutation/stops", stops_before_end, "every seed reaches a decision by t = N"});
  r.checks.push_back({"permutation/coupled_not_later", detail::median(ct) <= detail::median(ut),
                      "median stop coupled " + detail::fmt(detail::median(ct)) + " vs uniform " + detail::fmt(detail::median(ut))});
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// ---------------------------------------------------------------------------
// Example C: Shapley values of a cost-sharing game
// ---------------------------------------------------------------------------

struct ShapleyGame {
  std::vector<double> costs;  // ascending

  /// Cost of a coalition: the largest member cost (0 for the empty set).
  double value(std::uint32_t mask) const {
    double v = 0;
    for (std::size_t i = 0; i < costs.size(); ++i) {
      if (mask >> i & 1u) v = std::max(v, costs[i]);
    }
    return v;
  }

  /// Marginal contributions of every player along one permutation.
  std::vector<double> contributions(const std::vector<std::size_t>& order) const {
    std::vector<double> out(costs.size());
    std::uint32_t mask = 0;
    for (auto p : order) {
      const double before = value(mask);
      mask |= 1u << p;
      out[p] = value(mask) - before;
    }
    return out;
  }
};

/// All n! permutations in lexicographic order.
inline std::vector<std::vector<std::size_t>> all_permutations(std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::vector<std::vector<std::size_t>> out;
  do out.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));
  return out;
}

/// Exact Shapley values by brute force over every permutation.
inline std::vector<double> exact_shapley(const ShapleyGame& game) {
  const auto perms = all_permutations(game.costs.size());
  std::vector<double> phi(game.costs.size(), 0.0);
  for (const auto& p : perms) {
    const auto c = game.contributions(p);
    for (std::size_t i = 0; i < phi.size(); ++i) phi[i] += c[i];
  }
  for (auto& v : phi) v /= static_cast<double>(perms.size());
  return phi;
}

inline ExperimentResult run_shapley_experiment(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult r;
  r.config = cfg;
  const auto reps = detail::reps(cfg);
  ShapleyGame game{{1, 10, 40, 80, 130, 175, 200}};
  if (cfg.options.contains("costs")) game.costs = cfg.options["costs"].get<std::vector<double>>();
  std::sort(game.costs.begin(), game.costs.end());
  const std::size_t players = game.costs.size();
  if (players < 2 || players > 8) throw DomainError("Shapley experiment supports 2 to 8 players");
  const double upper = game.costs.back();
  const auto phi = exact_shapley(game);
  const auto perms = all_permutations(players);
  std::vector<std::vector<double>> contrib;
  for (const auto& p : perms) contrib.push_back(game.contributions(p));
  const std::uint64_t N = perms.size();
  const double per_player_alpha = cfg.alpha / static_cast<double>(players);
  const auto top = static_cast<std::size_t>(std::max_element(phi.begin(), phi.end()) - phi.begin());

  std::vector<double> indices(N);
  std::iota(indices.begin(), indices.end(), 0.0);
  const BoundedPopulation order_pop{indices, 0.0, static_cast<double>(N - 1)};

  struct Run {
    bool covered = true;
    std::uint64_t identified = 0;
  };
  const auto runs = run_replications<Run>(reps, cfg.seed, cfg.parallelism, [&](std::uint64_t, std::uint64_t seed) {
    Run run;
    std::vector<BoundedCsState> cs;
    for (std::size_t i = 0; i < players; ++i) {
      cs.push_back(make_bounded_state(detail::bounded_config(N, 0, upper, per_player_alpha, BoundedMethod::empirical_bernstein, LambdaSchedule::eb_spread())));
    }
    auto stream = draw_stream(order_pop, seed);
    while (!stream.exhausted()) {
      const auto& c = contrib[static_cast<std::size_t>(stream.next())];
      double best_other_hi = -kInf, top_lo = 0;
      for (std::size_t i = 0; i < players; ++i) {
        const auto s = bounded_cs_update(cs[i], c[i]);
        const Interval band{*s.lo_intersected, *s.hi_intersected};
        run.covered = run.covered && Interval{band.lo - detail::kRoundingSlack * upper, band.hi + detail::kRoundingSlack * upper}.contains(phi[i]);
        if (i == top) {
          top_lo = band.lo;
        } else {
          best_other_hi = std::max(best_other_hi, band.hi);
        }
      }
      if (!run.identified && top_lo > best_other_hi) run.identified = cs[0].t;
    }
    return run;
  });
  r.table.columns = {"replication", "all_covered", "top_identified_t"};
  std::uint64_t covered = 0, identified = 0;
  std::vector<double> id_times;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    r.table.rows.push_back({std::uint64_t{i}, runs[i].covered ? 1 : 0, runs[i].identified});
    covered += runs[i].covered;
    if (runs[i].identified && runs[i].identified < N) {
      ++identified;
      id_times.push_back(static_cast<double>(runs[i].identified));
    }
  }
  const double total = std::accumulate(phi.begin(), phi.end(), 0.0);
  const double cov = static_cast<double>(covered) / static_cast<double>(reps);
  r.summary["shapley"] = phi;
  r.summary["sum_shapley"] = total;
  r.summary["per_player_alpha"] = per_player_alpha;
  r.summary["simultaneous_coverage"] = cov;
  r.summary["median_identification_t"] = detail::median(id_times);
  r.checks.push_back({"shapley/efficiency", std::abs(total - game.value((1u << players) - 1)) <= 1e-9,
                      "sum phi = " + detail::fmt(total)});
  r.checks.push_back({"shapley/coverage", cov >= 1.0 - cfg.alpha, "simultaneous coverage " + detail::fmt(cov)});
  r.checks.push_back({"shapley/identification", identified == reps,
                      std::to_string(identified) + " of " + std::to_string(reps) + " seeds identify the top player before exhaustion"});
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// ---------------------------------------------------------------------------
// Example D: tracking an intervention
// ---------------------------------------------------------------------------

/// Beta(3, 2) draws (third order statistic of four uniforms), scaled to
/// [-100, 100]. Fixed per master seed.
inline BoundedPopulation intervention_population(std::uint64_t N, std::uint64_t master) {
  SplitMix64 gen(split_seed(master, detail::kPopulationTag + 4));
  std::vector<double> v(N);
  for (auto& x : v) {
    std::array<double, 4> u{gen.uniform(), gen.uniform(), gen.uniform(), gen.uniform()};
    std::sort(u.begin(), u.end());
    x = 200.0 * u[2] - 100.0;
  }
  return {std::move(v), -100.0, 100.0};
}

inline ExperimentResult run_intervention_experiment(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult r;
  r.config = cfg;
  const auto reps = detail::reps(cfg);
  const std::uint64_t N = cfg.options.contains("N") ? cfg.options["N"].get<std::uint64_t>() : 3000;
  const auto pop = intervention_population(N, cfg.seed);
  const std::vector<std::pair<std::string, LambdaSchedule>> runs_spec{
      {"fixed_opt_10", LambdaSchedule::fixed_opt(10)},
      {"fixed_opt_100", LambdaSchedule::fixed_opt(100)},
      {"fixed_opt_1000", LambdaSchedule::fixed_opt(1000)},
      {"spread", LambdaSchedule::hoeffding_spread()},
  };
  struct Run {
    std::vector<std::uint64_t> exclusion;  // first t with 0 outside the CS (0 = never)
    std::vector<double> width_at_100;
  };
  const auto runs = run_replications<Run>(reps, cfg.seed, cfg.parallelism, [&](std::uint64_t, std::uint64_t seed) {
    Run run;
    run.exclusion.assign(runs_spec.size(), 0);
    run.width_at_100.assign(runs_spec.size(), std::nan(""));
    std::vector<BoundedCsState> cs;
    for (const auto& [_, sched] : runs_spec) {
      cs.push_back(make_bounded_state(detail::bounded_config(N, -100, 100, cfg.alpha, BoundedMethod::hoeffding, sched)));
    }
    auto stream = draw_stream(pop, seed);
    while (!stream.exhausted()) {
      const double x = stream.next();
      for (std::size_t k = 0; k < cs.size(); ++k) {
        const auto s = bounded_cs_update(cs[k], x);
        if (!run.exclusion[k] && !Interval{*s.lo_intersected, *s.hi_intersected}.contains(0.0)) run.exclusion[k] = s.t;
        if (s.t == 100) run.width_at_100[k] = *s.hi - *s.lo;
      }
    }
    return run;
  });
  r.table.columns = {"replication", "schedule", "first_exclusion_t", "width_at_100"};
  std::vector<std::uint64_t> excluded(runs_spec.size(), 0);
  std::vector<double> mean_w100(runs_spec.size(), 0.0);
  std::vector<std::vector<double>> times(runs_spec.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (std::size_t k = 0; k < runs_spec.size(); ++k) {
      r.table.rows.push_back({std::uint64_t{i}, runs_spec[k].first, runs[i].exclusion[k], runs[i].width_at_100[k]});
      if (runs[i].exclusion[k] && runs[i].exclusion[k] < N) {
        ++excluded[k];
        times[k].push_back(static_cast<double>(runs[i].exclusion[k]));
      }
      mean_w100[k] += runs[i].width_at_100[k] / static_cast<double>(reps);
    }
  }
  bool bounded_ok = true;
  for (double x : pop.values) bounded_ok = bounded_ok && x >= -100 && x <= 100;
  r.summary["population_mean"] = population_mean(pop);
  for (std::size_t k = 0; k < runs_spec.size(); ++k) {
    r.summary["exclusion_fraction"][runs_spec[k].first] = static_cast<double>(excluded[k]) / static_cast<double>(reps);
    r.summary["median_exclusion_t"][runs_spec[k].first] = detail::median(times[k]);
    r.summary["mean_width_at_100"][runs_spec[k].first] = mean_w100[k];
  }
  const double frac = static_cast<double>(excluded[3]) / static_cast<double>(reps);
  r.checks.push_back({"intervention/population_bounded", bounded_ok, "all values in [-100, 100]"});
  r.checks.push_back({"intervention/excludes_zero", frac >= 0.95, "spread schedule excludes 0 before t = N on " + detail::fmt(frac)});
  r.checks.push_back({"intervention/tuning_tradeoff", mean_w100[1] < mean_w100[2],
                      "width at t=100: t0=100 " + detail::fmt(mean_w100[1]) + " vs t0=1000 " + detail::fmt(mean_w100[2])});
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// ---------------------------------------------------------------------------
// Fixed-time versus time-uniform widths
// ---------------------------------------------------------------------------

inline ExperimentResult run_fixed_vs_uniform(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult r;
  r.config = cfg;
  const auto reps = detail::reps(cfg);
  const std::uint64_t N = cfg.N;
  const BinaryPopulation pop{N, N / 2};
  const auto grid = detail::time_grid(N, detail::opt_count(cfg, "grid_points", 50));
  struct Run {
    std::vector<double> hoeffding, ppr;
  };
  const auto runs = run_replications<Run>(reps, cfg.seed, cfg.parallelism, [&](std::uint64_t, std::uint64_t seed) {
    Run run;
    auto h = make_bounded_state(detail::bounded_config(N, 0, 1, cfg.alpha, BoundedMethod::hoeffding, LambdaSchedule::hoeffding_spread()));
    PprConfidenceSequence ppr(N, {cfg.alpha, 1, 1, true});
    auto stream = draw_stream(pop, seed);
    std::size_t g = 0;
    for (std::uint64_t t = 1; t <= N; ++t) {
      const double x = stream.next();
      const auto s = bounded_cs_update(h, x);
      ppr.update(static_cast<int>(x));
      if (g < grid.size() && grid[g] == t) {
        run.hoeffding.push_back(*s.hi_intersected - *s.lo_intersected);
        const auto set = ppr.reported_set();
        run.ppr.push_back(set.members.empty() ? 0.0 : static_cast<double>(set.hi() - set.lo()) / static_cast<double>(N));
        ++g;
      }
    }
    return run;
  });
  r.table.columns = {"t", "fixed_time_width", "hoeffding_cs_width", "ppr_cs_width"};
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double h = 0, p = 0;
    for (const auto& run : runs) {
      h += run.hoeffding[g] / static_cast<double>(reps);
      p += run.ppr[g] / static_cast<double>(reps);
    }
    const double fixed = grid[g] < N ? std::min(1.0, 2 * wor_hoeffding_half_width(grid[g], N, 1.0, cfg.alpha)) : 0.0;
    r.table.rows.push_back({grid[g], fixed, h, p});
  }
  const std::vector<std::uint64_t> ts{50, 100, 200};
  const auto ratios = detail::spread_vs_fixed_ratios(N, cfg.alpha, ts);
  const double limit = detail::opt_double(cfg, "fixed_time_ratio_limit", 1.35);
  bool ok = true;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    r.summary["width_ratio"][std::to_string(ts[k])] = ratios[k];
    ok = ok && ratios[k] <= limit;
  }
  r.checks.push_back({"fixed_vs_uniform/ratio", ok, "time-uniform over fixed-time half-width at t in {50, 100, 200} <= " + detail::fmt(limit)});
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// ---------------------------------------------------------------------------
// Timing
// ---------------------------------------------------------------------------

struct TimingStats {
  double mean = 0.0;
  double stddev = 0.0;
  double median = 0.0;
};

inline TimingStats time_repeated(std::uint64_t repetitions, const std::function<void(std::uint64_t)>& body) {
  std::vector<double> secs;
  for (std::uint64_t i = 0; i < repetitions; ++i) {
    const auto a = std::chrono::steady_clock::now();
    body(i);
    secs.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - a).count());
  }
  TimingStats s;
  s.mean = std::accumulate(secs.begin(), secs.end(), 0.0) / static_cast<double>(secs.size());
  double ss = 0;
  for (double x : secs) ss += (x - s.mean) * (x - s.mean);
  s.stddev = secs.size() > 1 ? std::sqrt(ss / static_cast<double>(secs.size() - 1)) : 0.0;
  s.median = detail::median(secs);
  return s;
}

namespace detail {

inline double bounded_trace(std::uint64_t N, BoundedMethod method, std::uint64_t seed) {
  auto schedule = method == BoundedMethod::hoeffding ? LambdaSchedule::hoeffding_spread() : LambdaSchedule::eb_spread();
  auto st = make_bounded_state(bounded_config(N, 0, 1, 0.05, method, schedule));
  auto stream = draw_stream(BinaryPopulation{N, N / 2}, seed);
  double sink = 0;
  while (!stream.exhausted()) sink += *bounded_cs_update(st, stream.next()).lo_intersected;
  return sink;
}

inline std::size_t ppr_trace(std::uint64_t N, std::uint64_t seed) {
  PprConfidenceSequence cs(N, {});
  auto stream = draw_stream(BinaryPopulation{N, N / 2}, seed);
  std::size_t sink = 0;
  while (!stream.exhausted()) {
    cs.update(static_cast<int>(stream.next()));
    sink += static_cast<std::size_t>(*cs.snapshot().set_size);
  }
  return sink;
}

}  // namespace detail

inline ExperimentResult run_timing(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult r;
  r.config = cfg;
  r.deterministic = false;
  const auto reps = detail::reps(cfg);
  const std::uint64_t small = cfg.N, large = 10 * cfg.N;
  volatile double sink = 0;
  r.table.columns = {"method", "N", "mean_seconds", "stddev_seconds", "median_seconds"};
  std::map<std::string, std::pair<TimingStats, TimingStats>> bounded;
  for (auto method : {BoundedMethod::hoeffding, BoundedMethod::empirical_bernstein}) {
    // Warm up caches and the allocator before measuring.
    sink = sink + detail::bounded_trace(large, method, 0);
    const auto a = time_repeated(reps, [&](std::uint64_t i) { sink = sink + detail::bounded_trace(small, method, split_seed(cfg.seed, i)); });
    const auto b = time_repeated(reps, [&](std::uint64_t i) { sink = sink + detail::bounded_trace(large, method, split_seed(cfg.seed, i)); });
    bounded[to_string(method)] = {a, b};
    r.table.rows.push_back({to_string(method), small, a.mean, a.stddev, a.median});
    r.table.rows.push_back({to_string(method), large, b.mean, b.stddev, b.median});
  }
  const std::uint64_t ppr_reps = std::min<std::uint64_t>(reps, detail::opt_count(cfg, "ppr_repetitions", 20));
  const auto p = time_repeated(ppr_reps, [&](std::uint64_t i) { sink = sink + static_cast<double>(detail::ppr_trace(small, split_seed(cfg.seed, i))); });
  r.table.rows.push_back({"ppr", small, p.mean, p.stddev, p.median});

  const double tolerance = detail::opt_double(cfg, "scaling_tolerance", 0.3);
  for (const auto& [name, ab] : bounded) {
    // Per-update cost ratio between the two sizes, from medians.
    const double per_update_small = ab.first.median / static_cast<double>(small);
    const double per_update_large = ab.second.median / static_cast<double>(large);
    const double ratio = per_update_large / per_update_small;
    r.summary["per_update_ratio"][name] = ratio;
    r.checks.push_back({"timing/constant_update/" + name, std::abs(ratio - 1.0) <= tolerance,
                        "per-update cost ratio N=" + std::to_string(large) + " vs N=" + std::to_string(small) + ": " + detail::fmt(ratio)});
  }
  r.summary["ppr_trace_seconds"] = p.mean;
  r.checks.push_back({"timing/ppr_trace", p.mean <= 0.5, "mean full PPR trace " + detail::fmt(p.mean) + " s"});
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// ---------------------------------------------------------------------------

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.scenario) {
    case Scenario::miscoverage: return run_miscoverage(cfg);
    case Scenario::width_compare: return run_width_compare(cfg);
    case Scenario::survey_A: return run_survey_experiment(cfg);
    case Scenario::permutation_B: return run_permutation_experiment(cfg);
    case Scenario::shapley_C: return run_shapley_experiment(cfg);
    case Scenario::intervention_D: return run_intervention_experiment(cfg);
    case Scenario::fixed_vs_uniform_G: return run_fixed_vs_uniform(cfg);
    case Scenario::timing_H: return run_timing(cfg);
  }
  throw DomainError("unknown scenario");
}

}  // namespace worcs::sim
