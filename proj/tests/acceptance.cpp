// Acceptance suite: one PASS/FAIL line per criterion, sub-checks indented below it.
//
//   acceptance                 run every criterion
//   acceptance --criterion 4   run one

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "worcs/bounded.hpp"
#include "worcs/inference.hpp"
#include "worcs/population.hpp"
#include "worcs/ppr.hpp"
#include "worcs/sim.hpp"

using namespace worcs;

namespace {

struct Sub {
  std::string name;
  bool ok = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  double budget_seconds;
  std::function<std::vector<Sub>()> run;
};

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

double three_sigma(double alpha, double reps) { return 3.0 * std::sqrt(alpha * (1.0 - alpha) / reps); }

// ---------------------------------------------------------------------------
// 1. PPR martingale identity by enumeration
// ---------------------------------------------------------------------------

std::vector<Sub> criterion_1() {
  double literal = 0, interior = 0, identity = 0, excess = -1;
  for (std::uint64_t N = 1; N <= 8; ++N) {
    for (std::uint64_t n_plus = 0; n_plus <= N; ++n_plus) {
      const auto orderings = enumerate_orderings(BinaryPopulation{N, n_plus});
      for (auto [a, b] : {std::pair{1.0, 1.0}, {2.0, 5.0}}) {
        for (std::uint64_t t = 0; t < N; ++t) {
          std::map<std::vector<double>, std::pair<long double, long double>> groups;
          for (const auto& o : orderings) {
            PprState st{N, 0, 0, a, b};
            for (std::uint64_t i = 0; i <= t; ++i) st = ppr_update(st, static_cast<int>(o.items[i]));
            auto& g = groups[std::vector<double>(o.items.begin(), o.items.begin() + static_cast<std::ptrdiff_t>(t))];
            g.first += o.probability;
            g.second += o.probability * static_cast<long double>(ppr_ratio(st, n_plus));
          }
          for (const auto& [prefix, g] : groups) {
            PprState st{N, 0, 0, a, b};
            for (double x : prefix) st = ppr_update(st, static_cast<int>(x));
            const double expected = static_cast<double>(g.second / g.first);
            const double r = ppr_ratio(st, n_plus);
            const double p_one = (a + static_cast<double>(st.s)) / (a + b + static_cast<double>(st.t));
            const bool ones_left = n_plus > st.s, zeros_left = N - n_plus > t - st.s;
            const double supported = (ones_left ? p_one : 0.0) + (zeros_left ? 1.0 - p_one : 0.0);
            literal = std::max(literal, std::abs(expected - r));
            identity = std::max(identity, std::abs(expected - r * supported));
            excess = std::max(excess, expected - r);
            if (ones_left && zeros_left) interior = std::max(interior, std::abs(expected - r));
          }
        }
      }
    }
  }
  return {
      {"|E[R_{t+1}|hist] - R_t| <= 1e-10 at every history", literal <= 1e-10, "worst " + num(literal)},
      {"equality where the truth allows both outcomes", interior <= 1e-10, "worst " + num(interior)},
      {"E[R_{t+1}|hist] = R_t * predictive mass of supported outcomes", identity <= 1e-10, "worst " + num(identity)},
      {"E[R_{t+1}|hist] <= R_t + 1e-10 everywhere", excess <= 1e-10, "worst excess " + num(excess)},
  };
}

// ---------------------------------------------------------------------------
// 2. Bounded supermartingale by enumeration
// ---------------------------------------------------------------------------

BoundedCsConfig bounded(std::uint64_t N, BoundedMethod method, LambdaSchedule schedule) {
  BoundedCsConfig cfg;
  cfg.N = N;
  cfg.lower = 0.0;
  cfg.upper = 1.0;
  cfg.alpha = 0.05;
  cfg.method = method;
  cfg.schedule = std::move(schedule);
  return cfg;
}

double e_process(const std::vector<double>& prefix, const BoundedCsConfig& cfg, double mu, bool greater) {
  auto st = make_bounded_state(cfg);
  for (double x : prefix) bounded_cs_update(st, x);
  return st.history.empty() ? 1.0 : std::exp(log_e_process(st.history.back(), mu, greater));
}

std::string schedule_name(const LambdaSchedule& s) {
  return s.kind == LambdaSchedule::Kind::constant ? "constant " + num(s.value) : to_string(s.kind);
}

std::vector<Sub> criterion_2() {
  std::vector<Sub> out;
  for (const auto& values : std::vector<std::vector<double>>{{0.0, 0.4, 1.0}, {0.0, 0.0, 1.0, 1.0}}) {
    const BoundedPopulation pop{values, 0.0, 1.0};
    const double mu = population_mean(pop);
    const auto orderings = enumerate_orderings(pop);
    for (auto method : {BoundedMethod::hoeffding, BoundedMethod::empirical_bernstein}) {
      const auto predictable = method == BoundedMethod::hoeffding ? LambdaSchedule::hoeffding_spread() : LambdaSchedule::eb_spread();
      for (const auto& schedule : {LambdaSchedule::constant(0.1), LambdaSchedule::constant(0.5), predictable}) {
        const auto cfg = bounded(values.size(), method, schedule);
        double worst = -1;
        for (bool greater : {true, false}) {
          for (std::size_t t = 0; t < values.size(); ++t) {
            std::map<std::vector<double>, std::pair<long double, long double>> groups;
            for (const auto& o : orderings) {
              const std::vector<double> next(o.items.begin(), o.items.begin() + static_cast<std::ptrdiff_t>(t + 1));
              auto& g = groups[std::vector<double>(next.begin(), next.end() - 1)];
              g.first += o.probability;
              g.second += o.probability * static_cast<long double>(e_process(next, cfg, mu, greater));
            }
            for (const auto& [prefix, g] : groups) {
              worst = std::max(worst, static_cast<double>(g.second / g.first) - e_process(prefix, cfg, mu, greater));
            }
          }
        }
        std::string pop_name = "{";
        for (std::size_t i = 0; i < values.size(); ++i) pop_name += (i ? "," : "") + num(values[i]);
        out.push_back({pop_name + "} " + to_string(method) + " " + schedule_name(schedule), worst <= 1e-10,
                       "max E[M_{t+1}|hist] - M_t = " + num(worst)});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// 3. Time-uniform coverage
// ---------------------------------------------------------------------------

std::vector<Sub> criterion_3() {
  sim::ExperimentConfig cfg;
  cfg.scenario = sim::Scenario::miscoverage;
  cfg.N = 1000;
  cfg.alpha = 0.05;
  cfg.replications = 5000;
  const auto r = sim::run_experiment(cfg);
  const double bound = 0.05 + three_sigma(0.05, 5000);
  std::vector<Sub> out;
  std::size_t seen = 0;
  for (const auto& [pop, by_method] : r.summary.at("final_miscoverage").items()) {
    for (const auto& [method, rate] : by_method.items()) {
      ++seen;
      out.push_back({pop + "/" + method, rate.get<double>() <= bound, "miscoverage " + num(rate) + " <= " + num(bound)});
    }
  }
  // ppr on the binary population, three bounded methods on both.
  out.push_back({"all method/population pairs measured", seen == 7, std::to_string(seen) + " pairs"});
  return out;
}

// ---------------------------------------------------------------------------
// 4. Fixed-sample dominance and the n = 100 half-width
// ---------------------------------------------------------------------------

std::vector<Sub> criterion_4() {
  const std::uint64_t N = 1000;
  std::uint64_t worst_n = 0;
  double worst_gap = INFINITY;
  for (std::uint64_t n = 2; n <= N; ++n) {
    const double gap = classical_hoeffding_half_width(n, 1.0, 0.05) - wor_hoeffding_half_width(n, N, 1.0, 0.05);
    if (gap < worst_gap) {
      worst_gap = gap;
      worst_n = n;
    }
  }
  // A_n = N (H_{N-1} - H_{N-n}) - (n - 1), summed in long double.
  const std::uint64_t n = 100;
  long double harmonic = 0;
  for (std::uint64_t k = N - n + 1; k <= N - 1; ++k) harmonic += 1.0L / static_cast<long double>(k);
  const long double a_n = static_cast<long double>(N) * harmonic - static_cast<long double>(n - 1);
  const long double rn = std::sqrt(static_cast<long double>(n));
  const double oracle = static_cast<double>(std::sqrt(0.5L * std::log(40.0L)) / (rn + a_n / rn));
  constexpr double kFrozen = 0.1289684039880908;
  const double h = wor_hoeffding_half_width(n, N, 1.0, 0.05);
  return {
      {"strictly below classical Hoeffding for n in [2, 1000]", worst_gap > 0,
       "smallest gap " + num(worst_gap) + " at n = " + std::to_string(worst_n)},
      {"n = 100 matches the harmonic-sum oracle", std::abs(h - oracle) <= 1e-12 && std::abs(h - kFrozen) <= 1e-12,
       num(h) + " vs oracle " + num(oracle)},
      {"n = 100 half-width 0.12885 +- 1e-4", std::abs(h - 0.12885) <= 1e-4, num(h) + ", off by " + num(std::abs(h - 0.12885))},
  };
}

// ---------------------------------------------------------------------------
// 5. Permutation p-value and the adaptive run
// ---------------------------------------------------------------------------

std::vector<Sub> criterion_5() {
  // Guesses with >= 10 of 12 cups right share >= 5 milk-first cups with the truth.
  const std::uint64_t oracle_patterns = 924;         // C(12, 6)
  const std::uint64_t oracle_extreme = 6 * 6 + 1;    // C(6,5) C(6,1) + C(6,6)
  const auto o = sim::lady_tasting_tea();
  const BinaryPopulation pop{o.patterns, o.extreme};
  const double boundary = 0.05 * static_cast<double>(pop.N);
  std::uint64_t correct = 0;
  const std::uint64_t seeds = 200;
  for (std::uint64_t i = 0; i < seeds; ++i) {
    const auto [t, side] = sim::ppr_side_stop(pop, 1.0, 1.0, 0.05, boundary, split_seed(1, i));
    correct += side == sim::Side::below;
  }
  const double frac = static_cast<double>(correct) / static_cast<double>(seeds);
  return {
      {"enumeration gives 37/924", o.patterns == oracle_patterns && o.extreme == oracle_extreme,
       std::to_string(o.extreme) + "/" + std::to_string(o.patterns) + " = " + num(static_cast<double>(o.extreme) / static_cast<double>(o.patterns))},
      {"adaptive PPR run decides below 0.05 on >= 95% of 200 seeds", frac >= 0.95, "fraction " + num(frac)},
  };
}

// ---------------------------------------------------------------------------
// 6. p-value / CS duality
// ---------------------------------------------------------------------------

std::vector<Sub> criterion_6() {
  const std::uint64_t seeds = 100;
  std::uint64_t agree = 0, rejected_boundary = 0;
  std::string first_mismatch;
  for (std::uint64_t i = 0; i < seeds; ++i) {
    const std::uint64_t seed = split_seed(6, i);
    PprConfidenceSequence cs(1000, {});
    const auto null = NullHypothesis::count_leq(550);
    const auto at_truth = NullHypothesis::count_leq(650);
    std::int64_t first_p = -1, first_excl = -1;
    bool rejected = false;
    auto stream = draw_stream(BinaryPopulation{1000, 650}, seed);
    while (!stream.exhausted()) {
      cs.update(static_cast<int>(stream.next()));
      const auto t = static_cast<std::int64_t>(cs.t());
      const auto set = cs.reported_set();
      if (first_p < 0 && ppr_p_value(cs, null) <= 0.05) first_p = t;
      if (first_excl < 0 && (set.members.empty() || set.lo() > 550)) first_excl = t;
      rejected = rejected || ppr_p_value(cs, at_truth) <= 0.05;
    }
    if (first_p == first_excl) {
      ++agree;
    } else if (first_mismatch.empty()) {
      first_mismatch = ", first mismatch seed " + std::to_string(seed) + ": " + std::to_string(first_p) + " vs " + std::to_string(first_excl);
    }
    rejected_boundary += rejected;
  }
  const double rate = static_cast<double>(rejected_boundary) / static_cast<double>(seeds);
  const double bound = 0.05 + three_sigma(0.05, static_cast<double>(seeds));
  return {
      {"first p <= 0.05 equals first exclusion of N+ <= 550", agree == seeds,
       std::to_string(agree) + "/" + std::to_string(seeds) + " seeds" + first_mismatch},
      {"H0: N+ <= 650 rejected on <= 5% + 3 sigma of seeds", rate <= bound, "rate " + num(rate) + " <= " + num(bound)},
  };
}

// ---------------------------------------------------------------------------
// 7. Collapse at t = N
// ---------------------------------------------------------------------------

std::vector<Sub> criterion_7() {
  std::vector<Sub> out;
  const std::uint64_t N = 1000, n_plus = 650;
  for (auto [a, b] : {std::pair{1.0, 1.0}, {2.0, 5.0}, {65.0, 35.0}, {5.0, 95.0}, {0.5, 0.5}}) {
    std::uint64_t ok = 0, seeds = 40;
    for (std::uint64_t i = 0; i < seeds; ++i) {
      PprConfidenceSequence cs(N, {0.05, a, b, true});
      auto stream = draw_stream(BinaryPopulation{N, n_plus}, split_seed(7, i));
      while (!stream.exhausted()) cs.update(static_cast<int>(stream.next()));
      ok += cs.set_at(0.05, false).members == std::vector<std::uint64_t>{n_plus};
    }
    out.push_back({"prior (" + num(a) + ", " + num(b) + ")", ok == seeds,
                   "C_N = {N+} on " + std::to_string(ok) + "/" + std::to_string(seeds) + " seeds"});
  }
  return out;
}

// ---------------------------------------------------------------------------
// 8, 9, 11. Scenario checks
// ---------------------------------------------------------------------------

std::vector<Sub> scenario_checks(sim::Scenario scenario, std::uint64_t reps, const std::string& prefix) {
  sim::ExperimentConfig cfg;
  cfg.scenario = scenario;
  cfg.N = 1000;
  cfg.alpha = 0.05;
  cfg.replications = reps;
  const auto r = sim::run_experiment(cfg);
  std::vector<Sub> out;
  for (const auto& c : r.checks) {
    if (c.name.rfind(prefix, 0) == 0) out.push_back({c.name, c.passed, c.detail});
  }
  if (out.empty()) out.push_back({prefix, false, "no checks produced"});
  return out;
}

std::vector<Sub> criterion_8() { return scenario_checks(sim::Scenario::width_compare, 100, "bm_compare/"); }
std::vector<Sub> criterion_9() { return scenario_checks(sim::Scenario::width_compare, 100, "variance/"); }
std::vector<Sub> criterion_11() { return scenario_checks(sim::Scenario::timing_H, 100, "timing/"); }

// ---------------------------------------------------------------------------
// 10. Unbiasedness by enumeration
// ---------------------------------------------------------------------------

std::vector<Sub> criterion_10() {
  const std::vector<std::vector<double>> pops{{0.3},
                                              {0.9, 0.05},
                                              {0.0, 0.4, 1.0},
                                              {0.0, 0.0, 1.0, 1.0},
                                              {0.2, 0.2, 0.9, 0.5, 0.0},
                                              {0.1, 0.5, 0.2, 0.7, 1.0, 0.0}};
  double worst = 0;
  for (const auto& values : pops) {
    const BoundedPopulation pop{values, 0.0, 1.0};
    const double mu = population_mean(pop);
    const auto orderings = enumerate_orderings(pop);
    for (std::size_t t = 1; t <= values.size(); ++t) {
      long double expectation = 0;
      for (const auto& o : orderings) {
        auto st = make_bounded_state(bounded(values.size(), BoundedMethod::hoeffding, LambdaSchedule::hoeffding_spread()));
        for (std::size_t k = 0; k < t; ++k) bounded_cs_update(st, o.items[k]);
        expectation += o.probability * static_cast<long double>(st.mu_hat_unweighted());
      }
      worst = std::max(worst, std::abs(static_cast<double>(expectation) - mu));
    }
  }
  return {{"|E[mu_hat_t] - mu| <= 1e-10 for N <= 6, every t", worst <= 1e-10, "worst " + num(worst)}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  int only = 0;
  app.add_option("--criterion", only, "run a single criterion (1-11)")->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "PPR martingale identity, N <= 8", 10, criterion_1},
      {2, "bounded supermartingale inequality", 10, criterion_2},
      {3, "time-uniform coverage over 5000 seeds", 300, criterion_3},
      {4, "fixed-sample dominance over classical Hoeffding", 1, criterion_4},
      {5, "exact permutation p-value and adaptive decision", 30, criterion_5},
      {6, "p-value and confidence sequence duality", 60, criterion_6},
      {7, "PPR set collapses to N+ at t = N", 60, criterion_7},
      {8, "Hoeffding CS versus Bardenet-Maillard band", 60, criterion_8},
      {9, "variance adaptivity of empirical Bernstein", 60, criterion_9},
      {10, "unbiasedness of the without-replacement estimator", 5, criterion_10},
      {11, "constant per-update cost and PPR trace time", 60, criterion_11},
  };

  bool all_ok = true;
  for (const auto& c : criteria) {
    if (only && c.id != only) continue;
    const auto start = std::chrono::steady_clock::now();
    auto subs = c.run();
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    subs.push_back({"runtime", elapsed <= c.budget_seconds, num(elapsed) + " s <= " + num(c.budget_seconds) + " s"});
    bool ok = true;
    for (const auto& s : subs) ok = ok && s.ok;
    all_ok = all_ok && ok;
    std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", c.id, c.title.c_str());
    for (const auto& s : subs) std::printf("    %s %s: %s\n", s.ok ? "ok  " : "FAIL", s.name.c_str(), s.detail.c_str());
    std::fflush(stdout);
  }
  return all_ok ? 0 : 1;
}
