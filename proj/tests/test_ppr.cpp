#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "worcs/population.hpp"
#include "worcs/ppr.hpp"

using namespace worcs;

TEST(BetaBinomial, UniformPriorIsUniform) {
  EXPECT_NEAR(log_beta_binomial_pmf(3, 10, 1.0, 1.0), std::log(1.0 / 11.0), 1e-13);
}

TEST(BetaBinomial, EmptySupportHasProbabilityOne) { EXPECT_NEAR(log_beta_binomial_pmf(0, 0, 2.0, 5.0), 0.0, 1e-14); }

TEST(BetaBinomial, RationalOracle) {
  // C(4,2) B(4,5) / B(2,3) = 6 * (1/280) * 12 = 9/35
  EXPECT_NEAR(std::exp(log_beta_binomial_pmf(2, 4, 2.0, 3.0)), 9.0 / 35.0, 1e-14);
}

TEST(BetaBinomial, SumsToOne) {
  for (auto [a, b] : {std::pair{1.0, 1.0}, {2.0, 5.0}, {0.3, 7.5}}) {
    double total = 0;
    for (std::uint64_t k = 0; k <= 40; ++k) total += std::exp(log_beta_binomial_pmf(k, 40, a, b));
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(DirichletMultinomial, BinaryCaseMatchesBetaBinomial) {
  for (std::uint64_t k = 0; k <= 9; ++k) {
    EXPECT_NEAR(log_dirichlet_multinomial_pmf({k, 9 - k}, {2.0, 5.0}), log_beta_binomial_pmf(k, 9, 2.0, 5.0), 1e-12);
  }
}

TEST(PprUpdate, Counts) {
  auto st = ppr_update(PprState{10, 0, 0, 1, 1}, 1);
  EXPECT_EQ(st.t, 1u);
  EXPECT_EQ(st.s, 1u);
  st = ppr_update(PprState{10, 5, 2, 1, 1}, 0);
  EXPECT_EQ(st.t, 6u);
  EXPECT_EQ(st.s, 2u);
  EXPECT_THROW(ppr_update(PprState{2, 2, 1, 1, 1}, 1), StateError);
  EXPECT_THROW(ppr_update(PprState{2, 0, 0, 1, 1}, 2), DomainError);
}

TEST(PprUpdate, ConservationOverFullStream) {
  auto stream = draw_stream(BinaryPopulation{200, 77}, 5);
  PprState st{200, 0, 0, 1, 1};
  while (!stream.exhausted()) st = ppr_update(st, static_cast<int>(stream.next()));
  EXPECT_EQ(st.s, 77u);
}

TEST(PprRatio, OneBeforeData) {
  PprState st{30, 0, 0, 2.0, 5.0};
  for (std::uint64_t n = 0; n <= 30; ++n) EXPECT_NEAR(ppr_log_ratio(st, n), 0.0, 1e-12);
}

TEST(PprRatio, AtExhaustionEqualsPriorMass) {
  PprState st{12, 12, 5, 2.0, 5.0};
  EXPECT_NEAR(ppr_log_ratio(st, 5), log_beta_binomial_pmf(5, 12, 2.0, 5.0), 1e-12);
  EXPECT_EQ(ppr_log_ratio(st, 4), kInf);
  EXPECT_EQ(ppr_log_ratio(st, 6), kInf);
}

TEST(PprRatio, SupportExclusion) {
  PprState st{6, 2, 2, 1, 1};
  EXPECT_EQ(ppr_ratio(st, 0), kInf);
  EXPECT_EQ(ppr_ratio(st, 1), kInf);
  EXPECT_TRUE(std::isfinite(ppr_ratio(st, 2)));
}

TEST(PprRatio, FastKernelMatchesDirectRoute) {
  auto table = std::make_shared<const LogFactorialTable>(5000);
  PprRatioKernel kernel(table);
  for (auto st : {PprState{5000, 1234, 800, 1, 1}, PprState{5000, 4999, 3000, 2, 5}, PprState{100, 37, 0, 0.5, 0.5}}) {
    kernel.prepare(st);
    for (std::uint64_t n = 0; n <= st.N; n += (st.N > 100 ? 7 : 1)) {
      const double direct = ppr_log_ratio(st, n);
      const double fast = kernel(n);
      if (std::isinf(direct)) {
        EXPECT_TRUE(std::isinf(fast));
      } else {
        EXPECT_NEAR(fast, direct, 1e-8 * std::max(1.0, std::abs(direct))) << n;
      }
    }
  }
}

namespace {

// Working-model predictive probability that the next draw is a one.
double predictive_one(const PprState& st) {
  return (st.prior_a + static_cast<double>(st.s)) / (st.prior_a + st.prior_b + static_cast<double>(st.t));
}

struct MartingaleCheck {
  double worst_interior = 0.0;    // max |E[R_{t+1} | hist] - R_t| where the truth allows both outcomes
  double worst_identity = 0.0;    // max |E[R_{t+1} | hist] - R_t * m(supported outcomes)|
  double worst_excess = -kInf;    // max E[R_{t+1} | hist] - R_t over all histories
  double worst_any = 0.0;         // max |E[R_{t+1} | hist] - R_t| over all histories
};

// Conditional expectation oracle: group orderings by prefix and average
// R_{t+1}(N+) over the exact ordering law.
MartingaleCheck check_martingale(std::uint64_t N, std::uint64_t n_plus, double a, double b) {
  MartingaleCheck out;
  const auto orderings = enumerate_orderings(BinaryPopulation{N, n_plus});
  for (std::uint64_t t = 0; t < N; ++t) {
    std::map<std::vector<double>, std::pair<long double, long double>> groups;  // prefix -> (mass, mass * R_{t+1})
    for (const auto& o : orderings) {
      PprState st{N, 0, 0, a, b};
      for (std::uint64_t i = 0; i <= t; ++i) st = ppr_update(st, static_cast<int>(o.items[i]));
      std::vector<double> prefix(o.items.begin(), o.items.begin() + static_cast<std::ptrdiff_t>(t));
      auto& g = groups[prefix];
      g.first += o.probability;
      g.second += o.probability * static_cast<long double>(ppr_ratio(st, n_plus));
    }
    for (const auto& [prefix, g] : groups) {
      PprState st{N, 0, 0, a, b};
      for (double x : prefix) st = ppr_update(st, static_cast<int>(x));
      const double expected = static_cast<double>(g.second / g.first);
      const double r = ppr_ratio(st, n_plus);
      const std::uint64_t ones_left = n_plus - st.s, zeros_left = (N - n_plus) - (t - st.s);
      double supported = 0.0;
      if (ones_left > 0) supported += predictive_one(st);
      if (zeros_left > 0) supported += 1.0 - predictive_one(st);
      out.worst_identity = std::max(out.worst_identity, std::abs(expected - r * supported));
      out.worst_excess = std::max(out.worst_excess, expected - r);
      out.worst_any = std::max(out.worst_any, std::abs(expected - r));
      if (ones_left > 0 && zeros_left > 0) out.worst_interior = std::max(out.worst_interior, std::abs(expected - r));
    }
  }
  return out;
}

}  // namespace

TEST(PprMartingale, ExactEqualityWhereTruthAllowsBothOutcomes) {
  for (std::uint64_t N = 1; N <= 8; ++N) {
    for (std::uint64_t n_plus = 0; n_plus <= N; ++n_plus) {
      for (auto [a, b] : {std::pair{1.0, 1.0}, {2.0, 5.0}}) {
        const auto c = check_martingale(N, n_plus, a, b);
        EXPECT_LE(c.worst_interior, 1e-10) << "N=" << N << " n+=" << n_plus;
        EXPECT_LE(c.worst_excess, 1e-10) << "N=" << N << " n+=" << n_plus;
        EXPECT_LE(c.worst_identity, 1e-10) << "N=" << N << " n+=" << n_plus;
      }
    }
  }
}

TEST(PprMartingale, DeficitAtBoundaryHistories) {
  // Once the truth has no ones left, the working model still predicts a one
  // with positive probability, so the expectation drops below R_t.
  const auto c = check_martingale(1, 0, 1.0, 1.0);
  EXPECT_NEAR(c.worst_any, 0.5, 1e-12);
  EXPECT_NEAR(check_martingale(2, 1, 1.0, 1.0).worst_any, 2.0 / 3.0, 1e-12);
}

TEST(PprMartingale, VilleBoundHoldsExactly) {
  const double alpha = 0.05;
  for (std::uint64_t N = 1; N <= 8; ++N) {
    for (std::uint64_t n_plus = 0; n_plus <= N; ++n_plus) {
      for (auto [a, b] : {std::pair{1.0, 1.0}, {2.0, 5.0}, {0.2, 0.2}}) {
        long double crossing = 0;
        for (const auto& o : enumerate_orderings(BinaryPopulation{N, n_plus})) {
          PprState st{N, 0, 0, a, b};
          bool crossed = false;
          for (double x : o.items) {
            st = ppr_update(st, static_cast<int>(x));
            crossed = crossed || ppr_log_ratio(st, n_plus) >= -std::log(alpha);
          }
          if (crossed) crossing += o.probability;
        }
        EXPECT_LE(static_cast<double>(crossing), alpha + 1e-12);
      }
    }
  }
}

TEST(PprConfidenceSet, FullBeforeDataPointAtEnd) {
  EXPECT_EQ(ppr_confidence_set(PprState{50, 0, 0, 1, 1}, 0.05).members.size(), 51u);
  const auto end = ppr_confidence_set(PprState{50, 50, 17, 1, 1}, 0.05);
  ASSERT_EQ(end.members.size(), 1u);
  EXPECT_EQ(end.members.front(), 17u);
}

TEST(PprConfidenceSequence, CollapsesToTruthForEverySeedAndPrior) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (auto [a, b] : {std::pair{1.0, 1.0}, {65.0, 35.0}, {10.0, 90.0}}) {
      PprConfidenceSequence cs(300, {0.05, a, b, true});
      auto stream = draw_stream(BinaryPopulation{300, 190}, seed);
      while (!stream.exhausted()) cs.update(static_cast<int>(stream.next()));
      EXPECT_EQ(cs.set_at(0.05, false).members, std::vector<std::uint64_t>{190});
      // The running intersection is {N+} unless the truth was excluded earlier.
      const auto inter = cs.reported_set().members;
      EXPECT_TRUE(inter.empty() || inter == std::vector<std::uint64_t>{190});
      EXPECT_EQ(inter.empty(), cs.running_max_log_ratio(190) >= -std::log(0.05));
    }
  }
}

TEST(PprConfidenceSequence, GridMatchesDirectSetAndRunningIntersection) {
  PprConfidenceSequence cs(120, {0.1, 2.0, 3.0, true});
  PprState st{120, 0, 0, 2.0, 3.0};
  auto stream = draw_stream(BinaryPopulation{120, 40}, 11);
  DiscreteSet intersection = ppr_confidence_set(st, 0.1);
  while (!stream.exhausted()) {
    const int x = static_cast<int>(stream.next());
    cs.update(x);
    st = ppr_update(st, x);
    const auto raw = ppr_confidence_set(st, 0.1);
    EXPECT_EQ(cs.set_at(0.1, false).members, raw.members);
    std::vector<std::uint64_t> next;
    std::set_intersection(intersection.members.begin(), intersection.members.end(), raw.members.begin(),
                          raw.members.end(), std::back_inserter(next));
    intersection.members = next;
    EXPECT_EQ(cs.reported_set().members, intersection.members);
  }
}

TEST(PprConfidenceSequence, MonotoneInAlpha) {
  PprConfidenceSequence cs(400, {0.05, 1, 1, true});
  auto stream = draw_stream(BinaryPopulation{400, 260}, 3);
  for (int i = 0; i < 150; ++i) {
    cs.update(static_cast<int>(stream.next()));
    for (bool inter : {false, true}) {
      const auto wide = cs.set_at(0.01, inter).members;
      const auto narrow = cs.set_at(0.2, inter).members;
      EXPECT_TRUE(std::includes(wide.begin(), wide.end(), narrow.begin(), narrow.end()));
    }
  }
}

TEST(PprConfidenceSequence, PValueAndEValueBoundaries) {
  PprConfidenceSequence cs(1000, {});
  const auto null = NullHypothesis::count_leq(550);
  cs.track_null(null);
  EXPECT_DOUBLE_EQ(cs.p_value(null), 1.0);
  EXPECT_DOUBLE_EQ(cs.p_value(null, PValueMode::running_min), 1.0);
  EXPECT_DOUBLE_EQ(cs.e_value(null), 1.0);
  auto stream = draw_stream(BinaryPopulation{1000, 650}, 8);
  double last_running_min = 1.0;
  while (!stream.exhausted()) {
    cs.update(static_cast<int>(stream.next()));
    const double p = cs.p_value(null, PValueMode::running_min);
    EXPECT_LE(p, last_running_min);
    last_running_min = p;
    EXPECT_LE(cs.p_value(null), p + 1e-15);
  }
  EXPECT_EQ(cs.p_value(null), 0.0);
  EXPECT_EQ(cs.e_value(null), kInf);
  EXPECT_THROW(cs.p_value(NullHypothesis::count_geq(10), PValueMode::running_min), DomainError);
  EXPECT_THROW(cs.p_value(NullHypothesis::count_geq(2000)), DomainError);
}

TEST(PprConfidenceSequence, SnapshotShape) {
  PprConfidenceSequence cs(10, {});
  auto s = cs.snapshot(true);
  EXPECT_EQ(s.method, "ppr");
  EXPECT_EQ(*s.set_lo, 0);
  EXPECT_EQ(*s.set_hi, 10);
  EXPECT_TRUE(*s.contiguous);
  EXPECT_EQ(s.members.size(), 11u);
  for (int x : {1, 0, 1, 1, 0, 0, 1, 1, 1, 0}) cs.update(x);
  s = cs.snapshot();
  EXPECT_EQ(*s.set_lo, 6);
  EXPECT_EQ(*s.set_hi, 6);
  EXPECT_THROW(cs.update(1), StateError);
}

TEST(PprConfidenceSequence, DecisionCoupledPrior) {
  const auto p = decision_coupled_prior(0.05, 100.0);
  EXPECT_DOUBLE_EQ(p.a, 5.0);
  EXPECT_DOUBLE_EQ(p.b, 95.0);
  EXPECT_THROW(decision_coupled_prior(1.0, 10.0), DomainError);
  EXPECT_THROW(decision_coupled_prior(0.5, 0.0), DomainError);
}

TEST(DirMult, UpdateAndConservation) {
  auto st = dm_ppr_update(DirMultPprState{10, 0, {0, 0, 0}, {1, 1, 1}}, 1);
  EXPECT_EQ(st.s, (std::vector<std::uint64_t>{0, 1, 0}));
  DirMultConfidenceSequence cs(60, 3, {});
  auto stream = draw_stream(CategoricalPopulation{{30, 20, 10}}, 4);
  while (!stream.exhausted()) cs.update(static_cast<std::size_t>(stream.next()));
  EXPECT_EQ(cs.state().s, (std::vector<std::uint64_t>{30, 20, 10}));
  const auto set = cs.reported_set();
  ASSERT_EQ(set.size(), 1u);
  EXPECT_EQ(set.front(), (std::vector<std::uint64_t>{30, 20, 10}));
}

TEST(DirMult, FullLatticeBeforeData) {
  DirMultConfidenceSequence cs(20, 3, {});
  EXPECT_EQ(cs.reported_set().size(), 231u);
  EXPECT_EQ(cs.lattice_size(), 231u);
}

TEST(DirMult, FastRouteMatchesDirect) {
  DirMultConfidenceSequence cs(25, 3, {0.05, {0.5, 2.0, 3.0}, false});
  auto stream = draw_stream(CategoricalPopulation{{5, 12, 8}}, 9);
  for (int i = 0; i < 10; ++i) cs.update(static_cast<std::size_t>(stream.next()));
  std::vector<std::vector<std::uint64_t>> direct;
  for (std::uint64_t a = 0; a <= 25; ++a) {
    for (std::uint64_t b = 0; a + b <= 25; ++b) {
      std::vector<std::uint64_t> n{a, b, 25 - a - b};
      if (dm_log_ratio(cs.state(), n) < -std::log(0.05)) direct.push_back(n);
    }
  }
  EXPECT_EQ(cs.confidence_set(0.05, false), direct);
}

TEST(DirMult, TwoCategoriesReduceToBinary) {
  const std::uint64_t N = 20;
  DirMultConfidenceSequence dm(N, 2, {0.05, {2.0, 5.0}, true});
  PprConfidenceSequence bin(N, {0.05, 2.0, 5.0, true});
  auto stream = draw_stream(BinaryPopulation{N, 8}, 21);
  while (!stream.exhausted()) {
    const double x = stream.next();
    // category 0 counts ones so the first coordinate is N+.
    dm.update(x == 1.0 ? 0 : 1);
    bin.update(static_cast<int>(x));
    for (std::uint64_t n = 0; n <= N; ++n) {
      const auto st = dm.state();
      const double lr = dm_log_ratio(st, {n, N - n});
      const double blr = bin.log_ratio(n);
      if (std::isinf(blr)) {
        EXPECT_TRUE(std::isinf(lr));
      } else {
        EXPECT_NEAR(lr, blr, 1e-10);
      }
    }
    std::vector<std::uint64_t> first;
    for (const auto& p : dm.reported_set()) first.push_back(p[0]);
    EXPECT_EQ(first, bin.reported_set().members);
  }
}

TEST(DirMult, Limits) {
  EXPECT_THROW(DirMultConfidenceSequence(10, 4, {}), DomainError);
  EXPECT_THROW(DirMultConfidenceSequence(10, 1, {}), DomainError);
  DirMultConfidenceSequence cs(5, 2, {});
  EXPECT_THROW(cs.update(2), DomainError);
}
