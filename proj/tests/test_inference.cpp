#include <cmath>

#include <gtest/gtest.h>

#include "worcs/inference.hpp"

using namespace worcs;

namespace {

BoundedCsConfig hoeffding(std::uint64_t N, double alpha = 0.05) {
  BoundedCsConfig cfg;
  cfg.N = N;
  cfg.alpha = alpha;
  cfg.method = BoundedMethod::hoeffding;
  cfg.schedule = LambdaSchedule::hoeffding_spread();
  return cfg;
}

BoundedPopulation skewed(std::uint64_t N, double shift, std::uint64_t seed) {
  SplitMix64 gen(seed);
  std::vector<double> v(N);
  for (auto& x : v) x = std::min(1.0, gen.uniform() * 0.8 + shift);
  return {v, 0.0, 1.0};
}

}  // namespace

TEST(AnytimePMean, OneBeforeDataAndAtNullEstimate) {
  auto st = make_bounded_state(hoeffding(100));
  EXPECT_EQ(anytime_p_mean(st, NullHypothesis::mean_leq(0.5)), 1.0);
  bounded_cs_update(st, 0.5);
  EXPECT_EQ(anytime_p_mean(st, NullHypothesis::mean_leq(0.5)), 1.0);
  EXPECT_THROW(anytime_p_mean(st, NullHypothesis::count_leq(3)), DomainError);
  EXPECT_THROW(anytime_p_mean(st, NullHypothesis::mean_leq(0.5), BoundedMethod::empirical_bernstein), DomainError);
}

TEST(AnytimePMean, DualToOneSidedBoundCrossing) {
  for (auto method : {BoundedMethod::hoeffding, BoundedMethod::empirical_bernstein}) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      auto cfg = hoeffding(800);
      cfg.method = method;
      if (method == BoundedMethod::empirical_bernstein) cfg.schedule = LambdaSchedule::eb_spread();
      const auto pop = skewed(800, 0.25, seed);
      const double m0 = 0.5;
      auto st = make_bounded_state(cfg);
      std::int64_t first_p = -1, first_lower = -1;
      for (double x : draw_stream(pop, seed).take_all()) {
        const auto snap = bounded_cs_update(st, x);
        if (first_p < 0 && anytime_p_mean(st, NullHypothesis::mean_leq(m0)) <= 0.05) first_p = static_cast<std::int64_t>(st.t);
        if (first_lower < 0 && *snap.lower_one_sided > m0) first_lower = static_cast<std::int64_t>(st.t);
      }
      EXPECT_EQ(first_p, first_lower) << "seed " << seed;
      EXPECT_GT(first_p, 0);
    }
  }
}

TEST(AnytimePMean, EqualsInverseSupremumOfEProcess) {
  auto st = make_bounded_state(hoeffding(300));
  const auto null = NullHypothesis::mean_geq(0.6);
  double sup_e = 1.0;
  for (double x : draw_stream(skewed(300, 0.0, 3), 3).take_all()) {
    bounded_cs_update(st, x);
    sup_e = std::max(sup_e, e_value(st, null));
    EXPECT_NEAR(anytime_p_mean(st, null), std::min(1.0, 1.0 / sup_e), 1e-12);
  }
}

TEST(AnytimePMean, ValidUnderTrueNull) {
  const int reps = 10000;
  int rejections = 0;
  std::vector<double> values(200);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = (i % 5) / 4.0;  // mean 0.5
  const BoundedPopulation pop{values, 0, 1};
  for (int r = 0; r < reps; ++r) {
    auto st = make_bounded_state(hoeffding(200));
    auto stream = draw_stream(pop, split_seed(5, static_cast<std::uint64_t>(r)));
    bool rejected = false;
    while (!stream.exhausted() && !rejected) {
      bounded_cs_update(st, stream.next());
      rejected = e_value(st, NullHypothesis::mean_leq(0.5)) >= 20.0;
    }
    rejections += rejected;
  }
  EXPECT_LE(static_cast<double>(rejections) / reps, 0.05 + 3 * std::sqrt(0.05 * 0.95 / reps));
}

TEST(AnytimePGeneric, BracketEdges) {
  EXPECT_EQ(anytime_p_generic([](double) { return Interval{0.8, 0.9}; }, Interval{0.0, 0.1}), kPBracketLow);
  EXPECT_EQ(anytime_p_generic([](double) { return Interval{0.0, 1.0}; }, Interval{0.0, 1.0}), 1.0);
  EXPECT_THROW(anytime_p_generic([](double q) { return q < 0.5 ? Interval{0.8, 0.9} : Interval{0.0, 1.0}; },
                                 Interval{0.0, 0.1}),
               IntegrityError);
}

TEST(AnytimePGeneric, AgreesWithPprClosedForm) {
  PprConfidenceSequence cs(500, {});
  const auto null = NullHypothesis::count_leq(300);
  auto stream = draw_stream(BinaryPopulation{500, 340}, 17);
  for (int t = 1; t <= 500; ++t) {
    cs.update(static_cast<int>(stream.next()));
    if (t % 25 != 0) continue;
    const double closed = ppr_p_value(cs, null);
    const double generic = anytime_p_generic([&](double q) { return cs.set_at(q, true); },
                                             [&](std::uint64_t n) { return null.contains_count(n, 500); });
    if (closed < kPBracketLow) {
      EXPECT_EQ(generic, kPBracketLow);
    } else {
      EXPECT_NEAR(generic, closed, 1e-5) << "t=" << t;
    }
  }
}

TEST(PprDuality, FirstCrossingEqualsFirstExclusion) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    PprConfidenceSequence cs(1000, {});
    const auto null = NullHypothesis::count_leq(550);
    auto stream = draw_stream(BinaryPopulation{1000, 650}, seed);
    std::int64_t first_p = -1, first_excl = -1;
    while (!stream.exhausted() && (first_p < 0 || first_excl < 0)) {
      cs.update(static_cast<int>(stream.next()));
      const auto t = static_cast<std::int64_t>(cs.t());
      if (first_p < 0 && ppr_p_value(cs, null) <= 0.05) first_p = t;
      if (first_excl < 0 && cs.reported_set().lo() > 550) first_excl = t;
    }
    EXPECT_EQ(first_p, first_excl);
  }
}

TEST(Stopping, FirstCrossing) {
  std::vector<CsSnapshot> h;
  for (double p : {1.0, 0.3, 0.04, 0.2}) {
    CsSnapshot s;
    s.t = h.size() + 1;
    s.p_value = p;
    h.push_back(s);
  }
  const auto d = evaluate_stop(StoppingPolicy::reject_null(0.05), h);
  EXPECT_TRUE(d.stop);
  EXPECT_EQ(d.t, 3u);
  EXPECT_EQ(d.reason, "reject_null");
  EXPECT_EQ(evaluate_stop(StoppingPolicy::reject_null(0.05), std::span(h).first(2)), StopDecision{});
}

TEST(Stopping, WidthNeverBelowContinues) {
  auto st = make_bounded_state(hoeffding(50));
  std::vector<CsSnapshot> h;
  for (int i = 0; i < 50; ++i) h.push_back(bounded_cs_update(st, (i % 2) ? 1.0 : 0.0));
  // Exhaustion collapses the band; look only at the streaming part.
  EXPECT_FALSE(evaluate_stop(StoppingPolicy::cs_width_below(0.01), std::span(h).first(49)).stop);
  EXPECT_THROW(evaluate_stop(StoppingPolicy::sets_disjoint(), h), DomainError);
}

TEST(Stopping, ColourSetsBecomeDisjoint) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    PprConfidenceSequence green(1000, {}), red(1000, {});
    std::vector<CsSnapshot> hg, hr;
    for (double x : draw_stream(BinaryPopulation{1000, 650}, seed).take_all()) {
      green.update(static_cast<int>(x));
      red.update(1 - static_cast<int>(x));
      hg.push_back(green.snapshot());
      hr.push_back(red.snapshot());
    }
    const auto d = evaluate_stop(StoppingPolicy::sets_disjoint(), hg, hr);
    EXPECT_TRUE(d.stop);
    EXPECT_LT(d.t, 1000u);
  }
}

TEST(Hypothesis, ParseAndPrint) {
  EXPECT_EQ(parse_null("count_leq:550").to_string(), "count_leq:550");
  EXPECT_EQ(parse_null("count_in:3,1,2").to_string(), "count_in:1,2,3");
  EXPECT_EQ(parse_null("mean_geq:0.3").to_string(), "mean_geq:0.3");
  EXPECT_THROW(parse_null("count_leq"), DomainError);
  EXPECT_THROW(parse_null("count_leq:-1"), DomainError);
  EXPECT_THROW(parse_null("median_leq:1"), DomainError);
}

TEST(Snapshot, JsonRoundTripKeepsInfinity) {
  CsSnapshot s;
  s.t = 4;
  s.method = "ppr";
  s.set_lo = 2;
  s.set_hi = 3;
  s.contiguous = true;
  s.e_value = kInf;
  s.p_value = 0.0;
  s.stop = StopRecord{"reject_null", 4};
  const auto j = to_json(s);
  EXPECT_EQ(j["v"], 1);
  EXPECT_EQ(j["e_value"], "inf");
  const auto back = snapshot_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(*back.e_value, kInf);
  EXPECT_EQ(back.stop->t, 4u);
  EXPECT_EQ(to_json(back).dump(), j.dump());
}
