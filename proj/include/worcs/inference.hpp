#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>

#include "worcs/bounded.hpp"
#include "worcs/hypothesis.hpp"
#include "worcs/ppr.hpp"
#include "worcs/snapshot.hpp"

namespace worcs {

// ---------------------------------------------------------------------------
// Anytime p-values and e-values
// ---------------------------------------------------------------------------

namespace detail {

inline bool mean_alternative_is_greater(const NullHypothesis& null) {
  switch (null.kind) {
    case NullHypothesis::Kind::mean_leq: return true;
    case NullHypothesis::Kind::mean_geq: return false;
    default: throw DomainError("bounded-mean p-values need a mean_leq or mean_geq null, got " + null.to_string());
  }
}

}  // namespace detail

/// Running-minimum p-value for a one-sided mean null, from the closed-form
/// inversion of the one-sided bound: p_s = min(1, exp(-(D_s (mu_hat_s - m0) - penalty_s))).
/// p <= alpha exactly when the one-sided level-alpha bound has crossed m0
/// at some s <= t.
inline double anytime_p_mean(const BoundedCsState& state, const NullHypothesis& null) {
  const bool greater = detail::mean_alternative_is_greater(null);
  double best = 0.0;  // sup of log e-process; e_0 = 1
  for (const auto& step : state.history) best = std::max(best, log_e_process(step, null.mean, greater));
  return std::min(1.0, std::exp(-best));
}

inline double anytime_p_mean(const BoundedCsState& state, const NullHypothesis& null, BoundedMethod method) {
  if (method != state.config.method) throw DomainError("method does not match the state's method");
  return anytime_p_mean(state, null);
}

/// Value of the e-process at the boundary of a one-sided mean null (the
/// infimum over the null set).
inline double e_value(const BoundedCsState& state, const NullHypothesis& null) {
  const bool greater = detail::mean_alternative_is_greater(null);
  if (state.history.empty()) return 1.0;
  return std::exp(log_e_process(state.history.back(), null.mean, greater));
}

inline double e_value(const PprConfidenceSequence& cs, const NullHypothesis& null) { return cs.e_value(null); }

inline double ppr_p_value(const PprConfidenceSequence& cs, const NullHypothesis& null,
                          PValueMode mode = PValueMode::intersected) {
  return cs.p_value(null, mode);
}

inline constexpr double kPBracketLow = 1e-12;

namespace detail {

inline double bisect_exclusion(const std::function<bool(double)>& excluded, double tol) {
  if (!(tol > 0.0)) throw DomainError("tolerance must be positive");
  constexpr std::array<double, 12> probes{kPBracketLow, 1e-9, 1e-6, 1e-4, 1e-3, 0.01, 0.05, 0.1, 0.25, 0.5, 0.75,
                                          1.0 - 1e-12};
  bool seen_excluded = false;
  for (double q : probes) {
    const bool e = excluded(q);
    if (seen_excluded && !e) throw IntegrityError("confidence family is not monotone in the level");
    seen_excluded = seen_excluded || e;
  }
  if (excluded(kPBracketLow)) return kPBracketLow;
  if (!excluded(1.0 - 1e-12)) return 1.0;
  double lo = kPBracketLow, hi = 1.0 - 1e-12;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    (excluded(mid) ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace detail

/// inf{q : C(q) and the null are disjoint} by bisection, for interval-valued
/// families. Returns the conservative (upper) end of the final bracket.
inline double anytime_p_generic(const std::function<Interval(double)>& cs_at_level, Interval null_set,
                                double tol = 1e-5) {
  return detail::bisect_exclusion(
      [&](double q) {
        const auto c = cs_at_level(q);
        return c.empty() || c.hi < null_set.lo || c.lo > null_set.hi;
      },
      tol);
}

/// Same for index-set families and a null given as a membership predicate.
inline double anytime_p_generic(const std::function<DiscreteSet(double)>& cs_at_level,
                                const std::function<bool(std::uint64_t)>& in_null, double tol = 1e-5) {
  return detail::bisect_exclusion(
      [&](double q) {
        const auto c = cs_at_level(q);
        return std::none_of(c.members.begin(), c.members.end(), in_null);
      },
      tol);
}

// ---------------------------------------------------------------------------
// Stopping
// ---------------------------------------------------------------------------

struct StoppingPolicy {
  enum class Mode { reject_null, cs_excludes_value, cs_width_below, sets_disjoint };

  Mode mode = Mode::reject_null;
  double alpha = 0.05;
  double value = 0.0;  // excluded value or width threshold

  static StoppingPolicy reject_null(double alpha) { return {Mode::reject_null, alpha, 0.0}; }
  static StoppingPolicy cs_excludes_value(double v) { return {Mode::cs_excludes_value, 0.05, v}; }
  static StoppingPolicy cs_width_below(double w) { return {Mode::cs_width_below, 0.05, w}; }
  static StoppingPolicy sets_disjoint() { return {Mode::sets_disjoint, 0.05, 0.0}; }
};

inline std::string to_string(StoppingPolicy::Mode m) {
  switch (m) {
    case StoppingPolicy::Mode::reject_null: return "reject_null";
    case StoppingPolicy::Mode::cs_excludes_value: return "cs_excludes_value";
    case StoppingPolicy::Mode::cs_width_below: return "cs_width_below";
    case StoppingPolicy::Mode::sets_disjoint: return "sets_disjoint";
  }
  return "unknown";
}

struct StopDecision {
  bool stop = false;
  std::string reason;
  std::uint64_t t = 0;

  friend bool operator==(const StopDecision&, const StopDecision&) = default;
};

inline bool triggers(const StoppingPolicy& policy, const CsSnapshot& s) {
  switch (policy.mode) {
    case StoppingPolicy::Mode::reject_null:
      return s.p_value && *s.p_value <= policy.alpha;
    case StoppingPolicy::Mode::cs_excludes_value: {
      const auto iv = s.reported_interval();
      return !iv.contains(policy.value);
    }
    case StoppingPolicy::Mode::cs_width_below:
      return s.reported_interval().width() < policy.value;
    case StoppingPolicy::Mode::sets_disjoint:
      throw DomainError("sets_disjoint needs two snapshot histories");
  }
  return false;
}

/// First time the policy fires, or continue. Re-evaluating a longer
/// history that already stopped returns the same index.
inline StopDecision evaluate_stop(const StoppingPolicy& policy, std::span<const CsSnapshot> history) {
  for (const auto& s : history) {
    if (triggers(policy, s)) return {true, to_string(policy.mode), s.t};
  }
  return {};
}

/// Two-set rule: stop once the reported intervals of two sequences (e.g.
/// counts of two colours) no longer overlap. Histories are aligned by t.
inline StopDecision evaluate_stop(const StoppingPolicy& policy, std::span<const CsSnapshot> first,
                                  std::span<const CsSnapshot> second) {
  if (policy.mode != StoppingPolicy::Mode::sets_disjoint) throw DomainError("two-history rule needs sets_disjoint");
  const auto n = std::min(first.size(), second.size());
  for (std::size_t k = 0; k < n; ++k) {
    const auto a = first[k].reported_interval();
    const auto b = second[k].reported_interval();
    if (a.hi < b.lo || b.hi < a.lo) return {true, to_string(policy.mode), first[k].t};
  }
  return {};
}

}  // namespace worcs
