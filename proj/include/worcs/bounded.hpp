#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "worcs/hypothesis.hpp"
#include "worcs/numeric.hpp"
#include "worcs/population.hpp"
#include "worcs/snapshot.hpp"

namespace worcs {

// Time-uniform confidence sequences for the mean of a bounded finite
// population sampled without replacement. Both methods centre on a
// lambda-weighted estimator that reweights past observations by
// 1 / (N - i + 1); the Hoeffding variant pays a fixed sub-Gaussian penalty
// and the empirical-Bernstein variant a penalty driven by observed squared
// deviations.

/// Sum_{i=1}^{t} (i - 1) / (N - i + 1): how much tighter the
/// without-replacement bounds are than their with-replacement versions.
inline double advantage(std::uint64_t t, std::uint64_t N) {
  if (t > N) throw DomainError("advantage needs t <= N");
  double a = 0.0;
  for (std::uint64_t i = 2; i <= t; ++i) a += static_cast<double>(i - 1) / static_cast<double>(N - i + 1);
  return a;
}

inline double psi_h(double lambda, double lower, double upper) {
  if (!(upper > lower)) throw DomainError("psi_h needs upper > lower");
  const double c = upper - lower;
  return lambda * lambda * c * c / 8.0;
}

inline double psi_e(double lambda, double c) {
  if (!(c > 0.0)) throw DomainError("psi_e needs c > 0");
  if (!(lambda >= 0.0) || !(c * lambda < 1.0)) throw DomainError("psi_e needs 0 <= lambda < 1/c");
  return (-std::log1p(-c * lambda) - c * lambda) / 4.0;
}

enum class BoundedMethod { hoeffding, empirical_bernstein };

inline const char* to_string(BoundedMethod m) { return m == BoundedMethod::hoeffding ? "hoeffding" : "eb"; }

/// Predictable lambda sequences. Every kind reads only X_1..X_{t-1}.
struct LambdaSchedule {
  enum class Kind {
    fixed_opt,         // constant, width-optimal at t0 (Hoeffding)
    hoeffding_spread,  // ~ 1/sqrt(t log t), capped at 1/c
    eb_t0,             // variance-adaptive, tuned for t0, capped at 1/(2c)
    eb_spread,         // variance-adaptive ~ 1/sqrt(t log t), capped at 1/(2c)
    eb_ci,             // fixed-sample EB interval at n (uses t0 as n)
    constant,
    custom,
  };

  Kind kind = Kind::hoeffding_spread;
  std::uint64_t t0 = 0;
  double value = 0.0;
  std::vector<double> sequence;
  std::optional<double> alpha;  // defaults to the confidence sequence's alpha

  static LambdaSchedule fixed_opt(std::uint64_t t0) { return {Kind::fixed_opt, t0, 0.0, {}, {}}; }
  static LambdaSchedule hoeffding_spread() { return {Kind::hoeffding_spread, 0, 0.0, {}, {}}; }
  static LambdaSchedule eb_t0(std::uint64_t t0) { return {Kind::eb_t0, t0, 0.0, {}, {}}; }
  static LambdaSchedule eb_spread() { return {Kind::eb_spread, 0, 0.0, {}, {}}; }
  static LambdaSchedule eb_ci(std::uint64_t n) { return {Kind::eb_ci, n, 0.0, {}, {}}; }
  static LambdaSchedule constant(double v) { return {Kind::constant, 0, v, {}, {}}; }
  static LambdaSchedule custom(std::vector<double> seq) { return {Kind::custom, 0, 0.0, std::move(seq), {}}; }

  bool needs_t0() const noexcept { return kind == Kind::fixed_opt || kind == Kind::eb_t0 || kind == Kind::eb_ci; }
};

inline std::string to_string(LambdaSchedule::Kind k) {
  switch (k) {
    case LambdaSchedule::Kind::fixed_opt: return "fixed_opt";
    case LambdaSchedule::Kind::hoeffding_spread: return "hoeffding_spread";
    case LambdaSchedule::Kind::eb_t0: return "eb_t0";
    case LambdaSchedule::Kind::eb_spread: return "eb_spread";
    case LambdaSchedule::Kind::eb_ci: return "eb_ci";
    case LambdaSchedule::Kind::constant: return "constant";
    case LambdaSchedule::Kind::custom: return "custom";
  }
  return "unknown";
}

inline LambdaSchedule::Kind parse_schedule_kind(const std::string& s) {
  using K = LambdaSchedule::Kind;
  if (s == "fixed_opt") return K::fixed_opt;
  if (s == "hoeffding_spread" || s == "spread") return K::hoeffding_spread;
  if (s == "eb_t0") return K::eb_t0;
  if (s == "eb_spread") return K::eb_spread;
  if (s == "eb_ci") return K::eb_ci;
  if (s == "constant") return K::constant;
  if (s == "custom") return K::custom;
  throw DomainError("unknown schedule \"" + s + "\"");
}

/// Where the empirical-Bernstein penalty centres each squared deviation:
/// the unweighted without-replacement estimator (sequence) or the plain
/// running mean (fixed-sample interval).
enum class VarianceCenter { wor_estimator, plain_mean };

struct BoundedCsConfig {
  std::uint64_t N = 0;
  double lower = 0.0;
  double upper = 1.0;
  double alpha = 0.05;
  BoundedMethod method = BoundedMethod::hoeffding;
  LambdaSchedule schedule = LambdaSchedule::hoeffding_spread();
  bool intersect = true;
  VarianceCenter variance_center = VarianceCenter::wor_estimator;

  double c() const noexcept { return upper - lower; }
};

inline void validate(const BoundedCsConfig& cfg) {
  if (cfg.N < 1) throw DomainError("N must be at least 1");
  if (!(cfg.lower < cfg.upper)) throw DomainError("bounds need lower < upper");
  require_alpha(cfg.alpha);
  const auto& s = cfg.schedule;
  if (s.alpha) require_alpha(*s.alpha, "schedule alpha");
  if (s.needs_t0() && s.t0 < 1) throw DomainError("schedule needs t0 >= 1");
  const bool eb = cfg.method == BoundedMethod::empirical_bernstein;
  auto check_value = [&](double v) {
    if (!std::isfinite(v)) throw DomainError("schedule out of domain: lambda must be finite");
    if (eb && !(v >= 0.0 && v * cfg.c() < 1.0)) throw DomainError("schedule out of domain: lambda must lie in [0, 1/c)");
    if (!eb && !(v > 0.0)) throw DomainError("schedule out of domain: lambda must be positive");
  };
  if (s.kind == LambdaSchedule::Kind::constant) check_value(s.value);
  if (s.kind == LambdaSchedule::Kind::custom) {
    for (double v : s.sequence) check_value(v);
  }
}

/// Running totals after step t; enough to evaluate the e-process at any
/// mean after the fact.
struct StepTotals {
  double weighted_num = 0.0;
  double weighted_den = 0.0;
  double penalty = 0.0;
};

struct BoundedCsState {
  BoundedCsConfig config;
  std::uint64_t t = 0;
  double sum_x = 0.0;
  double sum_weighted_num = 0.0;  // sum lambda_i (X_i + S_{i-1} / (N - i + 1))
  double sum_weighted_den = 0.0;  // sum lambda_i (1 + (i - 1) / (N - i + 1))
  double sum_psi_h = 0.0;
  double sum_psi_e_var = 0.0;     // sum (c/2)^-2 (X_i - centre_{i-1})^2 psi_e(lambda_i)
  double var_process = 0.0;       // sum (X_i - centre_{i-1})^2
  double unweighted_num = 0.0;
  double unweighted_den = 0.0;
  double advantage = 0.0;
  double sum_sq_dev_running_mean = 0.0;  // sum (X_i - mean(X_1..X_i))^2
  double lo_intersected = 0.0;
  double hi_intersected = 1.0;
  std::vector<double> lambda_history;
  std::vector<StepTotals> history;

  double c() const noexcept { return config.c(); }
  double midpoint() const noexcept { return 0.5 * (config.lower + config.upper); }

  /// Unweighted without-replacement estimator; the midpoint before any data.
  double mu_hat_unweighted() const noexcept { return t == 0 ? midpoint() : unweighted_num / unweighted_den; }

  double mu_hat_weighted() const noexcept {
    return sum_weighted_den > 0.0 ? sum_weighted_num / sum_weighted_den : mu_hat_unweighted();
  }

  double plain_mean() const noexcept { return t == 0 ? midpoint() : sum_x / static_cast<double>(t); }

  /// (c^2/4 + sum_{i<=t} (X_i - mean_i)^2) / (t + 1): the variance estimate
  /// the adaptive schedules use at step t + 1.
  double sigma2_hat() const noexcept {
    return (c() * c() / 4.0 + sum_sq_dev_running_mean) / static_cast<double>(t + 1);
  }

  double penalty() const noexcept {
    return config.method == BoundedMethod::hoeffding ? sum_psi_h : sum_psi_e_var;
  }
};

inline BoundedCsState make_bounded_state(const BoundedCsConfig& cfg) {
  validate(cfg);
  BoundedCsState st;
  st.config = cfg;
  st.lo_intersected = cfg.lower;
  st.hi_intersected = cfg.upper;
  return st;
}

/// lambda_t for step t (1-based) given the state after t - 1 observations.
inline double next_lambda(const LambdaSchedule& schedule, std::uint64_t t, const BoundedCsState& state) {
  if (t < 1) throw DomainError("lambda schedules are indexed from t = 1");
  const double alpha = schedule.alpha.value_or(state.config.alpha);
  const double c = state.c();
  const double log_term = std::log(2.0 / alpha);
  const auto td = static_cast<double>(t);
  using K = LambdaSchedule::Kind;
  switch (schedule.kind) {
    case K::fixed_opt:
      return std::sqrt(8.0 * log_term / (static_cast<double>(schedule.t0) * c * c));
    case K::hoeffding_spread:
      return std::min(std::sqrt(8.0 * log_term / (td * std::log(td + 1.0) * c * c)), 1.0 / c);
    case K::eb_t0:
    case K::eb_ci:
      return std::min(std::sqrt(2.0 * log_term / (state.sigma2_hat() * static_cast<double>(schedule.t0))), 1.0 / (2.0 * c));
    case K::eb_spread:
      return std::min(std::sqrt(2.0 * log_term / (state.sigma2_hat() * td * std::log(td + 1.0))), 1.0 / (2.0 * c));
    case K::constant:
      return schedule.value;
    case K::custom:
      if (t > schedule.sequence.size()) throw StateError("custom lambda sequence shorter than the stream");
      return schedule.sequence[t - 1];
  }
  throw DomainError("unknown schedule kind");
}

/// Log of the e-process exp{D (mu_hat - m) - penalty} (alternative
/// "mean > m") or exp{D (m - mu_hat) - penalty} (alternative "mean < m").
inline double log_e_process(const StepTotals& s, double m, bool greater) {
  const double drift = s.weighted_num - m * s.weighted_den;
  return (greater ? drift : -drift) - s.penalty;
}

namespace detail {

inline CsSnapshot bounded_snapshot(const BoundedCsState& st) {
  const auto& cfg = st.config;
  CsSnapshot s;
  s.t = st.t;
  s.alpha = cfg.alpha;
  s.method = to_string(cfg.method);
  s.intersected = cfg.intersect;
  s.mu_hat_weighted = st.mu_hat_weighted();
  s.mu_hat_plain = st.plain_mean();
  if (!st.lambda_history.empty()) s.lambda_t = st.lambda_history.back();
  if (st.sum_weighted_den > 0.0) {
    const double center = st.mu_hat_weighted();
    const double two_sided = (st.penalty() + std::log(2.0 / cfg.alpha)) / st.sum_weighted_den;
    const double one_sided = (st.penalty() + std::log(1.0 / cfg.alpha)) / st.sum_weighted_den;
    s.lo = std::clamp(center - two_sided, cfg.lower, cfg.upper);
    s.hi = std::clamp(center + two_sided, cfg.lower, cfg.upper);
    s.lower_one_sided = std::clamp(center - one_sided, cfg.lower, cfg.upper);
    s.upper_one_sided = std::clamp(center + one_sided, cfg.lower, cfg.upper);
  } else {
    s.lo = cfg.lower;
    s.hi = cfg.upper;
    s.lower_one_sided = cfg.lower;
    s.upper_one_sided = cfg.upper;
  }
  s.lo_intersected = st.lo_intersected;
  s.hi_intersected = st.hi_intersected;
  if (st.t == cfg.N) s.exhausted_mean = st.sum_x / static_cast<double>(cfg.N);
  return s;
}

}  // namespace detail

inline CsSnapshot bounded_snapshot(const BoundedCsState& st) { return detail::bounded_snapshot(st); }

/// Ingest one observation. lambda_t is fixed from the history before x is
/// looked at.
inline CsSnapshot bounded_cs_update(BoundedCsState& st, double x) {
  const auto& cfg = st.config;
  if (st.t >= cfg.N) throw StateError("observation after the population is exhausted");
  if (!(x >= cfg.lower && x <= cfg.upper)) throw DomainError("observation outside [lower, upper]");

  const std::uint64_t i = st.t + 1;
  const double lambda = next_lambda(cfg.schedule, i, st);
  const bool eb = cfg.method == BoundedMethod::empirical_bernstein;
  if (!std::isfinite(lambda) || lambda < 0.0 || (!eb && lambda == 0.0)) {
    throw DomainError("schedule out of domain: lambda = " + std::to_string(lambda));
  }
  if (eb && !(lambda * st.c() < 1.0)) throw DomainError("schedule out of domain: lambda must lie in [0, 1/c)");

  const auto remaining = static_cast<double>(cfg.N - i + 1);
  const double wor_term = x + st.sum_x / remaining;
  const double weight = 1.0 + static_cast<double>(i - 1) / remaining;

  const double centre = cfg.variance_center == VarianceCenter::wor_estimator ? st.mu_hat_unweighted() : st.plain_mean();
  const double dev = x - centre;

  st.sum_weighted_num += lambda * wor_term;
  st.sum_weighted_den += lambda * weight;
  st.unweighted_num += wor_term;
  st.unweighted_den += weight;
  st.advantage += static_cast<double>(i - 1) / remaining;
  st.sum_psi_h += psi_h(lambda, cfg.lower, cfg.upper);
  st.var_process += dev * dev;
  if (eb) st.sum_psi_e_var += 4.0 / (st.c() * st.c()) * dev * dev * psi_e(lambda, st.c());
  st.sum_x += x;
  st.t = i;
  const double running_mean = st.sum_x / static_cast<double>(i);
  st.sum_sq_dev_running_mean += (x - running_mean) * (x - running_mean);
  st.lambda_history.push_back(lambda);
  st.history.push_back({st.sum_weighted_num, st.sum_weighted_den, st.penalty()});

  auto snap = detail::bounded_snapshot(st);
  st.lo_intersected = std::max(st.lo_intersected, *snap.lo);
  st.hi_intersected = std::min(st.hi_intersected, *snap.hi);
  snap.lo_intersected = st.lo_intersected;
  snap.hi_intersected = st.hi_intersected;
  return snap;
}

inline CsSnapshot hoeffding_cs_update(BoundedCsState& st, double x) {
  if (st.config.method != BoundedMethod::hoeffding) throw DomainError("state is not configured for the Hoeffding method");
  return bounded_cs_update(st, x);
}

inline CsSnapshot eb_cs_update(BoundedCsState& st, double x) {
  if (st.config.method != BoundedMethod::empirical_bernstein) {
    throw DomainError("state is not configured for the empirical-Bernstein method");
  }
  return bounded_cs_update(st, x);
}

/// Owning wrapper for streaming use.
class BoundedConfidenceSequence {
 public:
  explicit BoundedConfidenceSequence(const BoundedCsConfig& cfg) : state_(make_bounded_state(cfg)) {}

  CsSnapshot update(double x) { return bounded_cs_update(state_, x); }
  CsSnapshot snapshot() const { return bounded_snapshot(state_); }
  const BoundedCsState& state() const noexcept { return state_; }
  std::uint64_t t() const noexcept { return state_.t; }
  bool exhausted() const noexcept { return state_.t >= state_.config.N; }

 private:
  BoundedCsState state_;
};

// ---------------------------------------------------------------------------
// Fixed-sample intervals and baselines
// ---------------------------------------------------------------------------

struct MeanInterval {
  double center = 0.0;
  double half_width = 0.0;
  Interval interval;
};

inline double classical_hoeffding_half_width(std::uint64_t n, double c, double alpha) {
  require_alpha(alpha);
  return std::sqrt(c * c * std::log(2.0 / alpha) / (2.0 * static_cast<double>(n)));
}

inline double wor_hoeffding_half_width(std::uint64_t n, std::uint64_t N, double c, double alpha) {
  require_alpha(alpha);
  if (n < 1 || n > N) throw DomainError("need 1 <= n <= N");
  const double rn = std::sqrt(static_cast<double>(n));
  return std::sqrt(0.5 * c * c * std::log(2.0 / alpha)) / (rn + advantage(n, N) / rn);
}

namespace detail {

inline void check_sample(const std::vector<double>& data, std::uint64_t N, double lower, double upper) {
  if (!(lower < upper)) throw DomainError("bounds need lower < upper");
  if (data.empty()) throw DomainError("sample is empty");
  if (data.size() > N) throw DomainError("sample larger than the population");
  for (double x : data) {
    if (!(x >= lower && x <= upper)) throw DomainError("observation outside [lower, upper]");
  }
}

}  // namespace detail

/// Fixed-sample Hoeffding interval for sampling without replacement,
/// centred on the unweighted without-replacement estimator.
inline MeanInterval hoeffding_ci(const std::vector<double>& data, std::uint64_t N, double lower, double upper,
                                 double alpha) {
  detail::check_sample(data, N, lower, upper);
  double sum = 0.0, num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const auto i = static_cast<std::uint64_t>(k + 1);
    const auto remaining = static_cast<double>(N - i + 1);
    num += data[k] + sum / remaining;
    den += 1.0 + static_cast<double>(i - 1) / remaining;
    sum += data[k];
  }
  MeanInterval out;
  out.center = num / den;
  out.half_width = wor_hoeffding_half_width(data.size(), N, upper - lower, alpha);
  out.interval = {std::max(lower, out.center - out.half_width), std::min(upper, out.center + out.half_width)};
  return out;
}

/// Fixed-sample empirical-Bernstein interval: the sample is randomly
/// permuted (seeded) and fed through the sequential machinery with the
/// variance-adaptive schedule tuned for n.
inline MeanInterval eb_ci(const std::vector<double>& sample, std::uint64_t N, double lower, double upper, double alpha,
                          std::uint64_t permutation_seed) {
  detail::check_sample(sample, N, lower, upper);
  BoundedCsConfig cfg;
  cfg.N = N;
  cfg.lower = lower;
  cfg.upper = upper;
  cfg.alpha = alpha;
  cfg.method = BoundedMethod::empirical_bernstein;
  cfg.schedule = LambdaSchedule::eb_ci(sample.size());
  cfg.intersect = false;
  cfg.variance_center = VarianceCenter::plain_mean;
  auto st = make_bounded_state(cfg);
  auto shuffled = draw_stream(BoundedPopulation{sample, lower, upper}, permutation_seed).take_all();
  for (double x : shuffled) bounded_cs_update(st, x);
  MeanInterval out;
  out.center = st.mu_hat_weighted();
  out.half_width = (st.penalty() + std::log(2.0 / alpha)) / st.sum_weighted_den;
  out.interval = {std::max(lower, out.center - out.half_width), std::min(upper, out.center + out.half_width)};
  return out;
}

/// Half-width of the two-sided time-uniform Hoeffding-Serfling band tuned
/// at n (plain sample mean, union bound over the two tails). Defined for
/// 1 <= t <= N - 1.
inline double bm_half_width(std::uint64_t t, std::uint64_t n, std::uint64_t N, double c, double alpha) {
  require_alpha(alpha);
  if (t < 1 || t >= N) throw DomainError("Hoeffding-Serfling band is defined for 1 <= t <= N - 1");
  if (n < 1 || n > N) throw DomainError("tuning time n must lie in [1, N]");
  const double Nd = static_cast<double>(N), nd = static_cast<double>(n), td = static_cast<double>(t);
  const double log_term = std::log(4.0 / alpha);
  const double early = n == N ? kInf
                              : (nd * (Nd - td)) / (td * (Nd - nd)) *
                                    std::sqrt(log_term * (1.0 - (nd - 1.0) / Nd) * c * c / (2.0 * nd));
  const double late = std::sqrt(log_term * (1.0 - nd / Nd) * (1.0 + 1.0 / nd) * c * c / (2.0 * nd));
  if (t < n) return early;
  if (t > n) return late;
  return std::min(early, late);  // both tails' statements cover t = n
}

inline MeanInterval bm_cs(std::uint64_t t, std::uint64_t n, std::uint64_t N, double sample_mean, double lower,
                          double upper, double alpha) {
  if (!(lower < upper)) throw DomainError("bounds need lower < upper");
  MeanInterval out;
  out.center = sample_mean;
  out.half_width = bm_half_width(t, n, N, upper - lower, alpha);
  out.interval = {std::max(lower, sample_mean - out.half_width), std::min(upper, sample_mean + out.half_width)};
  return out;
}

/// Streaming wrapper around the Hoeffding-Serfling band (baseline).
class BmConfidenceSequence {
 public:
  BmConfidenceSequence(std::uint64_t N, std::uint64_t n, double lower, double upper, double alpha)
      : N_(N), n_(n), lower_(lower), upper_(upper), alpha_(alpha), lo_int_(lower), hi_int_(upper) {
    require_alpha(alpha);
    if (N < 2) throw DomainError("Hoeffding-Serfling band needs N >= 2");
    if (n < 1 || n > N) throw DomainError("tuning time n must lie in [1, N]");
    if (!(lower < upper)) throw DomainError("bounds need lower < upper");
  }

  CsSnapshot update(double x) {
    if (t_ >= N_) throw StateError("observation after the population is exhausted");
    if (!(x >= lower_ && x <= upper_)) throw DomainError("observation outside [lower, upper]");
    ++t_;
    sum_ += x;
    CsSnapshot s;
    s.t = t_;
    s.alpha = alpha_;
    s.method = "bm";
    s.mu_hat_plain = sum_ / static_cast<double>(t_);
    if (t_ < N_) {
      const auto band = bm_cs(t_, n_, N_, *s.mu_hat_plain, lower_, upper_, alpha_);
      s.lo = band.interval.lo;
      s.hi = band.interval.hi;
    } else {
      // The band is undefined at t = N; the mean is known exactly.
      s.lo = s.hi = *s.mu_hat_plain;
      s.exhausted_mean = *s.mu_hat_plain;
    }
    lo_int_ = std::max(lo_int_, *s.lo);
    hi_int_ = std::min(hi_int_, *s.hi);
    s.lo_intersected = lo_int_;
    s.hi_intersected = hi_int_;
    return s;
  }

  std::uint64_t t() const noexcept { return t_; }

 private:
  std::uint64_t N_, n_;
  double lower_, upper_, alpha_;
  std::uint64_t t_ = 0;
  double sum_ = 0.0;
  double lo_int_, hi_int_;
};

}  // namespace worcs
