#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "worcs/hypothesis.hpp"
#include "worcs/numeric.hpp"
#include "worcs/snapshot.hpp"

namespace worcs {

// Confidence sequences for the composition of a finite population of
// labelled items, built from the ratio of a conjugate working prior to the
// working posterior. At the true composition this ratio is a nonnegative
// martingale, so {n : ratio(n) < 1/alpha} never misses the truth with
// probability at least 1 - alpha.

/// Largest population the grid-based sets accept.
inline constexpr std::uint64_t kMaxPprGrid = 10'000'000;

/// log of BetaBin(n, a, b) at k.
inline double log_beta_binomial_pmf(std::uint64_t k, std::uint64_t n, double a, double b) {
  if (k > n) throw DomainError("beta-binomial pmf needs k <= n");
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("beta-binomial pmf needs a, b > 0");
  const auto kd = static_cast<double>(k);
  const auto nd = static_cast<double>(n);
  return log_choose(nd, kd) + log_beta(kd + a, nd - kd + b) - log_beta(a, b);
}

/// log of DirMult(n, a) at counts x (sum of x must equal n).
inline double log_dirichlet_multinomial_pmf(const std::vector<std::uint64_t>& x, const std::vector<double>& a) {
  if (x.size() != a.size() || x.empty()) throw DomainError("Dirichlet-multinomial pmf needs matching count/prior sizes");
  double n = 0.0, a_sum = 0.0, out = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(a[k] > 0.0)) throw DomainError("Dirichlet-multinomial prior entries must be positive");
    const auto xk = static_cast<double>(x[k]);
    n += xk;
    a_sum += a[k];
    out += log_gamma(xk + a[k]) - log_gamma(a[k]) - log_gamma(xk + 1.0);
  }
  return out + log_gamma(n + 1.0) + log_gamma(a_sum) - log_gamma(n + a_sum);
}

// ---------------------------------------------------------------------------
// Binary populations
// ---------------------------------------------------------------------------

struct PprState {
  std::uint64_t N = 0;
  std::uint64_t t = 0;
  std::uint64_t s = 0;  // ones observed so far
  double prior_a = 1.0;
  double prior_b = 1.0;
};

inline void validate(const PprState& st) {
  if (st.N < 1) throw DomainError("PPR needs N >= 1");
  if (!(st.prior_a > 0.0) || !(st.prior_b > 0.0)) throw DomainError("PPR prior parameters must be positive");
  if (st.s > st.t || st.t > st.N) throw DomainError("PPR state needs 0 <= s <= t <= N");
}

inline PprState ppr_update(PprState st, int x) {
  if (st.t >= st.N) throw StateError("PPR update past t = N");
  if (x != 0 && x != 1) throw DomainError("binary observation must be 0 or 1");
  ++st.t;
  st.s += static_cast<std::uint64_t>(x);
  return st;
}

/// Prior peaked near a decision boundary p with concentration kappa.
struct BetaPrior {
  double a = 1.0;
  double b = 1.0;
};

inline BetaPrior decision_coupled_prior(double boundary, double concentration) {
  if (!(boundary > 0.0 && boundary < 1.0)) throw DomainError("decision boundary must lie in (0, 1)");
  if (!(concentration > 0.0)) throw DomainError("prior concentration must be positive");
  return {concentration * boundary, concentration * (1.0 - boundary)};
}

inline bool ppr_in_posterior_support(const PprState& st, std::uint64_t n_plus) {
  return n_plus >= st.s && (st.N - n_plus) >= (st.t - st.s);
}

/// log R_t(n_plus) evaluated as the difference of the two beta-binomial
/// log-pmfs (prior at n_plus, posterior at n_plus - s).
inline double ppr_log_ratio(const PprState& st, std::uint64_t n_plus) {
  if (n_plus > st.N) throw DomainError("n_plus must lie in [0, N]");
  if (!ppr_in_posterior_support(st, n_plus)) return kInf;
  const double log_prior = log_beta_binomial_pmf(n_plus, st.N, st.prior_a, st.prior_b);
  const double log_post = log_beta_binomial_pmf(n_plus - st.s, st.N - st.t, st.prior_a + static_cast<double>(st.s),
                                                st.prior_b + static_cast<double>(st.t - st.s));
  return log_prior - log_post;
}

inline double ppr_ratio(const PprState& st, std::uint64_t n_plus) { return std::exp(ppr_log_ratio(st, n_plus)); }

/// Fast log-ratio for grid sweeps. The Beta(n + a, N - n + b) factor is
/// common to prior and posterior and cancels, leaving binomials of
/// integers plus a term that depends only on (t, s).
class PprRatioKernel {
 public:
  explicit PprRatioKernel(std::shared_ptr<const LogFactorialTable> table) : table_(std::move(table)) {}

  void prepare(const PprState& st) {
    st_ = st;
    offset_ = log_beta(st.prior_a + static_cast<double>(st.s), st.prior_b + static_cast<double>(st.t - st.s)) -
              log_beta(st.prior_a, st.prior_b);
  }

  double operator()(std::uint64_t n) const {
    if (!ppr_in_posterior_support(st_, n)) return kInf;
    return table_->log_choose(st_.N, n) - table_->log_choose(st_.N - st_.t, n - st_.s) + offset_;
  }

 private:
  std::shared_ptr<const LogFactorialTable> table_;
  PprState st_{};
  double offset_ = 0.0;
};

struct DiscreteSet {
  std::vector<std::uint64_t> members;
  bool contiguous = true;

  bool empty() const noexcept { return members.empty(); }
  std::int64_t lo() const { return members.empty() ? -1 : static_cast<std::int64_t>(members.front()); }
  std::int64_t hi() const { return members.empty() ? -1 : static_cast<std::int64_t>(members.back()); }
};

namespace detail {

template <class LogRatioFn>
DiscreteSet threshold_set(std::uint64_t N, double log_threshold, LogRatioFn&& log_ratio) {
  DiscreteSet out;
  for (std::uint64_t n = 0; n <= N; ++n) {
    if (log_ratio(n) < log_threshold) {
      if (!out.members.empty() && out.members.back() + 1 != n) out.contiguous = false;
      out.members.push_back(n);
    }
  }
  return out;
}

}  // namespace detail

/// {n in [0, N] : R_t(n) < 1/alpha} from the state alone (no running
/// intersection).
inline DiscreteSet ppr_confidence_set(const PprState& st, double alpha) {
  require_alpha(alpha);
  validate(st);
  const double log_thr = -std::log(alpha);
  return detail::threshold_set(st.N, log_thr, [&](std::uint64_t n) { return ppr_log_ratio(st, n); });
}

enum class PValueMode {
  intersected,  // inverts the running-intersected family (default)
  running_min,  // running minimum of the per-time p-value
};

/// Streaming PPR confidence sequence over n in [0, N] with running
/// intersection, anytime p-values and e-values.
class PprConfidenceSequence {
 public:
  struct Options {
    double alpha = 0.05;
    double prior_a = 1.0;
    double prior_b = 1.0;
    bool intersect = true;
  };

  PprConfidenceSequence(std::uint64_t N, Options opt) : opt_(opt) {
    require_alpha(opt.alpha);
    state_ = PprState{N, 0, 0, opt.prior_a, opt.prior_b};
    validate(state_);
    if (N > kMaxPprGrid) throw DomainError("PPR grid limited to N <= " + std::to_string(kMaxPprGrid));
    table_ = std::make_shared<const LogFactorialTable>(N);
    kernel_ = PprRatioKernel(table_);
    kernel_.prepare(state_);
    current_.assign(N + 1, 0.0);
    running_max_.assign(N + 1, 0.0);
  }

  const PprState& state() const noexcept { return state_; }
  const Options& options() const noexcept { return opt_; }
  std::uint64_t t() const noexcept { return state_.t; }
  std::uint64_t N() const noexcept { return state_.N; }
  bool exhausted() const noexcept { return state_.t >= state_.N; }

  void update(int x) {
    state_ = ppr_update(state_, x);
    kernel_.prepare(state_);
    for (std::uint64_t n = 0; n <= state_.N; ++n) {
      const double lr = kernel_(n);
      current_[n] = lr;
      if (lr > running_max_[n]) running_max_[n] = lr;
    }
    for (auto& tracker : trackers_) {
      tracker.p = std::min(tracker.p, p_from_log_ratios(current_, tracker.null));
    }
  }

  double log_ratio(std::uint64_t n) const { return current_.at(n); }
  double running_max_log_ratio(std::uint64_t n) const { return running_max_.at(n); }

  /// Set at an arbitrary level q, from the current or running-max ratios.
  DiscreteSet set_at(double q, bool intersected) const {
    require_alpha(q, "level");
    const auto& src = intersected ? running_max_ : current_;
    return detail::threshold_set(state_.N, -std::log(q), [&](std::uint64_t n) { return src[n]; });
  }

  DiscreteSet reported_set() const { return set_at(opt_.alpha, opt_.intersect); }

  /// Register a null so its running-minimum p-value is tracked from now on.
  std::size_t track_null(NullHypothesis null) {
    check_null(null);
    trackers_.push_back({std::move(null), 1.0});
    trackers_.back().p = std::min(1.0, p_from_log_ratios(current_, trackers_.back().null));
    return trackers_.size() - 1;
  }

  double p_value(const NullHypothesis& null, PValueMode mode = PValueMode::intersected) const {
    check_null(null);
    if (mode == PValueMode::intersected) return p_from_log_ratios(running_max_, null);
    for (const auto& tr : trackers_) {
      if (tr.null.to_string() == null.to_string()) return tr.p;
    }
    throw DomainError("running-minimum p-value requires the null to be tracked from t = 0");
  }

  /// inf over the null of R_t.
  double e_value(const NullHypothesis& null) const {
    check_null(null);
    double min_lr = kInf;
    for (std::uint64_t n = 0; n <= state_.N; ++n) {
      if (null.contains_count(n, state_.N)) min_lr = std::min(min_lr, current_[n]);
    }
    return std::exp(min_lr);
  }

  CsSnapshot snapshot(bool with_members = false) const {
    CsSnapshot s;
    s.t = state_.t;
    s.alpha = opt_.alpha;
    s.method = "ppr";
    const auto raw = set_at(opt_.alpha, false);
    const auto rep = opt_.intersect ? set_at(opt_.alpha, true) : raw;
    s.set_lo = rep.lo();
    s.set_hi = rep.hi();
    s.contiguous = rep.contiguous;
    s.set_size = rep.members.size();
    s.raw_set_lo = raw.lo();
    s.raw_set_hi = raw.hi();
    if (with_members) s.members = rep.members;
    return s;
  }

 private:
  struct Tracker {
    NullHypothesis null;
    double p = 1.0;
  };

  void check_null(const NullHypothesis& null) const {
    bool any = false;
    for (std::uint64_t n = 0; n <= state_.N && !any; ++n) any = null.contains_count(n, state_.N);
    if (!any) throw DomainError("null set is empty over [0, N]");
  }

  double p_from_log_ratios(const std::vector<double>& lr, const NullHypothesis& null) const {
    double min_lr = kInf;
    for (std::uint64_t n = 0; n <= state_.N; ++n) {
      if (null.contains_count(n, state_.N)) min_lr = std::min(min_lr, lr[n]);
    }
    return std::min(1.0, std::exp(-min_lr));
  }

  Options opt_;
  PprState state_;
  std::shared_ptr<const LogFactorialTable> table_;
  PprRatioKernel kernel_{nullptr};
  std::vector<double> current_;
  std::vector<double> running_max_;
  std::vector<Tracker> trackers_;
};

// ---------------------------------------------------------------------------
// Multivariate (K = 2 or 3 categories)
// ---------------------------------------------------------------------------

inline constexpr std::size_t kMaxCategories = 3;

struct DirMultPprState {
  std::uint64_t N = 0;
  std::uint64_t t = 0;
  std::vector<std::uint64_t> s;  // per-category counts observed
  std::vector<double> prior_a;

  std::size_t K() const noexcept { return prior_a.size(); }
};

inline void validate(const DirMultPprState& st) {
  if (st.K() < 2) throw DomainError("Dirichlet-multinomial PPR needs K >= 2");
  if (st.K() > kMaxCategories) throw DomainError("multivariate PPR sets are limited to K <= 3 categories");
  if (st.s.size() != st.K()) throw DomainError("count vector and prior must have the same length");
  for (double a : st.prior_a) {
    if (!(a > 0.0)) throw DomainError("Dirichlet prior entries must be positive");
  }
  const auto sum = std::accumulate(st.s.begin(), st.s.end(), std::uint64_t{0});
  if (sum != st.t || st.t > st.N) throw DomainError("DirMult state needs sum(s) = t <= N");
}

inline DirMultPprState dm_ppr_update(DirMultPprState st, std::size_t category) {
  if (st.t >= st.N) throw StateError("DirMult PPR update past t = N");
  if (category >= st.K()) throw DomainError("category index out of range");
  ++st.t;
  ++st.s[category];
  return st;
}

/// log R_t(n) via the two Dirichlet-multinomial log-pmfs.
inline double dm_log_ratio(const DirMultPprState& st, const std::vector<std::uint64_t>& n) {
  if (n.size() != st.K()) throw DomainError("lattice point has wrong dimension");
  if (std::accumulate(n.begin(), n.end(), std::uint64_t{0}) != st.N) throw DomainError("lattice point must sum to N");
  std::vector<std::uint64_t> rest(st.K());
  std::vector<double> post_a(st.K());
  for (std::size_t k = 0; k < st.K(); ++k) {
    if (n[k] < st.s[k]) return kInf;
    rest[k] = n[k] - st.s[k];
    post_a[k] = st.prior_a[k] + static_cast<double>(st.s[k]);
  }
  return log_dirichlet_multinomial_pmf(n, st.prior_a) - log_dirichlet_multinomial_pmf(rest, post_a);
}

/// Streaming lattice confidence set for category totals. For K = 3 the
/// lattice is indexed by its first two coordinates.
class DirMultConfidenceSequence {
 public:
  struct Options {
    double alpha = 0.05;
    std::vector<double> prior_a;  // empty = all ones
    bool intersect = true;
  };

  DirMultConfidenceSequence(std::uint64_t N, std::size_t K, Options opt) : opt_(std::move(opt)) {
    require_alpha(opt_.alpha);
    if (opt_.prior_a.empty()) opt_.prior_a.assign(K, 1.0);
    state_ = DirMultPprState{N, 0, std::vector<std::uint64_t>(K, 0), opt_.prior_a};
    validate(state_);
    if (N < 1) throw DomainError("DirMult PPR needs N >= 1");
    const double lattice = K == 2 ? static_cast<double>(N + 1) : 0.5 * static_cast<double>(N + 1) * static_cast<double>(N + 2);
    if (lattice > static_cast<double>(kMaxPprGrid)) throw DomainError("lattice too large for explicit enumeration");
    table_ = std::make_shared<const LogFactorialTable>(N);
    for (std::uint64_t n0 = 0; n0 <= N; ++n0) {
      if (K == 2) {
        points_.push_back({n0, N - n0, 0});
      } else {
        for (std::uint64_t n1 = 0; n1 <= N - n0; ++n1) points_.push_back({n0, n1, N - n0 - n1});
      }
    }
    current_.assign(points_.size(), 0.0);
    running_max_.assign(points_.size(), 0.0);
    refresh_offset();
  }

  const DirMultPprState& state() const noexcept { return state_; }
  std::size_t K() const noexcept { return state_.K(); }
  std::uint64_t t() const noexcept { return state_.t; }
  bool exhausted() const noexcept { return state_.t >= state_.N; }
  std::size_t lattice_size() const noexcept { return points_.size(); }

  void update(std::size_t category) {
    state_ = dm_ppr_update(state_, category);
    refresh_offset();
    for (std::size_t i = 0; i < points_.size(); ++i) {
      const double lr = fast_log_ratio(points_[i]);
      current_[i] = lr;
      running_max_[i] = std::max(running_max_[i], lr);
    }
  }

  std::vector<std::vector<std::uint64_t>> confidence_set(double q, bool intersected) const {
    require_alpha(q, "level");
    const double thr = -std::log(q);
    const auto& src = intersected ? running_max_ : current_;
    std::vector<std::vector<std::uint64_t>> out;
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (src[i] < thr) out.emplace_back(points_[i].begin(), points_[i].begin() + static_cast<std::ptrdiff_t>(K()));
    }
    return out;
  }

  std::vector<std::vector<std::uint64_t>> reported_set() const { return confidence_set(opt_.alpha, opt_.intersect); }

  CsSnapshot snapshot(bool with_members = false) const {
    CsSnapshot s;
    s.t = state_.t;
    s.alpha = opt_.alpha;
    s.method = "dirmult";
    const auto set = reported_set();
    s.lattice_size = set.size();
    std::vector<CategoryRange> ranges(K(), CategoryRange{state_.N, 0});
    for (const auto& p : set) {
      for (std::size_t k = 0; k < K(); ++k) {
        ranges[k].lo = std::min(ranges[k].lo, p[k]);
        ranges[k].hi = std::max(ranges[k].hi, p[k]);
      }
    }
    if (!set.empty()) s.category_ranges = ranges;
    if (with_members) s.lattice_points = set;
    return s;
  }

 private:
  using Point = std::array<std::uint64_t, 3>;

  void refresh_offset() {
    // log Gamma(A) - log Gamma(A + t) - sum log Gamma(a_k) + sum log Gamma(a_k + s_k)
    double a_sum = 0.0;
    offset_ = 0.0;
    for (std::size_t k = 0; k < K(); ++k) {
      a_sum += state_.prior_a[k];
      offset_ += log_gamma(state_.prior_a[k] + static_cast<double>(state_.s[k])) - log_gamma(state_.prior_a[k]);
    }
    offset_ += log_gamma(a_sum) - log_gamma(a_sum + static_cast<double>(state_.t));
  }

  double fast_log_ratio(const Point& n) const {
    const auto& lf = *table_;
    double v = lf(state_.N) - lf(state_.N - state_.t) + offset_;
    for (std::size_t k = 0; k < K(); ++k) {
      if (n[k] < state_.s[k]) return kInf;
      v += lf(n[k] - state_.s[k]) - lf(n[k]);
    }
    return v;
  }

  Options opt_;
  DirMultPprState state_;
  std::shared_ptr<const LogFactorialTable> table_;
  std::vector<Point> points_;
  std::vector<double> current_;
  std::vector<double> running_max_;
  double offset_ = 0.0;
};

}  // namespace worcs
