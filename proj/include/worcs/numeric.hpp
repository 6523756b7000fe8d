#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace worcs {

/// Raised when an argument lies outside the mathematical domain of an operation.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation is applied to a state that cannot accept it
/// (e.g. an update after the population is exhausted).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when an internal invariant is found broken at runtime.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// std::lgamma writes the global signgam on glibc; lgamma_r does not.
inline double log_gamma(double x) noexcept {
#if defined(__GLIBC__)
  int sign = 0;
  return ::lgamma_r(x, &sign);
#else
  return std::lgamma(x);
#endif
}

inline double log_beta(double a, double b) noexcept {
  return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

inline double log_choose(double n, double k) noexcept {
  return log_gamma(n + 1.0) - log_gamma(k + 1.0) - log_gamma(n - k + 1.0);
}

/// log(k!) for k = 0..n, tabulated once. Log-binomials over a fixed
/// population size become three table lookups.
class LogFactorialTable {
 public:
  explicit LogFactorialTable(std::size_t n) : values_(n + 1, 0.0) {
    for (std::size_t k = 2; k <= n; ++k) {
      values_[k] = log_gamma(static_cast<double>(k) + 1.0);
    }
  }

  double operator()(std::size_t k) const { return values_.at(k); }

  double log_choose(std::size_t n, std::size_t k) const {
    if (k > n) return -kInf;
    return values_[n] - values_[k] - values_[n - k];
  }

  std::size_t size() const noexcept { return values_.size(); }

 private:
  std::vector<double> values_;
};

inline void require_alpha(double alpha, const char* what = "alpha") {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw DomainError(std::string(what) + " must lie in (0, 1)");
  }
}

}  // namespace worcs
