#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>

#include "worcs/numeric.hpp"
#include "worcs/population.hpp"

namespace worcs {

/// A composite null about a count parameter (number of ones in a binary
/// population) or about a population mean.
///
/// Textual grammar: `count_leq:D`, `count_geq:D`, `count_in:a,b,c`,
/// `mean_leq:m`, `mean_geq:m`.
struct NullHypothesis {
  enum class Kind { count_leq, count_geq, count_in, mean_leq, mean_geq };

  Kind kind = Kind::count_leq;
  std::uint64_t threshold = 0;        // count_leq / count_geq
  std::set<std::uint64_t> members;    // count_in
  double mean = 0.0;                  // mean_leq / mean_geq

  static NullHypothesis count_leq(std::uint64_t d) { return {Kind::count_leq, d, {}, 0.0}; }
  static NullHypothesis count_geq(std::uint64_t d) { return {Kind::count_geq, d, {}, 0.0}; }
  static NullHypothesis count_in(std::set<std::uint64_t> s) { return {Kind::count_in, 0, std::move(s), 0.0}; }
  static NullHypothesis mean_leq(double m) { return {Kind::mean_leq, 0, {}, m}; }
  static NullHypothesis mean_geq(double m) { return {Kind::mean_geq, 0, {}, m}; }

  bool is_count() const noexcept {
    return kind == Kind::count_leq || kind == Kind::count_geq || kind == Kind::count_in;
  }

  /// Membership of a count n (out of N) in the null. Mean nulls are read as
  /// statements about n / N.
  bool contains_count(std::uint64_t n, std::uint64_t N) const {
    switch (kind) {
      case Kind::count_leq: return n <= threshold;
      case Kind::count_geq: return n >= threshold;
      case Kind::count_in: return members.count(n) > 0;
      case Kind::mean_leq: return static_cast<double>(n) <= mean * static_cast<double>(N);
      case Kind::mean_geq: return static_cast<double>(n) >= mean * static_cast<double>(N);
    }
    return false;
  }

  std::string to_string() const {
    auto fmt = [](double v) {
      std::string s = std::to_string(v);
      while (!s.empty() && s.back() == '0') s.pop_back();
      if (!s.empty() && s.back() == '.') s.pop_back();
      return s;
    };
    switch (kind) {
      case Kind::count_leq: return "count_leq:" + std::to_string(threshold);
      case Kind::count_geq: return "count_geq:" + std::to_string(threshold);
      case Kind::count_in: {
        std::string s = "count_in:";
        bool first = true;
        for (auto m : members) {
          if (!first) s += ',';
          s += std::to_string(m);
          first = false;
        }
        return s;
      }
      case Kind::mean_leq: return "mean_leq:" + fmt(mean);
      case Kind::mean_geq: return "mean_geq:" + fmt(mean);
    }
    return {};
  }
};

inline NullHypothesis parse_null(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw DomainError("null must look like kind:value, got \"" + std::string(text) + "\"");
  const auto kind = trim(text.substr(0, colon));
  const auto arg = trim(text.substr(colon + 1));
  auto count = [&](std::string_view s) {
    const auto v = parse_count(s);
    if (!v) throw DomainError("null threshold must be a nonnegative integer, got \"" + std::string(s) + "\"");
    return *v;
  };
  auto real = [&](std::string_view s) {
    const auto v = parse_double(s);
    if (!v || !std::isfinite(*v)) throw DomainError("null mean must be a real number, got \"" + std::string(s) + "\"");
    return *v;
  };
  if (kind == "count_leq") return NullHypothesis::count_leq(count(arg));
  if (kind == "count_geq") return NullHypothesis::count_geq(count(arg));
  if (kind == "mean_leq") return NullHypothesis::mean_leq(real(arg));
  if (kind == "mean_geq") return NullHypothesis::mean_geq(real(arg));
  if (kind == "count_in") {
    std::set<std::uint64_t> s;
    std::string_view rest = arg;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      s.insert(count(rest.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (s.empty()) throw DomainError("count_in null needs at least one member");
    return NullHypothesis::count_in(std::move(s));
  }
  throw DomainError("unknown null kind \"" + std::string(kind) + "\"");
}

}  // namespace worcs
