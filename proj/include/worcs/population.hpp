#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "worcs/numeric.hpp"
#include "worcs/random.hpp"

namespace worcs {

// ---------------------------------------------------------------------------
// Population descriptions
// ---------------------------------------------------------------------------

/// N items, n_plus of which are ones. Stored as counts so very large
/// populations stay representable.
struct BinaryPopulation {
  std::uint64_t N = 0;
  std::uint64_t n_plus = 0;
};

/// counts[k] items of category k.
struct CategoricalPopulation {
  std::vector<std::uint64_t> counts;

  std::uint64_t size() const noexcept {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  }
};

/// Explicit real values, each inside the declared [lower, upper].
struct BoundedPopulation {
  std::vector<double> values;
  double lower = 0.0;
  double upper = 1.0;

  double mean() const noexcept {
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  }
};

using PopulationSpec = std::variant<BinaryPopulation, CategoricalPopulation, BoundedPopulation>;

inline std::uint64_t population_size(const PopulationSpec& spec) {
  return std::visit(
      [](const auto& p) -> std::uint64_t {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, BinaryPopulation>) {
          return p.N;
        } else if constexpr (std::is_same_v<T, CategoricalPopulation>) {
          return p.size();
        } else {
          return p.values.size();
        }
      },
      spec);
}

inline void validate(const BinaryPopulation& p) {
  if (p.N < 1) throw DomainError("binary population needs N >= 1");
  if (p.n_plus > p.N) throw DomainError("binary population needs 0 <= n_plus <= N");
}

inline void validate(const CategoricalPopulation& p) {
  if (p.counts.size() < 2) throw DomainError("categorical population needs K >= 2 categories");
  if (p.size() < 1) throw DomainError("categorical population needs at least one item");
}

inline void validate(const BoundedPopulation& p) {
  if (!(p.lower < p.upper)) throw DomainError("bounded population needs lower < upper");
  if (p.values.empty()) throw DomainError("bounded population needs at least one value");
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double v = p.values[i];
    if (!(v >= p.lower && v <= p.upper)) {
      throw DomainError("value outside bounds at index " + std::to_string(i));
    }
  }
}

inline void validate(const PopulationSpec& spec) {
  std::visit([](const auto& p) { validate(p); }, spec);
}

/// Population mean; for binary populations this is n_plus / N and for
/// categorical populations it is undefined (throws).
inline double population_mean(const PopulationSpec& spec) {
  if (const auto* b = std::get_if<BinaryPopulation>(&spec)) {
    return static_cast<double>(b->n_plus) / static_cast<double>(b->N);
  }
  if (const auto* r = std::get_if<BoundedPopulation>(&spec)) return r->mean();
  throw DomainError("mean is undefined for categorical populations");
}

// ---------------------------------------------------------------------------
// Streams
// ---------------------------------------------------------------------------

/// A seeded, uniformly random ordering of a population, consumed one item
/// at a time. Binary items are emitted as 0/1 and categorical items as
/// their category index, so every item fits in a double.
class ObservationStream {
 public:
  ObservationStream(PopulationSpec spec, std::uint64_t seed) : spec_(std::move(spec)), rng_(seed), seed_(seed) {
    validate(spec_);
    N_ = population_size(spec_);
    if (const auto* b = std::get_if<BinaryPopulation>(&spec_)) {
      remaining_counts_ = {b->N - b->n_plus, b->n_plus};
    } else if (const auto* c = std::get_if<CategoricalPopulation>(&spec_)) {
      remaining_counts_ = c->counts;
    } else {
      items_ = std::get<BoundedPopulation>(spec_).values;
    }
  }

  std::uint64_t size() const noexcept { return N_; }
  std::uint64_t position() const noexcept { return t_; }
  bool exhausted() const noexcept { return t_ >= N_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const PopulationSpec& spec() const noexcept { return spec_; }

  double next() {
    if (exhausted()) throw StateError("stream exhausted after " + std::to_string(N_) + " items");
    double out = 0.0;
    if (items_.empty()) {
      // Counts representation: draw a uniform index into the remaining
      // multiset and locate its category.
      std::uint64_t r = rng_.below(N_ - t_);
      std::size_t k = 0;
      while (r >= remaining_counts_[k]) {
        r -= remaining_counts_[k];
        ++k;
      }
      --remaining_counts_[k];
      out = static_cast<double>(k);
    } else {
      // Incremental Fisher-Yates.
      const std::uint64_t j = t_ + rng_.below(N_ - t_);
      std::swap(items_[t_], items_[j]);
      out = items_[t_];
    }
    ++t_;
    return out;
  }

  std::vector<double> take_all() {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(N_ - t_));
    while (!exhausted()) out.push_back(next());
    return out;
  }

 private:
  PopulationSpec spec_;
  SplitMix64 rng_;
  std::uint64_t seed_;
  std::uint64_t N_ = 0;
  std::uint64_t t_ = 0;
  std::vector<std::uint64_t> remaining_counts_;
  std::vector<double> items_;
};

inline ObservationStream draw_stream(const PopulationSpec& spec, std::uint64_t seed) {
  return ObservationStream(spec, seed);
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration (exact-expectation oracle for small populations)
// ---------------------------------------------------------------------------

struct WeightedOrdering {
  std::vector<double> items;
  long double probability = 0.0L;
};

inline constexpr std::uint64_t kMaxOrderings = 1'000'000;

namespace detail {

inline std::uint64_t checked_multinomial(const std::vector<std::uint64_t>& counts, std::uint64_t cap) {
  // Build the multinomial coefficient as a product of binomials, bailing out
  // once it exceeds the cap.
  long double total = 1.0L;
  std::uint64_t n = 0;
  for (auto c : counts) {
    for (std::uint64_t i = 1; i <= c; ++i) {
      ++n;
      total = total * static_cast<long double>(n) / static_cast<long double>(i);
      if (total > static_cast<long double>(cap) + 0.5L) return cap + 1;
    }
  }
  return static_cast<std::uint64_t>(total + 0.5L);
}

}  // namespace detail

/// Every distinct ordering of the population with its exact probability
/// under uniform sampling without replacement. Binary and categorical
/// populations yield distinct label sequences; bounded populations yield
/// all N! orderings of distinguishable items.
inline std::vector<WeightedOrdering> enumerate_orderings(const PopulationSpec& spec,
                                                         std::uint64_t cap = kMaxOrderings) {
  validate(spec);
  std::vector<WeightedOrdering> out;

  std::vector<std::uint64_t> counts;
  if (const auto* b = std::get_if<BinaryPopulation>(&spec)) {
    counts = {b->N - b->n_plus, b->n_plus};
  } else if (const auto* c = std::get_if<CategoricalPopulation>(&spec)) {
    counts = c->counts;
  }

  if (!counts.empty()) {
    const std::uint64_t n_orderings = detail::checked_multinomial(counts, cap);
    if (n_orderings > cap) {
      throw DomainError("enumeration refused: more than " + std::to_string(cap) + " orderings");
    }
    std::vector<double> seq;
    for (std::size_t k = 0; k < counts.size(); ++k) seq.insert(seq.end(), counts[k], static_cast<double>(k));
    const long double p = 1.0L / static_cast<long double>(n_orderings);
    out.reserve(n_orderings);
    do {
      out.push_back({seq, p});
    } while (std::next_permutation(seq.begin(), seq.end()));
    return out;
  }

  const auto& bp = std::get<BoundedPopulation>(spec);
  const std::size_t n = bp.values.size();
  long double n_fact = 1.0L;
  for (std::size_t i = 2; i <= n; ++i) {
    n_fact *= static_cast<long double>(i);
    if (n_fact > static_cast<long double>(cap)) {
      throw DomainError("enumeration refused: more than " + std::to_string(cap) + " orderings");
    }
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const long double p = 1.0L / n_fact;
  do {
    WeightedOrdering w;
    w.items.reserve(n);
    for (auto i : idx) w.items.push_back(bp.values[i]);
    w.probability = p;
    out.push_back(std::move(w));
  } while (std::next_permutation(idx.begin(), idx.end()));
  return out;
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

/// Parse failure carrying the 1-based line number of the offending input
/// (0 when the error is not tied to a line).
class ParseError : public DomainError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DomainError(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

enum class PopulationKind { binary, categorical, bounded };
enum class PopulationFormat { csv, json };

struct LoadOptions {
  PopulationKind kind = PopulationKind::binary;
  std::optional<double> lower;
  std::optional<double> upper;
  std::size_t categories = 0;  // categorical CSV: K (0 = infer max index + 1, min 2)
  bool header = false;
};

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<std::uint64_t> parse_count(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

namespace detail {

inline PopulationSpec population_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind")) throw ParseError(0, "population JSON needs a \"kind\" field");
  const auto kind = j.at("kind").get<std::string>();
  try {
    if (kind == "binary") {
      BinaryPopulation p{j.at("N").get<std::uint64_t>(), j.at("n_plus").get<std::uint64_t>()};
      validate(p);
      return p;
    }
    if (kind == "categorical") {
      CategoricalPopulation p{j.at("counts").get<std::vector<std::uint64_t>>()};
      validate(p);
      return p;
    }
    if (kind == "bounded") {
      if (!j.contains("lower") || !j.contains("upper")) {
        throw ParseError(0, "bounded population requires explicit lower and upper bounds");
      }
      BoundedPopulation p{j.at("values").get<std::vector<double>>(), j.at("lower").get<double>(),
                          j.at("upper").get<double>()};
      validate(p);
      return p;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("malformed population JSON: ") + e.what());
  }
  throw ParseError(0, "unknown population kind \"" + kind + "\"");
}

}  // namespace detail

inline PopulationSpec load_population(std::istream& in, PopulationFormat format, const LoadOptions& opt = {}) {
  if (format == PopulationFormat::json) {
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(0, std::string("invalid JSON: ") + e.what());
    }
    return detail::population_from_json(j);
  }

  if (opt.kind == PopulationKind::bounded && (!opt.lower || !opt.upper)) {
    throw ParseError(0, "missing bounds: bounded data requires explicit lower and upper");
  }

  std::string line;
  std::size_t lineno = 0;
  BinaryPopulation bin;
  std::vector<std::uint64_t> cat_counts(std::max<std::size_t>(opt.categories, 2), 0);
  BoundedPopulation bnd;
  if (opt.kind == PopulationKind::bounded) {
    bnd.lower = *opt.lower;
    bnd.upper = *opt.upper;
    if (!(bnd.lower < bnd.upper)) throw ParseError(0, "bounds need lower < upper");
  }

  while (std::getline(in, line)) {
    ++lineno;
    if (opt.header && lineno == 1) continue;
    const auto field = trim(line);
    if (field.empty()) continue;
    switch (opt.kind) {
      case PopulationKind::binary: {
        const auto v = parse_count(field);
        if (!v || *v > 1) throw ParseError(lineno, "expected 0 or 1, got \"" + std::string(field) + "\"");
        ++bin.N;
        bin.n_plus += *v;
        break;
      }
      case PopulationKind::categorical: {
        const auto v = parse_count(field);
        if (!v) throw ParseError(lineno, "expected a category index, got \"" + std::string(field) + "\"");
        if (opt.categories && *v >= opt.categories) throw ParseError(lineno, "category index out of range");
        if (*v >= cat_counts.size()) cat_counts.resize(*v + 1, 0);
        ++cat_counts[*v];
        break;
      }
      case PopulationKind::bounded: {
        const auto v = parse_double(field);
        if (!v) throw ParseError(lineno, "expected a real number, got \"" + std::string(field) + "\"");
        if (!(*v >= bnd.lower && *v <= bnd.upper)) throw ParseError(lineno, "value outside bounds");
        bnd.values.push_back(*v);
        break;
      }
    }
  }

  switch (opt.kind) {
    case PopulationKind::binary:
      if (bin.N == 0) throw ParseError(0, "no observations");
      return bin;
    case PopulationKind::categorical: {
      CategoricalPopulation c{cat_counts};
      if (c.size() == 0) throw ParseError(0, "no observations");
      return c;
    }
    case PopulationKind::bounded:
      if (bnd.values.empty()) throw ParseError(0, "no observations");
      return bnd;
  }
  throw ParseError(0, "unreachable population kind");
}

inline nlohmann::json to_json(const PopulationSpec& spec) {
  return std::visit(
      [](const auto& p) -> nlohmann::json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, BinaryPopulation>) {
          return {{"kind", "binary"}, {"N", p.N}, {"n_plus", p.n_plus}};
        } else if constexpr (std::is_same_v<T, CategoricalPopulation>) {
          return {{"kind", "categorical"}, {"counts", p.counts}};
        } else {
          return {{"kind", "bounded"}, {"values", p.values}, {"lower", p.lower}, {"upper", p.upper}};
        }
      },
      spec);
}

}  // namespace worcs
