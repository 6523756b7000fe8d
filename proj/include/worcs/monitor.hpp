#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "worcs/bounded.hpp"
#include "worcs/hypothesis.hpp"
#include "worcs/inference.hpp"
#include "worcs/ppr.hpp"
#include "worcs/snapshot.hpp"

namespace worcs {

/// Validation failure tied to one configuration field.
class ConfigError : public DomainError {
 public:
  ConfigError(std::string field, const std::string& message) : DomainError(message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Everything needed to run one live confidence sequence. Shared by the
/// command line and the HTTP service so both validate identically.
struct MonitorConfig {
  std::string method = "ppr";  // ppr | dirmult | hoeffding | eb | bm
  std::uint64_t N = 0;
  double alpha = 0.05;
  std::optional<double> lower;
  std::optional<double> upper;
  std::optional<std::string> schedule;
  std::optional<std::uint64_t> t0;
  std::optional<double> lambda;
  std::optional<double> prior_a;
  std::optional<double> prior_b;
  std::vector<double> prior;  // dirmult concentration, one per category
  std::optional<std::size_t> categories;
  std::optional<std::string> null;
  std::vector<std::string> stop;  // reject_null | excludes:v | width_below:w
  bool intersect = true;
  bool emit_set = false;
};

namespace detail {

inline bool is_bounded_method(const std::string& m) { return m == "hoeffding" || m == "eb" || m == "bm"; }

inline StoppingPolicy parse_stop_rule(const std::string& text, double alpha) {
  auto value_after = [&](std::size_t colon) {
    const auto v = parse_double(std::string_view(text).substr(colon + 1));
    if (!v || !std::isfinite(*v)) throw ConfigError("stop", "stop rule \"" + text + "\" needs a finite number");
    return *v;
  };
  if (text == "reject_null") return StoppingPolicy::reject_null(alpha);
  const auto colon = text.find(':');
  const auto kind = text.substr(0, colon);
  if (colon != std::string::npos && kind == "excludes") return StoppingPolicy::cs_excludes_value(value_after(colon));
  if (colon != std::string::npos && kind == "width_below") return StoppingPolicy::cs_width_below(value_after(colon));
  if (text == "sets_disjoint") throw ConfigError("stop", "sets_disjoint compares two sequences and cannot run on one");
  throw ConfigError("stop", "unknown stop rule \"" + text + "\" (use reject_null, excludes:<v>, width_below:<w>)");
}

}  // namespace detail

/// Checks field ranges and cross-field conflicts. Throws ConfigError.
inline void validate(const MonitorConfig& c) {
  const auto& m = c.method;
  const bool bounded = detail::is_bounded_method(m);
  if (m != "ppr" && m != "dirmult" && !bounded) {
    throw ConfigError("method", "unknown method \"" + m + "\" (use ppr, dirmult, hoeffding, eb or bm)");
  }
  if (c.N < 1) throw ConfigError("N", "N must be a positive integer");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("alpha", "alpha must lie in (0, 1)");
  auto forbid = [&](bool present, const char* field, const char* why) {
    if (present) throw ConfigError(field, std::string(field) + " conflicts with method " + m + ": " + why);
  };
  if (bounded) {
    if (!c.lower || !c.upper) throw ConfigError(c.lower ? "upper" : "lower", "bounded methods need both lower and upper");
    if (!std::isfinite(*c.lower) || !std::isfinite(*c.upper) || !(*c.lower < *c.upper)) {
      throw ConfigError("lower", "bounds need finite lower < upper");
    }
  } else {
    forbid(c.lower.has_value(), "lower", "counts need no bounds");
    forbid(c.upper.has_value(), "upper", "counts need no bounds");
  }
  forbid(m != "ppr" && (c.prior_a || c.prior_b), "prior_a", "a beta prior applies to ppr only");
  forbid(m != "dirmult" && !c.prior.empty(), "prior", "a Dirichlet prior applies to dirmult only");
  forbid(m != "dirmult" && c.categories.has_value(), "categories", "categories apply to dirmult only");
  if (m == "ppr") {
    if (c.prior_a && !(*c.prior_a > 0.0)) throw ConfigError("prior_a", "prior_a must be positive");
    if (c.prior_b && !(*c.prior_b > 0.0)) throw ConfigError("prior_b", "prior_b must be positive");
  }
  if (m == "dirmult") {
    const auto K = c.categories.value_or(c.prior.empty() ? 3 : c.prior.size());
    if (K < 2 || K > kMaxCategories) throw ConfigError("categories", "dirmult supports 2 or 3 categories");
    if (!c.prior.empty() && c.prior.size() != K) throw ConfigError("prior", "prior needs one entry per category");
    for (double a : c.prior) {
      if (!(a > 0.0)) throw ConfigError("prior", "prior entries must be positive");
    }
    forbid(c.null.has_value(), "null", "multivariate nulls are not supported");
  }

  // Schedule grammar: only hoeffding/eb take a schedule; bm uses t0 as its tuning time.
  if (m == "hoeffding" || m == "eb") {
    const auto name = c.schedule.value_or("spread");
    const bool constant = name == "constant", needs_t0 = name == "fixed_opt" || name == "eb_t0";
    if (m == "hoeffding" && name != "spread" && name != "fixed_opt" && name != "constant") {
      throw ConfigError("schedule", "hoeffding schedules are spread, fixed_opt or constant");
    }
    if (m == "eb" && name != "spread" && name != "eb_t0" && name != "constant") {
      throw ConfigError("schedule", "eb schedules are spread, eb_t0 or constant");
    }
    if (needs_t0 && !c.t0) throw ConfigError("t0", "schedule " + name + " needs t0");
    forbid(!needs_t0 && c.t0.has_value(), "t0", "t0 only applies to the fixed_opt and eb_t0 schedules");
    if (constant && !c.lambda) throw ConfigError("lambda", "the constant schedule needs lambda");
    forbid(!constant && c.lambda.has_value(), "lambda", "lambda only applies to the constant schedule");
    if (c.t0 && *c.t0 < 1) throw ConfigError("t0", "t0 must be at least 1");
  } else {
    forbid(c.schedule.has_value(), "schedule", "only hoeffding and eb take a schedule");
    forbid(c.lambda.has_value(), "lambda", "only hoeffding and eb take lambda");
    if (m == "bm") {
      if (c.t0 && (*c.t0 < 1 || *c.t0 > c.N)) throw ConfigError("t0", "bm tuning time must lie in [1, N]");
      forbid(c.null.has_value(), "null", "the baseline band has no p-value");
    } else {
      forbid(c.t0.has_value(), "t0", "only schedules and bm use t0");
    }
  }
  if (c.null) {
    NullHypothesis h;
    try {
      h = parse_null(*c.null);
    } catch (const DomainError& e) {
      throw ConfigError("null", e.what());
    }
    if (bounded && h.is_count()) throw ConfigError("null", "bounded methods need a mean_leq or mean_geq null");
  }
  for (const auto& s : c.stop) {
    const auto p = detail::parse_stop_rule(s, c.alpha);
    if (p.mode == StoppingPolicy::Mode::reject_null && !c.null) throw ConfigError("stop", "reject_null needs a null");
    if (p.mode == StoppingPolicy::Mode::cs_width_below && !(p.value > 0.0)) {
      throw ConfigError("stop", "width_below needs a positive width");
    }
  }
}

inline nlohmann::json to_json(const MonitorConfig& c) {
  nlohmann::json j{{"method", c.method}, {"N", c.N}, {"alpha", c.alpha}, {"intersect", c.intersect}};
  if (c.lower) j["lower"] = *c.lower;
  if (c.upper) j["upper"] = *c.upper;
  if (c.schedule) j["schedule"] = *c.schedule;
  if (c.t0) j["t0"] = *c.t0;
  if (c.lambda) j["lambda"] = *c.lambda;
  if (c.prior_a) j["prior_a"] = *c.prior_a;
  if (c.prior_b) j["prior_b"] = *c.prior_b;
  if (!c.prior.empty()) j["prior"] = c.prior;
  if (c.categories) j["categories"] = *c.categories;
  if (c.null) j["null"] = *c.null;
  if (!c.stop.empty()) j["stop"] = c.stop;
  if (c.emit_set) j["emit_set"] = true;
  return j;
}

/// Parses and validates. Unknown fields and wrong types are ConfigErrors
/// naming the field.
inline MonitorConfig monitor_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("", "config must be a JSON object");
  static const std::set<std::string> known{"method", "N",      "alpha",      "lower", "upper", "schedule",
                                           "t0",     "lambda", "prior_a",    "prior_b", "prior", "categories",
                                           "null",   "stop",   "intersect",  "emit_set"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError(key, "unknown field \"" + key + "\"");
  }
  MonitorConfig c;
  auto field = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    try {
      using T = std::decay_t<decltype(out)>;
      if constexpr (std::is_same_v<T, std::optional<double>>) {
        out = j.at(key).get<double>();
      } else if constexpr (std::is_same_v<T, std::optional<std::uint64_t>>) {
        out = j.at(key).get<std::uint64_t>();
      } else if constexpr (std::is_same_v<T, std::optional<std::string>>) {
        out = j.at(key).get<std::string>();
      } else {
        out = j.at(key).get<T>();
      }
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(key, std::string("field \"") + key + "\" has the wrong type");
    }
  };
  if (!j.contains("N")) throw ConfigError("N", "N is required");
  if (j["N"].is_number_integer() && j["N"].get<std::int64_t>() < 1) throw ConfigError("N", "N must be a positive integer");
  field("method", c.method);
  field("N", c.N);
  field("alpha", c.alpha);
  field("lower", c.lower);
  field("upper", c.upper);
  field("schedule", c.schedule);
  field("t0", c.t0);
  field("lambda", c.lambda);
  field("prior_a", c.prior_a);
  field("prior_b", c.prior_b);
  field("prior", c.prior);
  field("categories", c.categories);
  field("null", c.null);
  field("stop", c.stop);
  field("intersect", c.intersect);
  field("emit_set", c.emit_set);
  validate(c);
  return c;
}

enum class MonitorStatus { active, stopped, exhausted };

inline const char* to_string(MonitorStatus s) {
  switch (s) {
    case MonitorStatus::active: return "active";
    case MonitorStatus::stopped: return "stopped";
    case MonitorStatus::exhausted: return "exhausted";
  }
  return "unknown";
}

/// A live confidence sequence with optional null and stopping rules. The
/// history holds the t = 0 snapshot followed by one snapshot per
/// observation; it is a deterministic function of the observations.
class Monitor {
 public:
  explicit Monitor(MonitorConfig cfg) : cfg_(std::move(cfg)) {
    validate(cfg_);
    if (cfg_.null) null_ = parse_null(*cfg_.null);
    for (const auto& s : cfg_.stop) policies_.push_back(detail::parse_stop_rule(s, cfg_.alpha));
    const auto& m = cfg_.method;
    if (m == "ppr") {
      engine_ = std::make_unique<PprConfidenceSequence>(
          cfg_.N, PprConfidenceSequence::Options{cfg_.alpha, cfg_.prior_a.value_or(1.0), cfg_.prior_b.value_or(1.0), cfg_.intersect});
    } else if (m == "dirmult") {
      const auto K = cfg_.categories.value_or(cfg_.prior.empty() ? 3 : cfg_.prior.size());
      engine_ = std::make_unique<DirMultConfidenceSequence>(cfg_.N, K, DirMultConfidenceSequence::Options{cfg_.alpha, cfg_.prior, cfg_.intersect});
    } else if (m == "bm") {
      engine_ = std::make_unique<BmConfidenceSequence>(cfg_.N, cfg_.t0.value_or(std::max<std::uint64_t>(1, cfg_.N / 2)),
                                                        *cfg_.lower, *cfg_.upper, cfg_.alpha);
    } else {
      BoundedCsConfig b;
      b.N = cfg_.N;
      b.lower = *cfg_.lower;
      b.upper = *cfg_.upper;
      b.alpha = cfg_.alpha;
      b.intersect = cfg_.intersect;
      const bool eb = m == "eb";
      b.method = eb ? BoundedMethod::empirical_bernstein : BoundedMethod::hoeffding;
      const auto name = cfg_.schedule.value_or("spread");
      if (name == "spread") b.schedule = eb ? LambdaSchedule::eb_spread() : LambdaSchedule::hoeffding_spread();
      if (name == "fixed_opt") b.schedule = LambdaSchedule::fixed_opt(*cfg_.t0);
      if (name == "eb_t0") b.schedule = LambdaSchedule::eb_t0(*cfg_.t0);
      if (name == "constant") b.schedule = LambdaSchedule::constant(*cfg_.lambda);
      try {
        engine_ = std::make_unique<BoundedConfidenceSequence>(b);
      } catch (const DomainError& e) {
        throw ConfigError("schedule", e.what());
      }
    }
    if (null_ && m == "ppr") std::get<std::unique_ptr<PprConfidenceSequence>>(engine_)->track_null(*null_);
    history_.push_back(initial_snapshot());
  }

  const MonitorConfig& config() const noexcept { return cfg_; }
  std::uint64_t t() const noexcept { return history_.back().t; }
  std::uint64_t N() const noexcept { return cfg_.N; }
  bool exhausted() const noexcept { return t() >= cfg_.N; }
  const std::vector<CsSnapshot>& history() const noexcept { return history_; }
  const CsSnapshot& latest() const noexcept { return history_.back(); }
  const std::vector<double>& observations() const noexcept { return observations_; }
  const std::optional<StopRecord>& stop() const noexcept { return stop_; }

  MonitorStatus status() const noexcept {
    if (stop_) return MonitorStatus::stopped;
    return exhausted() ? MonitorStatus::exhausted : MonitorStatus::active;
  }

  nlohmann::json status_json() const {
    nlohmann::json j{{"state", to_string(status())}, {"t", t()}, {"exhausted", exhausted()}};
    if (stop_) j["stop"] = {{"reason", stop_->reason}, {"t", stop_->t}};
    return j;
  }

  /// Checks that x is a legal observation for this method. Throws
  /// DomainError when out of domain and StateError once exhausted.
  void check(double x) const {
    if (exhausted()) throw StateError("observation after the population is exhausted (t = N = " + std::to_string(cfg_.N) + ")");
    const auto& m = cfg_.method;
    if (!std::isfinite(x)) throw DomainError("observation must be a finite number");
    if (m == "ppr" && x != 0.0 && x != 1.0) throw DomainError("ppr observations must be 0 or 1");
    if (m == "dirmult") {
      const auto K = std::get<std::unique_ptr<DirMultConfidenceSequence>>(engine_)->K();
      if (x != std::floor(x) || x < 0 || x >= static_cast<double>(K)) {
        throw DomainError("dirmult observations must be a category in [0, " + std::to_string(K - 1) + "]");
      }
    }
    if (detail::is_bounded_method(m) && !(x >= *cfg_.lower && x <= *cfg_.upper)) {
      throw DomainError("observation outside [lower, upper]");
    }
  }

  const CsSnapshot& observe(double x) {
    check(x);
    CsSnapshot s;
    std::visit(
        [&](auto& e) {
          using E = std::decay_t<decltype(*e)>;
          if constexpr (std::is_same_v<E, PprConfidenceSequence>) {
            e->update(static_cast<int>(x));
            s = e->snapshot(cfg_.emit_set);
            if (null_) {
              s.p_value = e->p_value(*null_);
              s.e_value = e->e_value(*null_);
            }
          } else if constexpr (std::is_same_v<E, DirMultConfidenceSequence>) {
            e->update(static_cast<std::size_t>(x));
            s = e->snapshot(cfg_.emit_set);
          } else if constexpr (std::is_same_v<E, BmConfidenceSequence>) {
            s = e->update(x);
          } else {
            s = e->update(x);
            if (null_) {
              s.p_value = anytime_p_mean(e->state(), *null_);
              s.e_value = e_value(e->state(), *null_);
            }
          }
        },
        engine_);
    observations_.push_back(x);
    if (stop_) {
      s.post_stop = true;
    } else {
      for (const auto& p : policies_) {
        if (triggers(p, s)) {
          stop_ = StopRecord{to_string(p.mode), s.t};
          s.stop = stop_;
          break;
        }
      }
    }
    history_.push_back(std::move(s));
    return history_.back();
  }

 private:
  CsSnapshot initial_snapshot() const {
    CsSnapshot s = std::visit(
        [&](const auto& e) -> CsSnapshot {
          using E = std::decay_t<decltype(*e)>;
          if constexpr (std::is_same_v<E, PprConfidenceSequence> || std::is_same_v<E, DirMultConfidenceSequence>) {
            return e->snapshot(cfg_.emit_set);
          } else if constexpr (std::is_same_v<E, BmConfidenceSequence>) {
            CsSnapshot b;
            b.method = "bm";
            b.alpha = cfg_.alpha;
            b.lo = b.lo_intersected = *cfg_.lower;
            b.hi = b.hi_intersected = *cfg_.upper;
            return b;
          } else {
            return e->snapshot();
          }
        },
        engine_);
    if (null_) {
      s.p_value = 1.0;
      s.e_value = 1.0;
    }
    return s;
  }

  MonitorConfig cfg_;
  std::optional<NullHypothesis> null_;
  std::vector<StoppingPolicy> policies_;
  std::variant<std::unique_ptr<PprConfidenceSequence>, std::unique_ptr<DirMultConfidenceSequence>,
               std::unique_ptr<BoundedConfidenceSequence>, std::unique_ptr<BmConfidenceSequence>>
      engine_;
  std::vector<CsSnapshot> history_;
  std::vector<double> observations_;
  std::optional<StopRecord> stop_;
};

}  // namespace worcs
