#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace worcs {

inline constexpr int kSchemaVersion = 1;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const noexcept { return hi - lo; }
  bool contains(double v) const noexcept { return lo <= v && v <= hi; }
  bool empty() const noexcept { return lo > hi; }
};

struct StopRecord {
  std::string reason;
  std::uint64_t t = 0;
};

/// Per-category lower/upper extent of a multivariate lattice confidence set.
struct CategoryRange {
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;
};

/// Everything known about one confidence sequence at time t. Fields that do
/// not apply to the producing method stay empty and are omitted from JSON.
struct CsSnapshot {
  std::uint64_t t = 0;
  double alpha = 0.05;
  std::string method;

  // Discrete (count-valued) sets. set_* describe the reported set (running
  // intersection unless disabled), raw_* the instantaneous one.
  std::optional<std::int64_t> set_lo;
  std::optional<std::int64_t> set_hi;
  std::optional<bool> contiguous;
  std::optional<std::uint64_t> set_size;
  std::optional<std::int64_t> raw_set_lo;
  std::optional<std::int64_t> raw_set_hi;
  std::vector<std::uint64_t> members;  // emitted only on request

  // Multivariate lattice sets.
  std::vector<CategoryRange> category_ranges;
  std::optional<std::uint64_t> lattice_size;
  std::vector<std::vector<std::uint64_t>> lattice_points;  // emitted only on request

  // Bounded-mean bands.
  std::optional<double> mu_hat_weighted;
  std::optional<double> mu_hat_plain;
  std::optional<double> lambda_t;
  std::optional<double> lo;
  std::optional<double> hi;
  std::optional<double> lo_intersected;
  std::optional<double> hi_intersected;
  std::optional<double> lower_one_sided;
  std::optional<double> upper_one_sided;
  std::optional<double> m_value;
  std::optional<double> exhausted_mean;

  std::optional<double> p_value;
  std::optional<double> e_value;
  std::optional<StopRecord> stop;
  bool post_stop = false;

  bool intersected = true;  // which bounded band is "reported"

  /// The interval a stopping rule or a chart should look at. Once the
  /// population is exhausted its mean is known exactly.
  Interval reported_interval() const {
    if (exhausted_mean) return {*exhausted_mean, *exhausted_mean};
    if (set_lo && set_hi) return {static_cast<double>(*set_lo), static_cast<double>(*set_hi)};
    if (intersected && lo_intersected && hi_intersected) return {*lo_intersected, *hi_intersected};
    if (lo && hi) return {*lo, *hi};
    return {0.0, 0.0};
  }
};

namespace detail {

// JSON has no infinity; e-values can be +inf once the null is logically
// excluded, so encode non-finite numbers as strings.
inline nlohmann::json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline double read_number(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    return std::numeric_limits<double>::quiet_NaN();
  }
  return j.get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const CsSnapshot& s, bool emit_members = false) {
  nlohmann::json j;
  j["v"] = kSchemaVersion;
  j["t"] = s.t;
  j["method"] = s.method;
  j["alpha"] = s.alpha;
  auto put = [&](const char* key, const auto& opt) {
    if (opt) j[key] = *opt;
  };
  auto put_num = [&](const char* key, const std::optional<double>& opt) {
    if (opt) j[key] = detail::number(*opt);
  };
  put("set_lo", s.set_lo);
  put("set_hi", s.set_hi);
  put("contiguous", s.contiguous);
  put("set_size", s.set_size);
  put("raw_set_lo", s.raw_set_lo);
  put("raw_set_hi", s.raw_set_hi);
  if (emit_members && s.set_lo) j["set"] = s.members;
  if (!s.category_ranges.empty()) {
    auto arr = nlohmann::json::array();
    for (const auto& r : s.category_ranges) arr.push_back({r.lo, r.hi});
    j["category_ranges"] = arr;
  }
  put("lattice_size", s.lattice_size);
  if (emit_members && s.lattice_size) j["lattice"] = s.lattice_points;
  put_num("mu_hat_weighted", s.mu_hat_weighted);
  put_num("mu_hat_plain", s.mu_hat_plain);
  put_num("lambda_t", s.lambda_t);
  put_num("lo", s.lo);
  put_num("hi", s.hi);
  put_num("lo_intersected", s.lo_intersected);
  put_num("hi_intersected", s.hi_intersected);
  put_num("lower_one_sided", s.lower_one_sided);
  put_num("upper_one_sided", s.upper_one_sided);
  put_num("m_value", s.m_value);
  put_num("exhausted_mean", s.exhausted_mean);
  put_num("p_value", s.p_value);
  put_num("e_value", s.e_value);
  if (s.stop) j["stop"] = {{"reason", s.stop->reason}, {"t", s.stop->t}};
  if (s.post_stop) j["post_stop"] = true;
  return j;
}

inline CsSnapshot snapshot_from_json(const nlohmann::json& j) {
  CsSnapshot s;
  s.t = j.at("t").get<std::uint64_t>();
  s.method = j.at("method").get<std::string>();
  s.alpha = j.at("alpha").get<double>();
  auto get_i = [&](const char* k, std::optional<std::int64_t>& o) {
    if (j.contains(k)) o = j[k].get<std::int64_t>();
  };
  auto get_d = [&](const char* k, std::optional<double>& o) {
    if (j.contains(k)) o = detail::read_number(j[k]);
  };
  get_i("set_lo", s.set_lo);
  get_i("set_hi", s.set_hi);
  get_i("raw_set_lo", s.raw_set_lo);
  get_i("raw_set_hi", s.raw_set_hi);
  if (j.contains("contiguous")) s.contiguous = j["contiguous"].get<bool>();
  if (j.contains("set_size")) s.set_size = j["set_size"].get<std::uint64_t>();
  if (j.contains("set")) s.members = j["set"].get<std::vector<std::uint64_t>>();
  if (j.contains("category_ranges")) {
    for (const auto& r : j["category_ranges"]) s.category_ranges.push_back({r[0].get<std::uint64_t>(), r[1].get<std::uint64_t>()});
  }
  if (j.contains("lattice_size")) s.lattice_size = j["lattice_size"].get<std::uint64_t>();
  get_d("mu_hat_weighted", s.mu_hat_weighted);
  get_d("mu_hat_plain", s.mu_hat_plain);
  get_d("lambda_t", s.lambda_t);
  get_d("lo", s.lo);
  get_d("hi", s.hi);
  get_d("lo_intersected", s.lo_intersected);
  get_d("hi_intersected", s.hi_intersected);
  get_d("lower_one_sided", s.lower_one_sided);
  get_d("upper_one_sided", s.upper_one_sided);
  get_d("m_value", s.m_value);
  get_d("exhausted_mean", s.exhausted_mean);
  get_d("p_value", s.p_value);
  get_d("e_value", s.e_value);
  if (j.contains("stop")) s.stop = StopRecord{j["stop"].at("reason").get<std::string>(), j["stop"].at("t").get<std::uint64_t>()};
  s.post_stop = j.value("post_stop", false);
  return s;
}

/// Flat CSV header/row for snapshots (nested fields are dropped).
inline std::string snapshot_csv_header() {
  return "t,method,alpha,set_lo,set_hi,contiguous,mu_hat_weighted,lambda_t,lo,hi,lo_intersected,hi_intersected,p_value,e_value,stop_reason";
}

inline std::string snapshot_csv_row(const CsSnapshot& s) {
  auto num = [](const std::optional<double>& v) -> std::string {
    if (!v) return "";
    const auto j = detail::number(*v);
    return j.is_string() ? j.get<std::string>() : j.dump();
  };
  auto integer = [](const std::optional<std::int64_t>& v) { return v ? std::to_string(*v) : std::string(); };
  std::string row = std::to_string(s.t) + "," + s.method + "," + nlohmann::json(s.alpha).dump() + ",";
  row += integer(s.set_lo) + "," + integer(s.set_hi) + ",";
  row += s.contiguous ? (*s.contiguous ? "true" : "false") : "";
  row += "," + num(s.mu_hat_weighted) + "," + num(s.lambda_t) + "," + num(s.lo) + "," + num(s.hi) + ",";
  row += num(s.lo_intersected) + "," + num(s.hi_intersected) + "," + num(s.p_value) + "," + num(s.e_value) + ",";
  row += s.stop ? s.stop->reason : "";
  return row;
}

}  // namespace worcs
