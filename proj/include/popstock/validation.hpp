#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "popstock/analytics.hpp"
#include "popstock/csv.hpp"
#include "popstock/error.hpp"
#include "popstock/inference.hpp"
#include "popstock/regions.hpp"

namespace popstock {

/// Standard normal quantile. Acklam's rational approximation (relative
/// error below 1.2e-9) followed by one Halley step against erfc.
inline double normal_quantile(double p) {
  if (!(p > 0 && p < 1)) throw Error(ErrorCode::InvalidParameter, "quantile needs p in (0,1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425, p_high = 1 - p_low;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= p_high) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

/// Cochran's sample size for a proportion (p = 0.5) with finite-population
/// correction, rounded half-up. The half-up rule reproduces 661 for
/// (190608, 0.99, 0.05); rounding up would give 662.
inline std::int64_t sample_size(std::int64_t population, double confidence, double margin) {
  if (population < 1 || !(confidence > 0 && confidence < 1) || !(margin > 0 && margin < 1))
    throw Error(ErrorCode::InvalidParameter,
                "sample_size needs population >= 1, confidence and margin in (0,1)");
  const double z = normal_quantile(1 - (1 - confidence) / 2);
  const double n0 = z * z * 0.25 / (margin * margin);
  const double n = n0 / (1 + (n0 - 1) / static_cast<double>(population));
  return static_cast<std::int64_t>(std::floor(n + 0.5));
}

struct ValidationLabel {
  std::string user_id;
  RegionCode home_region;
};

inline std::vector<ValidationLabel> read_labels(std::istream& in) {
  std::vector<ValidationLabel> out;
  std::set<std::string> seen;
  for (auto& row : csv::read_table(in, "user_id,region_code")) {
    if (!seen.insert(row[0]).second)
      throw Error(ErrorCode::InvalidParameter, "duplicate label for user '" + row[0] + "'");
    out.push_back({std::move(row[0]), RegionCode::make(row[1])});
  }
  return out;
}

/// Throws UnknownRegion for labels pointing outside the region set.
inline void check_labels(std::span<const ValidationLabel> labels, const RegionSet& set) {
  for (const auto& l : labels)
    if (!set.find(l.home_region))
      throw Error(ErrorCode::UnknownRegion,
                  "label for '" + l.user_id + "' uses unknown region " + l.home_region.str());
}

using HomeIndex = std::map<std::string, HomeAssignment, std::less<>>;

inline HomeIndex index_homes(std::span<const HomeAssignment> homes) {
  HomeIndex out;
  for (const auto& h : homes) out.emplace(h.user_id, h);
  return out;
}

struct AccuracyReport {
  std::int64_t n_labeled = 0;
  std::int64_t n_mode_computed = 0;
  std::int64_t n_correct = 0;
  std::int64_t n_correct_merged = 0;
  double accuracy = 0;
  double accuracy_merged = 0;
  double coverage = 0;  // n_mode_computed / n_labeled
  /// (inferred, labeled) -> count, over exact mismatches.
  std::map<std::pair<RegionCode, RegionCode>, std::int64_t> misidentifications;
};

/// Labeled users whose home could not be computed (or who have no
/// assignment) are excluded from the accuracy denominator and only lower
/// coverage. Under merged scoring, a mismatch inside one equivalence group
/// counts as correct.
inline AccuracyReport internal_accuracy(const HomeIndex& homes,
                                        std::span<const ValidationLabel> labels,
                                        const std::map<RegionCode, std::string>& groups) {
  if (labels.empty()) throw Error(ErrorCode::NoLabeledResidents, "no labels");
  AccuracyReport r;
  r.n_labeled = static_cast<std::int64_t>(labels.size());
  for (const auto& label : labels) {
    auto it = homes.find(label.user_id);
    const RegionCode* inferred = it == homes.end() ? nullptr : it->second.home();
    if (!inferred) continue;
    ++r.n_mode_computed;
    if (*inferred == label.home_region) {
      ++r.n_correct;
      ++r.n_correct_merged;
      continue;
    }
    ++r.misidentifications[{*inferred, label.home_region}];
    auto gi = groups.find(*inferred), gl = groups.find(label.home_region);
    if (gi != groups.end() && gl != groups.end() && gi->second == gl->second) ++r.n_correct_merged;
  }
  if (r.n_mode_computed == 0)
    throw Error(ErrorCode::NoLabeledResidents, "no labeled user has a computable home");
  const auto denom = static_cast<double>(r.n_mode_computed);
  r.accuracy = r.n_correct / denom;
  r.accuracy_merged = r.n_correct_merged / denom;
  r.coverage = denom / static_cast<double>(r.n_labeled);
  return r;
}

inline const std::vector<std::int64_t>& default_thresholds() {
  static const std::vector<std::int64_t> kThresholds = {1, 3, 5, 10, 15, 20, 25, 30, 50, 100, 200, 500, 1000};
  return kThresholds;
}

struct ThresholdRow {
  std::int64_t threshold = 0;
  std::int64_t n_users = 0;
  double pct_total = 0;                  // percent of mode-computed labeled users
  std::optional<double> pct_successful;  // percent; empty bucket -> nullopt
};

/// Row t covers labeled users with a computable home and at least t
/// observations.
inline std::vector<ThresholdRow> threshold_sweep(const HomeIndex& homes,
                                                 std::span<const ValidationLabel> labels,
                                                 std::span<const std::int64_t> thresholds) {
  if (!std::is_sorted(thresholds.begin(), thresholds.end()))
    throw Error(ErrorCode::InvalidParameter, "thresholds must be ascending");
  struct Scored {
    std::int64_t observations;
    bool correct;
  };
  std::vector<Scored> users;
  for (const auto& label : labels) {
    auto it = homes.find(label.user_id);
    if (it == homes.end() || !it->second.is_resident()) continue;
    users.push_back({it->second.total_observations, *it->second.home() == label.home_region});
  }
  std::vector<ThresholdRow> rows;
  for (auto t : thresholds) {
    ThresholdRow row{t, 0, 0, std::nullopt};
    std::int64_t correct = 0;
    for (const auto& u : users)
      if (u.observations >= t) {
        ++row.n_users;
        correct += u.correct;
      }
    if (!users.empty()) row.pct_total = 100.0 * row.n_users / static_cast<double>(users.size());
    if (row.n_users > 0) row.pct_successful = 100.0 * correct / static_cast<double>(row.n_users);
    rows.push_back(row);
  }
  return rows;
}

inline constexpr std::string_view kThresholdHeader = "threshold,n_users,pct_total,pct_successful";

inline void write_threshold_table(std::ostream& out, std::span<const ThresholdRow> rows) {
  out << kThresholdHeader << '\n';
  for (const auto& r : rows)
    out << r.threshold << ',' << r.n_users << ',' << csv::format_double(r.pct_total) << ','
        << (r.pct_successful ? csv::format_double(*r.pct_successful) : std::string()) << '\n';
}

inline void write_accuracy(std::ostream& out, const AccuracyReport& r) {
  out << "n_labeled,n_mode_computed,n_unknown,n_correct,n_correct_merged,accuracy,accuracy_merged,"
         "coverage\n"
      << r.n_labeled << ',' << r.n_mode_computed << ',' << (r.n_labeled - r.n_mode_computed) << ','
      << r.n_correct << ',' << r.n_correct_merged << ',' << csv::format_double(r.accuracy) << ','
      << csv::format_double(r.accuracy_merged) << ',' << csv::format_double(r.coverage) << '\n';
}

inline void write_misidentifications(std::ostream& out, const AccuracyReport& r,
                                     const std::map<RegionCode, std::string>& groups) {
  out << "inferred_region,labeled_region,users,same_group\n";
  for (const auto& [pair, n] : r.misidentifications) {
    auto gi = groups.find(pair.first), gl = groups.find(pair.second);
    const bool same = gi != groups.end() && gl != groups.end() && gi->second == gl->second;
    out << pair.first.str() << ',' << pair.second.str() << ',' << n << ',' << (same ? "true" : "false")
        << '\n';
  }
}

enum class Transform { Identity, Log10Log10 };

inline std::optional<Transform> parse_transform(std::string_view s) {
  if (s == "identity") return Transform::Identity;
  if (s == "log10_log10") return Transform::Log10Log10;
  return std::nullopt;
}

constexpr std::string_view to_string(Transform t) noexcept {
  return t == Transform::Identity ? "identity" : "log10_log10";
}

struct Point2 {
  double x = 0;
  double y = 0;
};

struct RegressionResult {
  double slope = 0;
  double intercept = 0;
  double r_squared = 0;
  std::size_t n_points = 0;
  std::size_t n_excluded = 0;  // non-positive points dropped by log10_log10
  Transform transform = Transform::Identity;
};

/// Ordinary least squares on centered sums. Under log10_log10, points with
/// x <= 0 or y <= 0 are dropped first and counted in n_excluded.
inline RegressionResult fit_line(std::span<const Point2> points, Transform transform = Transform::Identity) {
  RegressionResult r;
  r.transform = transform;
  std::vector<Point2> pts;
  pts.reserve(points.size());
  for (const auto& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw Error(ErrorCode::NonFinite, "non-finite point");
    if (transform == Transform::Log10Log10) {
      if (p.x <= 0 || p.y <= 0) {
        ++r.n_excluded;
        continue;
      }
      pts.push_back({std::log10(p.x), std::log10(p.y)});
    } else {
      pts.push_back(p);
    }
  }
  r.n_points = pts.size();
  if (pts.size() < 2)
    throw Error(ErrorCode::TooFewPoints, std::to_string(pts.size()) + " usable points, need 2");
  double mx = 0, my = 0;
  for (const auto& p : pts) {
    mx += p.x;
    my += p.y;
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& p : pts) {
    sxx += (p.x - mx) * (p.x - mx);
    sxy += (p.x - mx) * (p.y - my);
    syy += (p.y - my) * (p.y - my);
  }
  if (!(sxx > 0)) throw Error(ErrorCode::ZeroVariance, "x values are constant");
  if (!(syy > 0)) throw Error(ErrorCode::ZeroVariance, "y values are constant");
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  r.r_squared = std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
  return r;
}

/// Reference statistics keyed by region, optionally by month.
struct ReferenceRow {
  RegionCode region;
  std::string month;
  double value = 0;
};

/// Accepts `region_code,value` or `region_code,month,value`; rows with an
/// empty value are treated as unavailable and skipped.
inline std::vector<ReferenceRow> read_reference(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw Error(ErrorCode::BadHeader, "empty reference file");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  const bool monthly = header == "region_code,month,value";
  if (!monthly && header != "region_code,value")
    throw Error(ErrorCode::BadHeader, "reference header must be 'region_code,value' or "
                                      "'region_code,month,value'");
  std::vector<ReferenceRow> out;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto f = csv::split(line);
    if (f.size() != (monthly ? 3u : 2u))
      throw Error(ErrorCode::ParseError, "reference line " + std::to_string(line_no) + ": wrong field count");
    const auto& value_field = f.back();
    if (value_field.empty()) continue;
    const auto v = csv::parse_double(value_field);
    if (!v) throw Error(ErrorCode::ParseError, "reference line " + std::to_string(line_no) + ": bad value");
    if (monthly && !(f[1].size() == 7 && Date::parse(f[1] + "-01")))
      throw Error(ErrorCode::ParseError, "reference line " + std::to_string(line_no) + ": month must be YYYY-MM");
    out.push_back({RegionCode::make(f[0]), monthly ? f[1] : std::string(), *v});
  }
  return out;
}

struct GroupRegression {
  std::string group;  // month, or "all" for the annual comparison
  std::optional<RegressionResult> fit;
  std::optional<ErrorCode> error;
  std::size_t dropped = 0;  // keys present on only one side of the join
};

/// Inner join of aggregates with reference values on (region, month), then
/// one fit per month (or a single "all" group when both sides are annual).
/// A failing group records its error and does not stop the others.
inline std::vector<GroupRegression> external_report(std::span<const Aggregate> aggregates,
                                                    std::span<const ReferenceRow> reference,
                                                    Transform transform) {
  const bool agg_monthly = std::any_of(aggregates.begin(), aggregates.end(),
                                       [](const Aggregate& a) { return !a.month.empty(); });
  const bool ref_monthly = std::any_of(reference.begin(), reference.end(),
                                       [](const ReferenceRow& r) { return !r.month.empty(); });
  if (!aggregates.empty() && !reference.empty() && agg_monthly != ref_monthly)
    throw Error(ErrorCode::InvalidParameter,
                "aggregate and reference grains differ (monthly vs annual)");

  using Key = std::pair<std::string, RegionCode>;  // (month, region)
  std::map<Key, double> left, right;
  for (const auto& a : aggregates) left[{a.month, a.region}] = a.value;
  for (const auto& r : reference) right[{r.month, r.region}] = r.value;

  std::map<std::string, GroupRegression> groups;
  std::map<std::string, std::vector<Point2>> points;
  const auto group_name = [](const std::string& month) { return month.empty() ? std::string("all") : month; };
  for (const auto& [key, x] : left) {
    auto& g = groups[group_name(key.first)];
    g.group = group_name(key.first);
    auto it = right.find(key);
    if (it == right.end())
      ++g.dropped;
    else
      points[g.group].push_back({x, it->second});
  }
  for (const auto& [key, y] : right) {
    auto& g = groups[group_name(key.first)];
    g.group = group_name(key.first);
    if (!left.count(key)) ++g.dropped;
  }
  std::vector<GroupRegression> out;
  for (auto& [name, g] : groups) {
    try {
      g.fit = fit_line(points[name], transform);
    } catch (const Error& e) {
      g.error = e.code();
    }
    out.push_back(std::move(g));
  }
  return out;
}

inline void write_external_report(std::ostream& out, std::span<const GroupRegression> groups,
                                  Transform transform) {
  out << "group,n_points,slope,intercept,r_squared,transform,excluded,dropped,status\n";
  for (const auto& g : groups) {
    out << g.group << ',';
    if (g.fit)
      out << g.fit->n_points << ',' << csv::format_double(g.fit->slope) << ','
          << csv::format_double(g.fit->intercept) << ',' << csv::format_double(g.fit->r_squared) << ','
          << to_string(transform) << ',' << g.fit->n_excluded << ',' << g.dropped << ",ok\n";
    else
      out << ",,,," << to_string(transform) << ",," << g.dropped << ','
          << to_string(g.error.value_or(ErrorCode::TooFewPoints)) << '\n';
  }
}

}  // namespace popstock
