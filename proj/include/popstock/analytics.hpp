#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "popstock/csv.hpp"
#include "popstock/date.hpp"
#include "popstock/error.hpp"
#include "popstock/regions.hpp"
#include "popstock/stocks.hpp"

namespace popstock {

enum class StockComponent { Residents, NonResidents, Unknown, TotalActive };

inline std::optional<StockComponent> parse_component(std::string_view s) {
  if (s == "residents") return StockComponent::Residents;
  if (s == "non_residents") return StockComponent::NonResidents;
  if (s == "unknown") return StockComponent::Unknown;
  if (s == "total_active") return StockComponent::TotalActive;
  return std::nullopt;
}

inline std::int64_t component_of(const DailyStock& s, StockComponent c) noexcept {
  switch (c) {
    case StockComponent::Residents: return s.residents;
    case StockComponent::NonResidents: return s.non_residents;
    case StockComponent::Unknown: return s.unknown;
    case StockComponent::TotalActive: return s.total_active;
  }
  return 0;
}

/// One stock component for one region over consecutive dates.
struct StockSeries {
  RegionCode region;
  std::vector<Date> dates;
  std::vector<double> values;
};

/// Splits stock rows into per-region series ordered by date. Throws
/// GapInSeries unless every region covers consecutive dates.
inline std::vector<StockSeries> series_by_region(std::span<const DailyStock> stocks,
                                                 StockComponent component) {
  std::map<RegionCode, std::map<Date, double>> by_region;
  for (const auto& s : stocks) {
    auto [it, inserted] = by_region[s.region].emplace(s.date, static_cast<double>(component_of(s, component)));
    if (!inserted)
      throw Error(ErrorCode::MismatchedKey,
                  "duplicate stock row (" + s.date.iso() + "," + s.region.str() + ")");
  }
  std::vector<StockSeries> out;
  for (auto& [region, days] : by_region) {
    StockSeries series{region, {}, {}};
    for (const auto& [date, value] : days) {
      if (!series.dates.empty() && date - series.dates.back() != 1)
        throw Error(ErrorCode::GapInSeries, "region " + region.str() + " has a gap after " +
                                                series.dates.back().iso());
      series.dates.push_back(date);
      series.values.push_back(value);
    }
    out.push_back(std::move(series));
  }
  return out;
}

/// p_d = values_d / sum(values).
inline std::vector<double> daily_share(std::span<const double> values) {
  double total = 0;
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "non-finite value in series");
    total += v;
  }
  if (!(total > 0)) throw Error(ErrorCode::ZeroTotal, "series total is not positive");
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(v / total);
  return out;
}

inline double mean_of(std::span<const double> xs) {
  double s = 0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// (n - 1) denominator.
inline double sample_std(std::span<const double> xs) {
  const double m = mean_of(xs);
  double ss = 0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

/// z_d = (p_d - mean) / sample_std.
inline std::vector<double> zscore_series(std::span<const double> shares) {
  if (shares.size() < 2) throw Error(ErrorCode::DegenerateSeries, "need at least two values");
  bool constant = true;
  for (double p : shares) {
    if (!std::isfinite(p)) throw Error(ErrorCode::NonFinite, "non-finite share");
    constant = constant && p == shares[0];
  }
  const double sd = sample_std(shares);
  if (constant || !(sd > 0)) throw Error(ErrorCode::DegenerateSeries, "series has zero variance");
  const double m = mean_of(shares);
  std::vector<double> z;
  z.reserve(shares.size());
  for (double p : shares) z.push_back((p - m) / sd);
  return z;
}

/// Nine divergent bands cut at -2, -1.5, -1, -0.5, 0.5, 1, 1.5, 2; intervals
/// are left-closed, band 1 is everything below -2.
inline int band_of(double z) {
  if (!std::isfinite(z)) throw Error(ErrorCode::NonFinite, "band of non-finite z");
  static constexpr double kCuts[] = {-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0};
  int band = 1;
  for (double cut : kCuts)
    if (z >= cut) ++band;
  return band;
}

struct ZSeries {
  RegionCode region;
  std::vector<Date> dates;
  std::vector<double> values;
  std::vector<double> shares;
  std::vector<double> zscores;
  std::vector<int> bands;
};

inline ZSeries make_zseries(const StockSeries& s) {
  ZSeries z{s.region, s.dates, s.values, daily_share(s.values), {}, {}};
  z.zscores = zscore_series(z.shares);
  z.bands.reserve(z.zscores.size());
  for (double v : z.zscores) z.bands.push_back(band_of(v));
  return z;
}

/// Percent change of `value` against the mean of `baseline`.
inline double influx_ratio(double value, std::span<const double> baseline) {
  if (baseline.empty()) throw Error(ErrorCode::ZeroBaseline, "empty baseline");
  const double m = mean_of(baseline);
  if (!(m > 0)) throw Error(ErrorCode::ZeroBaseline, "baseline mean is not positive");
  return 100.0 * (value - m) / m;
}

enum class AggregateGrain { AnnualDailyMean, MonthlyDailyMean, MonthlySum };

inline std::optional<AggregateGrain> parse_grain(std::string_view s) {
  if (s == "annual_daily_mean") return AggregateGrain::AnnualDailyMean;
  if (s == "monthly_daily_mean") return AggregateGrain::MonthlyDailyMean;
  if (s == "monthly_sum") return AggregateGrain::MonthlySum;
  return std::nullopt;
}

/// `month` is empty for the annual grain, `YYYY-MM` otherwise.
struct Aggregate {
  RegionCode region;
  std::string month;
  double value = 0;
  bool operator==(const Aggregate&) const = default;
};

/// Rows sorted by (region, month).
inline std::vector<Aggregate> aggregate_series(std::span<const DailyStock> stocks,
                                               StockComponent component, AggregateGrain grain) {
  if (stocks.empty()) throw Error(ErrorCode::EmptyWindow, "no stock rows to aggregate");
  std::vector<Aggregate> out;
  for (const auto& s : series_by_region(stocks, component)) {
    if (grain == AggregateGrain::AnnualDailyMean) {
      out.push_back({s.region, "", mean_of(s.values)});
      continue;
    }
    std::map<std::string, std::pair<double, std::size_t>> months;
    for (std::size_t i = 0; i < s.dates.size(); ++i) {
      auto& [sum, n] = months[s.dates[i].month_key()];
      sum += s.values[i];
      ++n;
    }
    for (const auto& [month, acc] : months)
      out.push_back({s.region, month,
                     grain == AggregateGrain::MonthlySum ? acc.first
                                                         : acc.first / static_cast<double>(acc.second)});
  }
  return out;
}

inline void write_zscores_header(std::ostream& out) { out << "date,region_code,value,share,z,band\n"; }

inline void write_zscores(std::ostream& out, const ZSeries& z) {
  for (std::size_t i = 0; i < z.dates.size(); ++i)
    out << z.dates[i].iso() << ',' << z.region.str() << ',' << csv::format_double(z.values[i]) << ','
        << csv::format_double(z.shares[i]) << ',' << csv::format_double(z.zscores[i]) << ','
        << z.bands[i] << '\n';
}

struct InfluxRow {
  RegionCode region;
  Date event_date;
  double value = 0;
  double baseline_mean = 0;
  double pct_change = 0;
};

inline void write_influx(std::ostream& out, std::span<const InfluxRow> rows) {
  out << "region_code,event_date,value,baseline_mean,pct_change\n";
  for (const auto& r : rows)
    out << r.region.str() << ',' << r.event_date.iso() << ',' << csv::format_double(r.value) << ','
        << csv::format_double(r.baseline_mean) << ',' << csv::format_double(r.pct_change) << '\n';
}

inline void write_aggregates(std::ostream& out, std::span<const Aggregate> rows) {
  out << "region_code,month,value\n";
  for (const auto& a : rows)
    out << a.region.str() << ',' << a.month << ',' << csv::format_double(a.value) << '\n';
}

}  // namespace popstock
