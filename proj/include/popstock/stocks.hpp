#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "popstock/csv.hpp"
#include "popstock/date.hpp"
#include "popstock/error.hpp"
#include "popstock/event_table.hpp"
#include "popstock/inference.hpp"
#include "popstock/parallel.hpp"

namespace popstock {

/// Per (date, region) counts of distinct active users by residency class.
/// A user active in two regions on one day is counted in both, so region
/// rows must not be summed into wider-area distinct totals.
struct DailyStock {
  Date date;
  RegionCode region;
  std::int64_t residents = 0;
  std::int64_t non_residents = 0;
  std::int64_t unknown = 0;
  std::int64_t total_active = 0;

  bool consistent() const noexcept {
    return residents >= 0 && non_residents >= 0 && unknown >= 0 &&
           residents + non_residents + unknown == total_active;
  }
  bool operator==(const DailyStock&) const = default;
};

inline std::set<std::string> daily_active_users(std::span<const ResolvedEvent> events, Date date,
                                                const RegionCode& region) {
  std::set<std::string> out;
  for (const auto& e : events)
    if (e.local_date == date && e.region == region) out.insert(e.user_id);
  return out;
}

/// Users missing from `homes` count as unknown.
inline DailyStock compute_daily_stock(const std::set<std::string>& actives, Date date,
                                      const RegionCode& region,
                                      const std::map<std::string, HomeAssignment>& homes) {
  DailyStock s{date, region};
  for (const auto& user : actives) {
    auto it = homes.find(user);
    const RegionCode* home = it == homes.end() ? nullptr : it->second.home();
    if (!home)
      ++s.unknown;
    else if (*home == region)
      ++s.residents;
    else
      ++s.non_residents;
  }
  s.total_active = static_cast<std::int64_t>(actives.size());
  return s;
}

/// Componentwise sum of two partial stocks for the same (date, region)
/// computed over disjoint user shards.
inline DailyStock merge_partial_stocks(const DailyStock& a, const DailyStock& b) {
  if (a.date != b.date || a.region != b.region)
    throw Error(ErrorCode::MismatchedKey, "cannot merge stocks for (" + a.date.iso() + "," +
                                              a.region.str() + ") and (" + b.date.iso() + "," +
                                              b.region.str() + ")");
  return {a.date,
          a.region,
          a.residents + b.residents,
          a.non_residents + b.non_residents,
          a.unknown + b.unknown,
          a.total_active + b.total_active};
}

/// Partial stock that still carries its user set, so shard overlap is
/// detectable at merge time.
struct TrackedStock {
  DailyStock stock;
  std::set<std::string> users;
};

inline TrackedStock merge_partial_stocks(const TrackedStock& a, const TrackedStock& b) {
  for (const auto& u : b.users)
    if (a.users.count(u))
      throw Error(ErrorCode::ShardOverlap, "user '" + u + "' present in both shards");
  TrackedStock out{merge_partial_stocks(a.stock, b.stock), a.users};
  out.users.insert(b.users.begin(), b.users.end());
  return out;
}

struct VolumeRecord {
  Date date;
  RegionCode region;
  std::int64_t total_events = 0;
};

/// Rates per event; nullopt when the day had no events.
struct NormalizedRates {
  std::optional<double> residents;
  std::optional<double> non_residents;
  std::optional<double> unknown;
};

inline NormalizedRates normalize_by_volume(const DailyStock& s, const VolumeRecord& v) {
  if (s.date != v.date || s.region != v.region)
    throw Error(ErrorCode::MismatchedKey, "stock and volume keys differ");
  if (v.total_events == 0) return {};
  const auto n = static_cast<double>(v.total_events);
  return {s.residents / n, s.non_residents / n, s.unknown / n};
}

namespace stocks_detail {

struct Counts {
  std::int64_t residents = 0, non_residents = 0, unknown = 0;
};

}  // namespace stocks_detail

/// Stock computation over a compact table: users are split into `shards`
/// by FNV-1a of their id, each shard is reduced independently, and partial
/// stocks are folded with merge_partial_stocks. One row per (date, region)
/// for every date in `dates` and every region known to the table, zero rows
/// included, sorted by (date, region code).
inline std::vector<DailyStock> compute_stocks(const EventTable& table, const UserGroups& groups,
                                              std::span<const CompactHome> homes,
                                              const StudyWindow& dates, unsigned shards = 1,
                                              unsigned threads = 1) {
  if (shards == 0) shards = 1;
  const auto n_days = static_cast<std::size_t>(dates.days());
  const auto n_regions = table.regions().size();
  const std::int32_t first = dates.start.days(), last = dates.end.days();

  std::vector<std::uint32_t> shard_of(groups.users());
  for (std::size_t u = 0; u < groups.users(); ++u)
    shard_of[u] = static_cast<std::uint32_t>(fnv1a(table.users()[u]) % shards);

  std::vector<std::vector<stocks_detail::Counts>> partials(shards);
  parallel_for(shards, threads, [&](std::size_t shard) {
    auto& cells = partials[shard];
    cells.assign(n_days * n_regions, {});
    std::vector<std::uint64_t> keys;
    const auto events = table.events();
    for (std::size_t u = 0; u < groups.users(); ++u) {
      if (shard_of[u] != shard) continue;
      keys.clear();
      for (auto idx : groups.events_of(u)) {
        const auto& e = events[idx];
        if (e.day < first || e.day > last) continue;
        keys.push_back((static_cast<std::uint64_t>(e.day - first) << 32) | e.region);
      }
      std::sort(keys.begin(), keys.end());
      keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
      const CompactHome home = u < homes.size() ? homes[u] : CompactHome{};
      for (auto key : keys) {
        const auto day = static_cast<std::size_t>(key >> 32);
        const auto region = static_cast<std::uint32_t>(key & 0xffffffffu);
        auto& c = cells[day * n_regions + region];
        if (!home.is_resident())
          ++c.unknown;
        else if (home.region == region)
          ++c.residents;
        else
          ++c.non_residents;
      }
    }
  });

  std::vector<std::size_t> region_order(n_regions);
  for (std::size_t r = 0; r < n_regions; ++r) region_order[r] = r;
  std::sort(region_order.begin(), region_order.end(), [&](std::size_t a, std::size_t b) {
    return table.regions()[a] < table.regions()[b];
  });

  std::vector<DailyStock> out;
  out.reserve(n_days * n_regions);
  for (std::size_t d = 0; d < n_days; ++d) {
    const Date date = dates.start + static_cast<std::int32_t>(d);
    for (auto r : region_order) {
      DailyStock acc{date, table.regions()[r]};
      for (const auto& cells : partials) {
        const auto& c = cells[d * n_regions + r];
        acc = merge_partial_stocks(
            acc, DailyStock{date, acc.region, c.residents, c.non_residents, c.unknown,
                            c.residents + c.non_residents + c.unknown});
      }
      if (!acc.consistent())
        throw Error(ErrorCode::InvalidParameter, "stock invariant violated at " + date.iso());
      out.push_back(std::move(acc));
    }
  }
  return out;
}

/// Total events per (date, region), same row layout as compute_stocks.
inline std::vector<VolumeRecord> compute_volume(const EventTable& table, const StudyWindow& dates) {
  const auto n_regions = table.regions().size();
  const auto n_days = static_cast<std::size_t>(dates.days());
  std::vector<std::int64_t> cells(n_days * n_regions, 0);
  for (const auto& e : table.events()) {
    if (e.day < dates.start.days() || e.day > dates.end.days()) continue;
    ++cells[static_cast<std::size_t>(e.day - dates.start.days()) * n_regions + e.region];
  }
  std::vector<std::size_t> order(n_regions);
  for (std::size_t r = 0; r < n_regions; ++r) order[r] = r;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return table.regions()[a] < table.regions()[b]; });
  std::vector<VolumeRecord> out;
  out.reserve(cells.size());
  for (std::size_t d = 0; d < n_days; ++d)
    for (auto r : order)
      out.push_back({dates.start + static_cast<std::int32_t>(d), table.regions()[r],
                     cells[d * n_regions + r]});
  return out;
}

inline constexpr std::string_view kStocksHeader =
    "date,region_code,residents,non_residents,unknown,total_active";

inline void write_stocks(std::ostream& out, std::span<const DailyStock> stocks) {
  out << kStocksHeader << '\n';
  for (const auto& s : stocks)
    out << s.date.iso() << ',' << s.region.str() << ',' << s.residents << ',' << s.non_residents
        << ',' << s.unknown << ',' << s.total_active << '\n';
}

inline std::vector<DailyStock> read_stocks(std::istream& in) {
  std::vector<DailyStock> out;
  std::size_t line = 1;
  for (const auto& row : csv::read_table(in, kStocksHeader)) {
    ++line;
    const auto date = Date::parse(row[0]);
    std::int64_t v[4];
    bool ok = date.has_value();
    for (int i = 0; i < 4 && ok; ++i) {
      const auto n = csv::parse_int<std::int64_t>(row[2 + i]);
      ok = n.has_value() && *n >= 0;
      if (ok) v[i] = *n;
    }
    if (!ok) throw Error(ErrorCode::ParseError, "stocks line " + std::to_string(line) + ": bad value");
    DailyStock s{*date, RegionCode::make(row[1]), v[0], v[1], v[2], v[3]};
    if (!s.consistent())
      throw Error(ErrorCode::ParseError,
                  "stocks line " + std::to_string(line) + ": classes do not sum to total_active");
    out.push_back(std::move(s));
  }
  return out;
}

inline void write_volume(std::ostream& out, std::span<const VolumeRecord> volume) {
  out << "date,region_code,total_events\n";
  for (const auto& v : volume)
    out << v.date.iso() << ',' << v.region.str() << ',' << v.total_events << '\n';
}

/// Rows pair up by position; both inputs come from the same table and window.
inline void write_normalized(std::ostream& out, std::span<const DailyStock> stocks,
                             std::span<const VolumeRecord> volume) {
  out << "date,region_code,resident_rate,non_resident_rate,unknown_rate\n";
  const auto fmt = [](const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); };
  for (std::size_t i = 0; i < stocks.size(); ++i) {
    const auto rates = normalize_by_volume(stocks[i], volume[i]);
    out << stocks[i].date.iso() << ',' << stocks[i].region.str() << ',' << fmt(rates.residents)
        << ',' << fmt(rates.non_residents) << ',' << fmt(rates.unknown) << '\n';
  }
}

}  // namespace popstock
