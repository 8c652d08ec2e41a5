#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "popstock/csv.hpp"
#include "popstock/date.hpp"
#include "popstock/error.hpp"
#include "popstock/event_table.hpp"
#include "popstock/ingest.hpp"
#include "popstock/parallel.hpp"
#include "popstock/regions.hpp"

namespace popstock {

/// Inclusive date range over which home locations are inferred.
struct StudyWindow {
  Date start;
  Date end;

  StudyWindow() = default;
  StudyWindow(Date s, Date e) : start(s), end(e) {
    if (end < start)
      throw Error(ErrorCode::InvalidParameter,
                  "window end " + end.iso() + " precedes start " + start.iso());
  }

  static StudyWindow calendar_year(int year) {
    return {Date::from_ymd(year, 1, 1), Date::from_ymd(year, 12, 31)};
  }

  /// The `days` days ending the day before `as_of`.
  static StudyWindow trailing(Date as_of, std::int32_t days) {
    if (days < 1) throw Error(ErrorCode::InvalidParameter, "trailing window needs at least 1 day");
    return {as_of - days, as_of - 1};
  }

  bool contains(Date d) const noexcept { return d >= start && d <= end; }
  std::int32_t days() const noexcept { return end - start + 1; }
};

/// One counted observation: a region, optionally collapsed to an n-day
/// bucket.
struct Observation {
  RegionCode region;
  std::int32_t bucket = 0;
};

/// Drops events outside the window, then keeps at most one observation per
/// (region, bucket) where bucket = floor((date - window.start) / n_days).
/// With n_days == 1 every in-window event is one observation.
inline std::vector<Observation> collapse_observations(std::span<const ResolvedEvent> events,
                                                      const StudyWindow& window, int n_days) {
  if (n_days < 1) throw Error(ErrorCode::InvalidParameter, "n_days must be >= 1");
  std::vector<Observation> out;
  for (const auto& e : events) {
    if (!window.contains(e.local_date)) continue;
    const std::int32_t offset = e.local_date - window.start;
    out.push_back({e.region, n_days == 1 ? offset : offset / n_days});
  }
  if (n_days == 1) return out;
  std::sort(out.begin(), out.end(), [](const Observation& a, const Observation& b) {
    return std::tie(a.region, a.bucket) < std::tie(b.region, b.bucket);
  });
  out.erase(std::unique(out.begin(), out.end(),
                        [](const Observation& a, const Observation& b) {
                          return a.region == b.region && a.bucket == b.bucket;
                        }),
            out.end());
  return out;
}

struct UserLocationHistogram {
  std::string user_id;
  StudyWindow window;
  std::map<RegionCode, std::int64_t> counts;
  std::int64_t total = 0;
};

inline UserLocationHistogram build_histogram(std::span<const Observation> observations,
                                             std::string user_id, const StudyWindow& window) {
  UserLocationHistogram h{std::move(user_id), window, {}, 0};
  for (const auto& o : observations) ++h.counts[o.region];
  h.total = static_cast<std::int64_t>(observations.size());
  return h;
}

/// Count-map union; commutative and associative. Throws MismatchedKey when
/// the histograms belong to different users or windows.
inline UserLocationHistogram merge_histograms(const UserLocationHistogram& a,
                                              const UserLocationHistogram& b) {
  if (a.user_id != b.user_id || a.window.start != b.window.start || a.window.end != b.window.end)
    throw Error(ErrorCode::MismatchedKey, "histograms for different users or windows");
  auto out = a;
  for (const auto& [region, n] : b.counts) out.counts[region] += n;
  out.total += b.total;
  return out;
}

enum class UnknownReason { InsufficientHistory, TiedMode };

constexpr std::string_view to_string(UnknownReason r) noexcept {
  return r == UnknownReason::InsufficientHistory ? "insufficient_history" : "tied_mode";
}

struct Resident {
  RegionCode region;
  bool operator==(const Resident&) const = default;
};

struct UnknownHome {
  UnknownReason reason;
  bool operator==(const UnknownHome&) const = default;
};

struct HomeAssignment {
  std::string user_id;
  std::variant<Resident, UnknownHome> status;
  std::int64_t mode_count = 0;
  std::int64_t total_observations = 0;

  bool is_resident() const noexcept { return std::holds_alternative<Resident>(status); }
  const RegionCode* home() const noexcept {
    const auto* r = std::get_if<Resident>(&status);
    return r ? &r->region : nullptr;
  }
  bool operator==(const HomeAssignment&) const = default;
};

/// Outcome of the modal rule on a bag of per-key counts.
struct ModeVerdict {
  std::optional<std::size_t> winner;  // position of the strict argmax
  UnknownReason reason = UnknownReason::InsufficientHistory;
  std::int64_t mode_count = 0;
};

/// Fewer than two observations -> insufficient history; a shared maximum ->
/// tied mode; otherwise the strict argmax wins.
template <typename Counts>
ModeVerdict decide_mode(const Counts& counts, std::int64_t total) {
  ModeVerdict v;
  std::size_t i = 0, at_max = 0;
  for (const auto& c : counts) {
    const std::int64_t n = c;
    if (n > v.mode_count) {
      v.mode_count = n;
      v.winner = i;
      at_max = 1;
    } else if (n == v.mode_count && n > 0) {
      ++at_max;
    }
    ++i;
  }
  if (total < 2) {
    v.winner.reset();
    v.reason = UnknownReason::InsufficientHistory;
  } else if (at_max != 1) {
    v.winner.reset();
    v.reason = UnknownReason::TiedMode;
  }
  return v;
}

inline HomeAssignment infer_home(const UserLocationHistogram& h) {
  std::vector<std::int64_t> counts;
  counts.reserve(h.counts.size());
  for (const auto& [region, n] : h.counts) counts.push_back(n);
  const auto v = decide_mode(counts, h.total);
  HomeAssignment a{h.user_id, UnknownHome{v.reason}, v.mode_count, h.total};
  if (v.winner) a.status = Resident{std::next(h.counts.begin(), static_cast<std::ptrdiff_t>(*v.winner))->first};
  return a;
}

/// Home verdict keyed by EventTable ids.
struct CompactHome {
  static constexpr std::uint32_t kNoRegion = 0xffffffffu;

  std::uint32_t region = kNoRegion;
  UnknownReason reason = UnknownReason::InsufficientHistory;
  std::int64_t mode_count = 0;
  std::int64_t total = 0;

  bool is_resident() const noexcept { return region != kNoRegion; }
};

namespace inference_detail {

/// Home of one user from its event indices; `scratch` is reused storage.
inline CompactHome infer_user(const EventTable& table, std::span<const std::uint32_t> event_ids,
                              const StudyWindow& window, int n_days,
                              std::vector<std::uint64_t>& scratch) {
  const auto events = table.events();
  scratch.clear();
  const std::int32_t start = window.start.days(), end = window.end.days();
  for (auto idx : event_ids) {
    const auto& e = events[idx];
    if (e.day < start || e.day > end) continue;
    const auto bucket = static_cast<std::uint32_t>((e.day - start) / n_days);
    scratch.push_back((static_cast<std::uint64_t>(e.region) << 32) | bucket);
  }
  std::sort(scratch.begin(), scratch.end());
  if (n_days > 1) scratch.erase(std::unique(scratch.begin(), scratch.end()), scratch.end());

  // Run-length over region ids; regions arrive ascending.
  std::vector<std::pair<std::uint32_t, std::int64_t>> runs;
  for (auto key : scratch) {
    const auto region = static_cast<std::uint32_t>(key >> 32);
    if (runs.empty() || runs.back().first != region)
      runs.emplace_back(region, 1);
    else
      ++runs.back().second;
  }
  std::vector<std::int64_t> counts;
  counts.reserve(runs.size());
  for (const auto& r : runs) counts.push_back(r.second);
  const auto total = static_cast<std::int64_t>(scratch.size());
  const auto v = decide_mode(counts, total);
  CompactHome h;
  h.reason = v.reason;
  h.mode_count = v.mode_count;
  h.total = total;
  if (v.winner) h.region = runs[*v.winner].first;
  return h;
}

}  // namespace inference_detail

/// Infers every user's home in parallel; result is indexed by user id and
/// independent of `threads`.
inline std::vector<CompactHome> infer_homes(const EventTable& table, const UserGroups& groups,
                                            const StudyWindow& window, int n_days = 1,
                                            unsigned threads = 1) {
  if (n_days < 1) throw Error(ErrorCode::InvalidParameter, "n_days must be >= 1");
  std::vector<CompactHome> homes(groups.users());
  const std::size_t n_tasks = std::max<std::size_t>(1, std::min<std::size_t>(groups.users(), threads * 8u));
  parallel_for(n_tasks, threads, [&](std::size_t task) {
    std::vector<std::uint64_t> scratch;
    const auto [begin, end] = chunk_range(groups.users(), n_tasks, task);
    for (std::size_t u = begin; u < end; ++u)
      homes[u] = inference_detail::infer_user(table, groups.events_of(u), window, n_days, scratch);
  });
  return homes;
}

/// String-keyed assignments sorted by user_id.
inline std::vector<HomeAssignment> to_assignments(const EventTable& table,
                                                  std::span<const CompactHome> homes) {
  std::vector<HomeAssignment> out;
  out.reserve(homes.size());
  for (std::size_t u = 0; u < homes.size(); ++u) {
    const auto& h = homes[u];
    HomeAssignment a{table.users()[u], UnknownHome{h.reason}, h.mode_count, h.total};
    if (h.is_resident()) a.status = Resident{table.regions()[h.region]};
    out.push_back(std::move(a));
  }
  std::sort(out.begin(), out.end(),
            [](const HomeAssignment& a, const HomeAssignment& b) { return a.user_id < b.user_id; });
  return out;
}

/// Maps string-keyed assignments onto table user ids; users without an
/// assignment stay unknown.
inline std::vector<CompactHome> to_compact(EventTable& table, std::span<const HomeAssignment> homes) {
  std::vector<CompactHome> out(table.users().size());
  for (const auto& a : homes) {
    const auto* u = table.find_user(a.user_id);
    if (!u) continue;
    CompactHome h;
    h.mode_count = a.mode_count;
    h.total = a.total_observations;
    if (const auto* r = a.home())
      h.region = table.intern_region(*r);
    else
      h.reason = std::get<UnknownHome>(a.status).reason;
    out[*u] = h;
  }
  return out;
}

inline constexpr std::string_view kHomesHeader =
    "user_id,status,region_code,mode_count,total_observations,reason";

inline void write_homes(std::ostream& out, std::span<const HomeAssignment> homes) {
  out << kHomesHeader << '\n';
  for (const auto& h : homes) {
    out << csv::escape(h.user_id) << ',';
    if (const auto* r = h.home())
      out << "resident," << r->str() << ',' << h.mode_count << ',' << h.total_observations << ",\n";
    else
      out << "unknown,," << h.mode_count << ',' << h.total_observations << ','
          << to_string(std::get<UnknownHome>(h.status).reason) << '\n';
  }
}

inline std::vector<HomeAssignment> read_homes(std::istream& in) {
  std::vector<HomeAssignment> out;
  std::size_t line = 1;
  for (auto& row : csv::read_table(in, kHomesHeader)) {
    ++line;
    const auto where = "homes line " + std::to_string(line) + ": ";
    const auto mode = csv::parse_int<std::int64_t>(row[3]);
    const auto total = csv::parse_int<std::int64_t>(row[4]);
    if (!mode || !total) throw Error(ErrorCode::ParseError, where + "bad counts");
    HomeAssignment a{row[0], UnknownHome{UnknownReason::InsufficientHistory}, *mode, *total};
    if (row[1] == "resident") {
      a.status = Resident{RegionCode::make(row[2])};
    } else if (row[1] == "unknown") {
      if (row[5] == "tied_mode")
        a.status = UnknownHome{UnknownReason::TiedMode};
      else if (row[5] != "insufficient_history" && !row[5].empty())
        throw Error(ErrorCode::ParseError, where + "unknown reason '" + row[5] + "'");
    } else {
      throw Error(ErrorCode::ParseError, where + "status must be resident or unknown");
    }
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace popstock
