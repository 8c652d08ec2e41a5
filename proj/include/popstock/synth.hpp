#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "popstock/date.hpp"
#include "popstock/error.hpp"
#include "popstock/ingest.hpp"
#include "popstock/inference.hpp"
#include "popstock/parallel.hpp"
#include "popstock/regions.hpp"
#include "popstock/stocks.hpp"

namespace popstock::synth {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: the stream is a pure function of
/// (seed, stream_a, stream_b), so draws for one (user, day) never depend on
/// generation order.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream_a, std::uint64_t stream_b)
      : key_(mix64(mix64(mix64(seed) ^ stream_a) ^ (stream_b + 0x632be59bd9b4e019ULL))) {}

  std::uint64_t next() noexcept { return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), n > 0.
  std::uint64_t below(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

struct SpecialEvent {
  Date date;
  RegionCode region;
  double visitor_multiplier = 1.0;
};

struct SynthConfig {
  std::uint64_t seed = 1;
  RegionSet regions;
  std::size_t n_users = 100;
  StudyWindow window;
  double home_share = 0.8;
  /// Integer part is emitted every day, the fractional part as a Bernoulli
  /// extra event.
  double events_per_user_per_day = 1.0;
  /// Probability that a user's away events on a day all go to one trip
  /// destination; otherwise each away event picks its own non-home region.
  double day_trip_probability = 1.0;
  std::vector<SpecialEvent> special_events;
  unsigned threads = 1;
};

/// user_id -> true home region.
using GroundTruth = std::map<std::string, RegionCode>;

struct World {
  std::vector<ResolvedEvent> events;
  GroundTruth truth;
};

inline void validate(const SynthConfig& cfg) {
  const auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidConfig, why); };
  if (cfg.regions.empty()) fail("no regions");
  if (!(cfg.home_share > 0 && cfg.home_share <= 1)) fail("home_share must be in (0,1]");
  if (cfg.home_share < 1 && cfg.regions.size() < 2) fail("travel needs at least two regions");
  if (!(cfg.events_per_user_per_day >= 0) || !std::isfinite(cfg.events_per_user_per_day))
    fail("events_per_user_per_day must be a non-negative finite rate");
  if (!(cfg.day_trip_probability >= 0 && cfg.day_trip_probability <= 1))
    fail("day_trip_probability must be in [0,1]");
  for (const auto& s : cfg.special_events) {
    if (!(s.visitor_multiplier >= 1) || !std::isfinite(s.visitor_multiplier))
      fail("visitor_multiplier must be >= 1");
    if (!cfg.regions.find(s.region)) fail("special event region " + s.region.str() + " not in region set");
    if (!cfg.window.contains(s.date)) fail("special event date " + s.date.iso() + " outside window");
    if (cfg.window.days() < 4) fail("special events need a window of at least 4 days");
    if (cfg.regions.size() < 2) fail("special events need at least two regions");
  }
}

inline std::string user_name(std::size_t u) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "u%07zu", u);
  return buf;
}

namespace detail {

enum : std::uint64_t { kHomeStream = 0x484f4d45, kVisitorStream = 0x56495349 };

/// Uniform region index other than `home`.
inline std::size_t other_region(CounterRng& rng, std::size_t n_regions, std::size_t home) {
  const auto i = static_cast<std::size_t>(rng.below(n_regions - 1));
  return i >= home ? i + 1 : i;
}

inline std::size_t home_of(const SynthConfig& cfg, std::size_t u) {
  CounterRng rng(cfg.seed, kHomeStream, u);
  return static_cast<std::size_t>(rng.below(cfg.regions.size()));
}

/// Background events for one user, in day order.
inline void user_events(const SynthConfig& cfg, std::size_t u, std::vector<ResolvedEvent>& out) {
  const auto n_regions = cfg.regions.size();
  const auto home = home_of(cfg, u);
  const auto id = user_name(u);
  const double whole = std::floor(cfg.events_per_user_per_day);
  const double frac = cfg.events_per_user_per_day - whole;
  for (std::int32_t d = 0; d < cfg.window.days(); ++d) {
    CounterRng rng(cfg.seed, u, static_cast<std::uint64_t>(d));
    auto count = static_cast<std::int64_t>(whole);
    if (rng.uniform() < frac) ++count;
    const bool trip = rng.uniform() < cfg.day_trip_probability;
    const std::size_t dest = n_regions > 1 ? other_region(rng, n_regions, home) : home;
    const Date date = cfg.window.start + d;
    for (std::int64_t k = 0; k < count; ++k) {
      std::size_t region = home;
      if (rng.uniform() >= cfg.home_share) region = trip ? dest : other_region(rng, n_regions, home);
      const UnixSeconds ts = static_cast<UnixSeconds>(date.days()) * 86400 +
                             static_cast<UnixSeconds>(rng.below(86400));
      out.push_back({id, cfg.regions[region].code, date, ts});
    }
  }
}

}  // namespace detail

/// Deterministic synthetic world. Every user gets a uniformly drawn home;
/// each event lands at home with probability home_share, elsewhere per the
/// travel model. A special event (d, R, m) adds round((m - 1) * B) visitor
/// users, where B is the mean daily count of distinct background users from
/// other regions active in R over the window's other days. Each visitor has
/// three events at its own home on other days and one in R on d, so it
/// classifies as a non-resident of R.
inline World generate_world(const SynthConfig& cfg) {
  validate(cfg);
  std::vector<std::vector<ResolvedEvent>> per_user(cfg.n_users);
  parallel_for(cfg.n_users, cfg.threads, [&](std::size_t u) { detail::user_events(cfg, u, per_user[u]); });

  World w;
  std::size_t total = 0;
  for (const auto& v : per_user) total += v.size();
  w.events.reserve(total);
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    w.truth.emplace(user_name(u), cfg.regions[detail::home_of(cfg, u)].code);
    for (auto& e : per_user[u]) w.events.push_back(std::move(e));
  }

  for (std::size_t s = 0; s < cfg.special_events.size(); ++s) {
    const auto& special = cfg.special_events[s];
    std::map<Date, std::set<std::string>> visitors_by_day;
    for (const auto& e : w.events)
      if (e.region == special.region && e.user_id[0] == 'u' && w.truth.at(e.user_id) != special.region)
        visitors_by_day[e.local_date].insert(e.user_id);
    double sum = 0;
    for (Date d = cfg.window.start; d <= cfg.window.end; ++d)
      if (d != special.date) sum += static_cast<double>(visitors_by_day[d].size());
    const double baseline = sum / static_cast<double>(cfg.window.days() - 1);
    const auto n_visitors = static_cast<std::size_t>(std::llround((special.visitor_multiplier - 1) * baseline));

    const auto region_idx = *cfg.regions.index_of(special.region);
    for (std::size_t k = 0; k < n_visitors; ++k) {
      CounterRng rng(cfg.seed, detail::kVisitorStream + s, k);
      char buf[48];
      std::snprintf(buf, sizeof buf, "v%02zu_%07zu", s, k);
      const std::string id = buf;
      const auto home = detail::other_region(rng, cfg.regions.size(), region_idx);
      std::set<std::int32_t> days;
      while (days.size() < 3) {
        const auto d = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(cfg.window.days())));
        if (cfg.window.start + d != special.date) days.insert(d);
      }
      for (auto d : days) {
        const Date date = cfg.window.start + d;
        w.events.push_back({id, cfg.regions[home].code, date,
                            static_cast<UnixSeconds>(date.days()) * 86400 +
                                static_cast<UnixSeconds>(rng.below(86400))});
      }
      w.events.push_back({id, special.region, special.date,
                          static_cast<UnixSeconds>(special.date.days()) * 86400 +
                              static_cast<UnixSeconds>(rng.below(86400))});
      w.truth.emplace(id, cfg.regions[home].code);
    }
  }
  return w;
}

/// `rows x cols` unit squares starting at (lon0, lat0), codes 45001, 45003, ...
inline RegionSet grid_regions(std::size_t rows, std::size_t cols, double lon0 = -83.0,
                              double lat0 = 32.0, double cell = 0.5) {
  std::vector<Region> regions;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      char code[8];
      std::snprintf(code, sizeof code, "%05zu", 45001 + 2 * (r * cols + c));
      regions.push_back(square_region(code, lon0 + static_cast<double>(c) * cell,
                                      lat0 + static_cast<double>(r) * cell, cell));
      regions.back().name = std::string("Cell ") + code;
    }
  return RegionSet(std::move(regions));
}

/// Deterministic point strictly inside `region`, by rejection sampling
/// over its bounding box.
inline LonLat sample_point(const RegionSet& set, std::size_t region, CounterRng& rng) {
  BoundingBox box{1e9, 1e9, -1e9, -1e9};
  for (const auto& poly : set[region].polygons) {
    const auto b = ring_bounds(poly.rings.front());
    box = {std::min(box.min_lon, b.min_lon), std::min(box.min_lat, b.min_lat),
           std::max(box.max_lon, b.max_lon), std::max(box.max_lat, b.max_lat)};
  }
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const LonLat p{box.min_lon + rng.uniform() * (box.max_lon - box.min_lon),
                   box.min_lat + rng.uniform() * (box.max_lat - box.min_lat)};
    if (set.locate_index(p.lon, p.lat) == region) return p;
  }
  throw Error(ErrorCode::InvalidConfig, "cannot sample a point inside " + set[region].code.str());
}

/// Turns resolved synthetic events into raw point-tagged events that
/// resolve back to the same region and date (at UTC offset 0).
inline std::vector<GeoEvent> realize_geo_events(std::span<const ResolvedEvent> events,
                                                const RegionSet& set, std::uint64_t seed) {
  std::vector<GeoEvent> out;
  out.reserve(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    CounterRng rng(seed, 0x504f494e54ULL, i);
    const auto region = set.index_of(e.region);
    if (!region) throw Error(ErrorCode::InvalidConfig, "event region not in region set");
    const auto p = sample_point(set, *region, rng);
    char id[32];
    std::snprintf(id, sizeof id, "e%09zu", i);
    out.push_back({id, e.user_id, e.timestamp, PointTag{p.lon, p.lat}});
  }
  return out;
}

inline void write_truth(std::ostream& out, const GroundTruth& truth) {
  out << "user_id,region_code\n";
  for (const auto& [user, region] : truth) out << user << ',' << region.str() << '\n';
}

/// Reference classifier for one (region, date): nested scans over the raw
/// events with ordered maps, no interning, indexing or sharding.
inline DailyStock oracle_classify(std::span<const ResolvedEvent> events, const StudyWindow& window,
                                  const RegionCode& region, Date date) {
  std::set<std::string> actives;
  for (const auto& e : events)
    if (e.local_date == date && e.region == region) actives.insert(e.user_id);

  std::map<std::string, std::map<RegionCode, std::int64_t>> histograms;
  for (const auto& e : events)
    if (actives.count(e.user_id) && e.local_date >= window.start && e.local_date <= window.end)
      ++histograms[e.user_id][e.region];

  DailyStock s{date, region};
  for (const auto& user : actives) {
    const auto& h = histograms[user];
    std::int64_t total = 0, best = 0, ties = 0;
    const RegionCode* best_region = nullptr;
    for (const auto& [r, n] : h) {
      total += n;
      if (n > best) {
        best = n;
        best_region = &r;
        ties = 1;
      } else if (n == best) {
        ++ties;
      }
    }
    if (total < 2 || ties != 1)
      ++s.unknown;
    else if (*best_region == region)
      ++s.residents;
    else
      ++s.non_residents;
    ++s.total_active;
  }
  return s;
}

}  // namespace popstock::synth
