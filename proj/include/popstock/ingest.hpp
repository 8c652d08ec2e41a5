#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "popstock/csv.hpp"
#include "popstock/date.hpp"
#include "popstock/error.hpp"
#include "popstock/regions.hpp"

namespace popstock {

inline constexpr std::string_view kEventsHeader = "event_id,user_id,timestamp_utc,lon,lat,place_id";
inline constexpr std::string_view kPlacesHeader = "place_id,region_code,precision";

struct PointTag {
  double lon = 0;
  double lat = 0;
};

struct PlaceTag {
  std::string place_id;
};

using Geotag = std::variant<PointTag, PlaceTag>;

struct GeoEvent {
  std::string event_id;
  std::string user_id;
  UnixSeconds timestamp = 0;
  Geotag geotag;
};

enum class RecordErrorKind { MissingField, BadTimestamp, BadCoordinate, BothGeotagsPresent, NoGeotag };

constexpr std::string_view to_string(RecordErrorKind k) noexcept {
  switch (k) {
    case RecordErrorKind::MissingField: return "MissingField";
    case RecordErrorKind::BadTimestamp: return "BadTimestamp";
    case RecordErrorKind::BadCoordinate: return "BadCoordinate";
    case RecordErrorKind::BothGeotagsPresent: return "BothGeotagsPresent";
    case RecordErrorKind::NoGeotag: return "NoGeotag";
  }
  return "Unknown";
}

struct RecordError {
  RecordErrorKind kind;
  std::size_t line = 0;
  std::string detail;
};

using ParsedRecord = std::variant<GeoEvent, RecordError>;

/// Parses one data row of the events file. `line` is the 1-based line
/// number used in errors.
inline ParsedRecord parse_event_row(std::string_view row, std::size_t line) {
  const auto f = csv::split(row);
  const auto err = [&](RecordErrorKind k, std::string detail) -> ParsedRecord {
    return RecordError{k, line, std::move(detail)};
  };
  if (f.size() != 6) return err(RecordErrorKind::MissingField, "expected 6 fields, got " + std::to_string(f.size()));
  if (f[0].empty()) return err(RecordErrorKind::MissingField, "event_id");
  if (f[1].empty()) return err(RecordErrorKind::MissingField, "user_id");
  if (f[2].empty()) return err(RecordErrorKind::MissingField, "timestamp_utc");
  const auto ts = parse_utc_timestamp(f[2]);
  if (!ts) return err(RecordErrorKind::BadTimestamp, f[2]);

  const bool has_lon = !f[3].empty(), has_lat = !f[4].empty(), has_place = !f[5].empty();
  if ((has_lon || has_lat) && has_place) return err(RecordErrorKind::BothGeotagsPresent, "");
  if (has_lon != has_lat) return err(RecordErrorKind::MissingField, has_lon ? "lat" : "lon");

  GeoEvent e{f[0], f[1], *ts, PointTag{}};
  if (has_place) {
    e.geotag = PlaceTag{f[5]};
  } else if (has_lon) {
    const auto lon = csv::parse_double(f[3]);
    const auto lat = csv::parse_double(f[4]);
    if (!lon || !lat || *lon < -180 || *lon > 180 || *lat < -90 || *lat > 90)
      return err(RecordErrorKind::BadCoordinate, f[3] + "," + f[4]);
    e.geotag = PointTag{*lon, *lat};
  } else {
    return err(RecordErrorKind::NoGeotag, "");
  }
  return e;
}

/// Streams the events file, handing each record to `sink` in input order.
/// Only a bad header aborts; blank lines are skipped.
template <typename Sink>
void for_each_event(std::istream& in, Sink&& sink) {
  csv::expect_header(in, kEventsHeader);
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    sink(parse_event_row(line, line_no));
  }
}

inline std::vector<ParsedRecord> parse_events(std::istream& in) {
  std::vector<ParsedRecord> out;
  for_each_event(in, [&](ParsedRecord r) { out.push_back(std::move(r)); });
  return out;
}

inline void write_event_row(std::ostream& out, const GeoEvent& e) {
  out << csv::escape(e.event_id) << ',' << csv::escape(e.user_id) << ','
      << format_utc_timestamp(e.timestamp) << ',';
  if (const auto* p = std::get_if<PointTag>(&e.geotag))
    out << csv::format_double(p->lon) << ',' << csv::format_double(p->lat) << ",\n";
  else
    out << ",," << csv::escape(std::get<PlaceTag>(e.geotag).place_id) << '\n';
}

enum class PlacePrecision { Point, City, County, State, Country };

inline std::optional<PlacePrecision> parse_precision(std::string_view s) {
  if (s == "point") return PlacePrecision::Point;
  if (s == "city") return PlacePrecision::City;
  if (s == "county") return PlacePrecision::County;
  if (s == "state") return PlacePrecision::State;
  if (s == "country") return PlacePrecision::Country;
  return std::nullopt;
}

/// State and country precision places cannot be attributed to a county.
constexpr bool resolvable_to_county(PlacePrecision p) noexcept {
  return p == PlacePrecision::Point || p == PlacePrecision::City || p == PlacePrecision::County;
}

struct PlaceEntry {
  RegionCode region;
  PlacePrecision precision;
};

class PlaceRegistry {
 public:
  /// Throws DuplicateCode on a repeated place_id.
  void add(std::string place_id, PlaceEntry entry) {
    auto [it, inserted] = entries_.emplace(std::move(place_id), std::move(entry));
    if (!inserted) throw Error(ErrorCode::DuplicateCode, "duplicate place_id '" + it->first + "'");
  }

  const PlaceEntry* find(std::string_view place_id) const {
    auto it = entries_.find(place_id);
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::map<std::string, PlaceEntry, std::less<>> entries_;
};

inline PlaceRegistry load_places(std::istream& in) {
  PlaceRegistry reg;
  std::size_t line = 1;
  for (auto& row : csv::read_table(in, kPlacesHeader)) {
    ++line;
    const auto precision = parse_precision(row[2]);
    if (!precision)
      throw Error(ErrorCode::UnknownPrecision, "places row " + std::to_string(line) + ": unknown precision '" + row[2] + "'");
    reg.add(std::move(row[0]), PlaceEntry{RegionCode::make(row[1]), *precision});
  }
  return reg;
}

struct ResolvedEvent {
  std::string user_id;
  RegionCode region;
  Date local_date;
  UnixSeconds timestamp = 0;

  bool operator==(const ResolvedEvent&) const = default;
};

enum class UnresolvableReason { NoContainingRegion, UnknownPlace, CoarsePlace };

constexpr std::string_view to_string(UnresolvableReason r) noexcept {
  switch (r) {
    case UnresolvableReason::NoContainingRegion: return "NoContainingRegion";
    case UnresolvableReason::UnknownPlace: return "UnknownPlace";
    case UnresolvableReason::CoarsePlace: return "CoarsePlace";
  }
  return "Unknown";
}

struct Unresolvable {
  UnresolvableReason reason;
};

using Resolution = std::variant<ResolvedEvent, Unresolvable>;

inline Resolution resolve_event(const GeoEvent& e, const RegionSet& set, const PlaceRegistry& reg,
                                int utc_offset_minutes) {
  std::optional<RegionCode> region;
  if (const auto* p = std::get_if<PointTag>(&e.geotag)) {
    try {
      region = locate_point(set, p->lon, p->lat);
    } catch (const Error&) {
      return Unresolvable{UnresolvableReason::NoContainingRegion};
    }
    if (!region) return Unresolvable{UnresolvableReason::NoContainingRegion};
  } else {
    const auto* entry = reg.find(std::get<PlaceTag>(e.geotag).place_id);
    if (!entry) return Unresolvable{UnresolvableReason::UnknownPlace};
    if (!resolvable_to_county(entry->precision)) return Unresolvable{UnresolvableReason::CoarsePlace};
    region = entry->region;
  }
  return ResolvedEvent{e.user_id, std::move(*region), local_date(e.timestamp, utc_offset_minutes),
                       e.timestamp};
}

/// Tally of an ingest pass; record_errors + unresolvable + resolved equals
/// the number of data lines read.
struct IngestStats {
  std::size_t resolved = 0;
  std::size_t unresolvable = 0;
  std::size_t record_errors = 0;
  std::map<std::string, std::size_t> by_reason;

  std::size_t total() const noexcept { return resolved + unresolvable + record_errors; }
};

}  // namespace popstock
