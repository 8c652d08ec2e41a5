#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>
#include <nlohmann/json.hpp>

#include "popstock/error.hpp"

namespace popstock {

/// Five-digit US county FIPS code ("45079") or ISO 3166-1 alpha-2 country
/// code ("FR").
class RegionCode {
 public:
  RegionCode() = default;

  static bool is_valid(std::string_view s) noexcept {
    if (s.size() == 5) return std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
    if (s.size() == 2) return std::all_of(s.begin(), s.end(), [](char c) { return c >= 'A' && c <= 'Z'; });
    return false;
  }

  static std::optional<RegionCode> parse(std::string_view s) {
    if (!is_valid(s)) return std::nullopt;
    return RegionCode(std::string(s));
  }

  /// Throws InvalidRegionCode.
  static RegionCode make(std::string_view s) {
    if (!is_valid(s))
      throw Error(ErrorCode::InvalidRegionCode, "invalid region code '" + std::string(s) + "'");
    return RegionCode(std::string(s));
  }

  const std::string& str() const noexcept { return value_; }
  bool is_county() const noexcept { return value_.size() == 5; }

  auto operator<=>(const RegionCode&) const = default;

 private:
  explicit RegionCode(std::string v) : value_(std::move(v)) {}
  std::string value_;
};

struct LonLat {
  double lon = 0;
  double lat = 0;
};

/// Closed ring: first vertex repeated as the last.
using Ring = std::vector<LonLat>;

/// Outer ring followed by holes; containment is even-odd over all rings.
struct Polygon {
  std::vector<Ring> rings;
};

struct BoundingBox {
  double min_lon = 0, min_lat = 0, max_lon = 0, max_lat = 0;

  bool contains(LonLat p) const noexcept {
    return p.lon >= min_lon && p.lon <= max_lon && p.lat >= min_lat && p.lat <= max_lat;
  }
};

inline BoundingBox ring_bounds(const Ring& ring) {
  BoundingBox b{ring.front().lon, ring.front().lat, ring.front().lon, ring.front().lat};
  for (const auto& p : ring) {
    b.min_lon = std::min(b.min_lon, p.lon);
    b.max_lon = std::max(b.max_lon, p.lon);
    b.min_lat = std::min(b.min_lat, p.lat);
    b.max_lat = std::max(b.max_lat, p.lat);
  }
  return b;
}

struct Region {
  RegionCode code;
  std::string name;
  std::vector<Polygon> polygons;
  std::optional<std::string> group;
};

namespace geometry_detail {

inline double cross(LonLat o, LonLat a, LonLat b) noexcept {
  return (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon);
}

inline bool on_segment(LonLat p, LonLat a, LonLat b) noexcept {
  if (cross(a, b, p) != 0.0) return false;
  return p.lon >= std::min(a.lon, b.lon) && p.lon <= std::max(a.lon, b.lon) &&
         p.lat >= std::min(a.lat, b.lat) && p.lat <= std::max(a.lat, b.lat);
}

inline int sign(double v) noexcept { return (v > 0) - (v < 0); }

inline bool segments_intersect(LonLat p1, LonLat p2, LonLat q1, LonLat q2) noexcept {
  const int d1 = sign(cross(q1, q2, p1)), d2 = sign(cross(q1, q2, p2));
  const int d3 = sign(cross(p1, p2, q1)), d4 = sign(cross(p1, p2, q2));
  if (d1 * d2 < 0 && d3 * d4 < 0) return true;
  return (d1 == 0 && on_segment(p1, q1, q2)) || (d2 == 0 && on_segment(p2, q1, q2)) ||
         (d3 == 0 && on_segment(q1, p1, p2)) || (d4 == 0 && on_segment(q2, p1, p2));
}

/// Quadratic scan over non-adjacent edge pairs. Consecutive duplicate
/// vertices are ignored.
inline bool ring_self_intersects(const Ring& ring) {
  std::vector<LonLat> v;
  v.reserve(ring.size());
  for (const auto& p : ring)
    if (v.empty() || p.lon != v.back().lon || p.lat != v.back().lat) v.push_back(p);
  const std::size_t n = v.size() - 1;  // edges; v.back() == v.front()
  if (n < 3) return true;
  for (std::size_t i = 0; i < n; ++i) {
    const auto bi = ring_bounds(Ring{v[i], v[i + 1]});
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;
      if (v[j].lon < bi.min_lon && v[j + 1].lon < bi.min_lon) continue;
      if (v[j].lon > bi.max_lon && v[j + 1].lon > bi.max_lon) continue;
      if (v[j].lat < bi.min_lat && v[j + 1].lat < bi.min_lat) continue;
      if (v[j].lat > bi.max_lat && v[j + 1].lat > bi.max_lat) continue;
      if (segments_intersect(v[i], v[i + 1], v[j], v[j + 1])) return true;
    }
  }
  return false;
}

}  // namespace geometry_detail

/// Even-odd containment over every ring of the region; points on any edge
/// count as contained.
inline bool region_contains(const Region& region, LonLat p) {
  bool inside = false;
  for (const auto& poly : region.polygons) {
    for (const auto& ring : poly.rings) {
      for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
        const LonLat a = ring[i], b = ring[j];
        if (geometry_detail::on_segment(p, a, b)) return true;
        if ((a.lat > p.lat) != (b.lat > p.lat) &&
            p.lon < (b.lon - a.lon) * (p.lat - a.lat) / (b.lat - a.lat) + a.lon)
          inside = !inside;
      }
    }
  }
  return inside;
}

inline void check_coordinate(double lon, double lat) {
  if (!(lon >= -180.0 && lon <= 180.0) || !(lat >= -90.0 && lat <= 90.0))
    throw Error(ErrorCode::CoordinateOutOfRange,
                "coordinate out of range: lon=" + std::to_string(lon) + " lat=" + std::to_string(lat));
}

/// Immutable collection of regions with a packed R-tree over ring bounding
/// boxes. Regions are held sorted by code, so a smaller index means a
/// lexicographically smaller code.
class RegionSet {
 public:
  RegionSet() = default;

  explicit RegionSet(std::vector<Region> regions) : regions_(std::move(regions)) {
    std::sort(regions_.begin(), regions_.end(),
              [](const Region& a, const Region& b) { return a.code < b.code; });
    for (std::size_t i = 1; i < regions_.size(); ++i)
      if (regions_[i].code == regions_[i - 1].code)
        throw Error(ErrorCode::DuplicateCode, "duplicate region code '" + regions_[i].code.str() + "'");

    std::map<std::string, std::size_t> group_sizes;
    for (const auto& r : regions_) {
      validate_geometry(r);
      if (r.group) ++group_sizes[*r.group];
    }
    for (const auto& [group, n] : group_sizes)
      if (n < 2)
        throw Error(ErrorCode::InvalidGroup, "group '" + group + "' has a single member");

    std::vector<IndexValue> entries;
    for (std::size_t i = 0; i < regions_.size(); ++i)
      for (const auto& poly : regions_[i].polygons)
        for (const auto& ring : poly.rings) {
          const auto b = ring_bounds(ring);
          entries.emplace_back(Box(BPoint(b.min_lon, b.min_lat), BPoint(b.max_lon, b.max_lat)),
                               static_cast<std::uint32_t>(i));
        }
    index_ = Tree(entries.begin(), entries.end());
  }

  std::size_t size() const noexcept { return regions_.size(); }
  bool empty() const noexcept { return regions_.empty(); }
  const std::vector<Region>& regions() const noexcept { return regions_; }
  const Region& operator[](std::size_t i) const { return regions_[i]; }

  /// Number of ring bounding boxes in the spatial index.
  std::size_t index_entries() const noexcept { return index_.size(); }

  std::optional<std::size_t> index_of(const RegionCode& code) const {
    auto it = std::lower_bound(regions_.begin(), regions_.end(), code,
                               [](const Region& r, const RegionCode& c) { return r.code < c; });
    if (it == regions_.end() || it->code != code) return std::nullopt;
    return static_cast<std::size_t>(it - regions_.begin());
  }

  const Region* find(const RegionCode& code) const {
    auto i = index_of(code);
    return i ? &regions_[*i] : nullptr;
  }

  /// Distinct regions whose ring bounding boxes contain the point, ascending.
  std::vector<std::size_t> candidates(double lon, double lat) const {
    std::vector<IndexValue> hits;
    index_.query(boost::geometry::index::intersects(BPoint(lon, lat)), std::back_inserter(hits));
    std::vector<std::size_t> out;
    out.reserve(hits.size());
    for (const auto& h : hits) out.push_back(h.second);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  /// Index of the containing region with the smallest code. Throws
  /// CoordinateOutOfRange.
  std::optional<std::size_t> locate_index(double lon, double lat) const {
    check_coordinate(lon, lat);
    for (std::size_t i : candidates(lon, lat))
      if (region_contains(regions_[i], {lon, lat})) return i;
    return std::nullopt;
  }

  /// Region code -> equivalence group, for grouped regions only.
  std::map<RegionCode, std::string> groups() const {
    std::map<RegionCode, std::string> out;
    for (const auto& r : regions_)
      if (r.group) out.emplace(r.code, *r.group);
    return out;
  }

 private:
  using BPoint = boost::geometry::model::point<double, 2, boost::geometry::cs::cartesian>;
  using Box = boost::geometry::model::box<BPoint>;
  using IndexValue = std::pair<Box, std::uint32_t>;
  using Tree = boost::geometry::index::rtree<IndexValue, boost::geometry::index::quadratic<16>>;

  static void validate_geometry(const Region& r) {
    const auto fail = [&](const std::string& why) {
      throw Error(ErrorCode::MalformedGeometry, "region '" + r.code.str() + "': " + why);
    };
    if (r.polygons.empty()) fail("no polygons");
    for (const auto& poly : r.polygons) {
      if (poly.rings.empty()) fail("polygon without rings");
      for (const auto& ring : poly.rings) {
        if (ring.size() < 4) fail("ring has fewer than 4 vertices");
        if (ring.front().lon != ring.back().lon || ring.front().lat != ring.back().lat)
          fail("ring not closed");
        for (const auto& p : ring)
          if (!(p.lon >= -180 && p.lon <= 180 && p.lat >= -90 && p.lat <= 90))
            fail("vertex outside lon/lat range");
        if (geometry_detail::ring_self_intersects(ring)) fail("ring self-intersects");
      }
    }
  }

  std::vector<Region> regions_;
  Tree index_;
};

inline std::optional<RegionCode> locate_point(const RegionSet& set, double lon, double lat) {
  auto i = set.locate_index(lon, lat);
  if (!i) return std::nullopt;
  return set[*i].code;
}

namespace geojson_detail {

inline Ring parse_ring(const nlohmann::json& j, const std::string& code) {
  if (!j.is_array())
    throw Error(ErrorCode::MalformedGeometry, "region '" + code + "': ring is not an array");
  Ring ring;
  ring.reserve(j.size());
  for (const auto& pos : j) {
    if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number())
      throw Error(ErrorCode::MalformedGeometry, "region '" + code + "': bad position");
    ring.push_back({pos[0].get<double>(), pos[1].get<double>()});
  }
  if (ring.size() < 4)
    throw Error(ErrorCode::MalformedGeometry, "region '" + code + "': ring has fewer than 4 vertices");
  return ring;
}

inline Polygon parse_polygon(const nlohmann::json& j, const std::string& code) {
  if (!j.is_array() || j.empty())
    throw Error(ErrorCode::MalformedGeometry, "region '" + code + "': polygon has no rings");
  Polygon poly;
  for (const auto& ring : j) poly.rings.push_back(parse_ring(ring, code));
  return poly;
}

}  // namespace geojson_detail

/// Parses a GeoJSON FeatureCollection. Each feature needs a string `code`
/// property and a Polygon or MultiPolygon geometry.
inline RegionSet load_regions(std::istream& in) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("boundary file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" ||
      !doc.contains("features") || !doc["features"].is_array())
    throw Error(ErrorCode::ParseError, "boundary file must be a FeatureCollection");

  std::vector<Region> regions;
  for (const auto& feature : doc["features"]) {
    const auto props = feature.contains("properties") && feature["properties"].is_object()
                           ? feature["properties"]
                           : nlohmann::json::object();
    if (!props.contains("code") || !props["code"].is_string())
      throw Error(ErrorCode::MissingCodeProperty, "feature without string 'code' property");
    const auto code_str = props["code"].get<std::string>();

    Region r;
    r.code = RegionCode::make(code_str);
    if (props.contains("name") && props["name"].is_string()) r.name = props["name"].get<std::string>();
    if (props.contains("group") && props["group"].is_string()) r.group = props["group"].get<std::string>();

    if (!feature.contains("geometry") || !feature["geometry"].is_object())
      throw Error(ErrorCode::MalformedGeometry, "region '" + code_str + "': missing geometry");
    const auto& geom = feature["geometry"];
    const auto type = geom.value("type", "");
    if (!geom.contains("coordinates"))
      throw Error(ErrorCode::MalformedGeometry, "region '" + code_str + "': missing coordinates");
    if (type == "Polygon") {
      r.polygons.push_back(geojson_detail::parse_polygon(geom["coordinates"], code_str));
    } else if (type == "MultiPolygon") {
      if (!geom["coordinates"].is_array() || geom["coordinates"].empty())
        throw Error(ErrorCode::MalformedGeometry, "region '" + code_str + "': empty MultiPolygon");
      for (const auto& p : geom["coordinates"])
        r.polygons.push_back(geojson_detail::parse_polygon(p, code_str));
    } else {
      throw Error(ErrorCode::MalformedGeometry,
                  "region '" + code_str + "': unsupported geometry type '" + type + "'");
    }
    regions.push_back(std::move(r));
  }
  return RegionSet(std::move(regions));
}

inline RegionSet load_regions_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open boundary file '" + path + "'");
  return load_regions(in);
}

/// Axis-aligned square region, handy for grids and fixtures.
inline Region square_region(std::string_view code, double lon0, double lat0, double size,
                            std::optional<std::string> group = std::nullopt) {
  Region r;
  r.code = RegionCode::make(code);
  r.group = std::move(group);
  r.polygons.push_back(Polygon{{Ring{{lon0, lat0},
                                     {lon0 + size, lat0},
                                     {lon0 + size, lat0 + size},
                                     {lon0, lat0 + size},
                                     {lon0, lat0}}}});
  return r;
}

inline nlohmann::json to_geojson(const RegionSet& set) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& r : set.regions()) {
    nlohmann::json props = {{"code", r.code.str()}};
    if (!r.name.empty()) props["name"] = r.name;
    if (r.group) props["group"] = *r.group;
    nlohmann::json polys = nlohmann::json::array();
    for (const auto& p : r.polygons) {
      nlohmann::json rings = nlohmann::json::array();
      for (const auto& ring : p.rings) {
        nlohmann::json pts = nlohmann::json::array();
        for (const auto& v : ring) pts.push_back({v.lon, v.lat});
        rings.push_back(std::move(pts));
      }
      polys.push_back(std::move(rings));
    }
    features.push_back({{"type", "Feature"},
                        {"properties", std::move(props)},
                        {"geometry", {{"type", "MultiPolygon"}, {"coordinates", std::move(polys)}}}});
  }
  return {{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

}  // namespace popstock

template <>
struct std::hash<popstock::RegionCode> {
  std::size_t operator()(const popstock::RegionCode& c) const noexcept {
    return std::hash<std::string>{}(c.str());
  }
};
