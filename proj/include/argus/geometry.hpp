#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <limits>
#include <string>
#include <variant>
#include <vector>

namespace argus {

/// Planimetric coordinate in CRS units, always (x, y) = (lon, lat) or (E, N).
using Coord = Eigen::Vector2d;
using Ring = std::vector<Coord>;

struct Point {
  Coord at;
  bool operator==(const Point&) const = default;
};

struct MultiPoint {
  std::vector<Coord> points;
  bool operator==(const MultiPoint&) const = default;
};

struct LineString {
  std::vector<Coord> vertices;
  bool operator==(const LineString&) const = default;
};

/// First ring is the exterior, the rest are holes.
struct Polygon {
  std::vector<Ring> rings;
  bool operator==(const Polygon&) const = default;
};

struct MultiPolygon {
  std::vector<Polygon> polygons;
  bool operator==(const MultiPolygon&) const = default;
};

enum class GeometryKind { point, multipoint, linestring, polygon, multipolygon };

const char* to_string(GeometryKind kind) noexcept;

/// Axis-aligned bounding box. Empty when min > max.
struct Envelope {
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = std::numeric_limits<double>::infinity();
  double max_x = -std::numeric_limits<double>::infinity();
  double max_y = -std::numeric_limits<double>::infinity();

  bool empty() const noexcept { return min_x > max_x || min_y > max_y; }
  void expand(const Coord& c) noexcept;
  void expand(const Envelope& other) noexcept;
  bool contains(const Coord& c) const noexcept;
  double width() const noexcept { return max_x - min_x; }
  double height() const noexcept { return max_y - min_y; }
  bool operator==(const Envelope&) const = default;
};

class Geometry {
 public:
  using Variant = std::variant<Point, MultiPoint, LineString, Polygon, MultiPolygon>;

  Geometry() : value_(Point{Coord::Zero()}) {}
  Geometry(Point g) : value_(std::move(g)) {}
  Geometry(MultiPoint g) : value_(std::move(g)) {}
  Geometry(LineString g) : value_(std::move(g)) {}
  Geometry(Polygon g) : value_(std::move(g)) {}
  Geometry(MultiPolygon g) : value_(std::move(g)) {}

  static Geometry point(double x, double y) { return Point{Coord(x, y)}; }

  GeometryKind kind() const noexcept { return static_cast<GeometryKind>(value_.index()); }
  const Variant& value() const noexcept { return value_; }

  template <typename T>
  const T& as() const {
    return std::get<T>(value_);
  }

  /// Visits every vertex in storage order.
  template <typename F>
  void for_each_vertex(F&& f) const;

  /// Returns a copy with every vertex replaced by f(vertex, index).
  template <typename F>
  Geometry map_vertices(F&& f) const;

  std::size_t vertex_count() const;
  Envelope envelope() const;
  bool empty() const { return vertex_count() == 0; }

  bool operator==(const Geometry&) const = default;

 private:
  Variant value_;
};

/// Invariant violations as "<rule>@<location>" strings; empty iff valid.
std::vector<std::string> validate_geometry(const Geometry& g);

/// Even-odd point-in-polygon; vertices on the boundary count as inside.
bool contains(const Geometry& area, const Coord& p);

/// Planar signed area of a ring (positive when counter-clockwise).
double signed_area(const Ring& ring);

/// Planar area of a polygon or multipolygon, holes subtracted.
double area(const Geometry& g);

std::string to_wkt(const Geometry& g);

// ---------------------------------------------------------------------------

template <typename F>
void Geometry::for_each_vertex(F&& f) const {
  std::visit(
      [&](const auto& g) {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, Point>) {
          f(g.at);
        } else if constexpr (std::is_same_v<T, MultiPoint>) {
          for (const auto& c : g.points) f(c);
        } else if constexpr (std::is_same_v<T, LineString>) {
          for (const auto& c : g.vertices) f(c);
        } else if constexpr (std::is_same_v<T, Polygon>) {
          for (const auto& r : g.rings)
            for (const auto& c : r) f(c);
        } else {
          for (const auto& p : g.polygons)
            for (const auto& r : p.rings)
              for (const auto& c : r) f(c);
        }
      },
      value_);
}

template <typename F>
Geometry Geometry::map_vertices(F&& f) const {
  std::size_t index = 0;
  auto map = [&](const Coord& c) -> Coord { return f(c, index++); };
  auto map_ring = [&](const Ring& r) {
    Ring out;
    out.reserve(r.size());
    for (const auto& c : r) out.push_back(map(c));
    return out;
  };
  auto map_polygon = [&](const Polygon& p) {
    Polygon out;
    for (const auto& r : p.rings) out.rings.push_back(map_ring(r));
    return out;
  };
  return std::visit(
      [&](const auto& g) -> Geometry {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, Point>) {
          return Point{map(g.at)};
        } else if constexpr (std::is_same_v<T, MultiPoint>) {
          return MultiPoint{map_ring(g.points)};
        } else if constexpr (std::is_same_v<T, LineString>) {
          return LineString{map_ring(g.vertices)};
        } else if constexpr (std::is_same_v<T, Polygon>) {
          return map_polygon(g);
        } else {
          MultiPolygon out;
          for (const auto& p : g.polygons) out.polygons.push_back(map_polygon(p));
          return out;
        }
      },
      value_);
}

}  // namespace argus
