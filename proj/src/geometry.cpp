#include "argus/geometry.hpp"

#include "argus/text.hpp"

#include <cmath>

namespace argus {

const char* to_string(GeometryKind kind) noexcept {
  switch (kind) {
    case GeometryKind::point: return "point";
    case GeometryKind::multipoint: return "multipoint";
    case GeometryKind::linestring: return "linestring";
    case GeometryKind::polygon: return "polygon";
    case GeometryKind::multipolygon: return "multipolygon";
  }
  return "unknown";
}

void Envelope::expand(const Coord& c) noexcept {
  min_x = std::min(min_x, c.x());
  min_y = std::min(min_y, c.y());
  max_x = std::max(max_x, c.x());
  max_y = std::max(max_y, c.y());
}

void Envelope::expand(const Envelope& o) noexcept {
  if (o.empty()) return;
  min_x = std::min(min_x, o.min_x);
  min_y = std::min(min_y, o.min_y);
  max_x = std::max(max_x, o.max_x);
  max_y = std::max(max_y, o.max_y);
}

bool Envelope::contains(const Coord& c) const noexcept {
  return c.x() >= min_x && c.x() <= max_x && c.y() >= min_y && c.y() <= max_y;
}

std::size_t Geometry::vertex_count() const {
  std::size_t n = 0;
  for_each_vertex([&](const Coord&) { ++n; });
  return n;
}

Envelope Geometry::envelope() const {
  Envelope env;
  for_each_vertex([&](const Coord& c) { env.expand(c); });
  return env;
}

namespace {

void check_ring(const Ring& ring, const std::string& where, std::vector<std::string>& out) {
  if (ring.size() < 4) {
    out.push_back("ring_too_short@" + where);
    return;
  }
  if (ring.front() != ring.back()) out.push_back("ring_not_closed@" + where);
}

}  // namespace

std::vector<std::string> validate_geometry(const Geometry& g) {
  std::vector<std::string> out;
  std::size_t v = 0;
  g.for_each_vertex([&](const Coord& c) {
    if (!std::isfinite(c.x()) || !std::isfinite(c.y()))
      out.push_back("nonfinite_coordinate@v" + std::to_string(v));
    ++v;
  });
  switch (g.kind()) {
    case GeometryKind::linestring:
      if (g.as<LineString>().vertices.size() < 2)
        out.push_back("linestring_too_short@v" + std::to_string(g.as<LineString>().vertices.size()));
      break;
    case GeometryKind::polygon: {
      const auto& rings = g.as<Polygon>().rings;
      if (rings.empty()) out.push_back("polygon_empty@ring0");
      for (std::size_t r = 0; r < rings.size(); ++r)
        check_ring(rings[r], "ring" + std::to_string(r), out);
      break;
    }
    case GeometryKind::multipolygon: {
      const auto& polys = g.as<MultiPolygon>().polygons;
      if (polys.empty()) out.push_back("multipolygon_empty@poly0");
      for (std::size_t p = 0; p < polys.size(); ++p) {
        if (polys[p].rings.empty())
          out.push_back("polygon_empty@poly" + std::to_string(p) + ".ring0");
        for (std::size_t r = 0; r < polys[p].rings.size(); ++r)
          check_ring(polys[p].rings[r], "poly" + std::to_string(p) + ".ring" + std::to_string(r), out);
      }
      break;
    }
    default:
      break;
  }
  return out;
}

double signed_area(const Ring& ring) {
  double twice = 0.0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i)
    twice += ring[i].x() * ring[i + 1].y() - ring[i + 1].x() * ring[i].y();
  return 0.5 * twice;
}

namespace {

bool on_segment(const Coord& a, const Coord& b, const Coord& p) {
  const Coord ab = b - a;
  const Coord ap = p - a;
  if (ab.isZero(0.0)) return ap.isZero(0.0);
  const double cross = ab.x() * ap.y() - ab.y() * ap.x();
  const double scale = std::max({std::abs(ab.x()), std::abs(ab.y()), 1e-300});
  if (std::abs(cross) > 1e-12 * scale * scale) return false;
  const double dot = ab.dot(ap);
  return dot >= 0.0 && dot <= ab.squaredNorm();
}

// Returns +1 inside, 0 on boundary, -1 outside.
int ring_side(const Ring& ring, const Coord& p) {
  bool inside = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const Coord& a = ring[i];
    const Coord& b = ring[j];
    if (on_segment(a, b, p)) return 0;
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (p.x() < x) inside = !inside;
    }
  }
  return inside ? 1 : -1;
}

bool polygon_contains(const Polygon& poly, const Coord& p) {
  if (poly.rings.empty() || poly.rings.front().size() < 3) return false;
  const int outer = ring_side(poly.rings.front(), p);
  if (outer < 0) return false;
  if (outer == 0) return true;
  for (std::size_t r = 1; r < poly.rings.size(); ++r) {
    const int side = ring_side(poly.rings[r], p);
    if (side > 0) return false;
  }
  return true;
}

}  // namespace

bool contains(const Geometry& area, const Coord& p) {
  switch (area.kind()) {
    case GeometryKind::polygon:
      return polygon_contains(area.as<Polygon>(), p);
    case GeometryKind::multipolygon:
      for (const auto& poly : area.as<MultiPolygon>().polygons)
        if (polygon_contains(poly, p)) return true;
      return false;
    default:
      return false;
  }
}

namespace {

double polygon_area(const Polygon& p) {
  if (p.rings.empty()) return 0.0;
  double a = std::abs(signed_area(p.rings.front()));
  for (std::size_t r = 1; r < p.rings.size(); ++r) a -= std::abs(signed_area(p.rings[r]));
  return a;
}

void append_coords(std::string& out, const std::vector<Coord>& coords) {
  out += '(';
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (i) out += ", ";
    out += format_double(coords[i].x());
    out += ' ';
    out += format_double(coords[i].y());
  }
  out += ')';
}

void append_polygon(std::string& out, const Polygon& p) {
  out += '(';
  for (std::size_t r = 0; r < p.rings.size(); ++r) {
    if (r) out += ", ";
    append_coords(out, p.rings[r]);
  }
  out += ')';
}

}  // namespace

double area(const Geometry& g) {
  if (g.kind() == GeometryKind::polygon) return polygon_area(g.as<Polygon>());
  if (g.kind() == GeometryKind::multipolygon) {
    double a = 0.0;
    for (const auto& p : g.as<MultiPolygon>().polygons) a += polygon_area(p);
    return a;
  }
  return 0.0;
}

std::string to_wkt(const Geometry& g) {
  std::string out;
  switch (g.kind()) {
    case GeometryKind::point: {
      const auto& c = g.as<Point>().at;
      out = "POINT (" + format_double(c.x()) + " " + format_double(c.y()) + ")";
      break;
    }
    case GeometryKind::multipoint: {
      const auto& pts = g.as<MultiPoint>().points;
      if (pts.empty()) return "MULTIPOINT EMPTY";
      out = "MULTIPOINT ";
      append_coords(out, pts);
      break;
    }
    case GeometryKind::linestring:
      out = "LINESTRING ";
      append_coords(out, g.as<LineString>().vertices);
      break;
    case GeometryKind::polygon:
      out = "POLYGON ";
      append_polygon(out, g.as<Polygon>());
      break;
    case GeometryKind::multipolygon: {
      out = "MULTIPOLYGON (";
      const auto& polys = g.as<MultiPolygon>().polygons;
      for (std::size_t p = 0; p < polys.size(); ++p) {
        if (p) out += ", ";
        append_polygon(out, polys[p]);
      }
      out += ')';
      break;
    }
  }
  return out;
}

}  // namespace argus
