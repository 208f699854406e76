#include "fixtures.hpp"

#include "argus/crs.hpp"
#include "argus/error.hpp"
#include "argus/text.hpp"
#include "byte_reader.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace argus::fixtures {

namespace {

using detail::ByteWriter;

std::int32_t shape_type(GeometryKind k) {
  switch (k) {
    case GeometryKind::point: return 1;
    case GeometryKind::multipoint: return 8;
    case GeometryKind::linestring: return 3;
    case GeometryKind::polygon:
    case GeometryKind::multipolygon: return 5;
  }
  return 0;
}

void put_be32(std::vector<std::uint8_t>& out, std::size_t at, std::int32_t v) {
  for (int i = 0; i < 4; ++i) out[at + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>((v >> (24 - 8 * i)) & 0xFF);
}

std::vector<std::uint8_t> header(std::int32_t type, const Envelope& env) {
  ByteWriter le(true);
  le.data().resize(28, 0);
  le.put<std::int32_t>(1000);
  le.put<std::int32_t>(type);
  for (double v : {env.min_x, env.min_y, env.max_x, env.max_y}) le.put<double>(v);
  le.data().resize(100, 0);
  auto out = le.take();
  put_be32(out, 0, 9994);
  return out;
}

std::vector<Ring> shapefile_rings(const Geometry& g) {
  std::vector<Ring> rings;
  auto add_polygon = [&](const Polygon& p) {
    for (std::size_t i = 0; i < p.rings.size(); ++i) {
      Ring r = p.rings[i];
      const bool want_cw = i == 0;
      if ((signed_area(r) < 0) != want_cw) std::reverse(r.begin(), r.end());
      rings.push_back(std::move(r));
    }
  };
  if (g.kind() == GeometryKind::polygon) add_polygon(g.as<Polygon>());
  else for (const auto& p : g.as<MultiPolygon>().polygons) add_polygon(p);
  return rings;
}

std::vector<std::uint8_t> shape_record(const Geometry& g) {
  ByteWriter w(true);
  const std::int32_t type = shape_type(g.kind());
  w.put(type);
  if (type == 1) {
    const auto& p = g.as<Point>().at;
    w.put(p.x());
    w.put(p.y());
    return w.take();
  }
  const Envelope env = g.envelope();
  for (double v : {env.min_x, env.min_y, env.max_x, env.max_y}) w.put(v);
  if (type == 8) {
    const auto& pts = g.as<MultiPoint>().points;
    w.put(static_cast<std::int32_t>(pts.size()));
    for (const auto& p : pts) {
      w.put(p.x());
      w.put(p.y());
    }
    return w.take();
  }
  std::vector<std::vector<Coord>> parts;
  if (type == 3) parts.push_back(g.as<LineString>().vertices);
  else for (auto& r : shapefile_rings(g)) parts.push_back(std::move(r));
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  w.put(static_cast<std::int32_t>(parts.size()));
  w.put(static_cast<std::int32_t>(total));
  std::int32_t start = 0;
  for (const auto& p : parts) {
    w.put(start);
    start += static_cast<std::int32_t>(p.size());
  }
  for (const auto& p : parts)
    for (const auto& c : p) {
      w.put(c.x());
      w.put(c.y());
    }
  return w.take();
}

struct DbfColumn {
  char type;
  std::uint8_t length;
  std::uint8_t decimals;
};

std::string dbf_text(const Cell& c, ValueType t) {
  if (is_null(c)) return "";
  switch (t) {
    case ValueType::boolean: return std::get<bool>(c) ? "T" : "F";
    case ValueType::date: {
      std::string s = std::get<std::string>(c);
      s.erase(std::remove(s.begin(), s.end(), '-'), s.end());
      return s;
    }
    default: return cell_to_string(c);
  }
}

std::vector<std::uint8_t> write_dbf(const FeatureLayer& layer) {
  const auto& schema = layer.schema();
  std::vector<DbfColumn> cols;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    std::size_t width = 1;
    for (const auto& row : layer.rows()) width = std::max(width, dbf_text(row.cells[c], schema[c].value_type).size());
    switch (schema[c].value_type) {
      case ValueType::integer: cols.push_back({'N', 18, 0}); break;
      case ValueType::real: cols.push_back({'N', 24, 15}); break;
      case ValueType::boolean: cols.push_back({'L', 1, 0}); break;
      case ValueType::date: cols.push_back({'D', 8, 0}); break;
      default: cols.push_back({'C', static_cast<std::uint8_t>(std::min<std::size_t>(width, 254)), 0}); break;
    }
  }
  std::size_t record_len = 1;
  for (const auto& c : cols) record_len += c.length;
  const std::size_t header_len = 32 + 32 * cols.size() + 1;

  ByteWriter w(true);
  w.put<std::uint8_t>(0x03);
  for (std::uint8_t b : {124, 1, 1}) w.put<std::uint8_t>(b);
  w.put(static_cast<std::uint32_t>(layer.rows().size()));
  w.put(static_cast<std::uint16_t>(header_len));
  w.put(static_cast<std::uint16_t>(record_len));
  w.data().resize(32, 0);
  for (std::size_t c = 0; c < cols.size(); ++c) {
    char name[11] = {};
    const std::string n = schema[c].raw_name.substr(0, 10);
    std::memcpy(name, n.data(), n.size());
    w.bytes(name, 11);
    w.put(cols[c].type);
    w.data().resize(w.data().size() + 4, 0);
    w.put(cols[c].length);
    w.put(cols[c].decimals);
    w.data().resize(w.data().size() + 14, 0);
  }
  w.put<std::uint8_t>(0x0D);
  for (const auto& row : layer.rows()) {
    w.put<std::uint8_t>(' ');
    for (std::size_t c = 0; c < cols.size(); ++c) {
      std::string s = dbf_text(row.cells[c], schema[c].value_type).substr(0, cols[c].length);
      if (cols[c].type == 'N') s.insert(0, cols[c].length - s.size(), ' ');
      else s.append(cols[c].length - s.size(), ' ');
      w.bytes(s.data(), s.size());
    }
  }
  w.put<std::uint8_t>(0x1A);
  return w.take();
}

}  // namespace

ShapefileBytes write_shapefile(const FeatureLayer& layer) {
  std::int32_t type = 0;
  for (const auto& f : layer.rows()) {
    const auto t = shape_type(f.geometry.kind());
    if (type && t != type) fail(Errc::InvalidLayer, "shapefile layers hold one shape type");
    type = t;
  }
  if (!type) type = 1;
  const Envelope env = layer.rows().empty() ? Envelope{0, 0, 0, 0} : layer.envelope();

  ShapefileBytes out;
  out.shp = header(type, env);
  out.shx = header(type, env);
  std::int32_t number = 1;
  for (const auto& f : layer.rows()) {
    const auto body = shape_record(f.geometry);
    const auto offset_words = static_cast<std::int32_t>(out.shp.size() / 2);
    const auto len_words = static_cast<std::int32_t>(body.size() / 2);
    std::vector<std::uint8_t> rec(8);
    put_be32(rec, 0, number++);
    put_be32(rec, 4, len_words);
    out.shp.insert(out.shp.end(), rec.begin(), rec.end());
    out.shp.insert(out.shp.end(), body.begin(), body.end());
    std::vector<std::uint8_t> ix(8);
    put_be32(ix, 0, offset_words);
    put_be32(ix, 4, len_words);
    out.shx.insert(out.shx.end(), ix.begin(), ix.end());
  }
  put_be32(out.shp, 24, static_cast<std::int32_t>(out.shp.size() / 2));
  put_be32(out.shx, 24, static_cast<std::int32_t>(out.shx.size() / 2));
  out.dbf = write_dbf(layer);
  out.prj = layer.crs().wkt;
  return out;
}

std::string save_shapefile(const FeatureLayer& layer, const std::string& dir, const std::string& stem) {
  const auto bytes = write_shapefile(layer);
  const auto base = (std::filesystem::path(dir) / stem).string();
  auto dump = [](const std::string& path, const std::vector<std::uint8_t>& b) {
    std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  };
  dump(base + ".shp", bytes.shp);
  dump(base + ".shx", bytes.shx);
  dump(base + ".dbf", bytes.dbf);
  write_file(base + ".prj", bytes.prj);
  return base + ".shp";
}

std::vector<std::uint8_t> write_geotiff(const RasterGrid& grid, const TiffOptions& o) {
  const bool le = !o.big_endian;
  const auto w = static_cast<std::uint32_t>(grid.ncols());
  const auto h = static_cast<std::uint32_t>(grid.nrows());
  const int srs = o.srs.value_or(grid.crs().srs_id);

  ByteWriter pixels(le);
  for (Eigen::Index r = grid.nrows() - 1; r >= 0; --r)
    for (Eigen::Index c = 0; c < grid.ncols(); ++c) pixels.put(static_cast<float>(grid.at(r, c)));
  const auto pix = pixels.take();

  struct Entry {
    std::uint16_t tag, type;
    std::vector<std::uint8_t> payload;
    std::uint32_t count;
  };
  std::vector<Entry> entries;
  auto shorts = [&](std::uint16_t tag, std::vector<std::uint16_t> v) {
    ByteWriter b(le);
    for (auto x : v) b.put(x);
    entries.push_back({tag, 3, b.take(), static_cast<std::uint32_t>(v.size())});
  };
  auto longs = [&](std::uint16_t tag, std::vector<std::uint32_t> v) {
    ByteWriter b(le);
    for (auto x : v) b.put(x);
    entries.push_back({tag, 4, b.take(), static_cast<std::uint32_t>(v.size())});
  };
  auto doubles = [&](std::uint16_t tag, std::vector<double> v) {
    ByteWriter b(le);
    for (auto x : v) b.put(x);
    entries.push_back({tag, 12, b.take(), static_cast<std::uint32_t>(v.size())});
  };

  const std::uint32_t pix_offset = 8;
  longs(256, {w});
  longs(257, {h});
  shorts(258, {32});
  shorts(259, {o.compression});
  shorts(262, {1});
  longs(273, {pix_offset});
  shorts(277, {1});
  longs(278, {h});
  longs(279, {static_cast<std::uint32_t>(pix.size())});
  shorts(284, {1});
  if (o.tiled) longs(322, {w});
  shorts(339, {3});
  if (o.georeferenced) {
    const double cs = grid.cell_size();
    const double left = grid.origin().x();
    const double top = grid.origin().y() + cs * grid.nrows();
    doubles(33550, {cs, cs, 0});
    if (o.pixel_is_point) doubles(33922, {0, 0, 0, left + cs / 2, top - cs / 2, 0});
    else doubles(33922, {0, 0, 0, left, top, 0});
  }
  const bool geographic = grid.crs().is_geographic() && !o.srs;
  shorts(34735, {1, 1, 0, 3, 1024, 0, 1, static_cast<std::uint16_t>(geographic ? 2 : 1), 1025, 0, 1,
                 static_cast<std::uint16_t>(o.pixel_is_point ? 2 : 1), static_cast<std::uint16_t>(geographic ? 2048 : 3072),
                 0, 1, static_cast<std::uint16_t>(srs)});
  if (o.write_nodata) {
    std::string s = format_double(grid.nodata());
    s.push_back('\0');
    entries.push_back({42113, 2, std::vector<std::uint8_t>(s.begin(), s.end()), static_cast<std::uint32_t>(s.size())});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.tag < b.tag; });

  ByteWriter out(le);
  out.bytes(le ? "II" : "MM", 2);
  out.put<std::uint16_t>(42);
  const std::uint32_t ifd_offset = static_cast<std::uint32_t>(8 + pix.size() + (pix.size() % 2));
  out.put(ifd_offset);
  out.bytes(pix.data(), pix.size());
  if (pix.size() % 2) out.put<std::uint8_t>(0);

  // Out-of-line payloads follow the IFD.
  std::uint32_t extra = ifd_offset + 2 + 12 * static_cast<std::uint32_t>(entries.size()) + 4;
  std::vector<std::uint8_t> tail;
  out.put(static_cast<std::uint16_t>(entries.size()));
  for (const auto& e : entries) {
    out.put(e.tag);
    out.put(e.type);
    out.put(e.count);
    if (e.payload.size() <= 4) {
      auto p = e.payload;
      p.resize(4, 0);
      out.bytes(p.data(), 4);
    } else {
      out.put(extra + static_cast<std::uint32_t>(tail.size()));
      tail.insert(tail.end(), e.payload.begin(), e.payload.end());
      if (tail.size() % 2) tail.push_back(0);
    }
  }
  out.put<std::uint32_t>(0);
  out.bytes(tail.data(), tail.size());
  return out.take();
}

}  // namespace argus::fixtures
