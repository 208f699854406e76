#include "argus/ingest.hpp"

#include "argus/text.hpp"
#include "byte_reader.hpp"

#include <algorithm>
#include <cmath>

namespace argus::ingest {

namespace {

using detail::ByteReader;

constexpr std::int32_t kShapefileCode = 9994;

struct DbfField {
  std::string name;
  char type;
  std::size_t length;
  std::size_t decimals;
  std::size_t offset;  // within the record, after the deletion flag
};

struct DbfTable {
  std::vector<DbfField> fields;
  std::vector<std::vector<std::string>> records;  // raw field text
  std::vector<bool> deleted;
};

DbfTable parse_dbf(Bytes dbf) {
  ByteReader r(dbf, Errc::MalformedHeader, "dBase file");
  r.require(0, 32);
  const std::uint8_t version = r.u8(0);
  if ((version & 0x07) != 0x03)
    fail(Errc::MalformedHeader, "dBase file: unsupported version byte " + std::to_string(version));
  const std::uint32_t count = r.u32(4, true);
  const std::uint16_t header_len = r.u16(8, true);
  const std::uint16_t record_len = r.u16(10, true);

  DbfTable t;
  std::size_t offset = 1;
  for (std::size_t pos = 32; pos < header_len; pos += 32) {
    if (r.u8(pos) == 0x0D) break;
    r.require(pos, 32);
    DbfField f;
    f.name = r.text(pos, 11);
    f.name = f.name.substr(0, f.name.find('\0'));
    f.name = std::string(trim(f.name));
    f.type = static_cast<char>(r.u8(pos + 11));
    f.length = r.u8(pos + 16);
    f.decimals = r.u8(pos + 17);
    f.offset = offset;
    offset += f.length;
    t.fields.push_back(std::move(f));
  }
  if (offset > record_len) fail(Errc::MalformedHeader, "dBase file: field widths exceed the record length");
  r.require(header_len, static_cast<std::size_t>(count) * record_len);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t base = header_len + static_cast<std::size_t>(i) * record_len;
    t.deleted.push_back(r.u8(base) == '*');
    std::vector<std::string> rec;
    for (const auto& f : t.fields) rec.push_back(r.text(base + f.offset, f.length));
    t.records.push_back(std::move(rec));
  }
  return t;
}

struct FieldDecoder {
  AttributeField field;
  char dbf_type;
};

std::string decode_text(std::string raw, bool& fell_back) {
  if (is_valid_utf8(raw)) return raw;
  fell_back = true;
  return latin1_to_utf8(raw);
}

Cell decode_cell(const std::string& raw, ValueType type, bool& fell_back) {
  const std::string_view v = trim(raw);
  switch (type) {
    case ValueType::integer: {
      if (v.empty() || v.find_first_not_of('*') == std::string_view::npos) return {};
      if (auto i = parse_int(v)) return *i;
      return {};
    }
    case ValueType::real: {
      if (v.empty() || v.find_first_not_of('*') == std::string_view::npos) return {};
      if (auto d = parse_double(v); d && std::isfinite(*d)) return *d;
      return {};
    }
    case ValueType::boolean: {
      if (v.empty()) return {};
      const char c = v.front();
      if (c == 'T' || c == 't' || c == 'Y' || c == 'y') return true;
      if (c == 'F' || c == 'f' || c == 'N' || c == 'n') return false;
      return {};
    }
    case ValueType::date: {
      if (v.size() != 8) return {};
      std::string iso = std::string(v.substr(0, 4)) + "-" + std::string(v.substr(4, 2)) + "-" + std::string(v.substr(6, 2));
      if (!is_iso_date(iso)) return {};
      return iso;
    }
    default: {
      std::string s(raw);
      while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.pop_back();
      if (s.empty()) return {};  // blank text is null, as other shapefile readers treat it
      return decode_text(std::move(s), fell_back);
    }
  }
}

// Integer-declared numeric columns fall back to real when a value has a
// fractional part.
ValueType numeric_type(const DbfField& f, const DbfTable& t, std::size_t col) {
  if (f.type == 'F' || f.decimals > 0) return ValueType::real;
  for (const auto& rec : t.records) {
    const auto v = trim(rec[col]);
    if (v.empty() || v.find_first_not_of('*') == std::string_view::npos) continue;
    if (!parse_int(v)) return ValueType::real;
  }
  return ValueType::integer;
}

std::vector<Coord> read_points(const ByteReader& r, std::size_t offset, std::size_t n) {
  std::vector<Coord> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    pts.emplace_back(r.f64(offset + 16 * i, true), r.f64(offset + 16 * i + 8, true));
  return pts;
}

Geometry assemble_polygon(std::vector<Ring> rings) {
  std::vector<Polygon> polys;
  for (auto& ring : rings) {
    if (!ring.empty() && ring.front() != ring.back()) ring.push_back(ring.front());
    const bool clockwise = signed_area(ring) < 0;
    if (clockwise || polys.empty()) {
      polys.push_back(Polygon{{std::move(ring)}});
      continue;
    }
    // Hole: attach to the first exterior that contains it.
    std::size_t owner = polys.size() - 1;
    for (std::size_t p = 0; p < polys.size(); ++p) {
      if (contains(Geometry(Polygon{{polys[p].rings.front()}}), ring.front())) {
        owner = p;
        break;
      }
    }
    polys[owner].rings.push_back(std::move(ring));
  }
  if (polys.size() == 1) return polys.front();
  return MultiPolygon{std::move(polys)};
}

}  // namespace

FeatureLayer read_shapefile(Bytes shp, Bytes dbf, std::optional<std::string_view> prj, std::string_view name,
                            std::optional<int> crs_override, const crs::CrsRegistry& registry) {
  ByteReader r(shp, Errc::MalformedHeader, "shapefile");
  if (shp.size() < 100) fail(Errc::MalformedHeader, "shapefile: header shorter than 100 bytes");
  if (r.i32(0, false) != kShapefileCode)
    fail(Errc::MalformedHeader, "shapefile: file code " + std::to_string(r.i32(0, false)) + " is not 9994");
  const std::int64_t declared = static_cast<std::int64_t>(r.i32(24, false)) * 2;
  if (declared != static_cast<std::int64_t>(shp.size()))
    fail(Errc::MalformedHeader, "shapefile: header length " + std::to_string(declared) + " bytes, file has " +
                                    std::to_string(shp.size()));
  const std::int32_t file_type = r.i32(32, true);
  if (file_type != 0 && file_type != 1 && file_type != 3 && file_type != 5 && file_type != 8)
    fail(Errc::UnsupportedShapeType, "shapefile: shape type " + std::to_string(file_type) + " is not supported",
         file_type);

  // CRS: PRJ alias, then override.
  std::optional<int> srs;
  if (prj) srs = registry.resolve_wkt(*prj);
  if (!srs) srs = crs_override;
  if (!srs) fail(Errc::UnknownCrs, "shapefile '" + std::string(name) + "': no recognised PRJ and no CRS override");
  const CrsDef& crs = registry.get(*srs);

  std::vector<std::optional<Geometry>> shapes;
  std::size_t multipart_lines = 0;
  std::size_t pos = 100;
  while (pos < shp.size()) {
    r.require(pos, 8);
    const std::size_t content = static_cast<std::size_t>(r.i32(pos + 4, false)) * 2;
    const std::size_t body = pos + 8;
    r.require(body, content);
    const std::int32_t type = r.i32(body, true);
    if (type == 0) {
      shapes.emplace_back(std::nullopt);
    } else if (type != file_type) {
      fail(Errc::UnsupportedShapeType, "shapefile: record of type " + std::to_string(type) + " in a type " +
                                           std::to_string(file_type) + " file", type);
    } else if (type == 1) {
      shapes.emplace_back(Geometry::point(r.f64(body + 4, true), r.f64(body + 12, true)));
    } else if (type == 8) {
      const auto n = static_cast<std::size_t>(r.i32(body + 36, true));
      shapes.emplace_back(MultiPoint{read_points(r, body + 40, n)});
    } else {
      const auto nparts = static_cast<std::size_t>(r.i32(body + 36, true));
      const auto npoints = static_cast<std::size_t>(r.i32(body + 40, true));
      std::vector<std::size_t> starts;
      for (std::size_t p = 0; p < nparts; ++p) starts.push_back(static_cast<std::size_t>(r.i32(body + 44 + 4 * p, true)));
      const auto pts = read_points(r, body + 44 + 4 * nparts, npoints);
      std::vector<std::vector<Coord>> parts;
      for (std::size_t p = 0; p < nparts; ++p) {
        const std::size_t b = starts[p];
        const std::size_t e = p + 1 < nparts ? starts[p + 1] : npoints;
        if (b > e || e > npoints) fail(Errc::MalformedHeader, "shapefile: part index out of range", static_cast<std::int64_t>(pos));
        parts.emplace_back(pts.begin() + static_cast<std::ptrdiff_t>(b), pts.begin() + static_cast<std::ptrdiff_t>(e));
      }
      if (parts.empty()) {
        shapes.emplace_back(std::nullopt);
      } else if (type == 3) {
        if (parts.size() > 1) ++multipart_lines;
        shapes.emplace_back(LineString{std::move(parts.front())});
      } else {
        shapes.emplace_back(assemble_polygon(std::move(parts)));
      }
    }
    pos = body + content;
  }

  const DbfTable table = parse_dbf(dbf);
  if (table.records.size() != shapes.size())
    fail(Errc::RecordCountMismatch, "shapefile has " + std::to_string(shapes.size()) + " records, dBase file has " +
                                        std::to_string(table.records.size()));

  std::vector<AttributeField> schema;
  for (std::size_t c = 0; c < table.fields.size(); ++c) {
    const auto& f = table.fields[c];
    AttributeField af;
    af.raw_name = f.name;
    switch (f.type) {
      case 'N':
      case 'F': af.value_type = numeric_type(f, table, c); break;
      case 'L': af.value_type = ValueType::boolean; break;
      case 'D': af.value_type = ValueType::date; break;
      default: af.value_type = ValueType::text; break;
    }
    schema.push_back(std::move(af));
  }

  bool fell_back = false;
  std::size_t dropped = 0;
  std::vector<Feature> rows;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (!shapes[i] || table.deleted[i]) {
      ++dropped;
      continue;
    }
    Feature feat;
    feat.geometry = std::move(*shapes[i]);
    for (std::size_t c = 0; c < schema.size(); ++c)
      feat.cells.push_back(decode_cell(table.records[i][c], schema[c].value_type, fell_back));
    rows.push_back(std::move(feat));
  }

  Metadata md;
  md["source.format"] = "shapefile";
  if (fell_back) md["ingest.encoding_fallback"] = "latin1";
  if (dropped) md["ingest.dropped_records"] = std::to_string(dropped);
  if (multipart_lines)
    md["ingest.warnings"] = std::to_string(multipart_lines) + " multipart polyline(s) reduced to their first part";
  return FeatureLayer(std::string(name), crs, std::move(schema), std::move(rows), std::move(md));
}

}  // namespace argus::ingest
