#include "argus/geopackage.hpp"

#include "argus/hash.hpp"
#include "argus/ingest.hpp"
#include "argus/text.hpp"
#include "byte_reader.hpp"
#include "sqlite_db.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

namespace argus::gpkg {

namespace fs = std::filesystem;
using detail::ByteReader;
using detail::ByteWriter;
using detail::Connection;
using detail::quote_ident;
using detail::Statement;
using detail::Transaction;

// ---------------------------------------------------------------------------
// WKB

namespace {

enum WkbType : std::uint32_t { kWkbPoint = 1, kWkbLineString = 2, kWkbPolygon = 3, kWkbMultiPoint = 4, kWkbMultiPolygon = 6 };

void put_coords(ByteWriter& w, const std::vector<Coord>& pts) {
  w.put(static_cast<std::uint32_t>(pts.size()));
  for (const auto& p : pts) {
    w.put(p.x());
    w.put(p.y());
  }
}

void put_polygon(ByteWriter& w, const Polygon& p) {
  w.put<std::uint8_t>(1);
  w.put<std::uint32_t>(kWkbPolygon);
  w.put(static_cast<std::uint32_t>(p.rings.size()));
  for (const auto& r : p.rings) put_coords(w, r);
}

void put_point(ByteWriter& w, const Coord& c) {
  w.put<std::uint8_t>(1);
  w.put<std::uint32_t>(kWkbPoint);
  w.put(c.x());
  w.put(c.y());
}

class WkbReader {
 public:
  WkbReader(std::span<const std::uint8_t> bytes, std::size_t base) : r_(bytes, Errc::CorruptGeometryBlob, "WKB"), base_(base) {}

  Geometry read(std::optional<std::uint32_t> expected = std::nullopt) {
    const std::size_t start = pos_;
    const std::uint8_t order = byte();
    if (order > 1) corrupt(start, "WKB byte order marker " + std::to_string(order));
    le_ = order == 1;
    const std::uint32_t type = u32();
    if (type > 7) fail(Errc::UnsupportedType, "WKB geometry type " + std::to_string(type) + " (Z/M or extended) is not supported");
    if (expected && type != *expected) corrupt(start, "WKB member of type " + std::to_string(type) + " inside a multi-geometry");
    switch (type) {
      case kWkbPoint: return Point{coord()};
      case kWkbLineString: return LineString{coords()};
      case kWkbPolygon: return polygon_body();
      case kWkbMultiPoint: {
        MultiPoint mp;
        const auto n = count();
        for (std::uint32_t i = 0; i < n; ++i) mp.points.push_back(read(kWkbPoint).as<Point>().at);
        return mp;
      }
      case kWkbMultiPolygon: {
        MultiPolygon mp;
        const auto n = count();
        for (std::uint32_t i = 0; i < n; ++i) mp.polygons.push_back(read(kWkbPolygon).as<Polygon>());
        return mp;
      }
      default: fail(Errc::UnsupportedType, "WKB geometry type " + std::to_string(type) + " is not supported");
    }
  }

  std::size_t position() const noexcept { return pos_; }

 private:
  [[noreturn]] void corrupt(std::size_t at, const std::string& what) const {
    fail(Errc::CorruptGeometryBlob, what + " at byte " + std::to_string(base_ + at), static_cast<std::int64_t>(base_ + at));
  }
  void need(std::size_t n) const {
    if (pos_ + n > r_.size()) corrupt(pos_, "truncated WKB");
  }
  std::uint8_t byte() {
    need(1);
    return r_.u8(pos_++);
  }
  std::uint32_t u32() {
    need(4);
    const auto v = r_.u32(pos_, le_);
    pos_ += 4;
    return v;
  }
  std::uint32_t count() {
    const auto n = u32();
    if (n > r_.size()) corrupt(pos_ - 4, "implausible element count");
    return n;
  }
  double f64() {
    need(8);
    const auto v = r_.f64(pos_, le_);
    pos_ += 8;
    return v;
  }
  Coord coord() {
    const double x = f64();
    return Coord(x, f64());
  }
  std::vector<Coord> coords() {
    const auto n = count();
    std::vector<Coord> out;
    out.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) out.push_back(coord());
    return out;
  }
  Polygon polygon_body() {
    Polygon p;
    const auto n = count();
    for (std::uint32_t i = 0; i < n; ++i) p.rings.push_back(coords());
    return p;
  }

  ByteReader r_;
  std::size_t base_;
  std::size_t pos_ = 0;
  bool le_ = true;
};

}  // namespace

std::vector<std::uint8_t> encode_wkb(const Geometry& g) {
  ByteWriter w(true);
  switch (g.kind()) {
    case GeometryKind::point: put_point(w, g.as<Point>().at); break;
    case GeometryKind::linestring:
      w.put<std::uint8_t>(1);
      w.put<std::uint32_t>(kWkbLineString);
      put_coords(w, g.as<LineString>().vertices);
      break;
    case GeometryKind::polygon: put_polygon(w, g.as<Polygon>()); break;
    case GeometryKind::multipoint:
      w.put<std::uint8_t>(1);
      w.put<std::uint32_t>(kWkbMultiPoint);
      w.put(static_cast<std::uint32_t>(g.as<MultiPoint>().points.size()));
      for (const auto& p : g.as<MultiPoint>().points) put_point(w, p);
      break;
    case GeometryKind::multipolygon:
      w.put<std::uint8_t>(1);
      w.put<std::uint32_t>(kWkbMultiPolygon);
      w.put(static_cast<std::uint32_t>(g.as<MultiPolygon>().polygons.size()));
      for (const auto& p : g.as<MultiPolygon>().polygons) put_polygon(w, p);
      break;
  }
  return w.take();
}

Geometry decode_wkb(std::span<const std::uint8_t> wkb) {
  WkbReader r(wkb, 0);
  return r.read();
}

std::vector<std::uint8_t> encode_geometry(const Geometry& g, int srs_id) {
  ByteWriter w(true);
  w.put<std::uint8_t>('G');
  w.put<std::uint8_t>('P');
  w.put<std::uint8_t>(0);
  w.put<std::uint8_t>(0x03);  // little-endian header, XY envelope
  w.put(static_cast<std::int32_t>(srs_id));
  const auto e = g.envelope();
  for (double v : {e.min_x, e.max_x, e.min_y, e.max_y}) w.put(v);
  const auto wkb = encode_wkb(g);
  w.bytes(wkb.data(), wkb.size());
  return w.take();
}

DecodedGeometry decode_geometry(std::span<const std::uint8_t> blob) {
  auto corrupt = [](std::size_t at, const std::string& what) {
    fail(Errc::CorruptGeometryBlob, "geometry blob: " + what + " at byte " + std::to_string(at), static_cast<std::int64_t>(at));
  };
  if (blob.size() < 8) corrupt(blob.size(), "truncated header");
  if (blob[0] != 'G' || blob[1] != 'P') corrupt(0, "bad magic");
  if (blob[2] != 0) corrupt(2, "unsupported version " + std::to_string(blob[2]));
  const std::uint8_t flags = blob[3];
  if (flags & 0xC0) corrupt(3, "reserved flag bits set");
  if (flags & 0x20) fail(Errc::UnsupportedType, "extended geometry blobs are not supported");
  if (flags & 0x10) fail(Errc::UnsupportedType, "empty geometries are not supported");
  const int indicator = (flags >> 1) & 0x07;
  static constexpr std::size_t env_sizes[] = {0, 32, 48, 48, 64};
  if (indicator > 4) corrupt(3, "invalid envelope indicator " + std::to_string(indicator));
  const bool le = flags & 0x01;
  const ByteReader r(blob, Errc::CorruptGeometryBlob, "geometry blob");
  DecodedGeometry out;
  out.srs_id = r.i32(4, le);
  const std::size_t env_size = env_sizes[indicator];
  if (blob.size() < 8 + env_size) corrupt(blob.size(), "truncated envelope");
  if (indicator > 0) {
    Envelope e;
    e.min_x = r.f64(8, le);
    e.max_x = r.f64(16, le);
    e.min_y = r.f64(24, le);
    e.max_y = r.f64(32, le);
    out.envelope = e;
  }
  WkbReader wkb(blob.subspan(8 + env_size), 8 + env_size);
  out.geometry = wkb.read();
  return out;
}

// ---------------------------------------------------------------------------
// Database

namespace {

constexpr const char* kMetadataUri = "urn:argus:metadata:key-value";

constexpr const char* kSchema = R"SQL(
CREATE TABLE gpkg_spatial_ref_sys (
  srs_name TEXT NOT NULL,
  srs_id INTEGER NOT NULL PRIMARY KEY,
  organization TEXT NOT NULL,
  organization_coordsys_id INTEGER NOT NULL,
  definition TEXT NOT NULL,
  description TEXT
);
CREATE TABLE gpkg_contents (
  table_name TEXT NOT NULL PRIMARY KEY,
  data_type TEXT NOT NULL,
  identifier TEXT UNIQUE,
  description TEXT DEFAULT '',
  last_change DATETIME NOT NULL DEFAULT (strftime('%Y-%m-%dT%H:%M:%fZ','now')),
  min_x DOUBLE,
  min_y DOUBLE,
  max_x DOUBLE,
  max_y DOUBLE,
  srs_id INTEGER,
  CONSTRAINT fk_gc_r_srs_id FOREIGN KEY (srs_id) REFERENCES gpkg_spatial_ref_sys(srs_id)
);
CREATE TABLE gpkg_geometry_columns (
  table_name TEXT NOT NULL,
  column_name TEXT NOT NULL,
  geometry_type_name TEXT NOT NULL,
  srs_id INTEGER NOT NULL,
  z TINYINT NOT NULL,
  m TINYINT NOT NULL,
  CONSTRAINT pk_geom_cols PRIMARY KEY (table_name, column_name),
  CONSTRAINT uk_gc_table_name UNIQUE (table_name),
  CONSTRAINT fk_gc_tn FOREIGN KEY (table_name) REFERENCES gpkg_contents(table_name),
  CONSTRAINT fk_gc_srs FOREIGN KEY (srs_id) REFERENCES gpkg_spatial_ref_sys (srs_id)
);
CREATE TABLE gpkg_extensions (
  table_name TEXT,
  column_name TEXT,
  extension_name TEXT NOT NULL,
  definition TEXT NOT NULL,
  scope TEXT NOT NULL,
  CONSTRAINT ge_tce UNIQUE (table_name, column_name, extension_name)
);
CREATE TABLE gpkg_metadata (
  id INTEGER CONSTRAINT m_pk PRIMARY KEY ASC NOT NULL,
  md_scope TEXT NOT NULL DEFAULT 'dataset',
  md_standard_uri TEXT NOT NULL,
  mime_type TEXT NOT NULL DEFAULT 'text/xml',
  metadata TEXT NOT NULL DEFAULT ''
);
CREATE TABLE gpkg_metadata_reference (
  reference_scope TEXT NOT NULL,
  table_name TEXT,
  column_name TEXT,
  row_id_value INTEGER,
  timestamp DATETIME NOT NULL DEFAULT (strftime('%Y-%m-%dT%H:%M:%fZ','now')),
  md_file_id INTEGER NOT NULL,
  md_parent_id INTEGER,
  CONSTRAINT crmr_mfi_fk FOREIGN KEY (md_file_id) REFERENCES gpkg_metadata(id),
  CONSTRAINT crmr_mpi_fk FOREIGN KEY (md_parent_id) REFERENCES gpkg_metadata(id)
);
CREATE TABLE argus_layers (
  table_name TEXT NOT NULL PRIMARY KEY,
  kind TEXT NOT NULL,
  standardized INTEGER NOT NULL
);
CREATE TABLE argus_fields (
  table_name TEXT NOT NULL,
  ordinal INTEGER NOT NULL,
  column_name TEXT NOT NULL,
  raw_name TEXT NOT NULL,
  canonical_name TEXT,
  value_type TEXT NOT NULL,
  unit TEXT,
  description TEXT,
  PRIMARY KEY (table_name, ordinal)
);
CREATE TABLE argus_rasters (
  table_name TEXT NOT NULL PRIMARY KEY,
  sidecar TEXT NOT NULL,
  min_x DOUBLE NOT NULL,
  min_y DOUBLE NOT NULL,
  max_x DOUBLE NOT NULL,
  max_y DOUBLE NOT NULL,
  srs_id INTEGER NOT NULL,
  cell_size DOUBLE NOT NULL,
  ncols INTEGER NOT NULL,
  nrows INTEGER NOT NULL,
  nodata DOUBLE NOT NULL,
  sha256 TEXT NOT NULL
);
INSERT INTO gpkg_extensions VALUES
  ('gpkg_metadata', NULL, 'gpkg_metadata', 'http://www.geopackage.org/spec/#extension_metadata', 'read-write'),
  ('gpkg_metadata_reference', NULL, 'gpkg_metadata', 'http://www.geopackage.org/spec/#extension_metadata', 'read-write');
)SQL";

const char* sql_type(ValueType t) {
  switch (t) {
    case ValueType::integer: return "INTEGER";
    case ValueType::real: return "REAL";
    case ValueType::boolean: return "BOOLEAN";
    case ValueType::date: return "DATE";
    default: return "TEXT";
  }
}

std::optional<ValueType> type_from_sql(std::string_view declared) {
  const auto t = to_upper(trim(declared));
  if (t.empty() || istarts_with(t, "TEXT") || istarts_with(t, "VARCHAR") || t == "DATETIME") return ValueType::text;
  if (t == "BOOLEAN") return ValueType::boolean;
  if (t == "DATE") return ValueType::date;
  if (t == "INTEGER" || t == "INT" || t == "TINYINT" || t == "SMALLINT" || t == "MEDIUMINT" || t == "BIGINT")
    return ValueType::integer;
  if (t == "REAL" || t == "DOUBLE" || t == "FLOAT" || t == "NUMERIC") return ValueType::real;
  return std::nullopt;
}

const char* geometry_type_name(GeometryKind k) {
  switch (k) {
    case GeometryKind::point: return "POINT";
    case GeometryKind::multipoint: return "MULTIPOINT";
    case GeometryKind::linestring: return "LINESTRING";
    case GeometryKind::polygon: return "POLYGON";
    case GeometryKind::multipolygon: return "MULTIPOLYGON";
  }
  return "GEOMETRY";
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string xml_unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out += s[i];
      continue;
    }
    static const std::pair<std::string_view, char> entities[] = {
        {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&apos;", '\''}};
    bool matched = false;
    for (const auto& [ent, ch] : entities)
      if (s.substr(i, ent.size()) == ent) {
        out += ch;
        i += ent.size() - 1;
        matched = true;
        break;
      }
    if (!matched) out += '&';
  }
  return out;
}

std::string metadata_xml(const Metadata& md) {
  std::string out = "<metadata>\n";
  for (const auto& [k, v] : md) out += "  <entry key=\"" + xml_escape(k) + "\">" + xml_escape(v) + "</entry>\n";
  return out + "</metadata>\n";
}

Metadata parse_metadata_xml(std::string_view xml) {
  Metadata md;
  std::size_t pos = 0;
  while ((pos = xml.find("<entry key=\"", pos)) != std::string_view::npos) {
    pos += 12;
    const auto kend = xml.find("\">", pos);
    const auto vend = xml.find("</entry>", kend);
    if (kend == std::string_view::npos || vend == std::string_view::npos) break;
    md[xml_unescape(xml.substr(pos, kend - pos))] = xml_unescape(xml.substr(kend + 2, vend - kend - 2));
    pos = vend;
  }
  return md;
}

bool reserved_table(std::string_view name) {
  return istarts_with(name, "gpkg_") || istarts_with(name, "argus_") || istarts_with(name, "sqlite_") ||
         istarts_with(name, "rtree_");
}

Timestamp default_timestamp() {
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"))
    if (auto s = parse_int(epoch)) return Timestamp(std::chrono::seconds(*s));
  return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

}  // namespace

struct Database::Impl {
  std::string path;
  Connection db;
  std::optional<Timestamp> timestamp;

  std::string now() const { return format_timestamp(timestamp.value_or(default_timestamp())); }

  bool table_exists(const std::string& name) const {
    auto s = db.prepare("SELECT 1 FROM sqlite_master WHERE type IN ('table','view') AND name = ?1");
    s.bind(1, name);
    return s.step();
  }

  std::optional<std::string> data_type(const std::string& name) const {
    auto s = db.prepare("SELECT data_type FROM gpkg_contents WHERE table_name = ?1");
    s.bind(1, name);
    return s.step() ? std::optional(s.text(0)) : std::nullopt;
  }

  void ensure_srs(const CrsDef& crs) {
    auto q = db.prepare("SELECT 1 FROM gpkg_spatial_ref_sys WHERE srs_id = ?1");
    q.bind(1, crs.srs_id);
    if (q.step()) return;
    auto ins = db.prepare(
        "INSERT INTO gpkg_spatial_ref_sys (srs_name, srs_id, organization, organization_coordsys_id, definition, "
        "description) VALUES (?1, ?2, 'EPSG', ?2, ?3, ?4)");
    ins.bind(1, crs.name).bind(2, crs.srs_id).bind(3, crs.wkt.empty() ? std::string("undefined") : crs.wkt).bind(4, crs.name);
    ins.run();
  }

  void require_new(const std::string& name) const {
    if (reserved_table(name)) fail(Errc::InvalidArgument, "layer name '" + name + "' uses a reserved prefix");
    if (data_type(name) || table_exists(name))
      fail(Errc::DuplicateLayer, "layer '" + name + "' already exists in " + fs::path(path).filename().string());
  }

  void insert_contents(const std::string& name, const char* data_type, const std::optional<Envelope>& bbox, int srs) {
    auto s = db.prepare(
        "INSERT INTO gpkg_contents (table_name, data_type, identifier, description, last_change, min_x, min_y, max_x, "
        "max_y, srs_id) VALUES (?1, ?2, ?1, '', ?3, ?4, ?5, ?6, ?7, ?8)");
    s.bind(1, name).bind(2, data_type).bind(3, now());
    if (bbox) s.bind(4, bbox->min_x).bind(5, bbox->min_y).bind(6, bbox->max_x).bind(7, bbox->max_y);
    s.bind(8, srs);
    s.run();
  }

  Metadata read_metadata(const std::string& layer) const {
    if (!table_exists("gpkg_metadata") || !table_exists("gpkg_metadata_reference")) return {};
    auto s = db.prepare(
        "SELECT m.metadata FROM gpkg_metadata m JOIN gpkg_metadata_reference r ON r.md_file_id = m.id "
        "WHERE r.reference_scope = 'table' AND r.table_name = ?1 AND m.md_standard_uri = ?2 ORDER BY m.id");
    s.bind(1, layer).bind(2, kMetadataUri);
    Metadata md;
    while (s.step())
      for (auto& [k, v] : parse_metadata_xml(s.text(0))) md[k] = v;
    return md;
  }

  void replace_metadata(const std::string& layer, const Metadata& md) {
    auto ids = db.prepare(
        "SELECT m.id FROM gpkg_metadata m JOIN gpkg_metadata_reference r ON r.md_file_id = m.id "
        "WHERE r.reference_scope = 'table' AND r.table_name = ?1 AND m.md_standard_uri = ?2");
    ids.bind(1, layer).bind(2, kMetadataUri);
    std::vector<std::int64_t> old;
    while (ids.step()) old.push_back(ids.integer(0));
    for (auto id : old) {
      db.prepare("DELETE FROM gpkg_metadata_reference WHERE md_file_id = ?1").bind(1, id).run();
      db.prepare("DELETE FROM gpkg_metadata WHERE id = ?1").bind(1, id).run();
    }
    if (md.empty()) return;
    auto ins = db.prepare(
        "INSERT INTO gpkg_metadata (md_scope, md_standard_uri, mime_type, metadata) VALUES ('dataset', ?1, 'text/xml', ?2)");
    ins.bind(1, kMetadataUri).bind(2, metadata_xml(md));
    ins.run();
    const auto id = sqlite3_last_insert_rowid(db.handle());
    auto ref = db.prepare(
        "INSERT INTO gpkg_metadata_reference (reference_scope, table_name, column_name, row_id_value, timestamp, "
        "md_file_id, md_parent_id) VALUES ('table', ?1, NULL, NULL, ?2, ?3, NULL)");
    ref.bind(1, layer).bind(2, now()).bind(3, static_cast<std::int64_t>(id));
    ref.run();
  }
};

Database::Database(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
Database::Database(Database&&) noexcept = default;
Database& Database::operator=(Database&&) noexcept = default;
Database::~Database() = default;

const std::string& Database::path() const noexcept { return impl_->path; }
void Database::set_timestamp(std::optional<Timestamp> t) { impl_->timestamp = t; }
sqlite3* Database::handle() const noexcept { return impl_->db.handle(); }

Database Database::create(const std::string& path, const CreateOptions& options) {
  std::error_code ec;
  if (fs::exists(path, ec)) {
    if (!options.overwrite) fail(Errc::PathExists, "'" + path + "' already exists");
    if (!fs::remove(path, ec)) fail(Errc::IoFailure, "cannot remove '" + path + "': " + ec.message());
  }
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent, ec))
    fail(Errc::IoFailure, "directory '" + parent.string() + "' does not exist");

  auto impl = std::make_unique<Impl>();
  impl->path = path;
  impl->timestamp = options.timestamp;
  impl->db = Connection(path, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE);
  try {
    impl->db.exec("PRAGMA application_id = " + std::to_string(static_cast<std::int32_t>(kApplicationId)));
    impl->db.exec("PRAGMA user_version = " + std::to_string(kUserVersion));
    Transaction tx(impl->db);
    impl->db.exec(kSchema);
    auto ins = impl->db.prepare(
        "INSERT INTO gpkg_spatial_ref_sys (srs_name, srs_id, organization, organization_coordsys_id, definition, "
        "description) VALUES (?1, ?2, ?3, ?4, ?5, ?6)");
    ins.bind(1, "Undefined cartesian SRS").bind(2, -1).bind(3, "NONE").bind(4, -1).bind(5, "undefined")
        .bind(6, "undefined cartesian coordinate reference system");
    ins.run();
    ins.reset();
    ins.bind(1, "Undefined geographic SRS").bind(2, 0).bind(3, "NONE").bind(4, 0).bind(5, "undefined")
        .bind(6, "undefined geographic coordinate reference system");
    ins.run();
    for (int id : {4326, 2100, 3035}) impl->ensure_srs(crs::CrsRegistry::standard().get(id));
    tx.commit();
  } catch (const Error& e) {
    impl->db = Connection();
    fs::remove(path, ec);
    fail(Errc::IoFailure, "cannot initialise '" + path + "': " + e.what());
  }
  return Database(std::move(impl));
}

Database Database::open(const std::string& path, bool writable) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) fail(Errc::IoFailure, "no database at '" + path + "'");
  auto impl = std::make_unique<Impl>();
  impl->path = path;
  impl->db = Connection(path, writable ? SQLITE_OPEN_READWRITE : SQLITE_OPEN_READONLY);
  if (!impl->table_exists("gpkg_contents") || !impl->table_exists("gpkg_spatial_ref_sys"))
    fail(Errc::UnsupportedFormat, "'" + path + "' is not a GeoPackage");
  return Database(std::move(impl));
}

bool Database::has_layer(const std::string& name) const { return impl_->data_type(name).has_value(); }

LayerSummary Database::write_layer(const FeatureLayer& layer) {
  auto& db = impl_->db;
  const std::string& name = layer.name();
  impl_->require_new(name);

  // Database column per field; fid/geom are taken.
  std::vector<std::string> cols;
  std::set<std::string> used{"fid", "geom"};
  for (const auto& f : layer.schema()) {
    std::string c = f.column_name();
    for (int k = 1; used.count(c); ++k) c = f.column_name() + "_" + std::to_string(k);
    used.insert(c);
    cols.push_back(c);
  }

  std::optional<GeometryKind> kind;
  bool mixed = false;
  for (const auto& r : layer.rows()) {
    if (kind && *kind != r.geometry.kind()) mixed = true;
    kind = r.geometry.kind();
  }
  const std::string gtype = kind && !mixed ? geometry_type_name(*kind) : "GEOMETRY";
  const int srs = layer.crs().srs_id;

  Transaction tx(db);
  impl_->ensure_srs(layer.crs());
  std::string ddl = "CREATE TABLE " + quote_ident(name) + " (fid INTEGER PRIMARY KEY NOT NULL, geom " + gtype;
  for (std::size_t i = 0; i < cols.size(); ++i) ddl += ", " + quote_ident(cols[i]) + " " + sql_type(layer.schema()[i].value_type);
  db.exec(ddl + ")");

  std::string sql = "INSERT INTO " + quote_ident(name) + " (fid, geom";
  for (const auto& c : cols) sql += ", " + quote_ident(c);
  sql += ") VALUES (?1, ?2";
  for (std::size_t i = 0; i < cols.size(); ++i) sql += ", ?" + std::to_string(i + 3);
  auto ins = db.prepare(sql + ")");
  std::int64_t fid = 0;
  for (const auto& row : layer.rows()) {
    ins.reset();
    ins.bind(1, ++fid);
    ins.bind_blob(2, encode_geometry(row.geometry, srs));
    for (std::size_t i = 0; i < cols.size(); ++i) {
      const int p = static_cast<int>(i) + 3;
      std::visit(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::monostate>) ins.bind(p, nullptr);
            else if constexpr (std::is_same_v<T, bool>) ins.bind(p, std::int64_t{v ? 1 : 0});
            else if constexpr (std::is_same_v<T, double>) {
              if (!std::isfinite(v)) fail(Errc::UnsupportedType, "non-finite value in column '" + cols[i] + "'");
              ins.bind(p, v);
            } else ins.bind(p, v);
          },
          row.cells[i]);
    }
    ins.step();
  }

  const std::optional<Envelope> bbox = layer.rows().empty() ? std::nullopt : std::optional(layer.envelope());
  impl_->insert_contents(name, "features", bbox, srs);
  auto gc = db.prepare("INSERT INTO gpkg_geometry_columns VALUES (?1, 'geom', ?2, ?3, 0, 0)");
  gc.bind(1, name).bind(2, gtype).bind(3, srs);
  gc.run();
  auto fl = db.prepare("INSERT INTO argus_fields VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)");
  for (std::size_t i = 0; i < cols.size(); ++i) {
    const auto& f = layer.schema()[i];
    fl.reset();
    fl.bind(1, name).bind(2, static_cast<std::int64_t>(i)).bind(3, cols[i]).bind(4, f.raw_name).bind(5, f.canonical_name)
        .bind(6, to_string(f.value_type)).bind(7, f.unit).bind(8, f.description);
    fl.run();
  }
  auto al = db.prepare("INSERT INTO argus_layers VALUES (?1, 'vector', ?2)");
  al.bind(1, name).bind(2, std::int64_t{layer.standardized() ? 1 : 0});
  al.run();
  impl_->replace_metadata(name, layer.metadata());
  tx.commit();
  return LayerSummary{name, LayerKind::vector, srs, bbox, static_cast<std::int64_t>(layer.rows().size())};
}

namespace {

Cell read_cell(const Statement& s, int i, ValueType t) {
  if (s.is_null(i)) return std::monostate{};
  const int storage = s.type(i);
  switch (t) {
    case ValueType::integer:
      if (storage == SQLITE_INTEGER) return s.integer(i);
      if (storage == SQLITE_FLOAT && s.real(i) == std::floor(s.real(i))) return static_cast<std::int64_t>(s.real(i));
      if (auto v = parse_int(s.text(i))) return *v;
      return std::monostate{};
    case ValueType::real:
      if (storage == SQLITE_INTEGER || storage == SQLITE_FLOAT) return s.real(i);
      if (auto v = parse_double(s.text(i))) return *v;
      return std::monostate{};
    case ValueType::boolean: return s.integer(i) != 0;
    default: return s.text(i);
  }
}

}  // namespace

FeatureLayer Database::read_layer(const std::string& name, const crs::CrsRegistry& registry) const {
  const auto& db = impl_->db;
  const auto dt = impl_->data_type(name);
  if (!dt || *dt != "features") fail(Errc::NoSuchLayer, "no feature layer '" + name + "'");
  auto gq = db.prepare("SELECT column_name, srs_id FROM gpkg_geometry_columns WHERE table_name = ?1");
  gq.bind(1, name);
  if (!gq.step()) fail(Errc::NoSuchLayer, "layer '" + name + "' has no geometry column");
  const std::string geom_col = gq.text(0);
  const int srs = static_cast<int>(gq.integer(1));
  const CrsDef* crs = registry.find(srs);
  if (!crs) fail(Errc::UnknownCrs, "layer '" + name + "' uses EPSG:" + std::to_string(srs) + ", not in the registry");

  std::vector<AttributeField> schema;
  std::vector<std::string> cols;
  if (impl_->table_exists("argus_fields")) {
    auto fq = db.prepare(
        "SELECT column_name, raw_name, canonical_name, value_type, unit, description FROM argus_fields "
        "WHERE table_name = ?1 ORDER BY ordinal");
    fq.bind(1, name);
    while (fq.step()) {
      cols.push_back(fq.text(0));
      schema.push_back(AttributeField{fq.text(1), fq.optional_text(2), parse_value_type(fq.text(3)).value_or(ValueType::text),
                                      fq.optional_text(4), fq.optional_text(5)});
    }
  }
  std::string pk = "rowid";
  {
    auto ti = db.prepare("SELECT name, type, pk FROM pragma_table_info(?1)");
    ti.bind(1, name);
    const bool known = !cols.empty() || (impl_->table_exists("argus_layers") && [&] {
      auto q = db.prepare("SELECT 1 FROM argus_layers WHERE table_name = ?1");
      q.bind(1, name);
      return q.step();
    }());
    while (ti.step()) {
      const std::string col = ti.text(0);
      if (ti.integer(2) > 0) {
        pk = col;
        continue;
      }
      if (col == geom_col || known) continue;
      const auto t = type_from_sql(ti.text(1));
      if (!t) fail(Errc::UnsupportedType, "column '" + col + "' of '" + name + "' has SQL type " + ti.text(1));
      cols.push_back(col);
      schema.push_back(AttributeField{col, std::nullopt, *t, std::nullopt, std::nullopt});
    }
  }

  std::string sql = "SELECT " + quote_ident(geom_col);
  for (const auto& c : cols) sql += ", " + quote_ident(c);
  auto q = db.prepare(sql + " FROM " + quote_ident(name) + " ORDER BY " + quote_ident(pk));
  std::vector<Feature> rows;
  std::size_t skipped = 0;
  while (q.step()) {
    if (q.is_null(0)) {
      ++skipped;
      continue;
    }
    Feature f;
    f.geometry = decode_geometry(q.blob(0)).geometry;
    for (std::size_t i = 0; i < cols.size(); ++i) f.cells.push_back(read_cell(q, static_cast<int>(i) + 1, schema[i].value_type));
    rows.push_back(std::move(f));
  }

  Metadata md = impl_->read_metadata(name);
  if (skipped) md["read.null_geometries"] = std::to_string(skipped);
  bool standardized = false;
  if (impl_->table_exists("argus_layers")) {
    auto s = db.prepare("SELECT standardized FROM argus_layers WHERE table_name = ?1");
    s.bind(1, name);
    standardized = s.step() && s.integer(0) != 0;
  }
  return FeatureLayer(name, *crs, std::move(schema), std::move(rows), std::move(md), standardized);
}

std::string Database::sidecar_path(const std::string& name) const {
  const fs::path db(impl_->path);
  return (db.parent_path() / (db.stem().string() + "_" + name + ".asc")).string();
}

LayerSummary Database::register_raster_sidecar(const RasterGrid& grid, const std::string& raw_name) {
  auto& db = impl_->db;
  const std::string name = normalize_layer_name(raw_name);
  impl_->require_new(name);
  const std::string path = sidecar_path(name);
  const std::string text = ingest::write_ascii_grid(grid);
  write_file(path, text);
  const std::string digest = sha256_hex(text);
  const Envelope env = grid.envelope();
  const auto& md = grid.metadata();
  try {
    Transaction tx(db);
    impl_->ensure_srs(grid.crs());
    db.exec("CREATE TABLE " + quote_ident(name) +
            " (id INTEGER PRIMARY KEY NOT NULL, sidecar TEXT NOT NULL, sha256 TEXT NOT NULL, ncols INTEGER NOT NULL, "
            "nrows INTEGER NOT NULL, cell_size REAL NOT NULL, nodata REAL NOT NULL, band TEXT, unit TEXT, "
            "valid_cells INTEGER NOT NULL)");
    auto row = db.prepare("INSERT INTO " + quote_ident(name) + " VALUES (1, ?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)");
    const auto band = md.count("band.canonical") ? md.find("band.canonical") : md.find("band");
    row.bind(1, fs::path(path).filename().string()).bind(2, digest).bind(3, static_cast<std::int64_t>(grid.ncols()))
        .bind(4, static_cast<std::int64_t>(grid.nrows())).bind(5, grid.cell_size()).bind(6, grid.nodata());
    if (band != md.end()) row.bind(7, band->second);
    if (md.count("band.unit")) row.bind(8, md.at("band.unit"));
    row.bind(9, static_cast<std::int64_t>(grid.valid_count()));
    row.run();
    impl_->insert_contents(name, "attributes", env, grid.crs().srs_id);
    auto reg = db.prepare("INSERT INTO argus_rasters VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12)");
    reg.bind(1, name).bind(2, fs::path(path).filename().string()).bind(3, env.min_x).bind(4, env.min_y).bind(5, env.max_x)
        .bind(6, env.max_y).bind(7, grid.crs().srs_id).bind(8, grid.cell_size()).bind(9, static_cast<std::int64_t>(grid.ncols()))
        .bind(10, static_cast<std::int64_t>(grid.nrows())).bind(11, grid.nodata()).bind(12, digest);
    reg.run();
    auto al = db.prepare("INSERT INTO argus_layers VALUES (?1, 'raster_sidecar', ?2)");
    al.bind(1, name).bind(2, std::int64_t{md.count("band.canonical") ? 1 : 0});
    al.run();
    impl_->replace_metadata(name, md);
    tx.commit();
  } catch (...) {
    std::error_code ec;
    fs::remove(path, ec);
    throw;
  }
  return LayerSummary{name, LayerKind::raster_sidecar, grid.crs().srs_id, env, grid.nrows() * grid.ncols()};
}

RasterGrid Database::resolve_raster(const std::string& name, const crs::CrsRegistry& registry) const {
  auto q = impl_->db.prepare("SELECT sidecar, srs_id, sha256 FROM argus_rasters WHERE table_name = ?1");
  q.bind(1, name);
  if (!q.step()) fail(Errc::NoSuchLayer, "no raster '" + name + "'");
  const auto path = (fs::path(impl_->path).parent_path() / q.text(0)).string();
  const std::string text = read_file(path);
  if (sha256_hex(text) != q.text(2))
    fail(Errc::CorruptSidecar, "sidecar '" + q.text(0) + "' does not match its recorded SHA-256");
  const auto grid = ingest::read_ascii_grid(text, registry.get(static_cast<int>(q.integer(1))));
  return grid.with_metadata(impl_->read_metadata(name));
}

void Database::write_metadata(const std::string& layer, const Metadata& entries) {
  if (!impl_->data_type(layer)) fail(Errc::NoSuchLayer, "no layer '" + layer + "'");
  Metadata md = impl_->read_metadata(layer);
  for (const auto& [k, v] : entries) {
    if (trim(k).empty()) fail(Errc::InvalidArgument, "metadata keys must be nonempty");
    md[k] = v;
  }
  Transaction tx(impl_->db);
  impl_->replace_metadata(layer, md);
  tx.commit();
}

Metadata Database::read_metadata(const std::string& layer) const {
  if (!impl_->data_type(layer)) fail(Errc::NoSuchLayer, "no layer '" + layer + "'");
  return impl_->read_metadata(layer);
}

std::vector<LayerSummary> Database::list_layers() const {
  const auto& db = impl_->db;
  const bool has_rasters = impl_->table_exists("argus_rasters");
  auto q = db.prepare(
      "SELECT table_name, data_type, srs_id, min_x, min_y, max_x, max_y FROM gpkg_contents ORDER BY rowid");
  std::vector<LayerSummary> out;
  while (q.step()) {
    LayerSummary s;
    s.name = q.text(0);
    const std::string dt = q.text(1);
    s.srs_id = q.is_null(2) ? 0 : static_cast<int>(q.integer(2));
    if (!q.is_null(3)) s.bbox = Envelope{q.real(3), q.real(4), q.real(5), q.real(6)};
    if (dt == "features") {
      s.kind = LayerKind::vector;
      s.row_count = db.scalar_int("SELECT count(*) FROM " + quote_ident(s.name));
    } else if (dt == "attributes" && has_rasters) {
      auto r = db.prepare("SELECT ncols * nrows FROM argus_rasters WHERE table_name = ?1");
      r.bind(1, s.name);
      if (!r.step()) continue;
      s.kind = LayerKind::raster_sidecar;
      s.row_count = r.integer(0);
    } else {
      continue;
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::string> check_conformance(const std::string& path) {
  std::vector<std::string> v;
  std::vector<std::uint8_t> head(100);
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::IoFailure, "cannot open '" + path + "'");
    in.read(reinterpret_cast<char*>(head.data()), 100);
    if (in.gcount() < 100) return {"file shorter than the 100-byte database header"};
  }
  if (std::string_view(reinterpret_cast<const char*>(head.data()), 16) != std::string_view("SQLite format 3\0", 16))
    v.push_back("not an SQLite 3 database");
  if (!(head[68] == 'G' && head[69] == 'P' && head[70] == 'K' && head[71] == 'G'))
    v.push_back("application_id at offset 68 is not 'GPKG'");
  const std::uint32_t user_version = (std::uint32_t{head[60]} << 24) | (std::uint32_t{head[61]} << 16) |
                                     (std::uint32_t{head[62]} << 8) | head[63];
  if (user_version < 10200) v.push_back("user_version " + std::to_string(user_version) + " is below 10200");
  if (!v.empty()) return v;

  Connection db(path, SQLITE_OPEN_READONLY);
  {
    auto s = db.prepare("PRAGMA integrity_check");
    if (s.step() && s.text(0) != "ok") v.push_back("integrity_check: " + s.text(0));
  }
  auto exists = [&](const std::string& t) {
    auto s = db.prepare("SELECT 1 FROM sqlite_master WHERE type='table' AND name=?1");
    s.bind(1, t);
    return s.step();
  };
  for (const char* t : {"gpkg_spatial_ref_sys", "gpkg_contents", "gpkg_geometry_columns"})
    if (!exists(t)) v.push_back(std::string("required table ") + t + " is missing");
  if (!v.empty()) return v;

  for (int id : {-1, 0, 4326})
    if (db.scalar_int("SELECT count(*) FROM gpkg_spatial_ref_sys WHERE srs_id = " + std::to_string(id)) != 1)
      v.push_back("gpkg_spatial_ref_sys lacks srs_id " + std::to_string(id));
  {
    auto s = db.prepare(
        "SELECT table_name, srs_id FROM gpkg_contents WHERE srs_id IS NOT NULL AND srs_id NOT IN "
        "(SELECT srs_id FROM gpkg_spatial_ref_sys)");
    while (s.step()) v.push_back("gpkg_contents row '" + s.text(0) + "' references unknown srs_id " + s.text(1));
  }
  {
    auto s = db.prepare(
        "SELECT table_name FROM gpkg_geometry_columns WHERE table_name NOT IN "
        "(SELECT table_name FROM gpkg_contents WHERE data_type = 'features')");
    while (s.step()) v.push_back("geometry column of '" + s.text(0) + "' has no features row in gpkg_contents");
  }
  {
    auto s = db.prepare(
        "SELECT table_name FROM gpkg_contents WHERE data_type = 'features' AND table_name NOT IN "
        "(SELECT table_name FROM gpkg_geometry_columns)");
    while (s.step()) v.push_back("features table '" + s.text(0) + "' has no gpkg_geometry_columns row");
  }
  auto gc = db.prepare("SELECT table_name, column_name, geometry_type_name, srs_id FROM gpkg_geometry_columns");
  while (gc.step()) {
    const std::string table = gc.text(0), col = gc.text(1), type = to_upper(gc.text(2));
    const auto srs = gc.integer(3);
    if (db.scalar_int("SELECT count(*) FROM gpkg_spatial_ref_sys WHERE srs_id = " + std::to_string(srs)) != 1)
      v.push_back("geometry column of '" + table + "' references unknown srs_id " + std::to_string(srs));
    auto rows = db.prepare("SELECT rowid, " + quote_ident(col) + " FROM " + quote_ident(table));
    while (rows.step()) {
      if (rows.is_null(1)) continue;
      const std::string where = table + " row " + std::to_string(rows.integer(0));
      try {
        const auto blob = rows.blob(1);
        const auto d = decode_geometry(blob);
        if (d.srs_id != srs) v.push_back(where + ": blob srs_id " + std::to_string(d.srs_id) + " differs from column srs_id");
        if (type != "GEOMETRY" && type != geometry_type_name(d.geometry.kind()))
          v.push_back(where + ": " + geometry_type_name(d.geometry.kind()) + " in a " + type + " column");
        if (d.envelope) {
          bool inside = true;
          d.geometry.for_each_vertex([&](const Coord& c) {
            inside = inside && c.x() >= d.envelope->min_x && c.x() <= d.envelope->max_x && c.y() >= d.envelope->min_y &&
                     c.y() <= d.envelope->max_y;
          });
          if (!inside) v.push_back(where + ": envelope does not contain every vertex");
        }
      } catch (const Error& e) {
        v.push_back(where + ": " + e.what());
      }
    }
  }
  return v;
}

std::string content_digest(const std::string& path) {
  Connection db(path, SQLITE_OPEN_READONLY);
  Sha256 h;
  h.update("application_id=" + std::to_string(db.scalar_int("PRAGMA application_id")) + "\n");
  h.update("user_version=" + std::to_string(db.scalar_int("PRAGMA user_version")) + "\n");
  auto tables = db.prepare(
      "SELECT name, sql FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY name");
  while (tables.step()) {
    const std::string name = tables.text(0);
    h.update("table " + name + "\n" + tables.text(1) + "\n");
    std::vector<std::string> cols;
    auto ti = db.prepare("SELECT name FROM pragma_table_info(?1) ORDER BY cid");
    ti.bind(1, name);
    while (ti.step())
      if (ti.text(0) != "last_change" && ti.text(0) != "timestamp") cols.push_back(quote_ident(ti.text(0)));
    if (cols.empty()) continue;
    std::string list, order;
    for (std::size_t i = 0; i < cols.size(); ++i) {
      list += (i ? ", " : "") + cols[i];
      order += (i ? ", " : "") + std::to_string(i + 1);
    }
    auto rows = db.prepare("SELECT " + list + " FROM " + quote_ident(name) + " ORDER BY " + order);
    while (rows.step()) {
      for (int i = 0; i < rows.columns(); ++i) {
        switch (rows.type(i)) {
          case SQLITE_NULL: h.update("N;"); break;
          case SQLITE_INTEGER: h.update("I" + std::to_string(rows.integer(i)) + ";"); break;
          case SQLITE_FLOAT: h.update("F" + format_double(rows.real(i)) + ";"); break;
          case SQLITE_BLOB: {
            const auto b = rows.blob(i);
            h.update("B" + std::to_string(b.size()) + ":");
            h.update(b);
            h.update(";");
            break;
          }
          default: {
            const auto t = rows.text(i);
            h.update("T" + std::to_string(t.size()) + ":" + t + ";");
          }
        }
      }
      h.update("\n");
    }
  }
  return h.hex();
}

}  // namespace argus::gpkg
