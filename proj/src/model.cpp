#include "argus/model.hpp"

#include "argus/error.hpp"
#include "argus/text.hpp"

#include <cmath>
#include <ctime>
#include <iomanip>
#include <sstream>
#include <unordered_set>

namespace argus {

void CrsDef::validate() const {
  if (!(ellipsoid.semi_major_a > 0) || !(ellipsoid.inverse_flattening > 0))
    fail(Errc::InvalidArgument, "CRS " + std::to_string(srs_id) + ": ellipsoid parameters must be positive");
  if (kind == CrsKind::geographic && !(projection == ProjectionParams{}))
    fail(Errc::InvalidArgument, "CRS " + std::to_string(srs_id) + ": geographic CRS carries projection parameters");
}

const char* to_string(ValueType t) noexcept {
  switch (t) {
    case ValueType::text: return "text";
    case ValueType::integer: return "integer";
    case ValueType::real: return "real";
    case ValueType::boolean: return "boolean";
    case ValueType::date: return "date";
    case ValueType::categorical: return "categorical";
  }
  return "text";
}

std::optional<ValueType> parse_value_type(std::string_view s) {
  const std::string l = to_lower(trim(s));
  if (l == "text" || l == "string") return ValueType::text;
  if (l == "integer" || l == "int") return ValueType::integer;
  if (l == "real" || l == "double" || l == "float") return ValueType::real;
  if (l == "boolean" || l == "bool") return ValueType::boolean;
  if (l == "date") return ValueType::date;
  if (l == "categorical" || l == "category") return ValueType::categorical;
  return std::nullopt;
}

bool cell_matches(const Cell& c, ValueType t) noexcept {
  if (is_null(c)) return true;
  switch (t) {
    case ValueType::integer: return std::holds_alternative<std::int64_t>(c);
    case ValueType::real: return std::holds_alternative<double>(c) && std::isfinite(std::get<double>(c));
    case ValueType::boolean: return std::holds_alternative<bool>(c);
    case ValueType::date: return std::holds_alternative<std::string>(c) && is_iso_date(std::get<std::string>(c));
    case ValueType::text:
    case ValueType::categorical: return std::holds_alternative<std::string>(c);
  }
  return false;
}

std::string cell_to_string(const Cell& c) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::monostate>) return "NULL";
        else if constexpr (std::is_same_v<T, std::int64_t>) return std::to_string(v);
        else if constexpr (std::is_same_v<T, double>) return format_double(v);
        else if constexpr (std::is_same_v<T, bool>) return v ? "true" : "false";
        else return v;
      },
      c);
}

std::string AttributeField::column_name() const {
  if (canonical_name) return *canonical_name;
  return snake_case(raw_name);
}

std::string normalize_layer_name(std::string_view raw) {
  std::string name = snake_case(raw);
  if (name.empty()) fail(Errc::InvalidArgument, "layer name '" + std::string(raw) + "' has no usable characters");
  return name;
}

FeatureLayer::FeatureLayer(std::string name, CrsDef crs, std::vector<AttributeField> schema,
                           std::vector<Feature> rows, Metadata metadata, bool standardized)
    : name_(normalize_layer_name(name)),
      crs_(std::move(crs)),
      schema_(std::move(schema)),
      rows_(std::move(rows)),
      metadata_(std::move(metadata)),
      standardized_(standardized) {
  crs_.validate();
  std::unordered_set<std::string> columns;
  for (const auto& f : schema_) {
    if (f.raw_name.empty()) fail(Errc::InvalidLayer, name_ + ": field with empty raw name");
    if (f.canonical_name && !is_identifier(*f.canonical_name))
      fail(Errc::InvalidLayer, name_ + ": canonical name '" + *f.canonical_name + "' is not an identifier");
    const std::string col = f.column_name();
    if (col.empty()) fail(Errc::InvalidLayer, name_ + ": field '" + f.raw_name + "' has no usable column name");
    if (!columns.insert(col).second)
      fail(Errc::InvalidLayer, name_ + ": duplicate column '" + col + "'");
  }
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    const auto& row = rows_[r];
    if (row.cells.size() != schema_.size())
      fail(Errc::InvalidLayer, name_ + ": row " + std::to_string(r) + " has " + std::to_string(row.cells.size()) +
                                   " cells, schema has " + std::to_string(schema_.size()),
           static_cast<std::int64_t>(r));
    for (std::size_t c = 0; c < schema_.size(); ++c)
      if (!cell_matches(row.cells[c], schema_[c].value_type))
        fail(Errc::InvalidLayer, name_ + ": row " + std::to_string(r) + " field '" + schema_[c].raw_name +
                                     "' does not hold a " + to_string(schema_[c].value_type),
             static_cast<std::int64_t>(r));
    const auto violations = validate_geometry(row.geometry);
    if (!violations.empty())
      fail(Errc::InvalidGeometry, name_ + ": row " + std::to_string(r) + ": " + violations.front(),
           static_cast<std::int64_t>(r), violations);
  }
}

std::optional<std::size_t> FeatureLayer::field_index(std::string_view column) const {
  for (std::size_t i = 0; i < schema_.size(); ++i)
    if (schema_[i].column_name() == column) return i;
  for (std::size_t i = 0; i < schema_.size(); ++i)
    if (schema_[i].raw_name == column) return i;
  return std::nullopt;
}

Envelope FeatureLayer::envelope() const {
  Envelope env;
  for (const auto& row : rows_) env.expand(row.geometry.envelope());
  return env;
}

RasterGrid::RasterGrid(Coord origin, double cell_size, RasterValues values, double nodata, CrsDef crs,
                       Metadata metadata)
    : origin_(std::move(origin)),
      cell_size_(cell_size),
      values_(std::move(values)),
      nodata_(nodata),
      crs_(std::move(crs)),
      metadata_(std::move(metadata)) {
  if (!(cell_size_ > 0) || !std::isfinite(cell_size_)) fail(Errc::InvalidRaster, "cell size must be positive");
  if (values_.rows() < 1 || values_.cols() < 1) fail(Errc::InvalidRaster, "raster must have at least one cell");
  if (!origin_.allFinite()) fail(Errc::InvalidRaster, "raster origin must be finite");
  for (Eigen::Index i = 0; i < values_.size(); ++i) {
    const double v = values_.data()[i];
    if (v != nodata_ && !std::isfinite(v))
      fail(Errc::InvalidRaster, "non-finite raster value at cell " + std::to_string(i), i);
  }
  crs_.validate();
}

Envelope RasterGrid::envelope() const noexcept {
  Envelope env;
  env.expand(origin_);
  env.expand(Coord(origin_.x() + static_cast<double>(ncols()) * cell_size_,
                   origin_.y() + static_cast<double>(nrows()) * cell_size_));
  return env;
}

Eigen::Index RasterGrid::valid_count() const {
  return (values_.array() != nodata_).count();
}

RasterGrid RasterGrid::with_metadata(Metadata metadata) const {
  return RasterGrid(origin_, cell_size_, values_, nodata_, crs_, std::move(metadata));
}

RasterGrid RasterGrid::with_values(RasterValues values) const {
  return RasterGrid(origin_, cell_size_, std::move(values), nodata_, crs_, metadata_);
}

void SiteConfig::validate() const {
  if (site_id.empty()) fail(Errc::InvalidArgument, "site id must not be empty");
  if (boundary.kind() != GeometryKind::polygon && boundary.kind() != GeometryKind::multipolygon)
    fail(Errc::InvalidArgument, "site boundary must be a polygon");
  const auto violations = validate_geometry(boundary);
  if (!violations.empty()) fail(Errc::InvalidGeometry, "site boundary: " + violations.front());
  if (!contains(boundary, centroid)) fail(Errc::InvalidArgument, "site centroid lies outside the boundary");
}

const char* to_string(Stage s) noexcept {
  switch (s) {
    case Stage::ingest: return "ingest";
    case Stage::standardize: return "standardize";
    case Stage::enrich: return "enrich";
    case Stage::integrate: return "integrate";
    case Stage::query: return "query";
    case Stage::publish: return "publish";
  }
  return "ingest";
}

std::optional<Stage> parse_stage(std::string_view s) {
  for (Stage st : {Stage::ingest, Stage::standardize, Stage::enrich, Stage::integrate, Stage::query, Stage::publish})
    if (s == to_string(st)) return st;
  return std::nullopt;
}

std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const auto ms = duration_cast<milliseconds>(t.time_since_epoch()).count();
  std::time_t secs = static_cast<std::time_t>(ms >= 0 ? ms / 1000 : (ms - 999) / 1000);
  const int millis = static_cast<int>(ms - static_cast<long long>(secs) * 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, millis);
  return buf;
}

std::optional<Timestamp> parse_timestamp(std::string_view s) {
  s = trim(s);
  int y, mo, d, h = 0, mi = 0, sec = 0, ms = 0;
  const std::string str(s);
  int consumed = 0;
  if (std::sscanf(str.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &y, &mo, &d, &h, &mi, &sec, &consumed) != 6) {
    if (std::sscanf(str.c_str(), "%4d-%2d-%2d%n", &y, &mo, &d, &consumed) != 3 || consumed != 10) return std::nullopt;
  } else {
    std::string_view rest = s.substr(static_cast<std::size_t>(consumed));
    if (!rest.empty() && rest.front() == '.') {
      rest.remove_prefix(1);
      int digits = 0;
      while (!rest.empty() && rest.front() >= '0' && rest.front() <= '9') {
        if (digits < 3) ms = ms * 10 + (rest.front() - '0');
        ++digits;
        rest.remove_prefix(1);
      }
      for (; digits < 3; ++digits) ms *= 10;
    }
    if (rest != "Z" && !rest.empty()) return std::nullopt;
  }
  std::tm tm{};
  tm.tm_year = y - 1900;
  tm.tm_mon = mo - 1;
  tm.tm_mday = d;
  tm.tm_hour = h;
  tm.tm_min = mi;
  tm.tm_sec = sec;
  const std::time_t t = timegm(&tm);
  return std::chrono::system_clock::from_time_t(t) + std::chrono::milliseconds(ms);
}

bool is_sha256_hex(std::string_view s) noexcept {
  if (s.size() != 64) return false;
  for (char c : s)
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  return true;
}

void ProvenanceRecord::validate() const {
  if (!is_sha256_hex(sha256)) fail(Errc::InvalidArgument, "provenance sha256 must be 64 lowercase hex characters");
  if (finished < started) fail(Errc::InvalidArgument, "provenance record finishes before it starts");
}

}  // namespace argus
