#pragma once

#include "argus/geometry.hpp"

#include <Eigen/Core>

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace argus {

using Metadata = std::map<std::string, std::string>;

// ---------------------------------------------------------------------------
// Coordinate reference systems

struct Ellipsoid {
  double semi_major_a = 6378137.0;
  double inverse_flattening = 298.257223563;

  double flattening() const noexcept { return 1.0 / inverse_flattening; }
  double semi_minor_b() const noexcept { return semi_major_a * (1.0 - flattening()); }
  /// First eccentricity squared.
  double e2() const noexcept { return flattening() * (2.0 - flattening()); }
  bool operator==(const Ellipsoid&) const = default;
};

/// Position-vector 7-parameter datum shift towards WGS84.
struct HelmertParams {
  double dx = 0, dy = 0, dz = 0;  // meters
  double rx = 0, ry = 0, rz = 0;  // arc-seconds
  double scale_ppm = 0;
  bool is_identity() const noexcept {
    return dx == 0 && dy == 0 && dz == 0 && rx == 0 && ry == 0 && rz == 0 && scale_ppm == 0;
  }
  bool operator==(const HelmertParams&) const = default;
};

struct ProjectionParams {
  double lat_origin = 0;  // degrees
  double lon_origin = 0;  // degrees
  double scale_factor_k0 = 1;
  double false_easting = 0;
  double false_northing = 0;
  bool operator==(const ProjectionParams&) const = default;
};

enum class CrsKind { geographic, transverse_mercator, lambert_azimuthal_equal_area };

struct CrsDef {
  int srs_id = 4326;
  CrsKind kind = CrsKind::geographic;
  Ellipsoid ellipsoid;
  HelmertParams helmert_to_wgs84;
  ProjectionParams projection;
  std::string name = "WGS 84";
  std::vector<std::string> wkt_aliases;
  /// Definition text stored in gpkg_spatial_ref_sys.
  std::string wkt;

  bool is_geographic() const noexcept { return kind == CrsKind::geographic; }
  /// Throws InvalidArgument when an invariant does not hold.
  void validate() const;
  bool operator==(const CrsDef& other) const noexcept { return srs_id == other.srs_id; }
};

// ---------------------------------------------------------------------------
// Attribute model

enum class ValueType { text, integer, real, boolean, date, categorical };

const char* to_string(ValueType t) noexcept;
std::optional<ValueType> parse_value_type(std::string_view s);

/// Null is an explicit alternative. Dates and categorical values are strings.
using Cell = std::variant<std::monostate, std::int64_t, double, bool, std::string>;

inline bool is_null(const Cell& c) noexcept { return std::holds_alternative<std::monostate>(c); }
bool cell_matches(const Cell& c, ValueType t) noexcept;
std::string cell_to_string(const Cell& c);

struct AttributeField {
  std::string raw_name;
  std::optional<std::string> canonical_name;
  ValueType value_type = ValueType::text;
  std::optional<std::string> unit;
  std::optional<std::string> description;

  /// Column name used downstream: canonical when set, else snake_case(raw).
  std::string column_name() const;
  bool operator==(const AttributeField&) const = default;
};

struct Feature {
  std::vector<Cell> cells;
  Geometry geometry;
  bool operator==(const Feature&) const = default;
};

/// Immutable vector dataset. The constructor enforces every invariant
/// (row arity, cell types, geometry validity, identifier-safe name).
class FeatureLayer {
 public:
  FeatureLayer(std::string name, CrsDef crs, std::vector<AttributeField> schema,
               std::vector<Feature> rows, Metadata metadata = {}, bool standardized = false);

  const std::string& name() const noexcept { return name_; }
  const CrsDef& crs() const noexcept { return crs_; }
  const std::vector<AttributeField>& schema() const noexcept { return schema_; }
  const std::vector<Feature>& rows() const noexcept { return rows_; }
  const Metadata& metadata() const noexcept { return metadata_; }
  bool standardized() const noexcept { return standardized_; }

  std::optional<std::size_t> field_index(std::string_view column) const;
  Envelope envelope() const;

  bool operator==(const FeatureLayer&) const = default;

 private:
  std::string name_;
  CrsDef crs_;
  std::vector<AttributeField> schema_;
  std::vector<Feature> rows_;
  Metadata metadata_;
  bool standardized_;
};

/// Normalizes a dataset name to a SQL-safe identifier; throws InvalidArgument
/// when nothing usable remains.
std::string normalize_layer_name(std::string_view raw);

// ---------------------------------------------------------------------------
// Rasters

/// Row 0 is the bottom row; column 0 is the west-most column.
using RasterValues = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class RasterGrid {
 public:
  RasterGrid(Coord origin, double cell_size, RasterValues values, double nodata, CrsDef crs,
             Metadata metadata = {});

  const Coord& origin() const noexcept { return origin_; }
  double cell_size() const noexcept { return cell_size_; }
  Eigen::Index ncols() const noexcept { return values_.cols(); }
  Eigen::Index nrows() const noexcept { return values_.rows(); }
  double nodata() const noexcept { return nodata_; }
  const RasterValues& values() const noexcept { return values_; }
  const CrsDef& crs() const noexcept { return crs_; }
  const Metadata& metadata() const noexcept { return metadata_; }

  double at(Eigen::Index row, Eigen::Index col) const { return values_(row, col); }
  bool is_nodata(double v) const noexcept { return v == nodata_; }
  Coord cell_center(Eigen::Index row, Eigen::Index col) const noexcept {
    return origin_ + Coord((static_cast<double>(col) + 0.5) * cell_size_,
                           (static_cast<double>(row) + 0.5) * cell_size_);
  }
  Envelope envelope() const noexcept;
  Eigen::Index valid_count() const;

  RasterGrid with_metadata(Metadata metadata) const;
  RasterGrid with_values(RasterValues values) const;

  bool operator==(const RasterGrid& o) const {
    return origin_ == o.origin_ && cell_size_ == o.cell_size_ && values_ == o.values_ &&
           nodata_ == o.nodata_ && crs_ == o.crs_ && metadata_ == o.metadata_;
  }

 private:
  Coord origin_;
  double cell_size_;
  RasterValues values_;
  double nodata_;
  CrsDef crs_;
  Metadata metadata_;
};

// ---------------------------------------------------------------------------

struct SiteConfig {
  std::string site_id;
  Coord centroid;     // lon, lat (WGS84)
  Geometry boundary;  // polygon in WGS84

  void validate() const;
};

enum class Stage { ingest, standardize, enrich, integrate, query, publish };

const char* to_string(Stage s) noexcept;
std::optional<Stage> parse_stage(std::string_view s);

using Timestamp = std::chrono::system_clock::time_point;

/// ISO-8601 UTC with millisecond precision, e.g. 2024-05-01T12:00:00.000Z.
std::string format_timestamp(Timestamp t);
std::optional<Timestamp> parse_timestamp(std::string_view s);

struct ProvenanceRecord {
  std::string input_id;
  std::string sha256;
  Stage stage = Stage::ingest;
  Timestamp started;
  Timestamp finished;
  std::map<std::string, std::string> parameters;
  std::string tool_version;

  void validate() const;
};

bool is_sha256_hex(std::string_view s) noexcept;

inline constexpr const char* kToolVersion = "argus 0.1.0";

}  // namespace argus
