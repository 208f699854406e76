#pragma once

#include "argus/crs.hpp"
#include "argus/model.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

struct sqlite3;

namespace argus::gpkg {

inline constexpr std::uint32_t kApplicationId = 0x47504B47;  // "GPKG"
inline constexpr int kUserVersion = 10300;

// --- geometry blobs ---------------------------------------------------------

/// Standard header (little-endian, XY envelope) followed by ISO WKB.
std::vector<std::uint8_t> encode_geometry(const Geometry& g, int srs_id);

struct DecodedGeometry {
  Geometry geometry;
  int srs_id = 0;
  std::optional<Envelope> envelope;
};

/// Accepts either byte order and any envelope indicator. CorruptGeometryBlob
/// carries the byte offset of the violation; Z/M and unsupported WKB types
/// raise UnsupportedType.
DecodedGeometry decode_geometry(std::span<const std::uint8_t> blob);

std::vector<std::uint8_t> encode_wkb(const Geometry& g);
Geometry decode_wkb(std::span<const std::uint8_t> wkb);

// --- database ---------------------------------------------------------------

enum class LayerKind { vector, raster_sidecar };

struct LayerSummary {
  std::string name;
  LayerKind kind = LayerKind::vector;
  int srs_id = 0;
  std::optional<Envelope> bbox;
  std::int64_t row_count = 0;
};

struct CreateOptions {
  bool overwrite = false;
  /// Value for last_change/timestamp columns. Unset: SOURCE_DATE_EPOCH when
  /// defined, else the current time.
  std::optional<Timestamp> timestamp;
};

class Database {
 public:
  static Database create(const std::string& path, const CreateOptions& options = {});
  static Database open(const std::string& path, bool writable = false);

  Database(Database&&) noexcept;
  Database& operator=(Database&&) noexcept;
  ~Database();

  const std::string& path() const noexcept;
  void set_timestamp(std::optional<Timestamp> t);

  /// Feature table with an integer key, one column per attribute and a
  /// `geom` column. Layer metadata goes to gpkg_metadata.
  LayerSummary write_layer(const FeatureLayer& layer);
  /// Works on tables written by other GeoPackage producers too, typing
  /// columns from their declared SQL types.
  FeatureLayer read_layer(const std::string& name,
                          const crs::CrsRegistry& registry = crs::CrsRegistry::standard()) const;

  /// ESRI ASCII grid next to the database, named `<db stem>_<name>.asc`.
  LayerSummary register_raster_sidecar(const RasterGrid& grid, const std::string& name);
  /// Re-reads the sidecar after checking its SHA-256 (CorruptSidecar).
  RasterGrid resolve_raster(const std::string& name,
                            const crs::CrsRegistry& registry = crs::CrsRegistry::standard()) const;
  std::string sidecar_path(const std::string& name) const;

  /// Merges into the layer's metadata record; newer values win.
  void write_metadata(const std::string& layer, const Metadata& entries);
  Metadata read_metadata(const std::string& layer) const;

  std::vector<LayerSummary> list_layers() const;
  bool has_layer(const std::string& name) const;

  sqlite3* handle() const noexcept;

 private:
  struct Impl;
  explicit Database(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

/// Byte-level and relational checks; empty when the file conforms.
std::vector<std::string> check_conformance(const std::string& path);

/// SHA-256 over schema and rows of every table, leaving out timestamp
/// columns. Equal digests mean equal database content.
std::string content_digest(const std::string& path);

}  // namespace argus::gpkg
