#pragma once

#include "argus/crs.hpp"
#include "argus/model.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace argus::ingest {

enum class Format { shapefile, ascii_grid, geotiff, csv, txt, unknown };

const char* to_string(Format f) noexcept;
/// Accepts the names produced by to_string; "auto" yields nullopt.
std::optional<Format> parse_format(std::string_view s);

/// Magic number first (shapefile file code, TIFF byte-order marks, ASCII
/// grid header keyword), then the filename extension.
Format detect_format(std::span<const std::uint8_t> leading_bytes, std::string_view filename);

using Bytes = std::span<const std::uint8_t>;

inline Bytes as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

// --- vector ---------------------------------------------------------------

/// Shape types 0 (null), 1, 3, 5 and 8. Null shapes and deleted DBF records
/// are dropped together with their attribute row.
FeatureLayer read_shapefile(Bytes shp, Bytes dbf, std::optional<std::string_view> prj, std::string_view name,
                            std::optional<int> crs_override = std::nullopt,
                            const crs::CrsRegistry& registry = crs::CrsRegistry::standard());

struct CsvOptions {
  std::optional<std::string> lon_column;
  std::optional<std::string> lat_column;
};

/// Rows without coordinate columns are geocoded to the site centroid.
FeatureLayer read_csv(std::string_view text, const SiteConfig& site, std::string_view name,
                      const CsvOptions& options = {});

struct ExtractionPattern {
  std::string field_name;
  std::string regex;  // exactly one capture group
  ValueType value_type = ValueType::text;
};

struct ExtractionResult {
  std::vector<AttributeField> schema;
  std::vector<std::vector<Cell>> rows;
  std::vector<std::size_t> skipped_lines;  // 1-based line numbers

  /// Every row placed at the site centroid, as for other non-spatial data.
  FeatureLayer to_layer(std::string_view name, const SiteConfig& site) const;
};

ExtractionResult extract_structured(std::string_view text, const std::vector<ExtractionPattern>& patterns);

// --- raster ---------------------------------------------------------------

RasterGrid read_ascii_grid(std::string_view text, const CrsDef& crs);
std::string write_ascii_grid(const RasterGrid& grid);

/// Classic single-band, uncompressed, strip-organised GeoTIFF.
RasterGrid read_geotiff_minimal(Bytes bytes, const crs::CrsRegistry& registry = crs::CrsRegistry::standard(),
                                std::optional<int> crs_override = std::nullopt);

// --- files ----------------------------------------------------------------

struct SourceDescriptor {
  std::string path;
  std::optional<Format> declared_format;  // unset means auto
  std::optional<int> crs_override;
  std::string encoding = "UTF-8";
  CsvOptions csv;
  std::vector<ExtractionPattern> patterns;  // txt inputs
  std::map<std::string, std::string> units; // raw field name -> unit
  std::string band = "value";               // raster attribute name

  void validate() const;
};

using Dataset = std::variant<FeatureLayer, RasterGrid>;

/// Reads a source from disk, resolving sidecar files (.dbf/.prj) by stem.
/// Rejects spreadsheet formats with instructions to export CSV.
Dataset load_source(const SourceDescriptor& source, const SiteConfig& site, std::string_view name,
                    const crs::CrsRegistry& registry = crs::CrsRegistry::standard());

}  // namespace argus::ingest
