#pragma once

#include "argus/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

// Writers used only to build test inputs. They produce the subset the
// readers accept, plus switches for the malformed variants.
namespace argus::fixtures {

struct ShapefileBytes {
  std::vector<std::uint8_t> shp, shx, dbf;
  std::string prj;
};

/// Point, multipoint, linestring, polygon and multipolygon layers. A layer
/// with mixed kinds is rejected.
ShapefileBytes write_shapefile(const FeatureLayer& layer);

/// Writes <dir>/<stem>.{shp,shx,dbf,prj}; returns the .shp path.
std::string save_shapefile(const FeatureLayer& layer, const std::string& dir, const std::string& stem);

struct TiffOptions {
  std::uint16_t compression = 1;
  bool georeferenced = true;
  bool tiled = false;
  bool big_endian = false;
  bool pixel_is_point = false;
  std::optional<int> srs;  // defaults to the grid CRS
  bool write_nodata = true;
};

/// Float32 single-strip GeoTIFF. With compression != 1 the pixel bytes are
/// still raw; only the tag changes.
std::vector<std::uint8_t> write_geotiff(const RasterGrid& grid, const TiffOptions& options = {});

}  // namespace argus::fixtures
