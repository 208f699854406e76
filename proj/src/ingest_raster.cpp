#include "argus/ingest.hpp"

#include "argus/text.hpp"
#include "byte_reader.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace argus::ingest {

// ---------------------------------------------------------------------------
// ESRI ASCII grid

RasterGrid read_ascii_grid(std::string_view text, const CrsDef& crs) {
  std::map<std::string, std::string> header;
  std::size_t pos = 0;
  // Header lines start with a letter; data begins at the first line that doesn't.
  while (pos < text.size()) {
    const auto eol = text.find('\n', pos);
    const auto line = trim(text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos));
    if (!line.empty()) {
      const char c = line.front();
      if (!((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'))) break;
      const auto sp = line.find_first_of(" \t");
      if (sp == std::string_view::npos) fail(Errc::MissingHeaderKey, "ASCII grid header line without value");
      header[to_lower(line.substr(0, sp))] = std::string(trim(line.substr(sp)));
    }
    if (eol == std::string_view::npos) {
      pos = text.size();
      break;
    }
    pos = eol + 1;
  }

  auto number = [&](const std::string& key) -> std::optional<double> {
    const auto it = header.find(key);
    if (it == header.end()) return std::nullopt;
    const auto v = parse_double(it->second);
    if (!v) fail(Errc::NonNumericCell, "ASCII grid header '" + key + "' is not numeric");
    return v;
  };
  auto required = [&](const std::string& key) {
    const auto v = number(key);
    if (!v) fail(Errc::MissingHeaderKey, "ASCII grid header lacks " + to_upper(key));
    return *v;
  };

  const double ncols_d = required("ncols");
  const double nrows_d = required("nrows");
  const double cell = required("cellsize");
  if (ncols_d < 1 || nrows_d < 1 || ncols_d != std::floor(ncols_d) || nrows_d != std::floor(nrows_d))
    fail(Errc::MissingHeaderKey, "ASCII grid NCOLS/NROWS must be positive integers");
  const auto ncols = static_cast<Eigen::Index>(ncols_d);
  const auto nrows = static_cast<Eigen::Index>(nrows_d);

  double x0, y0;
  if (auto x = number("xllcorner")) x0 = *x;
  else if (auto xc = number("xllcenter")) x0 = *xc - cell / 2;
  else fail(Errc::MissingHeaderKey, "ASCII grid header lacks XLLCORNER or XLLCENTER");
  if (auto y = number("yllcorner")) y0 = *y;
  else if (auto yc = number("yllcenter")) y0 = *yc - cell / 2;
  else fail(Errc::MissingHeaderKey, "ASCII grid header lacks YLLCORNER or YLLCENTER");
  const double nodata = number("nodata_value").value_or(-9999.0);

  RasterValues values(nrows, ncols);
  const Eigen::Index total = nrows * ncols;
  Eigen::Index k = 0;
  std::size_t i = pos;
  while (i < text.size()) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\r' || text[i] == '\n')) ++i;
    if (i >= text.size()) break;
    std::size_t j = i;
    while (j < text.size() && !(text[j] == ' ' || text[j] == '\t' || text[j] == '\r' || text[j] == '\n')) ++j;
    const auto token = text.substr(i, j - i);
    const auto v = parse_double(token);
    if (!v) fail(Errc::NonNumericCell, "ASCII grid cell " + std::to_string(k) + " is '" + std::string(token) + "'", k);
    if (k < total) {
      // First data row is the top of the grid.
      const Eigen::Index row = nrows - 1 - k / ncols;
      values(row, k % ncols) = (std::isfinite(*v) ? *v : nodata);
    }
    ++k;
    i = j;
  }
  if (k != total)
    fail(Errc::CellCountMismatch, "ASCII grid declares " + std::to_string(total) + " cells, found " + std::to_string(k), k);

  Metadata md{{"source.format", "ascii_grid"}};
  return RasterGrid(Coord(x0, y0), cell, std::move(values), nodata, crs, std::move(md));
}

std::string write_ascii_grid(const RasterGrid& grid) {
  std::string out;
  out += "ncols " + std::to_string(grid.ncols()) + "\n";
  out += "nrows " + std::to_string(grid.nrows()) + "\n";
  out += "xllcorner " + format_double(grid.origin().x()) + "\n";
  out += "yllcorner " + format_double(grid.origin().y()) + "\n";
  out += "cellsize " + format_double(grid.cell_size()) + "\n";
  out += "NODATA_value " + format_double(grid.nodata()) + "\n";
  for (Eigen::Index r = grid.nrows() - 1; r >= 0; --r) {
    for (Eigen::Index c = 0; c < grid.ncols(); ++c) {
      if (c) out += ' ';
      out += format_double(grid.at(r, c));
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Minimal GeoTIFF

namespace {

using detail::ByteReader;

enum Tag : std::uint16_t {
  kImageWidth = 256,
  kImageLength = 257,
  kBitsPerSample = 258,
  kCompression = 259,
  kStripOffsets = 273,
  kSamplesPerPixel = 277,
  kRowsPerStrip = 278,
  kStripByteCounts = 279,
  kPredictor = 317,
  kTileWidth = 322,
  kTileOffsets = 324,
  kSampleFormat = 339,
  kModelPixelScale = 33550,
  kModelTiepoint = 33922,
  kGeoKeyDirectory = 34735,
  kGdalNodata = 42113,
};

struct IfdEntry {
  std::uint16_t type;
  std::uint32_t count;
  std::size_t value_offset;  // where the values live
};

std::size_t type_size(std::uint16_t type) {
  switch (type) {
    case 1: case 2: case 6: case 7: return 1;
    case 3: case 8: return 2;
    case 4: case 9: case 11: return 4;
    case 5: case 10: case 12: return 8;
    default: return 0;
  }
}

class TiffReader {
 public:
  explicit TiffReader(Bytes bytes) : r_(bytes, Errc::MalformedHeader, "TIFF") {
    r_.require(0, 8);
    const auto b0 = r_.u8(0), b1 = r_.u8(1);
    if (b0 == 'I' && b1 == 'I') le_ = true;
    else if (b0 == 'M' && b1 == 'M') le_ = false;
    else fail(Errc::MalformedHeader, "TIFF: bad byte-order mark");
    if (r_.u16(2, le_) != 42) fail(Errc::MalformedHeader, "TIFF: not a classic TIFF (magic != 42)");
    const std::size_t ifd = r_.u32(4, le_);
    const std::size_t n = r_.u16(ifd, le_);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t e = ifd + 2 + 12 * i;
      IfdEntry entry;
      const std::uint16_t tag = r_.u16(e, le_);
      entry.type = r_.u16(e + 2, le_);
      entry.count = r_.u32(e + 4, le_);
      const std::size_t bytes_needed = type_size(entry.type) * entry.count;
      entry.value_offset = bytes_needed <= 4 ? e + 8 : r_.u32(e + 8, le_);
      entries_[tag] = entry;
    }
  }

  bool has(std::uint16_t tag) const { return entries_.count(tag) != 0; }

  std::vector<double> numbers(std::uint16_t tag) const {
    const auto& e = entries_.at(tag);
    std::vector<double> out;
    for (std::uint32_t i = 0; i < e.count; ++i) {
      const std::size_t o = e.value_offset + i * type_size(e.type);
      switch (e.type) {
        case 1: out.push_back(r_.u8(o)); break;
        case 3: out.push_back(r_.u16(o, le_)); break;
        case 4: out.push_back(r_.u32(o, le_)); break;
        case 8: out.push_back(r_.read<std::int16_t>(o, le_)); break;
        case 9: out.push_back(r_.i32(o, le_)); break;
        case 11: out.push_back(r_.read<float>(o, le_)); break;
        case 12: out.push_back(r_.f64(o, le_)); break;
        default: fail(Errc::MalformedHeader, "TIFF: tag " + std::to_string(tag) + " has unsupported type");
      }
    }
    return out;
  }

  double number(std::uint16_t tag, double fallback) const {
    if (!has(tag)) return fallback;
    const auto v = numbers(tag);
    return v.empty() ? fallback : v.front();
  }

  std::string ascii(std::uint16_t tag) const {
    const auto& e = entries_.at(tag);
    std::string s = r_.text(e.value_offset, e.count);
    return s.substr(0, s.find('\0'));
  }

  const ByteReader& reader() const { return r_; }
  bool little_endian() const { return le_; }

 private:
  ByteReader r_;
  bool le_ = true;
  std::map<std::uint16_t, IfdEntry> entries_;
};

double read_sample(const ByteReader& r, std::size_t o, int bits, int format, bool le) {
  if (format == 3) {
    if (bits == 32) return r.read<float>(o, le);
    if (bits == 64) return r.f64(o, le);
  } else if (format == 2) {
    if (bits == 8) return r.read<std::int8_t>(o, le);
    if (bits == 16) return r.read<std::int16_t>(o, le);
    if (bits == 32) return r.read<std::int32_t>(o, le);
  } else if (format == 1) {
    if (bits == 8) return r.u8(o);
    if (bits == 16) return r.u16(o, le);
    if (bits == 32) return r.u32(o, le);
  }
  fail(Errc::UnsupportedLayout, "TIFF: " + std::to_string(bits) + "-bit sample format " + std::to_string(format) +
                                    " is not supported");
}

}  // namespace

RasterGrid read_geotiff_minimal(Bytes bytes, const crs::CrsRegistry& registry, std::optional<int> crs_override) {
  const TiffReader tiff(bytes);
  const double compression = tiff.number(kCompression, 1);
  if (compression != 1) fail(Errc::UnsupportedCompression, "TIFF compression " + format_double(compression) + " is not supported",
                             static_cast<std::int64_t>(compression));
  if (tiff.number(kPredictor, 1) != 1) fail(Errc::UnsupportedCompression, "TIFF predictor is not supported");
  if (tiff.has(kTileWidth) || tiff.has(kTileOffsets)) fail(Errc::UnsupportedLayout, "tiled TIFF is not supported");
  if (tiff.number(kSamplesPerPixel, 1) != 1) fail(Errc::UnsupportedLayout, "TIFF must be single-band");
  if (!tiff.has(kImageWidth) || !tiff.has(kImageLength) || !tiff.has(kStripOffsets))
    fail(Errc::MalformedHeader, "TIFF lacks image dimensions or strip offsets");
  if (!tiff.has(kModelPixelScale) || !tiff.has(kModelTiepoint))
    fail(Errc::MissingGeoreference, "TIFF lacks ModelPixelScale or ModelTiepoint");

  const auto width = static_cast<Eigen::Index>(tiff.number(kImageWidth, 0));
  const auto height = static_cast<Eigen::Index>(tiff.number(kImageLength, 0));
  const int bits = static_cast<int>(tiff.number(kBitsPerSample, 1));
  const int format = static_cast<int>(tiff.number(kSampleFormat, 1));
  if (width < 1 || height < 1) fail(Errc::MalformedHeader, "TIFF has empty dimensions");

  const auto scale = tiff.numbers(kModelPixelScale);
  const auto tie = tiff.numbers(kModelTiepoint);
  if (scale.size() < 2 || tie.size() < 6) fail(Errc::MissingGeoreference, "TIFF georeference tags are incomplete");
  if (scale[0] <= 0 || std::abs(scale[0] - scale[1]) > 1e-12 * scale[0])
    fail(Errc::UnsupportedLayout, "TIFF pixels must be square");

  // GeoKeys
  int raster_type = 1;
  std::optional<int> srs;
  if (tiff.has(kGeoKeyDirectory)) {
    const auto keys = tiff.numbers(kGeoKeyDirectory);
    std::optional<int> geographic, projected;
    for (std::size_t k = 4; k + 3 < keys.size(); k += 4) {
      if (keys[k + 1] != 0) continue;  // values stored elsewhere; none we need
      const int id = static_cast<int>(keys[k]);
      const int value = static_cast<int>(keys[k + 3]);
      if (id == 1025) raster_type = value;
      if (id == 2048) geographic = value;
      if (id == 3072) projected = value;
    }
    srs = projected ? projected : geographic;
  }
  if (!srs || *srs == 32767) srs = crs_override;
  if (!srs) fail(Errc::UnknownCrs, "TIFF GeoKeys name no registered CRS");
  const CrsDef& crs = registry.get(*srs);

  const double cell = scale[0];
  double left = tie[3] - tie[0] * cell;
  double top = tie[4] + tie[1] * cell;
  if (raster_type == 2) {  // PixelIsPoint
    left -= cell / 2;
    top += cell / 2;
  }

  double nodata = -9999.0;
  bool nan_nodata = false;
  if (tiff.has(kGdalNodata)) {
    const std::string s(trim(tiff.ascii(kGdalNodata)));
    if (iequals(s, "nan")) nan_nodata = true;
    else if (auto v = parse_double(s)) nodata = *v;
  }

  const auto offsets = tiff.numbers(kStripOffsets);
  const auto counts = tiff.has(kStripByteCounts) ? tiff.numbers(kStripByteCounts) : std::vector<double>{};
  std::vector<std::uint8_t> pixels;
  const std::size_t bytes_per = static_cast<std::size_t>(bits) / 8;
  const std::size_t needed = static_cast<std::size_t>(width * height) * bytes_per;
  const auto& r = tiff.reader();
  for (std::size_t s = 0; s < offsets.size() && pixels.size() < needed; ++s) {
    const auto off = static_cast<std::size_t>(offsets[s]);
    const std::size_t n = s < counts.size() ? static_cast<std::size_t>(counts[s]) : needed - pixels.size();
    r.require(off, n);
    pixels.insert(pixels.end(), r.bytes().begin() + static_cast<std::ptrdiff_t>(off),
                  r.bytes().begin() + static_cast<std::ptrdiff_t>(off + n));
  }
  if (pixels.size() < needed) fail(Errc::MalformedHeader, "TIFF strips hold fewer bytes than the image needs");
  const ByteReader pr(pixels, Errc::MalformedHeader, "TIFF strip data");

  RasterValues values(height, width);
  for (Eigen::Index row = 0; row < height; ++row) {
    for (Eigen::Index col = 0; col < width; ++col) {
      const std::size_t o = static_cast<std::size_t>(row * width + col) * bytes_per;
      double v = read_sample(pr, o, bits, format, tiff.little_endian());
      if (!std::isfinite(v) || (nan_nodata && std::isnan(v))) v = nodata;
      values(height - 1 - row, col) = v;
    }
  }
  Metadata md{{"source.format", "geotiff"}};
  return RasterGrid(Coord(left, top - static_cast<double>(height) * cell), cell, std::move(values), nodata, crs,
                    std::move(md));
}

}  // namespace argus::ingest
