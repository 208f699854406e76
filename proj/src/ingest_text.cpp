#include "argus/ingest.hpp"

#include "argus/text.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <regex>

namespace argus::ingest {

const char* to_string(Format f) noexcept {
  switch (f) {
    case Format::shapefile: return "shapefile";
    case Format::ascii_grid: return "ascii_grid";
    case Format::geotiff: return "geotiff";
    case Format::csv: return "csv";
    case Format::txt: return "txt";
    case Format::unknown: return "unknown";
  }
  return "unknown";
}

std::optional<Format> parse_format(std::string_view s) {
  const std::string k = to_lower(trim(s));
  for (Format f : {Format::shapefile, Format::ascii_grid, Format::geotiff, Format::csv, Format::txt})
    if (k == to_string(f)) return f;
  if (k == "auto" || k.empty()) return std::nullopt;
  fail(Errc::UnsupportedFormat, "unknown format '" + std::string(s) + "'");
}

namespace {

std::string extension_of(std::string_view filename) {
  return to_lower(std::filesystem::path(std::string(filename)).extension().string());
}

}  // namespace

Format detect_format(std::span<const std::uint8_t> b, std::string_view filename) {
  if (b.size() >= 4) {
    if (b[0] == 0x00 && b[1] == 0x00 && b[2] == 0x27 && b[3] == 0x0A) return Format::shapefile;
    if (b[0] == 'I' && b[1] == 'I' && b[2] == 0x2A && b[3] == 0x00) return Format::geotiff;
    if (b[0] == 'M' && b[1] == 'M' && b[2] == 0x00 && b[3] == 0x2A) return Format::geotiff;
  }
  std::string_view head(reinterpret_cast<const char*>(b.data()), b.size());
  if (istarts_with(trim(head), "ncols")) return Format::ascii_grid;

  const std::string ext = extension_of(filename);
  if (ext == ".shp") return Format::shapefile;
  if (ext == ".asc" || ext == ".grd") return Format::ascii_grid;
  if (ext == ".tif" || ext == ".tiff") return Format::geotiff;
  if (ext == ".csv" || ext == ".tsv") return Format::csv;
  if (ext == ".txt") return Format::txt;
  return Format::unknown;
}

// ---------------------------------------------------------------------------
// Delimited text

namespace {

using Record = std::vector<std::string>;

// RFC 4180 records; quoted fields may span lines.
std::vector<Record> parse_delimited(std::string_view text, char delim, std::size_t max_records = SIZE_MAX) {
  std::vector<Record> out;
  Record rec;
  std::string field;
  bool quoted = false, any = false;
  auto end_record = [&] {
    rec.push_back(std::move(field));
    field.clear();
    // A blank line is not a record.
    if (!(rec.size() == 1 && rec[0].empty() && !any)) out.push_back(std::move(rec));
    rec.clear();
    any = false;
  };
  for (std::size_t i = 0; i < text.size() && out.size() < max_records; ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == delim) {
      rec.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_record();
    } else {
      field += c;
      any = true;
    }
  }
  if ((any || !field.empty() || !rec.empty()) && out.size() < max_records) end_record();
  return out;
}

char detect_delimiter(std::string_view text) {
  char best = ',';
  std::size_t best_consistent = 0, best_width = 0;
  for (char d : {',', ';', '\t'}) {
    const auto recs = parse_delimited(text, d, 10);
    if (recs.empty() || recs[0].size() < 2) continue;
    const std::size_t width = recs[0].size();
    const auto consistent = static_cast<std::size_t>(
        std::count_if(recs.begin(), recs.end(), [&](const Record& r) { return r.size() == width; }));
    if (consistent > best_consistent || (consistent == best_consistent && width > best_width)) {
      best = d;
      best_consistent = consistent;
      best_width = width;
    }
  }
  return best;
}

std::optional<bool> parse_bool(std::string_view s) {
  if (iequals(s, "true") || iequals(s, "yes")) return true;
  if (iequals(s, "false") || iequals(s, "no")) return false;
  return std::nullopt;
}

ValueType infer_type(const std::vector<Record>& rows, std::size_t col) {
  bool all_int = true, all_real = true, all_bool = true, all_date = true, seen = false;
  for (const auto& r : rows) {
    const auto v = trim(r[col]);
    if (v.empty()) continue;
    seen = true;
    all_int = all_int && parse_int(v).has_value();
    all_real = all_real && parse_double(v).has_value();
    all_bool = all_bool && parse_bool(v).has_value();
    all_date = all_date && is_iso_date(v);
  }
  if (!seen) return ValueType::text;
  if (all_int) return ValueType::integer;
  if (all_real) return ValueType::real;
  if (all_bool) return ValueType::boolean;
  if (all_date) return ValueType::date;
  return ValueType::text;
}

Cell convert(std::string_view raw, ValueType t) {
  const auto v = trim(raw);
  if (v.empty()) return std::monostate{};
  switch (t) {
    case ValueType::integer: return *parse_int(v);
    case ValueType::real: return *parse_double(v);
    case ValueType::boolean: return *parse_bool(v);
    default: return std::string(v);
  }
}

// "depth (m)" and "depth [m]" carry a unit.
std::pair<std::string, std::optional<std::string>> split_unit(std::string_view header) {
  const auto h = trim(header);
  if (h.size() > 2 && (h.back() == ')' || h.back() == ']')) {
    const char open = h.back() == ')' ? '(' : '[';
    const auto p = h.rfind(open);
    if (p != std::string_view::npos && p > 0) {
      const auto unit = trim(h.substr(p + 1, h.size() - p - 2));
      const auto name = trim(h.substr(0, p));
      if (!unit.empty() && !name.empty()) return {std::string(name), std::string(unit)};
    }
  }
  return {std::string(h), std::nullopt};
}

std::optional<std::size_t> find_column(const std::vector<AttributeField>& schema, std::string_view wanted) {
  for (std::size_t i = 0; i < schema.size(); ++i)
    if (iequals(schema[i].raw_name, wanted) || schema[i].column_name() == snake_case(wanted)) return i;
  return std::nullopt;
}

std::optional<std::size_t> auto_column(const std::vector<AttributeField>& schema,
                                       std::initializer_list<std::string_view> names) {
  for (auto n : names)
    for (std::size_t i = 0; i < schema.size(); ++i)
      if (iequals(schema[i].raw_name, n)) return i;
  return std::nullopt;
}

std::string decode_text(std::string_view text, Metadata& md) {
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF)
    text.remove_prefix(3);
  if (is_valid_utf8(text)) return std::string(text);
  md["ingest.encoding_fallback"] = "latin1";
  return latin1_to_utf8(text);
}

}  // namespace

FeatureLayer read_csv(std::string_view raw, const SiteConfig& site, std::string_view name, const CsvOptions& options) {
  Metadata md{{"source.format", "csv"}};
  const std::string text = decode_text(raw, md);
  if (trim(text).empty()) fail(Errc::EmptyInput, "CSV input is empty");

  const char delim = detect_delimiter(text);
  auto records = parse_delimited(text, delim);
  if (records.empty()) fail(Errc::EmptyInput, "CSV input has no header");
  const Record header = std::move(records.front());
  records.erase(records.begin());
  for (std::size_t r = 0; r < records.size(); ++r)
    if (records[r].size() != header.size())
      fail(Errc::RaggedRow,
           "CSV row " + std::to_string(r + 1) + " has " + std::to_string(records[r].size()) + " cells, header has " +
               std::to_string(header.size()),
           static_cast<std::int64_t>(r + 1));

  std::vector<AttributeField> schema;
  std::vector<std::string> used;
  for (std::size_t c = 0; c < header.size(); ++c) {
    auto [fname, unit] = split_unit(header[c]);
    if (snake_case(fname).empty()) fname = "column_" + std::to_string(c + 1);
    // Keep downstream column names unique.
    std::string col = snake_case(fname);
    for (int k = 2; std::find(used.begin(), used.end(), col) != used.end(); ++k) {
      fname = std::string(trim(split_unit(header[c]).first)) + "_" + std::to_string(k);
      col = snake_case(fname);
    }
    used.push_back(col);
    AttributeField f;
    f.raw_name = fname;
    f.unit = unit;
    f.value_type = infer_type(records, c);
    schema.push_back(std::move(f));
  }

  std::optional<std::size_t> lon, lat;
  if (options.lon_column) {
    lon = find_column(schema, *options.lon_column);
    if (!lon) fail(Errc::NoSuchColumn, "CSV has no column '" + *options.lon_column + "'");
  } else {
    lon = auto_column(schema, {"lon", "lng", "long", "longitude", "x"});
  }
  if (options.lat_column) {
    lat = find_column(schema, *options.lat_column);
    if (!lat) fail(Errc::NoSuchColumn, "CSV has no column '" + *options.lat_column + "'");
  } else {
    lat = auto_column(schema, {"lat", "latitude", "y"});
  }
  const bool located = lon && lat;
  if (!located) md["geocoded"] = "site_centroid";

  std::vector<Feature> rows;
  rows.reserve(records.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    Feature f;
    for (std::size_t c = 0; c < header.size(); ++c) f.cells.push_back(convert(records[r][c], schema[c].value_type));
    if (located) {
      const auto x = parse_double(trim(records[r][*lon]));
      const auto y = parse_double(trim(records[r][*lat]));
      if (!x || !y)
        fail(Errc::InvalidGeometry, "CSV row " + std::to_string(r + 1) + " has no numeric coordinates",
             static_cast<std::int64_t>(r + 1));
      f.geometry = Geometry(Point{Coord(*x, *y)});
    } else {
      f.geometry = Geometry(Point{site.centroid});
    }
    rows.push_back(std::move(f));
  }
  return FeatureLayer(std::string(name), crs::CrsRegistry::standard().get(4326), std::move(schema), std::move(rows),
                      std::move(md));
}

// ---------------------------------------------------------------------------
// Plain text extraction

ExtractionResult extract_structured(std::string_view text, const std::vector<ExtractionPattern>& patterns) {
  if (patterns.empty()) fail(Errc::InvalidPattern, "at least one extraction pattern is required");
  std::vector<std::regex> compiled;
  for (const auto& p : patterns) {
    try {
      compiled.emplace_back(p.regex);
    } catch (const std::regex_error& e) {
      fail(Errc::InvalidPattern, "pattern for '" + p.field_name + "' does not compile: " + e.what());
    }
    if (compiled.back().mark_count() != 1)
      fail(Errc::InvalidPattern, "pattern for '" + p.field_name + "' must have exactly one capture group");
  }

  ExtractionResult out;
  for (const auto& p : patterns) out.schema.push_back(AttributeField{p.field_name, std::nullopt, p.value_type, {}, {}});

  const auto lines = split(text, '\n');
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty()) continue;
    std::vector<Cell> row;
    bool ok = true;
    for (std::size_t k = 0; k < patterns.size() && ok; ++k) {
      std::smatch m;
      const std::string s(line);
      if (!std::regex_search(s, m, compiled[k])) {
        ok = false;
        break;
      }
      const std::string v = m[1].str();
      switch (patterns[k].value_type) {
        case ValueType::integer:
          if (auto n = parse_int(v)) row.emplace_back(*n);
          else ok = false;
          break;
        case ValueType::real:
          if (auto d = parse_double(v)) row.emplace_back(*d);
          else ok = false;
          break;
        case ValueType::boolean:
          if (auto b = parse_bool(v)) row.emplace_back(*b);
          else ok = false;
          break;
        case ValueType::date:
          if (is_iso_date(v)) row.emplace_back(v);
          else ok = false;
          break;
        default: row.emplace_back(v);
      }
    }
    if (ok) out.rows.push_back(std::move(row));
    else out.skipped_lines.push_back(i + 1);
  }
  return out;
}

FeatureLayer ExtractionResult::to_layer(std::string_view name, const SiteConfig& site) const {
  std::vector<Feature> features;
  features.reserve(rows.size());
  for (const auto& r : rows) features.push_back(Feature{r, Geometry(Point{site.centroid})});
  Metadata md{{"source.format", "txt"}, {"geocoded", "site_centroid"},
              {"ingest.skipped_lines", std::to_string(skipped_lines.size())}};
  return FeatureLayer(std::string(name), crs::CrsRegistry::standard().get(4326), schema, std::move(features),
                      std::move(md));
}

// ---------------------------------------------------------------------------
// Files

void SourceDescriptor::validate() const {
  if (trim(path).empty()) fail(Errc::InvalidArgument, "source path is empty");
  if (band.empty()) fail(Errc::InvalidArgument, "raster band name is empty");
  const auto e = to_lower(encoding);
  if (e != "utf-8" && e != "utf8" && e != "latin1" && e != "latin-1" && e != "iso-8859-1" && e != "iso8859-1" &&
      e != "cp1252")
    fail(Errc::InvalidArgument, "unsupported text encoding '" + encoding + "' (UTF-8 or latin1)");
}

namespace {

namespace fs = std::filesystem;

std::optional<fs::path> sibling(const fs::path& p, std::string_view ext) {
  for (const std::string& e : {std::string(ext), to_upper(ext)}) {
    auto q = p;
    q.replace_extension(e);
    if (fs::exists(q)) return q;
  }
  return std::nullopt;
}

bool is_latin1(std::string_view enc) {
  const auto e = to_lower(enc);
  return e == "latin1" || e == "latin-1" || e == "iso-8859-1" || e == "iso8859-1" || e == "cp1252";
}

FeatureLayer with_units(const FeatureLayer& layer, const std::map<std::string, std::string>& units,
                        const std::string& source_file) {
  auto schema = layer.schema();
  for (const auto& [field, unit] : units) {
    auto it = std::find_if(schema.begin(), schema.end(), [&](const AttributeField& f) {
      return iequals(f.raw_name, field) || f.column_name() == snake_case(field);
    });
    if (it == schema.end()) fail(Errc::NoSuchColumn, "unit given for unknown field '" + field + "'");
    it->unit = unit;
  }
  auto md = layer.metadata();
  md["source.file"] = source_file;
  return FeatureLayer(layer.name(), layer.crs(), std::move(schema), layer.rows(), std::move(md), layer.standardized());
}

}  // namespace

Dataset load_source(const SourceDescriptor& source, const SiteConfig& site, std::string_view name,
                    const crs::CrsRegistry& registry) {
  source.validate();
  const fs::path path(source.path);
  const std::string ext = extension_of(source.path);
  if (ext == ".xlsx" || ext == ".xls" || ext == ".accdb" || ext == ".mdb")
    fail(Errc::UnsupportedFormat,
         "'" + path.filename().string() + "' is a spreadsheet/database file; export it to CSV and ingest the CSV");

  const auto bytes = read_file_bytes(source.path);
  const Format format = source.declared_format.value_or(detect_format(
      std::span<const std::uint8_t>(bytes.data(), std::min<std::size_t>(bytes.size(), 64)), source.path));
  const std::string file = path.filename().string();

  auto decoded = [&]() -> std::string {
    std::string_view raw(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    return is_latin1(source.encoding) ? latin1_to_utf8(raw) : std::string(raw);
  };

  switch (format) {
    case Format::shapefile: {
      const auto dbf_path = sibling(path, ".dbf");
      if (!dbf_path) fail(Errc::IoFailure, "shapefile '" + file + "' has no .dbf sidecar");
      const auto dbf = read_file_bytes(dbf_path->string());
      std::optional<std::string> prj;
      if (auto p = sibling(path, ".prj")) prj = read_file(p->string());
      auto layer = read_shapefile(bytes, dbf, prj ? std::optional<std::string_view>(*prj) : std::nullopt, name,
                                  source.crs_override, registry);
      return with_units(layer, source.units, file);
    }
    case Format::csv:
      return with_units(read_csv(decoded(), site, name, source.csv), source.units, file);
    case Format::txt: {
      if (source.patterns.empty()) fail(Errc::InvalidPattern, "text source '" + file + "' needs extraction patterns");
      return with_units(extract_structured(decoded(), source.patterns).to_layer(name, site), source.units, file);
    }
    case Format::ascii_grid:
    case Format::geotiff: {
      std::optional<RasterGrid> grid;
      if (format == Format::geotiff) {
        grid = read_geotiff_minimal(bytes, registry, source.crs_override);
      } else {
        std::optional<int> srs = source.crs_override;
        if (!srs)
          if (auto p = sibling(path, ".prj")) srs = registry.resolve_wkt(read_file(p->string()));
        if (!srs) fail(Errc::UnknownCrs, "ASCII grid '" + file + "' has no .prj and no CRS override");
        grid = read_ascii_grid(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                               registry.get(*srs));
      }
      auto md = grid->metadata();
      md["band"] = source.band;
      md["source.file"] = file;
      for (const auto& [field, unit] : source.units) {
        if (field != source.band) fail(Errc::NoSuchColumn, "unit given for unknown band '" + field + "'");
        md["band.unit"] = unit;
      }
      return grid->with_metadata(std::move(md));
    }
    case Format::unknown: break;
  }
  fail(Errc::UnsupportedFormat, "cannot determine the format of '" + file + "'");
}

}  // namespace argus::ingest
