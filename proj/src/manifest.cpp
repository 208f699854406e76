#include "argus/pipeline.hpp"
#include "argus/text.hpp"

#include <filesystem>
#include <set>

namespace argus::pipeline {

namespace fs = std::filesystem;

const char* to_string(StepKind k) noexcept {
  switch (k) {
    case StepKind::idw: return "idw";
    case StepKind::kriging: return "kriging";
    case StepKind::kde: return "kde";
    case StepKind::one_hot: return "one_hot";
    case StepKind::augment: return "augment";
  }
  return "?";
}

std::optional<StepKind> parse_step_kind(std::string_view s) {
  for (auto k : {StepKind::idw, StepKind::kriging, StepKind::kde, StepKind::one_hot, StepKind::augment})
    if (iequals(s, to_string(k))) return k;
  return std::nullopt;
}

const InputSpec* PipelineManifest::input(std::string_view id) const {
  for (const auto& i : inputs)
    if (i.id == id) return &i;
  return nullptr;
}

namespace {

struct Entry {
  std::string key;
  std::string value;
  int line;
};

struct Section {
  std::string kind;
  std::string name;
  int line;
  std::vector<Entry> entries;
};

[[noreturn]] void parse_error(int line, const std::string& what) {
  fail(Errc::ParseError, "manifest line " + std::to_string(line) + ": " + what, line);
}

std::vector<Section> split_sections(std::string_view text) {
  std::vector<Section> out;
  const auto lines = split(text, '\n');
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const int ln = static_cast<int>(i) + 1;
    std::string_view raw = lines[i];
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') parse_error(ln, "unterminated section header");
      const auto inner = trim(line.substr(1, line.size() - 2));
      const auto space = inner.find_first_of(" \t");
      Section s{to_lower(inner.substr(0, space)), "", ln, {}};
      if (space != std::string_view::npos) s.name = std::string(trim(inner.substr(space)));
      out.push_back(std::move(s));
      continue;
    }
    // Indented lines continue the previous value.
    if ((raw.front() == ' ' || raw.front() == '\t') && !out.empty() && !out.back().entries.empty()) {
      out.back().entries.back().value += " " + std::string(line);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) parse_error(ln, "expected 'key = value'");
    if (out.empty()) parse_error(ln, "entry outside any section");
    const auto key = to_lower(trim(line.substr(0, eq)));
    if (key.empty()) parse_error(ln, "empty key");
    out.back().entries.push_back({key, std::string(trim(line.substr(eq + 1))), ln});
  }
  return out;
}

double number(const Entry& e) {
  const auto v = parse_double(e.value);
  if (!v || !std::isfinite(*v)) parse_error(e.line, "'" + e.key + "' must be a number, got '" + e.value + "'");
  return *v;
}

double positive(const Entry& e) {
  const double v = number(e);
  if (v <= 0) parse_error(e.line, "'" + e.key + "' must be positive");
  return v;
}

std::int64_t integer(const Entry& e) {
  const auto v = parse_int(e.value);
  if (!v) parse_error(e.line, "'" + e.key + "' must be an integer, got '" + e.value + "'");
  return *v;
}

bool boolean(const Entry& e) {
  const auto v = to_lower(e.value);
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  parse_error(e.line, "'" + e.key + "' must be true or false");
}

std::vector<double> numbers(const Entry& e) {
  std::vector<double> out;
  std::string cleaned = e.value;
  for (char& c : cleaned)
    if (c == ',' || c == '\t') c = ' ';
  for (const auto& part : split(cleaned, ' ')) {
    if (trim(part).empty()) continue;
    const auto v = parse_double(trim(part));
    if (!v) parse_error(e.line, "'" + e.key + "' holds a non-number '" + std::string(trim(part)) + "'");
    out.push_back(*v);
  }
  return out;
}

std::string resolve(const std::string& base, const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base) / path).lexically_normal().string();
}

[[noreturn]] void unknown_key(const Section& s, const Entry& e) {
  fail(Errc::UnknownKey, "manifest line " + std::to_string(e.line) + ": unknown key '" + e.key + "' in [" + s.kind + "]",
       e.line, {e.key});
}

// Rejects a key given twice within one section.
void no_repeats(const Section& s, std::initializer_list<std::string_view> repeatable = {}) {
  std::set<std::string> seen;
  for (const auto& e : s.entries) {
    if (std::find(repeatable.begin(), repeatable.end(), e.key) != repeatable.end()) continue;
    if (!seen.insert(e.key).second) parse_error(e.line, "'" + e.key + "' given twice in [" + s.kind + "]");
  }
}

void parse_site(const Section& s, PipelineManifest& m) {
  bool centroid = false, boundary = false;
  for (const auto& e : s.entries) {
    if (e.key == "id") {
      m.site.site_id = e.value;
    } else if (e.key == "centroid") {
      const auto v = numbers(e);
      if (v.size() != 2) parse_error(e.line, "centroid needs 'lon lat'");
      m.site.centroid = Coord(v[0], v[1]);
      centroid = true;
    } else if (e.key == "boundary") {
      const auto v = numbers(e);
      if (v.size() < 6 || v.size() % 2) parse_error(e.line, "boundary needs at least three 'lon lat' pairs");
      std::vector<Coord> ring;
      for (std::size_t i = 0; i < v.size(); i += 2) ring.emplace_back(v[i], v[i + 1]);
      if (ring.front() != ring.back()) ring.push_back(ring.front());
      m.site.boundary = Polygon{{ring}};
      boundary = true;
    } else {
      unknown_key(s, e);
    }
  }
  if (m.site.site_id.empty() || !centroid || !boundary) parse_error(s.line, "[site] needs id, centroid and boundary");
  try {
    m.site.validate();
  } catch (const Error& err) {
    parse_error(s.line, err.what());
  }
}

void parse_input(const Section& s, const std::string& base, PipelineManifest& m) {
  if (s.name.empty()) parse_error(s.line, "[input] needs a name, e.g. [input meteo]");
  InputSpec in{s.name, {}, s.line};
  try {
    in.id = normalize_layer_name(s.name);
  } catch (const Error&) {
    parse_error(s.line, "input name '" + s.name + "' is not usable as a layer name");
  }
  if (in.id != s.name) parse_error(s.line, "input name '" + s.name + "' must be a lower-case identifier such as '" + in.id + "'");
  for (const auto& e : s.entries) {
    if (e.key == "path") {
      in.source.path = resolve(base, e.value);
    } else if (e.key == "format") {
      try {
        in.source.declared_format = ingest::parse_format(e.value);
      } catch (const Error&) {
        parse_error(e.line, "unknown format '" + e.value + "'");
      }
    } else if (e.key == "crs") {
      in.source.crs_override = static_cast<int>(integer(e));
    } else if (e.key == "encoding") {
      in.source.encoding = e.value;
    } else if (e.key == "lon") {
      in.source.csv.lon_column = e.value;
    } else if (e.key == "lat") {
      in.source.csv.lat_column = e.value;
    } else if (e.key == "band") {
      in.source.band = e.value;
    } else if (istarts_with(e.key, "unit.") && e.key.size() > 5) {
      in.source.units[e.key.substr(5)] = e.value;
    } else if (istarts_with(e.key, "pattern.") && e.key.size() > 8) {
      // pattern.<field> = <type>: <regex>
      const auto colon = e.value.find(':');
      if (colon == std::string::npos) parse_error(e.line, "pattern needs '<type>: <regex>'");
      const auto type = parse_value_type(trim(std::string_view(e.value).substr(0, colon)));
      if (!type) parse_error(e.line, "unknown value type in pattern");
      in.source.patterns.push_back({e.key.substr(8), std::string(trim(std::string_view(e.value).substr(colon + 1))), *type});
    } else {
      unknown_key(s, e);
    }
  }
  if (in.source.path.empty()) parse_error(s.line, "[input " + s.name + "] needs a path");
  m.inputs.push_back(std::move(in));
}

void parse_step(const Section& s, PipelineManifest& m) {
  if (s.name.empty()) parse_error(s.line, "[step] needs a name");
  EnrichmentStep st;
  st.name = s.name;
  st.line = s.line;
  bool has_kind = false;
  for (const auto& e : s.entries) {
    if (e.key == "kind") {
      const auto k = parse_step_kind(e.value);
      if (!k) parse_error(e.line, "unknown step kind '" + e.value + "' (idw, kriging, kde, one_hot, augment)");
      st.kind = *k;
      has_kind = true;
    } else if (e.key == "source") {
      st.source = e.value;
    } else if (e.key == "target") {
      st.target = e.value;
    } else if (e.key == "column") {
      st.column = e.value;
    } else if (e.key == "cell_size") {
      st.cell_size = positive(e);
    } else if (e.key == "crs") {
      st.crs = static_cast<int>(integer(e));
    } else if (e.key == "bbox") {
      const auto v = numbers(e);
      if (v.size() != 4 || v[2] <= v[0] || v[3] <= v[1]) parse_error(e.line, "bbox needs 'min_x min_y max_x max_y'");
      st.bbox = Envelope{v[0], v[1], v[2], v[3]};
    } else if (e.key == "power") {
      st.power = positive(e);
    } else if (e.key == "max_radius") {
      st.max_radius = positive(e);
    } else if (e.key == "variogram") {
      const auto k = enrich::parse_variogram_kind(e.value);
      if (!k) parse_error(e.line, "unknown variogram model '" + e.value + "'");
      st.variogram = *k;
    } else if (e.key == "bins") {
      st.bins = static_cast<int>(integer(e));
      if (st.bins < 2) parse_error(e.line, "bins must be at least 2");
    } else if (e.key == "jitter") {
      st.jitter = boolean(e);
    } else if (e.key == "bandwidth") {
      st.bandwidth = positive(e);
    } else if (e.key == "category") {
      st.category = e.value;
    } else if (e.key == "count") {
      const auto n = integer(e);
      if (n < 1) parse_error(e.line, "count must be positive");
      st.count = static_cast<std::size_t>(n);
    } else if (e.key == "sigma") {
      st.sigma = positive(e);
    } else if (e.key == "seed") {
      st.seed = static_cast<std::uint64_t>(integer(e));
    } else {
      unknown_key(s, e);
    }
  }
  if (!has_kind) parse_error(s.line, "[step " + s.name + "] needs a kind");
  if (st.source.empty() || st.target.empty()) parse_error(s.line, "[step " + s.name + "] needs source and target");
  const bool needs_column = st.kind != StepKind::kde;
  if (needs_column && st.column.empty()) parse_error(s.line, "[step " + s.name + "] needs a column");
  if (st.produces_raster() && st.cell_size <= 0) parse_error(s.line, "[step " + s.name + "] needs cell_size");
  if (st.kind == StepKind::augment && (st.category.empty() || st.count == 0 || st.sigma <= 0))
    parse_error(s.line, "[step " + s.name + "] needs category, count and sigma");
  m.steps.push_back(std::move(st));
}

void parse_coverage(const Section& s, PipelineManifest& m) {
  CoverageTarget c{s.name, "", 0, "", s.line};
  if (c.name.empty()) parse_error(s.line, "[coverage] needs a name");
  for (const auto& e : s.entries) {
    if (e.key == "points") c.points = e.value;
    else if (e.key == "radius") c.radius = positive(e);
    else if (e.key == "raster") c.raster = e.value;
    else unknown_key(s, e);
  }
  if (c.points.empty() || c.raster.empty() || c.radius <= 0)
    parse_error(s.line, "[coverage " + c.name + "] needs points, radius and raster");
  m.coverage.push_back(std::move(c));
}

void parse_publish(const Section& s, const std::string& base, PipelineManifest& m) {
  PublishConfig p;
  for (const auto& e : s.entries) {
    if (e.key == "license") {
      p.license = e.value;
    } else if (e.key == "title") {
      p.title = e.value;
    } else if (e.key == "creators") {
      for (const auto& c : split(e.value, ';'))
        if (!trim(c).empty()) p.creators.emplace_back(trim(c));
    } else if (e.key == "doi") {
      p.doi = e.value;
    } else if (e.key == "directory") {
      p.directory = resolve(base, e.value);
    } else {
      unknown_key(s, e);
    }
  }
  if (p.license.empty() || p.title.empty() || p.directory.empty())
    parse_error(s.line, "[publish] needs license, title and directory");
  if (!find_license(p.license))
    fail(Errc::UnknownLicense, "manifest line " + std::to_string(s.line) + ": unknown license '" + p.license + "'", s.line);
  m.publish = std::move(p);
}

void parse_qa(const Section& s, PipelineManifest& m) {
  query::RemoteQaConfig q;
  for (const auto& e : s.entries) {
    if (e.key == "endpoint") q.url = e.value;
    else if (e.key == "timeout_ms") q.timeout = std::chrono::milliseconds(integer(e));
    else unknown_key(s, e);
  }
  try {
    q.validate();
  } catch (const Error& err) {
    parse_error(s.line, err.what());
  }
  m.qa = std::move(q);
}

[[noreturn]] void dangling(const std::string& where, int line, const std::string& missing) {
  fail(Errc::DanglingReference,
       "manifest line " + std::to_string(line) + ": " + where + " refers to undeclared layer '" + missing + "'", line,
       {where, missing});
}

void check_references(PipelineManifest& m) {
  std::set<std::string> vectors, rasters, names;
  for (const auto& in : m.inputs) {
    if (!names.insert(in.id).second) parse_error(in.line, "duplicate input id '" + in.id + "'");
    // Format is only known for sure after ingest; treat grid formats as rasters.
    const auto f = in.source.declared_format;
    const auto ext = to_lower(fs::path(in.source.path).extension().string());
    const bool raster = f ? (*f == ingest::Format::ascii_grid || *f == ingest::Format::geotiff)
                          : (ext == ".asc" || ext == ".grd" || ext == ".tif" || ext == ".tiff");
    (raster ? rasters : vectors).insert(in.id);
  }
  for (const auto& st : m.steps) {
    if (!vectors.count(st.source)) {
      if (rasters.count(st.source))
        parse_error(st.line, "step '" + st.name + "' needs a vector source, '" + st.source + "' is a raster");
      dangling("step '" + st.name + "'", st.line, st.source);
    }
    const bool replaces = !st.produces_raster() && st.target == st.source;
    if (!replaces) {
      std::string normalized;
      try {
        normalized = normalize_layer_name(st.target);
      } catch (const Error&) {
      }
      if (normalized != st.target) parse_error(st.line, "target '" + st.target + "' must be a lower-case identifier");
      if (!names.insert(st.target).second) parse_error(st.line, "target '" + st.target + "' is already a layer");
    }
    (st.produces_raster() ? rasters : vectors).insert(st.target);
  }
  for (const auto& c : m.coverage) {
    if (!vectors.count(c.points)) dangling("coverage '" + c.name + "'", c.line, c.points);
    if (!rasters.count(c.raster)) dangling("coverage '" + c.name + "'", c.line, c.raster);
  }
}

}  // namespace

PipelineManifest load_manifest(std::string_view text, const std::string& base_dir) {
  PipelineManifest m;
  bool site = false, dictionary = false, output = false;
  std::set<std::string> singletons;
  for (const auto& s : split_sections(text)) {
    const bool single = s.kind == "site" || s.kind == "dictionary" || s.kind == "output" || s.kind == "analysis" ||
                        s.kind == "publish" || s.kind == "qa";
    if (single && !singletons.insert(s.kind).second) parse_error(s.line, "[" + s.kind + "] given twice");
    no_repeats(s, {"sql"});
    if (s.kind == "site") {
      parse_site(s, m);
      site = true;
    } else if (s.kind == "dictionary") {
      for (const auto& e : s.entries) {
        if (e.key != "path") unknown_key(s, e);
        m.dictionary_path = resolve(base_dir, e.value);
        dictionary = true;
      }
    } else if (s.kind == "output") {
      for (const auto& e : s.entries) {
        if (e.key == "gpkg") {
          m.output_gpkg = resolve(base_dir, e.value);
          output = true;
        } else if (e.key == "timestamp") {
          m.timestamp = parse_timestamp(e.value);
          if (!m.timestamp) parse_error(e.line, "timestamp must be ISO-8601 UTC, e.g. 2024-05-01T00:00:00Z");
        } else {
          unknown_key(s, e);
        }
      }
    } else if (s.kind == "input") {
      parse_input(s, base_dir, m);
    } else if (s.kind == "step") {
      parse_step(s, m);
    } else if (s.kind == "coverage") {
      parse_coverage(s, m);
    } else if (s.kind == "analysis") {
      for (const auto& e : s.entries) {
        if (e.key != "sql") unknown_key(s, e);
        try {
          query::check_read_only(e.value);
        } catch (const Error& err) {
          parse_error(e.line, err.what());
        }
        m.analysis.push_back(e.value);
      }
    } else if (s.kind == "publish") {
      parse_publish(s, base_dir, m);
    } else if (s.kind == "qa") {
      parse_qa(s, m);
    } else {
      fail(Errc::UnknownKey, "manifest line " + std::to_string(s.line) + ": unknown section [" + s.kind + "]", s.line,
           {s.kind});
    }
  }
  if (!site) parse_error(1, "missing [site] section");
  if (!dictionary) parse_error(1, "missing [dictionary] path");
  if (!output) parse_error(1, "missing [output] gpkg");
  if (m.inputs.empty()) parse_error(1, "no [input] sections");
  check_references(m);
  return m;
}

PipelineManifest load_manifest_file(const std::string& path) {
  const auto base = fs::path(path).parent_path().string();
  return load_manifest(read_file(path), base.empty() ? "." : base);
}

}  // namespace argus::pipeline
