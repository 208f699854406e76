#include "argus/pipeline.hpp"

#include "argus/crs.hpp"
#include "argus/hash.hpp"
#include "argus/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

namespace argus::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Provenance

void ProvenanceLog::append(ProvenanceRecord r) {
  r.validate();
  std::lock_guard lock(mu_);
  records_.push_back(std::move(r));
}

void ProvenanceLog::set_order(std::vector<std::string> ids) {
  std::lock_guard lock(mu_);
  order_ = std::move(ids);
}

std::vector<ProvenanceRecord> ProvenanceLog::records() const {
  std::lock_guard lock(mu_);
  auto out = records_;
  auto rank = [&](const std::string& id) {
    const auto it = std::find(order_.begin(), order_.end(), id);
    return static_cast<std::size_t>(it - order_.begin());
  };
  std::stable_sort(out.begin(), out.end(), [&](const auto& a, const auto& b) {
    if (a.stage != b.stage) return static_cast<int>(a.stage) < static_cast<int>(b.stage);
    return rank(a.input_id) < rank(b.input_id);
  });
  return out;
}

std::string to_json_line(const ProvenanceRecord& r) {
  json j{{"input_id", r.input_id},
         {"sha256", r.sha256},
         {"stage", to_string(r.stage)},
         {"started", format_timestamp(r.started)},
         {"finished", format_timestamp(r.finished)},
         {"parameters", r.parameters},
         {"tool_version", r.tool_version}};
  return j.dump();
}

ProvenanceRecord parse_json_line(std::string_view line) {
  try {
    const auto j = json::parse(line);
    ProvenanceRecord r;
    r.input_id = j.at("input_id").get<std::string>();
    r.sha256 = j.at("sha256").get<std::string>();
    const auto stage = parse_stage(j.at("stage").get<std::string>());
    const auto started = parse_timestamp(j.at("started").get<std::string>());
    const auto finished = parse_timestamp(j.at("finished").get<std::string>());
    if (!stage || !started || !finished) fail(Errc::ParseError, "provenance record has a bad stage or timestamp");
    r.stage = *stage;
    r.started = *started;
    r.finished = *finished;
    r.parameters = j.at("parameters").get<std::map<std::string, std::string>>();
    r.tool_version = j.at("tool_version").get<std::string>();
    r.validate();
    return r;
  } catch (const json::exception& e) {
    fail(Errc::ParseError, std::string("provenance record: ") + e.what());
  }
}

void write_provenance(const std::string& path, const std::vector<ProvenanceRecord>& records) {
  std::string out;
  for (const auto& r : records) out += to_json_line(r) + "\n";
  write_file(path, out);
}

void append_provenance(const std::string& path, const ProvenanceRecord& record) {
  record.validate();
  std::ofstream f(path, std::ios::app | std::ios::binary);
  if (!f) fail(Errc::IoFailure, "cannot append to '" + path + "'");
  f << to_json_line(record) << "\n";
}

std::vector<ProvenanceRecord> read_provenance(const std::string& path) {
  std::vector<ProvenanceRecord> out;
  for (const auto& line : split(read_file(path), '\n'))
    if (!trim(line).empty()) out.push_back(parse_json_line(line));
  return out;
}

std::string dataset_digest(const ingest::Dataset& d) {
  Sha256 h;
  auto field = [&](std::string_view s) {
    h.update(std::to_string(s.size()) + ":");
    h.update(s);
  };
  auto metadata = [&](const Metadata& md) {
    for (const auto& [k, v] : md) {
      field(k);
      field(v);
    }
  };
  if (const auto* l = std::get_if<FeatureLayer>(&d)) {
    field("layer");
    field(l->name());
    field(std::to_string(l->crs().srs_id));
    for (const auto& f : l->schema()) {
      field(f.raw_name);
      field(f.canonical_name.value_or("-"));
      field(to_string(f.value_type));
      field(f.unit.value_or("-"));
      field(f.description.value_or("-"));
    }
    for (const auto& row : l->rows()) {
      const auto wkb = gpkg::encode_wkb(row.geometry);
      h.update(wkb);
      for (const auto& c : row.cells) field(std::to_string(c.index()) + query::render_cell(c));
    }
    metadata(l->metadata());
    field(l->standardized() ? "1" : "0");
  } else {
    const auto& g = std::get<RasterGrid>(d);
    field("raster");
    field(std::to_string(g.crs().srs_id));
    for (double v : {g.origin().x(), g.origin().y(), g.cell_size(), g.nodata(), static_cast<double>(g.nrows()),
                     static_cast<double>(g.ncols())})
      field(format_double(v));
    h.update(std::span(reinterpret_cast<const std::uint8_t*>(g.values().data()),
                       static_cast<std::size_t>(g.values().size()) * sizeof(double)));
    metadata(g.metadata());
  }
  return h.hex();
}

// ---------------------------------------------------------------------------
// Worker pool

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (workers < 1) fail(Errc::InvalidArgument, "workers must be at least 1");
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  auto work = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        failed = true;
      }
    }
  };
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

std::string percent(double f) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(1) << 100.0 * f << "%";
  return s.str();
}

std::string seconds(double s) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(3) << s << " s";
  return o.str();
}

Geometry boundary_in(const SiteConfig& site, const CrsDef& to) {
  return crs::transform(site.boundary, crs::wgs84(), to);
}

FeatureLayer reproject(const FeatureLayer& l, const CrsDef& to) {
  if (l.crs() == to) return l;
  std::vector<Feature> rows;
  rows.reserve(l.rows().size());
  for (const auto& r : l.rows()) rows.push_back({r.cells, crs::transform(r.geometry, l.crs(), to)});
  return FeatureLayer(l.name(), to, l.schema(), std::move(rows), l.metadata(), l.standardized());
}

}  // namespace

std::string MetricsReport::to_text() const {
  std::vector<std::pair<std::string, std::string>> rows;
  rows.emplace_back("Number of distinct datasets", std::to_string(n_input_datasets) + " \xE2\x86\x92 " +
                                                       std::to_string(n_databases) + " integrated database (" +
                                                       std::to_string(n_layers) + " layers)");
  rows.emplace_back("Standardized attributes",
                    percent(standardized_ratio_before) + " \xE2\x86\x92 " + percent(standardized_ratio_after));
  for (const auto& c : coverage)
    rows.emplace_back("Spatial coverage (" + c.name + ")", percent(c.before) + " \xE2\x86\x92 " + percent(c.after));
  rows.emplace_back("Time for cross-dataset analysis",
                    cross_dataset_query_seconds
                        ? seconds(*cross_dataset_query_seconds) + " automated (" + std::to_string(analysis_statements) +
                              " statements)"
                        : std::string("no analysis declared"));
  for (const auto& [stage, s] : stage_seconds) rows.emplace_back("Wall time (" + stage + ")", seconds(s));
  std::size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.first.size());
  std::string out;
  for (const auto& [label, value] : rows) out += label + ":" + std::string(width - label.size() + 2, ' ') + value + "\n";
  return out;
}

std::string MetricsReport::to_json() const {
  json cov = json::array();
  for (const auto& c : coverage) cov.push_back({{"name", c.name}, {"before", c.before}, {"after", c.after}});
  json stages = json::array();
  for (const auto& [s, t] : stage_seconds) stages.push_back({{"stage", s}, {"seconds", t}});
  json j{{"n_input_datasets", n_input_datasets},
         {"n_databases", n_databases},
         {"n_layers", n_layers},
         {"standardized_ratio_before", standardized_ratio_before},
         {"standardized_ratio_after", standardized_ratio_after},
         {"coverage", cov},
         {"stage_seconds", stages},
         {"analysis_statements", analysis_statements},
         {"cross_dataset_query_seconds", cross_dataset_query_seconds ? json(*cross_dataset_query_seconds) : json()}};
  return j.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json(std::string_view text) {
  try {
    const auto j = json::parse(text);
    MetricsReport m;
    m.n_input_datasets = j.at("n_input_datasets").get<std::size_t>();
    m.n_databases = j.at("n_databases").get<std::size_t>();
    m.n_layers = j.at("n_layers").get<std::size_t>();
    m.standardized_ratio_before = j.at("standardized_ratio_before").get<double>();
    m.standardized_ratio_after = j.at("standardized_ratio_after").get<double>();
    for (const auto& c : j.at("coverage"))
      m.coverage.push_back({c.at("name").get<std::string>(), c.at("before").get<double>(), c.at("after").get<double>()});
    for (const auto& s : j.at("stage_seconds"))
      m.stage_seconds.emplace_back(s.at("stage").get<std::string>(), s.at("seconds").get<double>());
    m.analysis_statements = j.at("analysis_statements").get<std::size_t>();
    if (!j.at("cross_dataset_query_seconds").is_null())
      m.cross_dataset_query_seconds = j.at("cross_dataset_query_seconds").get<double>();
    return m;
  } catch (const json::exception& e) {
    fail(Errc::ParseError, std::string("metrics file: ") + e.what());
  }
}

MetricsReport metrics_report(const std::vector<std::pair<std::string, ingest::Dataset>>& before,
                             const gpkg::Database& db, const StageTimings& timings, const PipelineManifest& manifest,
                             const standardize::AttributeDictionary& dict) {
  MetricsReport m;
  m.n_input_datasets = before.size();
  m.n_databases = 1;

  std::vector<FeatureLayer> raw_layers;
  std::vector<RasterGrid> raw_rasters;
  for (const auto& [name, d] : before) {
    if (const auto* l = std::get_if<FeatureLayer>(&d)) raw_layers.push_back(standardize::mark_already_canonical(*l, dict));
    else raw_rasters.push_back(standardize::mark_already_canonical(std::get<RasterGrid>(d), dict));
  }
  m.standardized_ratio_before = standardize::standardization_ratio(raw_layers, raw_rasters);

  std::vector<FeatureLayer> layers;
  std::vector<RasterGrid> rasters;
  const auto summaries = db.list_layers();
  m.n_layers = summaries.size();
  for (const auto& s : summaries) {
    if (s.kind == gpkg::LayerKind::vector) layers.push_back(db.read_layer(s.name));
    else rasters.push_back(db.resolve_raster(s.name));
  }
  m.standardized_ratio_after = standardize::standardization_ratio(layers, rasters);

  for (const auto& c : manifest.coverage) {
    const auto raster = db.resolve_raster(c.raster);
    const auto boundary = boundary_in(manifest.site, raster.crs());
    const FeatureLayer* pts = nullptr;
    for (const auto& [name, d] : before)
      if (name == c.points) pts = std::get_if<FeatureLayer>(&d);
    const FeatureLayer points = pts ? *pts : db.read_layer(c.points);
    CoverageMetric cm{c.name, 0, 0};
    cm.before = enrich::coverage(enrich::points_of(reproject(points, raster.crs())), c.radius, boundary);
    cm.after = enrich::coverage(raster, boundary, raster.crs());
    m.coverage.push_back(cm);
  }

  if (!manifest.analysis.empty()) {
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& sql : manifest.analysis) query::sql_query(db, sql);
    m.cross_dataset_query_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m.analysis_statements = manifest.analysis.size();
  }
  for (const auto& [stage, s] : timings) m.stage_seconds.emplace_back(to_string(stage), s);
  return m;
}

// ---------------------------------------------------------------------------
// Run

std::string provenance_path(const std::string& gpkg_path) {
  const fs::path p(gpkg_path);
  return (p.parent_path() / (p.stem().string() + ".provenance.jsonl")).string();
}

std::string metrics_path(const std::string& gpkg_path) {
  const fs::path p(gpkg_path);
  return (p.parent_path() / (p.stem().string() + ".metrics.json")).string();
}

namespace {

using Clock = std::chrono::steady_clock;
using Named = std::pair<std::string, ingest::Dataset>;

[[noreturn]] void stage_failed(const std::string& id, Stage stage, const Error& e, bool artifacts_removed = false) {
  fail(artifacts_removed ? Errc::PartialRunArtifactsRemoved : Errc::StageFailed,
       "'" + id + "' failed at stage " + to_string(stage) + ": " + e.what() +
           (artifacts_removed ? " (partial outputs removed)" : ""),
       e.detail(), {id, to_string(stage), to_string(e.code())});
}

ProvenanceRecord record(const std::string& id, Stage stage, std::string sha, Timestamp started,
                        std::map<std::string, std::string> params) {
  return ProvenanceRecord{id, std::move(sha), stage, started, std::chrono::system_clock::now(), std::move(params),
                          kToolVersion};
}

std::optional<std::string> sibling(const std::string& path, const std::string& ext) {
  for (const auto& e : {ext, to_upper(ext)}) {
    const auto p = fs::path(path).replace_extension(e);
    std::error_code ec;
    if (fs::is_regular_file(p, ec)) return p.string();
  }
  return std::nullopt;
}

CrsDef step_crs(const EnrichmentStep& st, const FeatureLayer& src) {
  const auto& reg = crs::CrsRegistry::standard();
  CrsDef c = st.crs ? reg.get(*st.crs) : src.crs();
  if (c.is_geographic())
    fail(Errc::InvalidArgument, "step '" + st.name + "' works in a planar CRS; set crs (e.g. 2100) in the manifest");
  return c;
}

enrich::GridSpec grid_for(const EnrichmentStep& st, const CrsDef& c, const SiteConfig& site) {
  enrich::GridSpec spec{st.bbox.value_or(boundary_in(site, c).envelope()), st.cell_size, c};
  spec.validate();
  return spec;
}

Metadata band_metadata(const EnrichmentStep& st, const FeatureLayer& src) {
  Metadata md{{"enrich.step", st.name}, {"enrich.source", st.source}};
  if (st.kind == StepKind::kde) {
    md["band"] = "event_density";
    md["band.canonical"] = "event_density";
    md["band.unit"] = "1/m2";
    return md;
  }
  md["band"] = st.column;
  if (const auto i = src.field_index(st.column)) {
    const auto& f = src.schema()[*i];
    if (f.canonical_name) md["band.canonical"] = *f.canonical_name;
    if (f.unit) md["band.unit"] = *f.unit;
    if (f.description) md["band.description"] = *f.description;
  }
  return md;
}

ingest::Dataset run_step(const EnrichmentStep& st, const FeatureLayer& src, const SiteConfig& site) {
  switch (st.kind) {
    case StepKind::idw:
    case StepKind::kriging:
    case StepKind::kde: {
      const auto c = step_crs(st, src);
      const auto spec = grid_for(st, c, site);
      const auto layer = reproject(src, c);
      RasterGrid out = [&] {
        if (st.kind == StepKind::kde) {
          const auto pts = enrich::points_of(layer);
          return enrich::kde(pts, st.bandwidth.value_or(enrich::silverman_bandwidth(pts)), spec);
        }
        const auto samples = enrich::Samples::from_layer(layer, st.column);
        if (st.kind == StepKind::idw) return enrich::idw(samples, spec, {st.power, st.max_radius});
        const auto model = enrich::fit_variogram(samples, st.bins, st.variogram);
        return enrich::ordinary_kriging(samples, model, spec, {st.jitter}).estimates;
      }();
      Metadata md = out.metadata();
      for (auto& [k, v] : band_metadata(st, src)) md[k] = v;
      return out.with_metadata(std::move(md));
    }
    case StepKind::one_hot: {
      auto [encoded, report] = standardize::one_hot(src, st.column);
      return FeatureLayer(st.target, encoded.crs(), encoded.schema(), encoded.rows(), encoded.metadata(),
                          encoded.standardized());
    }
    case StepKind::augment: {
      const auto c = step_crs(st, src);
      const auto layer = reproject(src, c);
      const auto idx = layer.field_index(st.column);
      if (!idx) fail(Errc::NoSuchColumn, "layer '" + src.name() + "' has no column '" + st.column + "'");
      std::vector<std::size_t> rare;
      for (std::size_t i = 0; i < layer.rows().size(); ++i)
        if (query::render_cell(layer.rows()[i].cells[*idx]) == st.category) rare.push_back(i);
      if (rare.empty()) fail(Errc::NoPoints, "no rows of '" + src.name() + "' have " + st.column + " = " + st.category);
      enrich::PointMatrix pts(static_cast<Eigen::Index>(rare.size()), 2);
      for (std::size_t i = 0; i < rare.size(); ++i) {
        const auto e = layer.rows()[rare[i]].geometry.envelope();
        pts.row(static_cast<Eigen::Index>(i)) << (e.min_x + e.max_x) / 2, (e.min_y + e.max_y) / 2;
      }
      auto schema = layer.schema();
      schema.push_back({"synthetic", std::string("synthetic"), ValueType::boolean, std::nullopt,
                        std::string("Row generated around a rare observation")});
      std::vector<Feature> rows;
      for (const auto& r : layer.rows()) {
        auto cells = r.cells;
        cells.emplace_back(false);
        rows.push_back({std::move(cells), r.geometry});
      }
      for (const auto& s : enrich::augment_rare(pts, st.count, st.sigma, st.seed)) {
        auto cells = layer.rows()[rare[s.source]].cells;
        cells.emplace_back(true);
        rows.push_back({std::move(cells), Point{s.at}});
      }
      Metadata md = layer.metadata();
      md["enrich.step"] = st.name;
      md["enrich.method"] = "augment";
      md["enrich.synthetic_rows"] = std::to_string(st.count);
      return FeatureLayer(st.target, c, std::move(schema), std::move(rows), std::move(md), layer.standardized());
    }
  }
  fail(Errc::InvalidArgument, "unknown step kind");
}

std::map<std::string, std::string> step_parameters(const EnrichmentStep& st) {
  std::map<std::string, std::string> p{{"kind", to_string(st.kind)}, {"source", st.source}, {"target", st.target}};
  if (!st.column.empty()) p["column"] = st.column;
  if (st.produces_raster()) p["cell_size"] = format_double(st.cell_size);
  if (st.crs) p["crs"] = std::to_string(*st.crs);
  if (st.bbox)
    p["bbox"] = format_double(st.bbox->min_x) + " " + format_double(st.bbox->min_y) + " " + format_double(st.bbox->max_x) +
                " " + format_double(st.bbox->max_y);
  switch (st.kind) {
    case StepKind::idw:
      p["power"] = format_double(st.power);
      if (st.max_radius) p["max_radius"] = format_double(*st.max_radius);
      break;
    case StepKind::kriging:
      p["variogram"] = enrich::to_string(st.variogram);
      p["bins"] = std::to_string(st.bins);
      p["jitter"] = st.jitter ? "true" : "false";
      break;
    case StepKind::kde:
      if (st.bandwidth) p["bandwidth"] = format_double(*st.bandwidth);
      break;
    case StepKind::augment:
      p["category"] = st.category;
      p["count"] = std::to_string(st.count);
      p["sigma"] = format_double(st.sigma);
      p["seed"] = std::to_string(st.seed);
      break;
    case StepKind::one_hot: break;
  }
  return p;
}

// Files a database at `gpkg` owns: itself, its sidecars and run reports.
std::vector<std::string> owned_files(const std::string& gpkg) {
  std::vector<std::string> out;
  std::error_code ec;
  if (!fs::exists(gpkg, ec)) return out;
  out.push_back(gpkg);
  try {
    const auto db = gpkg::Database::open(gpkg);
    for (const auto& s : db.list_layers())
      if (s.kind == gpkg::LayerKind::raster_sidecar) out.push_back(db.sidecar_path(s.name));
  } catch (const Error&) {
  }
  for (const auto& p : {provenance_path(gpkg), metrics_path(gpkg)})
    if (fs::exists(p, ec)) out.push_back(p);
  return out;
}

}  // namespace

RunResult run(const PipelineManifest& m, const RunOptions& options) {
  if (options.workers < 1) fail(Errc::InvalidArgument, "workers must be at least 1");
  const auto dict = standardize::AttributeDictionary::load(m.dictionary_path);
  const std::string dict_sha = sha256_file(m.dictionary_path);
  ProvenanceLog log;
  {
    std::vector<std::string> order;
    for (const auto& in : m.inputs) order.push_back(in.id);
    for (const auto& st : m.steps) order.push_back(st.name);
    order.push_back(fs::path(m.output_gpkg).filename().string());
    log.set_order(std::move(order));
  }
  StageTimings timings;
  RunResult result;

  // ingest
  auto t0 = Clock::now();
  std::vector<std::optional<Named>> raw_slots(m.inputs.size());
  parallel_for(m.inputs.size(), options.workers, [&](std::size_t i) {
    const auto& in = m.inputs[i];
    const auto started = std::chrono::system_clock::now();
    try {
      in.source.validate();
      std::map<std::string, std::string> params{{"path", fs::path(in.source.path).filename().string()},
                                                {"encoding", in.source.encoding}};
      if (in.source.declared_format) params["format"] = ingest::to_string(*in.source.declared_format);
      if (in.source.crs_override) params["crs"] = std::to_string(*in.source.crs_override);
      const std::string sha = sha256_file(in.source.path);
      for (const char* ext : {".dbf", ".prj"})
        if (auto p = sibling(in.source.path, ext); p && *p != in.source.path)
          params[std::string("sha256") + ext] = sha256_file(*p);
      raw_slots[i].emplace(in.id, ingest::load_source(in.source, m.site, in.id));
      params["layer"] = in.id;
      params["dataset_sha256"] = dataset_digest(raw_slots[i]->second);
      log.append(record(in.id, Stage::ingest, sha, started, std::move(params)));
    } catch (const Error& e) {
      stage_failed(in.id, Stage::ingest, e);
    }
  });
  timings.emplace_back(Stage::ingest, std::chrono::duration<double>(Clock::now() - t0).count());
  std::vector<Named> raw;
  for (auto& s : raw_slots) raw.push_back(std::move(*s));

  // standardize
  t0 = Clock::now();
  std::vector<std::optional<Named>> slots(raw.size());
  std::vector<standardize::StandardizationReport> reports(raw.size());
  parallel_for(raw.size(), options.workers, [&](std::size_t i) {
    const auto& [name, d] = raw[i];
    const auto started = std::chrono::system_clock::now();
    try {
      if (const auto* l = std::get_if<FeatureLayer>(&d)) {
        auto [out, report] = standardize::standardize_layer(*l, dict);
        slots[i].emplace(name, std::move(out));
        reports[i] = std::move(report);
      } else {
        auto [out, report] = standardize::standardize_raster(std::get<RasterGrid>(d), name, dict);
        slots[i].emplace(name, std::move(out));
        reports[i] = std::move(report);
      }
      log.append(record(name, Stage::standardize, dataset_digest(d), started,
                        {{"dictionary_sha256", dict_sha},
                         {"matched", std::to_string(reports[i].matched)},
                         {"total", std::to_string(reports[i].total)},
                         {"dataset_sha256", dataset_digest(slots[i]->second)}}));
    } catch (const Error& e) {
      stage_failed(name, Stage::standardize, e);
    }
  });
  timings.emplace_back(Stage::standardize, std::chrono::duration<double>(Clock::now() - t0).count());
  result.reports = std::move(reports);
  std::vector<Named> current;
  for (auto& s : slots) current.push_back(std::move(*s));

  // enrich, in waves of steps whose sources are ready
  t0 = Clock::now();
  if (options.last_stage >= Stage::enrich) {
    std::vector<std::optional<ingest::Dataset>> outputs(m.steps.size());
    std::set<std::string> pending_targets;
    for (const auto& st : m.steps) pending_targets.insert(st.target);
    std::vector<bool> done(m.steps.size(), false);
    auto lookup = [&](const std::string& name, std::size_t before) -> const ingest::Dataset* {
      for (std::size_t j = before; j-- > 0;)
        if (done[j] && m.steps[j].target == name) return &*outputs[j];
      for (const auto& [n, d] : current)
        if (n == name) return &d;
      return nullptr;
    };
    std::size_t remaining = m.steps.size();
    while (remaining > 0) {
      std::vector<std::size_t> wave;
      for (std::size_t i = 0; i < m.steps.size(); ++i) {
        if (done[i]) continue;
        // Ready once every earlier step producing this source has finished.
        bool ready = true;
        for (std::size_t j = 0; j < i; ++j)
          if (!done[j] && m.steps[j].target == m.steps[i].source) ready = false;
        // A step replacing its source must also wait for earlier readers of it.
        if (m.steps[i].target == m.steps[i].source)
          for (std::size_t j = 0; j < i; ++j)
            if (!done[j] && m.steps[j].source == m.steps[i].source) ready = false;
        if (ready) wave.push_back(i);
      }
      parallel_for(wave.size(), options.workers, [&](std::size_t w) {
        const auto i = wave[w];
        const auto& st = m.steps[i];
        const auto started = std::chrono::system_clock::now();
        try {
          const auto* src = lookup(st.source, i);
          const auto* layer = src ? std::get_if<FeatureLayer>(src) : nullptr;
          if (!layer) fail(Errc::DanglingReference, "step source '" + st.source + "' is not a vector layer");
          outputs[i] = run_step(st, *layer, m.site);
          auto params = step_parameters(st);
          params["output_sha256"] = dataset_digest(*outputs[i]);
          log.append(record(st.name, Stage::enrich, dataset_digest(*src), started, std::move(params)));
        } catch (const Error& e) {
          stage_failed(st.name, Stage::enrich, e);
        }
      });
      for (auto i : wave) done[i] = true;
      remaining -= wave.size();
    }
    // Fold outputs in declaration order: replacements in place, new layers appended.
    for (std::size_t i = 0; i < m.steps.size(); ++i) {
      const auto& st = m.steps[i];
      auto it = std::find_if(current.begin(), current.end(), [&](const Named& n) { return n.first == st.target; });
      if (it != current.end()) it->second = std::move(*outputs[i]);
      else current.emplace_back(st.target, std::move(*outputs[i]));
    }
  }
  timings.emplace_back(Stage::enrich, std::chrono::duration<double>(Clock::now() - t0).count());

  if (options.last_stage < Stage::integrate) {
    result.provenance = log.records();
    result.datasets = std::move(current);
    return result;
  }

  // integrate: build everything in a staging directory, then move into place
  t0 = Clock::now();
  const fs::path final_path = fs::absolute(m.output_gpkg);
  const fs::path staging = final_path.parent_path() / ("." + final_path.filename().string() + ".staging");
  const std::string staged_db = (staging / final_path.filename()).string();
  const std::string out_name = final_path.filename().string();
  std::error_code ec;
  auto cleanup = [&] { fs::remove_all(staging, ec); };
  MetricsReport metrics;
  try {
    if (!fs::is_directory(final_path.parent_path(), ec))
      fail(Errc::IoFailure, "output directory '" + final_path.parent_path().string() + "' does not exist");
    fs::remove_all(staging, ec);
    fs::create_directories(staging);
  } catch (const Error& e) {
    stage_failed(out_name, Stage::integrate, e);
  } catch (const fs::filesystem_error& e) {
    stage_failed(out_name, Stage::integrate, Error(Errc::IoFailure, e.what()));
  }
  std::string current_id = out_name;
  try {
    const auto started = std::chrono::system_clock::now();
    {
      gpkg::CreateOptions opts;
      opts.overwrite = true;
      opts.timestamp = m.timestamp;
      auto db = gpkg::Database::create(staged_db, opts);
      for (const auto& [name, d] : current) {
        current_id = name;
        if (const auto* l = std::get_if<FeatureLayer>(&d)) db.write_layer(*l);
        else db.register_raster_sidecar(std::get<RasterGrid>(d), name);
      }
      current_id = out_name;
    }
    const auto violations = gpkg::check_conformance(staged_db);
    if (!violations.empty()) fail(Errc::CorruptGeometryBlob, "database fails conformance: " + violations.front());
    log.append(record(out_name, Stage::integrate, gpkg::content_digest(staged_db), started,
                      {{"layers", std::to_string(current.size())}, {"path", out_name}}));
    timings.emplace_back(Stage::integrate, std::chrono::duration<double>(Clock::now() - t0).count());

    const auto db = gpkg::Database::open(staged_db);
    metrics = metrics_report(raw, db, timings, m, dict);
  } catch (const Error& e) {
    cleanup();
    stage_failed(current_id, Stage::integrate, e, true);
  }
  result.provenance = log.records();

  try {
    if (options.write_reports) {
      write_provenance(provenance_path(staged_db), result.provenance);
      write_file(metrics_path(staged_db), metrics.to_json());
    }
    for (const auto& f : owned_files(final_path.string())) fs::remove(f, ec);
    for (const auto& entry : fs::directory_iterator(staging))
      fs::rename(entry.path(), final_path.parent_path() / entry.path().filename());
    fs::remove_all(staging, ec);
  } catch (const std::exception& e) {
    cleanup();
    stage_failed(out_name, Stage::integrate, Error(Errc::IoFailure, e.what()), true);
  }

  result.database_path = final_path.string();
  result.metrics = std::move(metrics);
  result.datasets = std::move(current);
  return result;
}

}  // namespace argus::pipeline
