#include "argus/pipeline.hpp"
#include "argus/text.hpp"

#include <CLI11.hpp>

#include <unistd.h>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace argus;

namespace {

enum Exit { ok = 0, usage = 1, data = 2, io = 3 };

int exit_code(const Error& e) {
  switch (category(e)) {
    case ErrorCategory::usage: return usage;
    case ErrorCategory::io: return io;
    case ErrorCategory::data: return data;
  }
  return data;
}

// Sources outside a manifest geocode non-spatial rows at this point unless
// --centroid says otherwise.
SiteConfig site_from(const std::vector<double>& centroid) {
  SiteConfig s;
  s.site_id = "cli";
  s.centroid = centroid.size() == 2 ? Coord(centroid[0], centroid[1]) : Coord(0, 0);
  const double lon = s.centroid.x(), lat = s.centroid.y();
  s.boundary = Polygon{{{Coord(lon - 0.01, lat - 0.01), Coord(lon + 0.01, lat - 0.01), Coord(lon + 0.01, lat + 0.01),
                         Coord(lon - 0.01, lat + 0.01), Coord(lon - 0.01, lat - 0.01)}}};
  return s;
}

struct SourceArgs {
  std::string path;
  std::string name;
  std::string format = "auto";
  std::optional<int> crs;
  std::string encoding = "UTF-8";
  std::string lon, lat;
  std::string band = "value";
  std::vector<double> centroid;

  void add_to(CLI::App* app) {
    app->add_option("--name", name, "Layer name (default: file stem)");
    app->add_option("--format", format, "csv, shp, asc, tif, txt or auto")->capture_default_str();
    app->add_option("--crs", crs, "EPSG code overriding the source CRS");
    app->add_option("--encoding", encoding, "Text encoding: UTF-8 or latin1")->capture_default_str();
    app->add_option("--lon", lon, "CSV longitude column");
    app->add_option("--lat", lat, "CSV latitude column");
    app->add_option("--band", band, "Attribute name for raster values")->capture_default_str();
    app->add_option("--centroid", centroid, "lon lat used for rows without coordinates")->expected(2);
  }

  std::pair<std::string, ingest::Dataset> load() const {
    ingest::SourceDescriptor d;
    d.path = path;
    d.declared_format = ingest::parse_format(format);
    d.crs_override = crs;
    d.encoding = encoding;
    if (!lon.empty()) d.csv.lon_column = lon;
    if (!lat.empty()) d.csv.lat_column = lat;
    d.band = band;
    d.validate();
    const auto layer = normalize_layer_name(name.empty() ? fs::path(path).stem().string() : name);
    return {layer, ingest::load_source(d, site_from(centroid), layer)};
  }
};

std::string describe(const std::string& name, const ingest::Dataset& d) {
  std::string out;
  if (const auto* l = std::get_if<FeatureLayer>(&d)) {
    out = name + ": vector, " + std::to_string(l->rows().size()) + " features, EPSG:" + std::to_string(l->crs().srs_id) +
          "\n";
    for (const auto& f : l->schema())
      out += "  " + f.raw_name + " (" + to_string(f.value_type) + ")" +
             (f.canonical_name ? " -> " + *f.canonical_name : std::string()) + (f.unit ? " [" + *f.unit + "]" : "") +
             "\n";
  } else {
    const auto& g = std::get<RasterGrid>(d);
    out = name + ": raster, " + std::to_string(g.nrows()) + " x " + std::to_string(g.ncols()) + " cells of " +
          format_double(g.cell_size()) + ", EPSG:" + std::to_string(g.crs().srs_id) + "\n";
  }
  return out;
}

void write_into(const std::string& db_path, const std::string& name, const ingest::Dataset& d) {
  auto db = fs::exists(db_path) ? gpkg::Database::open(db_path, true) : gpkg::Database::create(db_path);
  if (const auto* l = std::get_if<FeatureLayer>(&d)) db.write_layer(*l);
  else db.register_raster_sidecar(std::get<RasterGrid>(d), name);
}

void print_table(const query::ResultTable& t) {
  if (t.columns.size() == 1 && t.rows.size() == 1) {
    std::cout << query::render_cell(t.rows[0][0]) << "\n";
    return;
  }
  std::cout << join(t.columns, " | ") << "\n";
  for (const auto& row : t.rows) {
    std::vector<std::string> cells;
    for (const auto& c : row) cells.push_back(query::render_cell(c));
    std::cout << join(cells, " | ") << "\n";
  }
  std::cout << "(" << t.rows.size() << (t.rows.size() == 1 ? " row)\n" : " rows)\n");
}

query::ResultTable ask(const gpkg::Database& db, const query::Catalog& catalog, const std::string& question,
                       bool show_sql) {
  const auto ast = query::parse_nl(question, catalog);
  for (const auto& c : ast.corrections) std::cerr << "note: " << c << "\n";
  const auto sql = query::ast_to_sql(ast);
  if (show_sql) std::cerr << "sql: " << sql << "\n";
  return query::sql_query(db, sql);
}

int repl(const gpkg::Database& db, bool show_sql) {
  const auto catalog = query::Catalog::from_database(db);
  const bool tty = isatty(STDIN_FILENO);
  if (tty) std::cout << "Ask about the layers of " << db.path() << "; an empty line or 'quit' leaves.\n";
  std::string line;
  while (true) {
    if (tty) std::cout << "argus> " << std::flush;
    if (!std::getline(std::cin, line)) break;
    const auto q = std::string(trim(line));
    if (q.empty() || q == "quit" || q == "exit") break;
    try {
      print_table(ask(db, catalog, q, show_sql));
    } catch (const Error& e) {
      std::cerr << e.what() << "\n";
      for (const auto& n : e.notes()) std::cerr << "  " << n << "\n";
    }
  }
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heritage-site data pipeline: ingest, standardize, enrich, integrate and query."};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  // ingest
  SourceArgs ingest_args;
  std::string ingest_into;
  auto* ingest_cmd = app.add_subcommand("ingest", "Read one source and describe it");
  ingest_cmd->add_option("src", ingest_args.path, "Source file")->required();
  ingest_args.add_to(ingest_cmd);
  ingest_cmd->add_option("--into", ingest_into, "Add the layer to this GeoPackage (created if missing)");

  // standardize
  SourceArgs std_args;
  std::string dict_path, std_db, std_into;
  auto* std_cmd = app.add_subcommand("standardize", "Map a layer's attributes onto the dictionary");
  std_cmd->add_option("layer", std_args.path, "Source file, or a layer name with --db")->required();
  std_cmd->add_option("--dict", dict_path, "Attribute dictionary")->required();
  std_cmd->add_option("--db", std_db, "Read the layer from this GeoPackage");
  std_args.add_to(std_cmd);
  std_cmd->add_option("--into", std_into, "Write the standardized layer to this GeoPackage");

  // enrich
  std::string enrich_config, enrich_into;
  int enrich_workers = 1;
  auto* enrich_cmd = app.add_subcommand("enrich", "Run the enrichment steps of a manifest without integrating");
  enrich_cmd->add_option("step-config", enrich_config, "Manifest with [input] and [step] sections")->required();
  enrich_cmd->add_option("--workers", enrich_workers, "Worker threads")->check(CLI::PositiveNumber);
  enrich_cmd->add_option("--into", enrich_into, "Write the step outputs to this GeoPackage");

  // integrate / run
  std::string manifest_path;
  int workers = 1;
  auto* integrate_cmd = app.add_subcommand("integrate", "Build the integrated GeoPackage of a manifest");
  integrate_cmd->add_option("--manifest", manifest_path, "Pipeline manifest")->required();
  auto* run_cmd = app.add_subcommand("run", "Run every stage and print the metrics");
  run_cmd->add_option("--manifest", manifest_path, "Pipeline manifest")->required();
  run_cmd->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  bool run_publish = false;
  run_cmd->add_flag("--publish", run_publish, "Also build the [publish] bundle");

  // query
  std::string query_db, sql, table_layer, endpoint, suite_path;
  std::optional<std::string> question;
  bool remote = false, show_sql = false;
  int max_rows = 50;
  std::size_t max_chars = 4000;
  auto* query_cmd = app.add_subcommand("query", "SQL or restricted natural-language queries");
  query_cmd->add_option("db", query_db, "GeoPackage")->required();
  auto* sql_opt = query_cmd->add_option("--sql", sql, "Read-only SQL statement");
  auto* ask_opt = query_cmd->add_option("--ask", question, "Question; without one an interactive prompt starts")
                      ->expected(0, 1);
  auto* suite_opt = query_cmd->add_option("--suite", suite_path, "Score a JSON question suite")->check(CLI::ExistingFile);
  sql_opt->excludes(ask_opt)->excludes(suite_opt);
  ask_opt->excludes(suite_opt);
  query_cmd->add_flag("--remote", remote, "Send the question and a table to the remote QA endpoint");
  query_cmd->add_option("--table", table_layer, "Layer serialized for --remote when the question does not parse");
  query_cmd->add_option("--endpoint", endpoint, "QA endpoint URL (default: ARGUS_QA_ENDPOINT)");
  query_cmd->add_option("--max-rows", max_rows, "Rows sent with --remote")->capture_default_str();
  query_cmd->add_option("--max-chars", max_chars, "Table size budget for --remote")->capture_default_str();
  query_cmd->add_flag("--show-sql", show_sql, "Print the translated SQL on stderr");

  // report
  std::string report_db;
  bool report_json = false;
  auto* report_cmd = app.add_subcommand("report", "Layers, conformance and run metrics of a database");
  report_cmd->add_option("db", report_db, "GeoPackage")->required();
  report_cmd->add_flag("--json", report_json, "Print the stored metrics as JSON");

  // publish
  std::string publish_db;
  pipeline::PublishConfig pub;
  std::string published_at;
  auto* publish_cmd = app.add_subcommand("publish", "Bundle a database with license and descriptor");
  publish_cmd->add_option("db", publish_db, "GeoPackage")->required();
  publish_cmd->add_option("--license", pub.license, "SPDX identifier")->required();
  publish_cmd->add_option("--title", pub.title, "Dataset title (default: database stem)");
  publish_cmd->add_option("--creator", pub.creators, "Creator; repeatable");
  publish_cmd->add_option("--doi", pub.doi, "DOI for the citation");
  publish_cmd->add_option("--out", pub.directory, "Bundle directory (default: <stem>_bundle)");
  publish_cmd->add_option("--timestamp", published_at, "ISO-8601 publication time (default: now)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? ok : usage;
  }

  try {
    if (*ingest_cmd) {
      const auto [name, d] = ingest_args.load();
      std::cout << describe(name, d);
      if (!ingest_into.empty()) write_into(ingest_into, name, d);
    } else if (*std_cmd) {
      const auto dict = standardize::AttributeDictionary::load(dict_path);
      std::pair<std::string, ingest::Dataset> src = [&]() -> std::pair<std::string, ingest::Dataset> {
        if (std_db.empty()) return std_args.load();
        const auto db = gpkg::Database::open(std_db);
        for (const auto& s : db.list_layers())
          if (s.name == std_args.path && s.kind == gpkg::LayerKind::raster_sidecar)
            return {s.name, db.resolve_raster(s.name)};
        return {std_args.path, db.read_layer(std_args.path)};
      }();
      ingest::Dataset out = [&]() -> ingest::Dataset {
        if (const auto* l = std::get_if<FeatureLayer>(&src.second)) {
          auto [layer, report] = standardize::standardize_layer(*l, dict);
          std::cout << report.to_text();
          return layer;
        }
        auto [grid, report] = standardize::standardize_raster(std::get<RasterGrid>(src.second), src.first, dict);
        std::cout << report.to_text();
        return grid;
      }();
      if (!std_into.empty()) write_into(std_into, src.first, out);
    } else if (*enrich_cmd) {
      const auto m = pipeline::load_manifest_file(enrich_config);
      const auto r = pipeline::run(m, {.workers = enrich_workers, .last_stage = Stage::enrich});
      for (const auto& st : m.steps)
        for (const auto& [name, d] : r.datasets)
          if (name == st.target) std::cout << st.name << " -> " << describe(name, d);
      if (!enrich_into.empty())
        for (const auto& st : m.steps)
          for (const auto& [name, d] : r.datasets)
            if (name == st.target) write_into(enrich_into, name, d);
    } else if (*integrate_cmd || *run_cmd) {
      const auto m = pipeline::load_manifest_file(manifest_path);
      const auto r = pipeline::run(m, {.workers = *run_cmd ? workers : 1});
      std::cout << "Wrote " << r.database_path << "\n";
      if (*run_cmd) {
        std::cout << r.metrics.to_text();
        if (run_publish) {
          if (!m.publish) fail(Errc::InvalidArgument, "--publish needs a [publish] section in the manifest");
          const auto bundle = pipeline::publish(r.database_path, *m.publish);
          std::cout << "Published " << bundle << "\n";
        }
      }
    } else if (*query_cmd) {
      const auto db = gpkg::Database::open(query_db);
      if (!sql.empty() && !remote) {
        print_table(query::sql_query(db, sql));
      } else if (!suite_path.empty()) {
        const auto report = query::evaluate_nl_suite(db, query::load_suite(suite_path));
        std::cout << report.to_text();
      } else if (remote) {
        auto cfg = query::RemoteQaConfig::from_environment();
        if (!endpoint.empty()) {
          if (!cfg) cfg.emplace();
          cfg->url = endpoint;
        }
        if (!cfg) fail(Errc::InvalidArgument, "--remote needs --endpoint or ARGUS_QA_ENDPOINT");
        if (!question || question->empty()) fail(Errc::InvalidArgument, "--remote needs --ask \"<question>\"");
        // The table sent along: the --sql result, the layer named by --table,
        // or the answer rows of the question when it parses.
        query::ResultTable table;
        if (!sql.empty()) table = query::sql_query(db, sql);
        else if (!table_layer.empty()) table = query::sql_query(db, "SELECT * FROM \"" + table_layer + "\"");
        else table = ask(db, query::Catalog::from_database(db), *question, show_sql);
        const auto text = query::serialize_table_for_qa(table, max_rows, max_chars);
        std::cout << query::remote_qa(*question, text, *cfg, [](const query::QaExchange& x) {
          std::cerr << "qa: " << x.url << " status " << x.status << " in " << x.elapsed.count() << " ms\n";
        }) << "\n";
      } else if (ask_opt->count() > 0) {
        if (!question || question->empty()) return repl(db, show_sql);
        print_table(ask(db, query::Catalog::from_database(db), *question, show_sql));
      } else {
        fail(Errc::InvalidArgument, "query needs --sql, --ask or --suite");
      }
    } else if (*report_cmd) {
      if (!fs::exists(report_db)) fail(Errc::IoFailure, "'" + report_db + "' does not exist");
      const auto metrics_file = pipeline::metrics_path(report_db);
      if (report_json) {
        if (!fs::exists(metrics_file)) fail(Errc::IoFailure, "no metrics next to the database: " + metrics_file);
        std::cout << read_file(metrics_file);
        return ok;
      }
      const auto db = gpkg::Database::open(report_db);
      for (const auto& s : db.list_layers())
        std::cout << s.name << "  " << (s.kind == gpkg::LayerKind::vector ? "vector" : "raster") << "  EPSG:" << s.srs_id
                  << "  " << s.row_count << (s.kind == gpkg::LayerKind::vector ? " features" : " cells") << "\n";
      const auto violations = gpkg::check_conformance(report_db);
      std::cout << "Conformance: " << (violations.empty() ? "ok" : std::to_string(violations.size()) + " problem(s)")
                << "\n";
      for (const auto& v : violations) std::cout << "  " << v << "\n";
      if (fs::exists(metrics_file))
        std::cout << "\n" << pipeline::MetricsReport::from_json(read_file(metrics_file)).to_text();
      const auto prov = pipeline::provenance_path(report_db);
      if (fs::exists(prov)) std::cout << "Provenance records: " << pipeline::read_provenance(prov).size() << "\n";
      if (!violations.empty()) return data;
    } else if (*publish_cmd) {
      if (pub.title.empty()) pub.title = fs::path(publish_db).stem().string();
      if (pub.directory.empty())
        pub.directory = (fs::path(publish_db).parent_path() / (fs::path(publish_db).stem().string() + "_bundle")).string();
      std::optional<Timestamp> when;
      if (!published_at.empty()) {
        when = parse_timestamp(published_at);
        if (!when) fail(Errc::InvalidArgument, "--timestamp must look like 2024-05-01T00:00:00Z");
      }
      const auto bundle = pipeline::publish(publish_db, pub, when);
      std::cout << "Published " << bundle << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    for (const auto& n : e.notes()) std::cerr << "  " << n << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return io;
  }
  return ok;
}
