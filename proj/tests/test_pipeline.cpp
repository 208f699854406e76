#include "argus/pipeline.hpp"
#include "argus/hash.hpp"
#include "argus/text.hpp"
#include "test_support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>

using namespace argus;
using namespace argus::pipeline;
using argus::testing::TempDir;
namespace fs = std::filesystem;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::InvalidArgument;
}

Error error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected an error");
  return Error(Errc::InvalidArgument, "");
}

const std::string kDictionary = std::string(ARGUS_SOURCE_DIR) + "/data/dictionary.txt";

std::string site_block() {
  return "[site]\n"
         "id = delos\n"
         "centroid = 25.2683 37.3962\n"
         "boundary = 25.25 37.38  25.29 37.38  25.29 37.41  25.25 37.41\n\n"
         "[dictionary]\npath = " + kDictionary + "\n\n";
}

// Three small CSV sources inside the site: 20 stations, 12 monuments, 15 quakes.
void write_inputs(const TempDir& dir) {
  std::string meteo = "station,temp,wind_spd,lon,lat\n";
  for (int i = 0; i < 20; ++i) {
    const double lon = 25.252 + 0.0019 * i, lat = 37.382 + 0.0013 * ((i * 7) % 20);
    meteo += "S" + std::to_string(i) + "," + format_double(18.0 + 0.3 * i + 0.5 * std::sin(i)) + "," +
             format_double(3.0 + 0.1 * ((i * 3) % 11)) + "," + format_double(lon) + "," + format_double(lat) + "\n";
  }
  write_file(dir.file("meteo.csv"), meteo);
  std::string monuments = "name,period,lon,lat\n";
  const char* periods[] = {"archaic", "classical", "hellenistic"};
  for (int i = 0; i < 12; ++i)
    monuments += "M" + std::to_string(i) + "," + periods[i % 3] + "," + format_double(25.26 + 0.002 * i) + "," +
                 format_double(37.39 + 0.001 * i) + "\n";
  write_file(dir.file("monuments.csv"), monuments);
  std::string quakes = "mag,depth,lon,lat\n";
  for (int i = 0; i < 15; ++i)
    quakes += format_double(2.0 + 0.1 * i) + "," + format_double(5.0 + i) + "," + format_double(25.255 + 0.002 * i) +
              "," + format_double(37.385 + 0.0015 * i) + "\n";
  write_file(dir.file("quakes.csv"), quakes);
}

std::string full_manifest(const std::string& output = "site.gpkg") {
  return site_block() +
         "[output]\ngpkg = " + output + "\ntimestamp = 2024-05-01T00:00:00Z\n\n"
         "[input meteo]\npath = meteo.csv\n\n"
         "[input monuments]\npath = monuments.csv\n\n"
         "[input quakes]\npath = quakes.csv\n\n"
         "[step temp_idw]\nkind = idw\nsource = meteo\ntarget = temp_surface\ncolumn = temp\ncell_size = 200\ncrs = 2100\n\n"
         "[step temp_krige]\nkind = kriging\nsource = meteo\ntarget = temp_kriged\ncolumn = temp\ncell_size = 400\n"
         "crs = 2100\nvariogram = exponential\nbins = 6\n\n"
         "[step quake_density]\nkind = kde\nsource = quakes\ntarget = quake_kde\ncell_size = 200\ncrs = 2100\n\n"
         "[step periods]\nkind = one_hot\nsource = monuments\ntarget = monuments\ncolumn = period\n\n"
         "[coverage temperature]\npoints = meteo\nradius = 150\nraster = temp_surface\n\n"
         "[analysis]\nsql = SELECT avg(air_temperature) FROM meteo\n"
         "sql = SELECT count(*) FROM monuments\n";
}

}  // namespace

TEST_CASE("manifest parsing") {
  const auto m = load_manifest(full_manifest(), "/work");
  CHECK(m.site.site_id == "delos");
  REQUIRE(m.inputs.size() == 3);
  CHECK(m.inputs[0].id == "meteo");
  CHECK(m.inputs[0].source.path == "/work/meteo.csv");
  CHECK(m.output_gpkg == "/work/site.gpkg");
  CHECK(m.timestamp.has_value());
  REQUIRE(m.steps.size() == 4);
  CHECK(m.steps[1].kind == StepKind::kriging);
  CHECK(m.steps[1].variogram == enrich::VariogramKind::exponential);
  CHECK(m.steps[1].bins == 6);
  CHECK(m.steps[3].target == "monuments");
  REQUIRE(m.coverage.size() == 1);
  CHECK(m.coverage[0].radius == 150);
  CHECK(m.analysis.size() == 2);

  SUBCASE("minimal") {
    const auto min = load_manifest(site_block() + "[output]\ngpkg = a.gpkg\n[input a]\npath = a.csv\n");
    CHECK(min.steps.empty());
    CHECK_FALSE(min.timestamp.has_value());
  }
  SUBCASE("continuation lines and comments") {
    const auto c = load_manifest(site_block() + "# note\n[output]\ngpkg = a.gpkg\n[input a]\npath = a.csv\n"
                                 "[analysis]\nsql = SELECT 1\n  FROM a\n; trailing\n");
    CHECK(c.analysis[0] == "SELECT 1 FROM a");
  }
}

TEST_CASE("manifest errors") {
  const std::string base = site_block() + "[output]\ngpkg = a.gpkg\n[input meteo]\npath = m.csv\n";

  const auto dangling = error_of([&] {
    load_manifest(base + "[step s]\nkind = idw\nsource = foo\ntarget = t\ncolumn = x\ncell_size = 10\n");
  });
  CHECK(dangling.code() == Errc::DanglingReference);
  CHECK(std::string(dangling.what()).find("foo") != std::string::npos);
  CHECK(std::find(dangling.notes().begin(), dangling.notes().end(), "foo") != dangling.notes().end());

  CHECK(code_of([&] { load_manifest(base + "[input meteo]\npath = n.csv\n"); }) == Errc::ParseError);

  const auto unknown = error_of([&] { load_manifest(base + "colour = blue\n"); });
  CHECK(unknown.code() == Errc::UnknownKey);
  REQUIRE(unknown.detail());
  CHECK(*unknown.detail() == 13);
  CHECK(code_of([&] { load_manifest(base + "[extras]\na = 1\n"); }) == Errc::UnknownKey);

  CHECK(code_of([&] { load_manifest(base + "[analysis]\nsql = DELETE FROM meteo\n"); }) == Errc::ParseError);
  CHECK(code_of([&] { load_manifest(base + "[publish]\nlicense = BOGUS\ntitle = x\ndirectory = d\n"); }) ==
        Errc::UnknownLicense);
  CHECK(code_of([&] { load_manifest(base + "[input Meteo2]\npath = n.csv\n"); }) == Errc::ParseError);
  CHECK(code_of([&] { load_manifest(base + "[output]\ngpkg = b.gpkg\n"); }) == Errc::ParseError);
  CHECK(code_of([&] { load_manifest(site_block() + "[output]\ngpkg = a.gpkg\n"); }) == Errc::ParseError);
  // raster steps need a vector source; coverage needs a raster
  CHECK(code_of([&] {
          load_manifest(base + "[step s]\nkind = idw\nsource = meteo\ntarget = meteo\ncolumn = x\ncell_size = 10\n");
        }) == Errc::ParseError);
  CHECK(code_of([&] { load_manifest(base + "[coverage c]\npoints = meteo\nradius = 5\nraster = meteo\n"); }) ==
        Errc::DanglingReference);
}

TEST_CASE("provenance records round trip") {
  ProvenanceRecord r{"meteo", sha256_hex(std::string_view("x")), Stage::standardize,
                     *parse_timestamp("2024-01-01T00:00:00Z"), *parse_timestamp("2024-01-01T00:00:01Z"),
                     {{"dictionary_sha256", "abc"}}, kToolVersion};
  const auto back = parse_json_line(to_json_line(r));
  CHECK(back.input_id == r.input_id);
  CHECK(back.sha256 == r.sha256);
  CHECK(back.stage == r.stage);
  CHECK(back.started == r.started);
  CHECK(back.parameters == r.parameters);
  CHECK(code_of([] { parse_json_line("{\"input_id\": 1}"); }) == Errc::ParseError);

  TempDir dir;
  write_provenance(dir.file("p.jsonl"), {r});
  append_provenance(dir.file("p.jsonl"), r);
  CHECK(read_provenance(dir.file("p.jsonl")).size() == 2);

  ProvenanceLog log;
  log.set_order({"b", "a"});
  auto rec = [&](std::string id, Stage s) {
    auto x = r;
    x.input_id = std::move(id);
    x.stage = s;
    return x;
  };
  log.append(rec("a", Stage::standardize));
  log.append(rec("a", Stage::ingest));
  log.append(rec("b", Stage::standardize));
  log.append(rec("b", Stage::ingest));
  const auto sorted = log.records();
  CHECK(sorted[0].input_id == "b");
  CHECK(sorted[0].stage == Stage::ingest);
  CHECK(sorted[1].input_id == "a");
  CHECK(sorted[3].input_id == "a");
  CHECK(sorted[3].stage == Stage::standardize);
}

TEST_CASE("parallel_for rethrows the lowest failing index") {
  std::vector<int> hit(100, 0);
  parallel_for(100, 8, [&](std::size_t i) { hit[i] = 1; });
  CHECK(std::count(hit.begin(), hit.end(), 1) == 100);
  const auto e = error_of([] {
    parallel_for(4, 1, [](std::size_t i) {
      if (i >= 2) fail(Errc::InvalidArgument, "item " + std::to_string(i));
    });
  });
  CHECK(std::string(e.what()).find("item 2") != std::string::npos);
  CHECK(code_of([] { parallel_for(1, 0, [](std::size_t) {}); }) == Errc::InvalidArgument);
}

TEST_CASE("end-to-end run over three CSV sources") {
  TempDir dir;
  write_inputs(dir);
  const auto m = load_manifest(full_manifest(), dir.path().string());
  const auto result = run(m);

  CHECK(fs::exists(result.database_path));
  CHECK(gpkg::check_conformance(result.database_path).empty());
  const auto db = gpkg::Database::open(result.database_path);
  std::vector<std::string> names;
  for (const auto& s : db.list_layers()) names.push_back(s.name);
  CHECK(names == std::vector<std::string>{"meteo", "monuments", "quakes", "temp_surface", "temp_kriged", "quake_kde"});

  const auto& metrics = result.metrics;
  CHECK(metrics.n_input_datasets == 3);
  CHECK(metrics.n_layers == 6);
  CHECK(metrics.standardized_ratio_before < metrics.standardized_ratio_after);
  CHECK(metrics.standardized_ratio_after == doctest::Approx(1.0));
  REQUIRE(metrics.coverage.size() == 1);
  CHECK(metrics.coverage[0].before < metrics.coverage[0].after);
  CHECK(metrics.cross_dataset_query_seconds.has_value());
  CHECK(metrics.to_text().find("3 \xE2\x86\x92 1 integrated database (6 layers)") != std::string::npos);
  CHECK(MetricsReport::from_json(metrics.to_json()).to_json() == metrics.to_json());

  // one_hot replaced the monuments layer in place
  const auto monuments = db.read_layer("monuments");
  CHECK(monuments.field_index("period_classical").has_value());
  const auto surface = db.resolve_raster("temp_surface");
  CHECK(surface.crs().srs_id == 2100);
  CHECK(surface.metadata().at("band.canonical") == "air_temperature");

  // Every ingest and standardize record names its input and the file hash.
  const auto prov = read_provenance(provenance_path(result.database_path));
  CHECK(prov.size() == 3 + 3 + 4 + 1);
  CHECK(prov[0].input_id == "meteo");
  CHECK(prov[0].stage == Stage::ingest);
  CHECK(prov[0].sha256 == sha256_file(dir.file("meteo.csv")));
  CHECK(prov.back().stage == Stage::integrate);
  CHECK(prov.back().sha256 == gpkg::content_digest(result.database_path));
  CHECK(fs::exists(metrics_path(result.database_path)));
  CHECK_FALSE(fs::exists(dir.file(".site.gpkg.staging")));
}

TEST_CASE("runs are deterministic and independent of the worker count") {
  // Sidecar names derive from the database name, so compare equal names in two directories.
  TempDir dir, other;
  write_inputs(dir);
  write_inputs(other);
  const auto m1 = load_manifest(full_manifest(), dir.path().string());
  const auto m2 = load_manifest(full_manifest(), other.path().string());
  const auto r1 = run(m1, {.workers = 1});
  const auto first = gpkg::content_digest(r1.database_path);
  run(m1, {.workers = 1});
  CHECK(gpkg::content_digest(r1.database_path) == first);
  const auto r8 = run(m2, {.workers = 8});
  CHECK(gpkg::content_digest(r8.database_path) == first);
  CHECK(r8.provenance.size() == r1.provenance.size());
  for (std::size_t i = 0; i < r1.provenance.size(); ++i) {
    CHECK(r8.provenance[i].input_id == r1.provenance[i].input_id);
    CHECK(r8.provenance[i].sha256 == r1.provenance[i].sha256);
  }
}

TEST_CASE("a failing input names itself and leaves no database") {
  TempDir dir;
  write_inputs(dir);
  write_file(dir.file("quakes.csv"), "mag,depth,lon,lat\n1,2\n");
  const auto m = load_manifest(full_manifest(), dir.path().string());
  const auto e = error_of([&] { run(m, {.workers = 4}); });
  CHECK(e.code() == Errc::StageFailed);
  CHECK(std::string(e.what()).find("'quakes'") != std::string::npos);
  REQUIRE(e.notes().size() == 3);
  CHECK(e.notes()[0] == "quakes");
  CHECK(e.notes()[1] == "ingest");
  CHECK_FALSE(fs::exists(dir.file("site.gpkg")));

  fs::remove(dir.file("quakes.csv"));
  const auto missing = error_of([&] { run(m); });
  CHECK(missing.notes()[2] == to_string(Errc::IoFailure));
}

TEST_CASE("stopping early writes nothing") {
  TempDir dir;
  write_inputs(dir);
  const auto m = load_manifest(full_manifest(), dir.path().string());
  const auto r = run(m, {.last_stage = Stage::standardize});
  CHECK(r.database_path.empty());
  CHECK(r.datasets.size() == 3);
  CHECK_FALSE(fs::exists(dir.file("site.gpkg")));
}

TEST_CASE("publication bundle") {
  TempDir dir;
  write_inputs(dir);
  const auto m = load_manifest(full_manifest(), dir.path().string());
  const auto result = run(m);
  PublishConfig cfg{"CC-BY-4.0", "Delos monitoring layers", {"A. Researcher", "B. Surveyor"}, "10.5281/zenodo.1",
                    dir.file("bundle")};
  const auto out = publish(result.database_path, cfg, parse_timestamp("2024-06-01T00:00:00Z"));
  CHECK(fs::exists(fs::path(out) / "LICENSE"));
  CHECK(read_file((fs::path(out) / "LICENSE").string()).find("CC-BY-4.0") != std::string::npos);
  const auto desc = nlohmann::json::parse(read_file((fs::path(out) / "descriptor.json").string()));
  CHECK(desc["license"]["id"] == "CC-BY-4.0");
  CHECK(desc["published"] == format_timestamp(*parse_timestamp("2024-06-01T00:00:00Z")));
  CHECK(desc["citation"]["text"].get<std::string>().find("2024") != std::string::npos);
  std::size_t rasters = 0;
  for (const auto& f : desc["files"]) {
    const auto path = (fs::path(out) / f["path"].get<std::string>()).string();
    CHECK(sha256_file(path) == f["sha256"].get<std::string>());
    CHECK(fs::file_size(path) == f["bytes"].get<std::uintmax_t>());
    if (fs::path(f["path"].get<std::string>()).extension() == ".asc") ++rasters;
  }
  CHECK(rasters == 3);
  // The copy opens on its own and passes the conformance checks.
  CHECK(gpkg::check_conformance((fs::path(out) / "site.gpkg").string()).empty());

  cfg.license = "BOGUS";
  const auto bad = error_of([&] { publish(result.database_path, cfg); });
  CHECK(bad.code() == Errc::UnknownLicense);
  CHECK(std::find(bad.notes().begin(), bad.notes().end(), "CC0-1.0") != bad.notes().end());
}
