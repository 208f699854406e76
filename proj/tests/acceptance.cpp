// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include "argus/crs.hpp"
#include "argus/enrich.hpp"
#include "argus/pipeline.hpp"
#include "argus/query.hpp"
#include "argus/standardize.hpp"
#include "argus/text.hpp"
#include "fixtures/corpus.hpp"
#include "test_support.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>

using namespace argus;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

const std::string kDictionary = std::string(ARGUS_SOURCE_DIR) + "/data/dictionary.txt";

// Shared state: the corpus and the runs over it, built once.
struct World {
  testing::TempDir tmp;
  fixtures::Corpus corpus;
  pipeline::RunResult plain;
  double plain_seconds = 0;
  std::string enriched_db;

  World() {
    corpus = fixtures::write_delos_corpus(tmp.path().string(), kDictionary);
    const auto t0 = Clock::now();
    plain = pipeline::run(pipeline::load_manifest_file(corpus.manifest), {.workers = 8});
    plain_seconds = since(t0);
  }
};

Verdict consolidation(World& w) {
  const auto db = gpkg::Database::open(w.plain.database_path);
  const auto layers = db.list_layers();
  std::size_t missing = 0;
  for (const auto& id : w.corpus.input_ids) missing += db.has_layer(id) ? 0 : 1;
  std::size_t gpkgs = 0;
  for (const auto& e : fs::directory_iterator(w.tmp.path())) gpkgs += e.path().extension() == ".gpkg" ? 1 : 0;
  const bool ok = w.corpus.input_ids.size() == 53 && gpkgs == 1 && layers.size() == 53 && missing == 0 &&
                  w.plain.metrics.n_databases == 1 && w.plain_seconds < 60;
  return {ok, std::to_string(w.corpus.input_ids.size()) + " datasets -> " + std::to_string(gpkgs) +
                  " GeoPackage with " + std::to_string(layers.size()) + " layers in " + fmt(w.plain_seconds, 2) + " s"};
}

Verdict standardization(World& w) {
  const double before = w.plain.metrics.standardized_ratio_before, after = w.plain.metrics.standardized_ratio_after;
  const bool ok = std::abs(before - 0.14) <= 0.01 && after == 1.0;
  return {ok, "before " + fmt(100 * before, 2) + "% (" + std::to_string(w.corpus.canonical_fields) + "/" +
                  std::to_string(w.corpus.fields) + " fields), after " + fmt(100 * after, 2) + "%"};
}

Verdict coverage(World& w) {
  const auto r = pipeline::run(pipeline::load_manifest_file(w.corpus.enriched_manifest), {.workers = 8});
  w.enriched_db = r.database_path;
  if (r.metrics.coverage.size() != 1) return {false, "no coverage target reported"};
  const auto& c = r.metrics.coverage[0];
  const auto stations = gpkg::Database::open(r.database_path).read_layer("stations").rows().size();
  const bool ok = stations == 3 && c.before < 0.25 && c.after == 1.0 && c.after > c.before;
  return {ok, std::to_string(stations) + " stations at r=" + fmt(w.corpus.station_radius, 0) + " m cover " +
                  fmt(100 * c.before, 1) + "%, IDW raster covers " + fmt(100 * c.after, 1) + "%"};
}

Verdict analysis(World& w) {
  const auto& m = w.plain.metrics;
  if (!m.cross_dataset_query_seconds) return {false, "no analysis script ran"};
  // The script must touch three layers.
  std::size_t layers = 0;
  const auto manifest = pipeline::load_manifest_file(w.corpus.manifest);
  for (const auto& id : w.corpus.input_ids) {
    bool used = false;
    for (const auto& sql : manifest.analysis) used = used || sql.find(" " + id + " ") != std::string::npos;
    layers += used ? 1 : 0;
  }
  const bool ok = layers >= 3 && *m.cross_dataset_query_seconds < 10;
  return {ok, std::to_string(m.analysis_statements) + " statements over " + std::to_string(layers) + " layers in " +
                  fmt(*m.cross_dataset_query_seconds, 4) + " s"};
}

// In-memory oracle for aggregate questions over the real corpus layers.
struct OracleLayer {
  std::string name;
  std::vector<std::string> numeric;
  std::string group;
  std::vector<std::vector<double>> values;
  std::vector<std::string> keys;
};

std::vector<OracleLayer> oracle_layers(const gpkg::Database& db) {
  std::vector<OracleLayer> out;
  for (const auto& s : db.list_layers()) {
    if (s.kind != gpkg::LayerKind::vector) continue;
    const auto layer = db.read_layer(s.name);
    OracleLayer o{s.name, {}, "", {}, {}};
    std::vector<std::size_t> idx;
    std::optional<std::size_t> group;
    for (std::size_t i = 0; i < layer.schema().size(); ++i) {
      const auto& f = layer.schema()[i];
      if (f.value_type == ValueType::real || f.value_type == ValueType::integer) {
        o.numeric.push_back(f.column_name());
        idx.push_back(i);
      } else if (!group && (f.value_type == ValueType::text || f.value_type == ValueType::categorical)) {
        group = i;
        o.group = f.column_name();
      }
    }
    if (o.numeric.size() < 2 || !group) continue;
    for (const auto& row : layer.rows()) {
      std::vector<double> v;
      for (auto i : idx) {
        const auto& c = row.cells[i];
        v.push_back(std::holds_alternative<double>(c) ? std::get<double>(c)
                                                      : static_cast<double>(std::get<std::int64_t>(c)));
      }
      o.values.push_back(std::move(v));
      o.keys.push_back(std::get<std::string>(row.cells[*group]));
    }
    out.push_back(std::move(o));
  }
  return out;
}

Verdict nl_queries(World& w) {
  const auto db = gpkg::Database::open(w.plain.database_path);
  const auto report = query::evaluate_nl_suite(db, query::load_suite(std::string(ARGUS_SOURCE_DIR) + "/data/questions.json"));
  const auto correct = report.count(query::Outcome::correct), unparsable = report.count(query::Outcome::unparsable);

  // 500 generated in-grammar questions.
  const auto layers = oracle_layers(db);
  const auto catalog = query::Catalog::from_database(db);
  std::mt19937_64 rng(17);
  const char* agg_words[] = {"average", "maximum", "minimum", "sum of", "count of"};
  const char* op_words[] = {"above", "below", "at least", "at most", "between"};
  std::size_t right = 0, asked = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto& l = layers[rng() % layers.size()];
    const int agg = static_cast<int>(rng() % 5);
    const std::size_t target = rng() % l.numeric.size();
    std::string q = std::string(rng() % 2 ? "what is the " : "") + agg_words[agg] + " " + l.numeric[target] + " in " + l.name;
    std::vector<bool> keep(l.values.size(), true);
    const int nfilters = static_cast<int>(rng() % 3);
    for (int f = 0; f < nfilters; ++f) {
      const std::size_t c = rng() % l.numeric.size();
      // Literals near actual values so filters bite.
      const double base = l.values[rng() % l.values.size()][c];
      const double lit = std::round(base * 2) / 2, hi = lit + std::round(std::abs(base) * 0.2 * 2) / 2 + 0.5;
      const int op = static_cast<int>(rng() % 5);
      q += (f == 0 ? " where " : " and ") + l.numeric[c] + " " + op_words[op] + " " + format_double(lit) +
           (op == 4 ? " and " + format_double(hi) : "");
      for (std::size_t r = 0; r < keep.size(); ++r) {
        const double x = l.values[r][c];
        const bool ok = op == 0 ? x > lit : op == 1 ? x < lit : op == 2 ? x >= lit : op == 3 ? x <= lit : x >= lit && x <= hi;
        keep[r] = keep[r] && ok;
      }
    }
    const bool grouped = rng() % 3 == 0;
    if (grouped) q += " per " + l.group;

    std::map<std::string, std::vector<double>> groups;
    for (std::size_t r = 0; r < keep.size(); ++r)
      if (keep[r]) groups[grouped ? l.keys[r] : ""].push_back(l.values[r][target]);
    if (!grouped && groups.empty()) groups[""];

    ++asked;
    try {
      const auto result = query::sql_query(db, query::ast_to_sql(query::parse_nl(q, catalog)));
      bool ok = result.size() == groups.size();
      std::size_t i = 0;
      for (const auto& [key, xs] : groups) {
        if (!ok) break;
        const auto& row = result.rows[i++];
        if (grouped && row[0] != Cell{key}) ok = false;
        const Cell& got = row.back();
        if (agg != 4 && xs.empty()) {
          ok = ok && is_null(got);
          continue;
        }
        double want = 0;
        if (agg == 4) want = static_cast<double>(xs.size());
        else if (agg == 0 || agg == 3) {
          for (double x : xs) want += x;
          if (agg == 0) want /= static_cast<double>(xs.size());
        } else {
          want = agg == 1 ? *std::max_element(xs.begin(), xs.end()) : *std::min_element(xs.begin(), xs.end());
        }
        const double g = std::holds_alternative<std::int64_t>(got) ? static_cast<double>(std::get<std::int64_t>(got))
                                                                    : std::holds_alternative<double>(got) ? std::get<double>(got) : NAN;
        ok = ok && std::abs(g - want) <= 1e-9 * std::max(1.0, std::abs(want));
      }
      right += ok ? 1 : 0;
      if (!ok) std::cerr << "  generated question answered wrongly: " << q << "\n";
    } catch (const Error& e) {
      std::cerr << "  generated question failed: " << q << ": " << e.what() << "\n";
    }
  }
  const bool ok = report.cases.size() == 20 && correct == 17 && unparsable == 3 && right == asked && asked == 500;
  return {ok, "suite " + std::to_string(correct) + "/" + std::to_string(report.cases.size()) + " correct, " +
                  std::to_string(unparsable) + " unparsable; generated " + std::to_string(right) + "/" +
                  std::to_string(asked) + " match the oracle"};
}

double metres_between(const Coord& a, const Coord& b) {
  const double lat = (a.y() + b.y()) / 2 * std::numbers::pi / 180;
  return std::hypot((a.x() - b.x()) * 111320 * std::cos(lat), (a.y() - b.y()) * 110574);
}

Verdict crs_correctness(World&) {
  const auto rows = testing::read_table(std::string(ARGUS_SOURCE_DIR) + "/tests/data/crs_reference.csv");
  const auto& reg = crs::CrsRegistry::standard();
  const auto& geo = reg.get(4326);
  const auto& gr = reg.get(2100);
  const auto& laea = reg.get(3035);
  double worst_fwd = 0, worst_inv = 0, worst_trip = 0;
  std::size_t n = 0;
  const auto t0 = Clock::now();
  for (const auto& row : rows) {
    if (row.at("id").rfind("p", 0) != 0) continue;  // the 100 random Aegean points
    ++n;
    const Coord ll(testing::num(row, "lon"), testing::num(row, "lat"));
    for (const auto& [def, e, nn] : {std::tuple{&gr, "e2100", "n2100"}, std::tuple{&laea, "e3035", "n3035"}}) {
      const Coord ref(testing::num(row, e), testing::num(row, nn));
      const Coord en = crs::transform_point(ll, geo, *def);
      worst_fwd = std::max(worst_fwd, (en - ref).norm());
      worst_inv = std::max(worst_inv, metres_between(crs::transform_point(ref, *def, geo), ll));
      worst_trip = std::max(worst_trip, metres_between(crs::transform_point(en, *def, geo), ll));
      worst_trip = std::max(worst_trip, (crs::transform_point(crs::transform_point(ref, *def, geo), geo, *def) - ref).norm());
    }
  }
  const double secs = since(t0);
  const bool ok = n == 100 && worst_fwd < 0.01 && worst_inv < 0.01 && worst_trip < 0.01 && secs < 1;
  return {ok, std::to_string(n) + " points: forward " + fmt(worst_fwd * 1000, 4) + " mm, inverse " +
                  fmt(worst_inv * 1000, 4) + " mm, round trip " + fmt(worst_trip * 1000, 4) + " mm, " + fmt(secs, 4) +
                  " s"};
}

Verdict conformance(World& w) {
  std::vector<std::string> dbs{w.plain.database_path};
  if (!w.enriched_db.empty()) dbs.push_back(w.enriched_db);
  std::size_t problems = 0;
  for (const auto& p : dbs) {
    const auto v = gpkg::check_conformance(p);
    for (const auto& s : v) std::cerr << "  " << p << ": " << s << "\n";
    problems += v.size();
  }
  const auto bytes = read_file_bytes(w.plain.database_path);
  const bool header = bytes.size() > 72 && std::string(bytes.begin() + 68, bytes.begin() + 72) == "GPKG";
  return {problems == 0 && header && dbs.size() == 2,
          std::to_string(dbs.size()) + " pipeline databases, " + std::to_string(problems) +
              " conformance problems; external GIS check runs as the gdal_interop test"};
}

Verdict kernels(World&) {
  std::mt19937_64 rng(99);
  auto U = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const auto& gr = crs::CrsRegistry::standard().get(2100);
  double idw_err = 0, krig_exact = 0, krig_oracle = 0;
  int configs = 0;
  for (int t = 0; t < 200; ++t) {
    // Samples on distinct cell centres of a random grid.
    const double cell = U(5, 50);
    const int nx = 8 + static_cast<int>(rng() % 12), ny = 8 + static_cast<int>(rng() % 12);
    const double x0 = U(400000, 600000), y0 = U(4000000, 4200000);
    enrich::GridSpec spec{{x0, y0, x0 + nx * cell, y0 + ny * cell}, cell, gr};
    const int n = 3 + static_cast<int>(rng() % 20);
    std::vector<std::pair<int, int>> cells;
    while (static_cast<int>(cells.size()) < n) {
      const std::pair<int, int> c{static_cast<int>(rng() % ny), static_cast<int>(rng() % nx)};
      if (std::find(cells.begin(), cells.end(), c) == cells.end()) cells.push_back(c);
    }
    enrich::Samples s{enrich::PointMatrix(n, 2), Eigen::VectorXd(n), gr};
    for (int i = 0; i < n; ++i) {
      s.xy.row(i) = spec.cell_center(cells[i].first, cells[i].second).transpose();
      s.values(i) = U(-50, 50);
    }
    const auto g = enrich::idw(s, spec, {U(1, 3), std::nullopt});
    for (int i = 0; i < n; ++i)
      idw_err = std::max(idw_err, std::abs(g.at(cells[i].first, cells[i].second) - s.values(i)) /
                                      std::max(1.0, std::abs(s.values(i))));

    const enrich::VariogramModel model{rng() % 2 ? enrich::VariogramKind::spherical : enrich::VariogramKind::exponential,
                                       0, U(1, 100), U(cell * 2, cell * 20)};
    const enrich::OrdinaryKriging ok(s, model);
    for (int i = 0; i < n; ++i)
      krig_exact = std::max(krig_exact, std::abs(ok.predict(Coord(s.xy.row(i).transpose())).estimate - s.values(i)) /
                                            std::max(1.0, std::abs(s.values(i))));
    // Brute force: solve the bordered system afresh for a few targets.
    Eigen::MatrixXd a = Eigen::MatrixXd::Ones(n + 1, n + 1);
    a(n, n) = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = model((s.xy.row(i) - s.xy.row(j)).norm());
    for (int k = 0; k < 5; ++k) {
      const Coord at(U(x0, x0 + nx * cell), U(y0, y0 + ny * cell));
      Eigen::VectorXd b = Eigen::VectorXd::Ones(n + 1);
      for (int i = 0; i < n; ++i) b(i) = model((s.xy.row(i).transpose() - at).norm());
      const Eigen::VectorXd lw = a.fullPivLu().solve(b);
      const double want = lw.head(n).dot(s.values);
      krig_oracle = std::max(krig_oracle, std::abs(ok.predict(at).estimate - want));
    }
    ++configs;
  }

  // KDE mass on a padded grid.
  double worst_mass = 0;
  for (int t = 0; t < 20; ++t) {
    const int n = 1 + static_cast<int>(rng() % 30);
    enrich::PointMatrix p(n, 2);
    for (int i = 0; i < n; ++i) p.row(i) << U(0, 1000), U(0, 1000);
    const double h = U(20, 120);
    const enrich::GridSpec spec{{-6 * h, -6 * h, 1000 + 6 * h, 1000 + 6 * h}, h / 4, gr};
    const double mass = enrich::kde(p, h, spec).values().sum() * spec.cell_size * spec.cell_size;
    worst_mass = std::max(worst_mass, std::abs(mass - 1));
  }

  // One-hot row sums.
  bool sums_ok = true;
  for (int t = 0; t < 50; ++t) {
    const int k = 1 + static_cast<int>(rng() % 10);
    std::vector<Feature> rows;
    for (int r = 0; r < 40; ++r) {
      Cell c = rng() % 7 == 0 ? Cell{} : Cell{"c" + std::to_string(rng() % k)};
      rows.push_back({{c}, Geometry::point(U(0, 1), U(0, 1))});
    }
    const FeatureLayer layer("cats", gr, {{"category", std::nullopt, ValueType::categorical, std::nullopt, std::nullopt}},
                             rows);
    const auto [out, report] = standardize::one_hot(layer, "category");
    for (const auto& row : out.rows()) {
      std::int64_t sum = 0;
      for (std::size_t c = 1; c < row.cells.size(); ++c) sum += std::get<std::int64_t>(row.cells[c]);
      sums_ok = sums_ok && (sum == 0 || sum == 1) && (sum == 0) == is_null(row.cells[0]);
    }
  }
  const bool ok = configs == 200 && idw_err <= 1e-9 && krig_exact <= 1e-9 && krig_oracle <= 1e-8 && worst_mass <= 0.02 &&
                  sums_ok;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "%d configs: IDW at samples %.1e, kriging at samples %.1e, vs linear solve %.1e; KDE mass off by %.2f%%; "
                "one-hot sums %s",
                configs, idw_err, krig_exact, krig_oracle, 100 * worst_mass, sums_ok ? "in {0,1}" : "broken");
  return {ok, buf};
}

Verdict determinism(World& w) {
  testing::TempDir a, b;
  auto run_in = [&](const testing::TempDir& dir, int workers) {
    const auto c = fixtures::write_delos_corpus(dir.path().string(), kDictionary);
    return pipeline::run(pipeline::load_manifest_file(c.enriched_manifest), {.workers = workers});
  };
  const auto r1 = run_in(a, 1);
  const auto d1 = gpkg::content_digest(r1.database_path);
  const auto r1b = run_in(a, 1);
  const auto d1b = gpkg::content_digest(r1b.database_path);
  const auto r8 = run_in(b, 8);
  const auto d8 = gpkg::content_digest(r8.database_path);
  bool same_prov = r1.provenance.size() == r8.provenance.size();
  for (std::size_t i = 0; same_prov && i < r1.provenance.size(); ++i)
    same_prov = r1.provenance[i].sha256 == r8.provenance[i].sha256 && r1.provenance[i].input_id == r8.provenance[i].input_id;
  const bool ok = d1 == d1b && d1 == d8 && same_prov && !w.corpus.input_ids.empty();
  return {ok, "content digest " + d1.substr(0, 16) + (d1 == d1b ? " repeated" : " differs on rerun") +
                  (d1 == d8 ? ", equal with 8 workers" : ", differs with 8 workers") +
                  (same_prov ? ", provenance checksums equal" : ", provenance differs")};
}

}  // namespace

int main() {
  std::unique_ptr<World> world;
  try {
    world = std::make_unique<World>();
  } catch (const std::exception& e) {
    std::cout << "FAIL setup: " << e.what() << "\n";
    return 1;
  }
  const std::vector<std::pair<const char*, std::function<Verdict(World&)>>> criteria{
      {"integration consolidation", consolidation},
      {"standardization ratio", standardization},
      {"coverage gain", coverage},
      {"automated cross-dataset analysis", analysis},
      {"natural-language query accuracy", nl_queries},
      {"CRS correctness", crs_correctness},
      {"GeoPackage conformance", conformance},
      {"numerical kernels", kernels},
      {"determinism", determinism},
  };
  int failed = 0, i = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check(*world);
    } catch (const std::exception& e) {
      v = {false, std::string("threw ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS " : "FAIL ") << ++i << " " << name << ": " << v.detail << "\n" << std::flush;
  }
  return failed == 0 ? 0 : 1;
}
