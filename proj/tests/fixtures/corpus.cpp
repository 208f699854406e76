#include "fixtures/corpus.hpp"

#include "argus/crs.hpp"
#include "argus/ingest.hpp"
#include "argus/text.hpp"
#include "fixtures/fixtures.hpp"

#include <cmath>
#include <functional>
#include <random>

namespace argus::fixtures {

namespace {

using Rng = std::mt19937_64;

// Rough outline of the island, lon/lat.
const std::vector<Coord> kOutline{{25.2620, 37.4080}, {25.2700, 37.4060}, {25.2745, 37.4010}, {25.2760, 37.3950},
                                  {25.2720, 37.3890}, {25.2680, 37.3850}, {25.2640, 37.3870}, {25.2610, 37.3930},
                                  {25.2580, 37.3990}, {25.2590, 37.4050}, {25.2620, 37.4080}};
const Coord kCentroid{25.2675, 37.3965};

struct Col {
  std::string raw;        // name as a messy source would spell it
  std::string canonical;  // dictionary name
  ValueType type;
  std::function<Cell(Rng&, int)> gen;
};

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

Cell real(double lo, double hi, Rng& rng) { return std::round(uniform(rng, lo, hi) * 100) / 100; }

std::string pick(Rng& rng, const std::vector<std::string>& from) {
  return from[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(from.size()) - 1))];
}

std::string date_in(int year, int row) {
  const int month = 1 + row % 12, day = 1 + (row * 7) % 28;
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
  return buf;
}

Coord inside(Rng& rng) {
  const Geometry island = Polygon{{kOutline}};
  while (true) {
    const Coord c(uniform(rng, 25.2580, 25.2760), uniform(rng, 37.3850, 37.4080));
    if (contains(island, c)) return c;
  }
}

// Decides which fields keep their canonical spelling: every seventh one, or
// the next eligible field when that one cannot (DBF names stop at 10 chars).
class Namer {
 public:
  std::string name(const Col& c, bool dbf) {
    ++fields_;
    if (++since_ == 7) pending_ = true;
    if (pending_ && (!dbf || c.canonical.size() <= 10)) {
      pending_ = false;
      since_ = 0;
      ++canonical_;
      return c.canonical;
    }
    return c.raw;
  }
  std::size_t fields() const { return fields_; }
  std::size_t canonical() const { return canonical_; }

 private:
  std::size_t fields_ = 0, canonical_ = 0, since_ = 0;
  bool pending_ = false;
};

std::string render(const Cell& c) {
  if (std::holds_alternative<bool>(c)) return std::get<bool>(c) ? "true" : "false";
  return cell_to_string(c);
}

struct Input {
  std::string id, file, extra;  // extra: manifest lines such as crs or band
};

class Writer {
 public:
  Writer(std::string dir, unsigned seed) : dir_(std::move(dir)), rng_(seed) {}

  void csv(const std::string& id, const std::vector<Col>& cols, int rows, bool located) {
    std::vector<std::string> header;
    for (const auto& c : cols) header.push_back(namer_.name(c, false));
    if (located) {
      header.push_back(namer_.name({"lon", "longitude", ValueType::real, {}}, false));
      header.push_back(namer_.name({"lat", "latitude", ValueType::real, {}}, false));
    }
    std::string text = join(header, ",") + "\n";
    for (int r = 0; r < rows; ++r) {
      std::vector<std::string> cells;
      for (const auto& c : cols) cells.push_back(render(c.gen(rng_, r)));
      if (located) {
        const auto p = inside(rng_);
        cells.push_back(format_double(p.x()));
        cells.push_back(format_double(p.y()));
      }
      text += join(cells, ",") + "\n";
    }
    write_file(dir_ + "/" + id + ".csv", text);
    inputs_.push_back({id, id + ".csv", ""});
  }

  void shp(const std::string& id, const std::vector<Col>& cols, int rows, const std::function<Geometry(Rng&)>& shape) {
    std::vector<AttributeField> schema;
    for (const auto& c : cols) schema.push_back({namer_.name(c, true), std::nullopt, c.type, std::nullopt, std::nullopt});
    std::vector<Feature> features;
    for (int r = 0; r < rows; ++r) {
      Feature f;
      for (const auto& c : cols) f.cells.push_back(c.gen(rng_, r));
      f.geometry = shape(rng_);
      features.push_back(std::move(f));
    }
    save_shapefile(FeatureLayer(id, crs::wgs84(), std::move(schema), std::move(features)), dir_, id);
    inputs_.push_back({id, id + ".shp", ""});
  }

  RasterGrid grid(double cell, int n, double base, double slope) {
    const auto& gr = crs::CrsRegistry::standard().get(2100);
    const auto c = crs::transform(Geometry(Point{kCentroid}), crs::wgs84(), gr).envelope();
    RasterValues v(n, n);
    for (int r = 0; r < n; ++r)
      for (int k = 0; k < n; ++k) v(r, k) = std::round((base + slope * (r + k) + uniform(rng_, 0, 1)) * 100) / 100;
    v(0, 0) = -9999;
    const Coord origin(std::round(c.min_x - n * cell / 2), std::round(c.min_y - n * cell / 2));
    return RasterGrid(origin, cell, std::move(v), -9999, gr);
  }

  void asc(const std::string& id, const Col& band, double base, double slope) {
    const auto g = grid(100, 24, base, slope);
    write_file(dir_ + "/" + id + ".asc", ingest::write_ascii_grid(g));
    inputs_.push_back({id, id + ".asc", "crs = 2100\nband = " + namer_.name(band, false) + "\n"});
  }

  void tif(const std::string& id, const Col& band, double base, double slope) {
    const auto g = grid(150, 16, base, slope);
    const auto bytes = write_geotiff(g);
    write_file(dir_ + "/" + id + ".tif", std::string(bytes.begin(), bytes.end()));
    inputs_.push_back({id, id + ".tif", "band = " + namer_.name(band, false) + "\n"});
  }

  const std::vector<Input>& inputs() const { return inputs_; }
  const Namer& namer() const { return namer_; }

 private:
  std::string dir_;
  Rng rng_;
  Namer namer_;
  std::vector<Input> inputs_;
};

std::string site_section() {
  std::string boundary;
  for (std::size_t i = 0; i + 1 < kOutline.size(); ++i)
    boundary += (i ? "  " : "") + format_double(kOutline[i].x()) + " " + format_double(kOutline[i].y());
  return "[site]\nid = delos\ncentroid = " + format_double(kCentroid.x()) + " " + format_double(kCentroid.y()) +
         "\nboundary = " + boundary + "\n\n";
}

}  // namespace

Corpus write_delos_corpus(const std::string& dir, const std::string& dictionary_path, unsigned seed) {
  Writer w(dir, seed);
  const std::vector<std::string> periods{"archaic", "classical", "hellenistic", "roman"};
  const std::vector<std::string> materials{"marble", "granite", "gneiss", "brick"};
  const std::vector<std::string> conditions{"good", "fair", "poor"};
  const std::vector<std::string> covers{"bare_rock", "shrubland", "grassland", "built"};

  auto r = [](double lo, double hi) { return [=](Rng& g, int) { return real(lo, hi, g); }; };
  auto of = [](const std::vector<std::string>& v) { return [v](Rng& g, int) { return Cell(pick(g, v)); }; };
  auto id = [](std::string prefix) { return [prefix](Rng&, int row) { return Cell(prefix + std::to_string(row + 1)); }; };
  auto dates = [](int year) { return [year](Rng&, int row) { return Cell(date_in(year, row)); }; };
  auto count = [](std::int64_t lo, std::int64_t hi) { return [=](Rng& g, int) { return Cell(uniform_int(g, lo, hi)); }; };
  auto flag = [](Rng& g, int) { return Cell(uniform_int(g, 0, 3) > 0); };

  // CSV: 20 datasets
  w.csv("stations",
        {{"station", "station_id", ValueType::text, id("ST")},
         {"temp", "air_temperature", ValueType::real, r(17, 24)},
         {"wind_spd", "wind_speed", ValueType::real, r(2, 9)},
         {"rh", "relative_humidity", ValueType::real, r(55, 80)}},
        3, true);
  for (int year = 2015; year <= 2022; ++year)
    w.csv("meteo_" + std::to_string(year),
          {{"obs_date", "observation_date", ValueType::date, dates(year)},
           {"stn", "station_id", ValueType::text, id("ST")},
           {"t2m", "air_temperature", ValueType::real, r(8, 31)},
           {"precip", "precipitation", ValueType::real, r(0, 40)},
           {"slp", "air_pressure", ValueType::real, r(1002, 1024)},
           {"wd", "wind_direction", ValueType::real, r(0, 359)}},
          24, false);
  for (int year = 2016; year <= 2021; ++year)
    w.csv("visits_" + std::to_string(year),
          {{"survey_date", "observation_date", ValueType::date, dates(year)},
           {"monument", "site_name", ValueType::text, id("Monument ")},
           {"visitors", "visitor_count", ValueType::integer, count(20, 900)},
           {"cond", "condition", ValueType::text, of(conditions)}},
          15, true);
  w.csv("sea_level",
        {{"slr", "sea_level_rise", ValueType::real, r(0.1, 0.9)},
         {"retreat_rate", "erosion_rate", ValueType::real, r(0.05, 0.6)},
         {"date", "observation_date", ValueType::date, dates(2020)},
         {"station_name", "station_id", ValueType::text, id("TG")}},
        10, true);
  for (int k = 1; k <= 4; ++k)
    w.csv("loggers_" + std::to_string(k),
          {{"stn_id", "station_id", ValueType::text, id("LG")},
           {"humidity", "relative_humidity", ValueType::real, r(40, 95)},
           {"air_temp", "air_temperature", ValueType::real, r(10, 35)},
           {"pres", "air_pressure", ValueType::real, r(1000, 1025)}},
          12, true);

  // Shapefiles: 15 datasets
  auto point = [](Rng& g) { return Geometry(Point{inside(g)}); };
  auto square = [](Rng& g) {
    const auto c = inside(g);
    const double d = 0.0004;
    return Geometry(Polygon{{{Coord(c.x() - d, c.y() - d), Coord(c.x() + d, c.y() - d), Coord(c.x() + d, c.y() + d),
                              Coord(c.x() - d, c.y() + d), Coord(c.x() - d, c.y() - d)}}});
  };
  auto shore = [](Rng& g) {
    const auto i = static_cast<std::size_t>(uniform_int(g, 0, static_cast<std::int64_t>(kOutline.size()) - 2));
    return Geometry(LineString{{kOutline[i], kOutline[i + 1]}});
  };
  for (int k = 1; k <= 5; ++k)
    w.shp("monuments_sector_" + std::to_string(k),
          {{"name", "site_name", ValueType::text, id("Building " + std::to_string(k) + ".")},
           {"era", "period", ValueType::text, of(periods)},
           {"mat", "material", ValueType::text, of(materials)},
           {"cond", "condition", ValueType::text, of(conditions)},
           {"area_m2", "area", ValueType::real, r(20, 600)},
           {"protected", "listed", ValueType::boolean, flag}},
          14, point);
  for (int year = 2018; year <= 2022; ++year)
    w.shp("quakes_" + std::to_string(year),
          {{"mag", "magnitude", ValueType::real, r(1.5, 5.5)},
           {"dep", "depth", ValueType::real, r(2, 30)},
           {"stn", "station_id", ValueType::text, id("SEIS")},
           {"alt", "elevation", ValueType::real, r(0, 110)}},
          18, point);
  for (int k = 1; k <= 3; ++k)
    w.shp("landcover_" + std::to_string(k),
          {{"lc", "landcover", ValueType::text, of(covers)},
           {"surface", "area", ValueType::real, r(1000, 9000)},
           {"state", "condition", ValueType::text, of(conditions)}},
          10, square);
  for (int k = 1; k <= 2; ++k)
    w.shp("coastline_" + std::to_string(k),
          {{"erosion", "erosion_rate", ValueType::real, r(0.05, 0.7)},
           {"sea_rise", "sea_level_rise", ValueType::real, r(0.1, 0.8)},
           {"land_use", "landcover", ValueType::text, of(covers)}},
          8, shore);

  // ASCII grids: 10, GeoTIFFs: 8
  for (int k = 1; k <= 4; ++k) w.asc("dem_tile_" + std::to_string(k), {"dem", "elevation", ValueType::real, {}}, 5, 4);
  for (int k = 1; k <= 3; ++k)
    w.asc("slr_scenario_" + std::to_string(k), {"slr", "sea_level_rise", ValueType::real, {}}, 0.2 * k, 0.01);
  for (int k = 1; k <= 3; ++k)
    w.asc("temperature_grid_" + std::to_string(k), {"t2m", "air_temperature", ValueType::real, {}}, 18, 0.1);
  for (int k = 1; k <= 3; ++k) w.tif("dem_survey_" + std::to_string(k), {"alt", "elevation", ValueType::real, {}}, 3, 5);
  for (int k = 1; k <= 3; ++k)
    w.tif("rainfall_" + std::to_string(k), {"rainfall", "precipitation", ValueType::real, {}}, 20, 1.5);
  for (int k = 1; k <= 2; ++k)
    w.tif("humidity_grid_" + std::to_string(k), {"hum", "relative_humidity", ValueType::real, {}}, 60, 0.5);

  Corpus out;
  out.dir = dir;
  out.fields = w.namer().fields();
  out.canonical_fields = w.namer().canonical();
  out.stations = 3;
  out.station_radius = 150;

  std::string inputs;
  for (const auto& in : w.inputs()) {
    inputs += "[input " + in.id + "]\npath = " + in.file + "\n" + in.extra + "\n";
    out.input_ids.push_back(in.id);
  }
  const std::string common = site_section() + "[dictionary]\npath = " + dictionary_path + "\n\n" + inputs +
                             "# Monument condition against nearby seismicity and the station climate.\n"
                             "[analysis]\n"
                             "sql = SELECT m.period, count(*) AS monuments, avg(m.area) AS mean_area,\n"
                             "       (SELECT max(q.magnitude) FROM quakes_2022 q) AS max_magnitude,\n"
                             "       (SELECT avg(s.air_temperature) FROM stations s) AS mean_temperature\n"
                             "     FROM monuments_sector_1 m GROUP BY m.period ORDER BY m.period\n"
                             "sql = SELECT count(*) FROM quakes_2021 q JOIN monuments_sector_2 m\n"
                             "     ON abs(q.fid - m.fid) < 2 WHERE q.magnitude > 3\n\n";

  out.manifest = dir + "/delos.manifest";
  write_file(out.manifest, common + "[output]\ngpkg = delos.gpkg\ntimestamp = 2024-05-01T00:00:00Z\n");

  out.enriched_manifest = dir + "/delos_enriched.manifest";
  write_file(out.enriched_manifest,
             common +
                 "[step temperature_surface]\nkind = idw\nsource = stations\ntarget = temperature_idw\n"
                 "column = air_temperature\ncell_size = 50\ncrs = 2100\n\n"
                 "[step seismic_density]\nkind = kde\nsource = quakes_2022\ntarget = quake_density\n"
                 "cell_size = 100\ncrs = 2100\n\n"
                 "[step period_indicators]\nkind = one_hot\nsource = monuments_sector_1\n"
                 "target = monuments_sector_1\ncolumn = period\n\n"
                 "[coverage stations]\npoints = stations\nradius = 150\nraster = temperature_idw\n\n"
                 "[output]\ngpkg = delos_enriched.gpkg\ntimestamp = 2024-05-01T00:00:00Z\n");
  return out;
}

}  // namespace argus::fixtures
