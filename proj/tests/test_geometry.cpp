#include "argus/error.hpp"
#include "argus/geometry.hpp"
#include "argus/model.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace argus;

namespace {

Polygon square(double x0, double y0, double side) {
  return Polygon{{Ring{Coord(x0, y0), Coord(x0 + side, y0), Coord(x0 + side, y0 + side), Coord(x0, y0 + side),
                       Coord(x0, y0)}}};
}

}  // namespace

TEST_CASE("validate_geometry reports rule and location") {
  CHECK(validate_geometry(Geometry::point(25.27, 37.39)).empty());

  Polygon short_ring{{Ring{Coord(0, 0), Coord(1, 0), Coord(0, 0)}}};
  CHECK(validate_geometry(short_ring) == std::vector<std::string>{"ring_too_short@ring0"});

  LineString nan_line{{Coord(0, 0), Coord(std::numeric_limits<double>::quiet_NaN(), 1)}};
  CHECK(validate_geometry(nan_line) == std::vector<std::string>{"nonfinite_coordinate@v1"});

  Polygon open{{Ring{Coord(0, 0), Coord(1, 0), Coord(1, 1), Coord(0, 1)}}};
  CHECK(validate_geometry(open) == std::vector<std::string>{"ring_not_closed@ring0"});

  CHECK(validate_geometry(LineString{{Coord(0, 0)}}) == std::vector<std::string>{"linestring_too_short@v1"});
  CHECK(validate_geometry(MultiPolygon{}) == std::vector<std::string>{"multipolygon_empty@poly0"});
}

TEST_CASE("validate_geometry is pure") {
  Polygon bad{{Ring{Coord(0, 0), Coord(1, 0), Coord(0, 0)}}};
  const Geometry g(bad);
  CHECK(validate_geometry(g) == validate_geometry(g));
}

TEST_CASE("point in polygon with hole and boundary") {
  Polygon p = square(0, 0, 10);
  p.rings.push_back(square(4, 4, 2).rings.front());
  const Geometry g(p);
  CHECK(contains(g, Coord(1, 1)));
  CHECK_FALSE(contains(g, Coord(5, 5)));
  CHECK(contains(g, Coord(0, 5)));  // on edge
  CHECK_FALSE(contains(g, Coord(11, 5)));
  CHECK(area(g) == doctest::Approx(96.0));
}

TEST_CASE("envelope and wkt") {
  const Geometry g(square(1, 2, 3));
  const auto env = g.envelope();
  CHECK(env.min_x == 1);
  CHECK(env.max_y == 5);
  CHECK(to_wkt(Geometry::point(1.5, -2)) == "POINT (1.5 -2)");
  CHECK(to_wkt(g) == "POLYGON ((1 2, 4 2, 4 5, 1 5, 1 2))");
}

TEST_CASE("FeatureLayer construction enforces invariants") {
  const std::vector<AttributeField> schema{{"Station ID", std::nullopt, ValueType::integer, {}, {}}};
  FeatureLayer ok("Meteo Stations", CrsDef{}, schema, {Feature{{std::int64_t{3}}, Geometry::point(1, 2)}});
  CHECK(ok.name() == "meteo_stations");
  CHECK(ok.schema()[0].column_name() == "station_id");

  CHECK_THROWS_AS(FeatureLayer("x", CrsDef{}, schema, {Feature{{}, Geometry::point(1, 2)}}), Error);
  CHECK_THROWS_AS(FeatureLayer("x", CrsDef{}, schema, {Feature{{std::string("a")}, Geometry::point(1, 2)}}), Error);
  CHECK_THROWS_AS(FeatureLayer("x", CrsDef{}, schema,
                               {Feature{{Cell{}}, Polygon{{Ring{Coord(0, 0), Coord(1, 0), Coord(0, 0)}}}}}),
                  Error);
  CHECK_THROWS_AS(FeatureLayer("???", CrsDef{}, {}, {}), Error);
  // Null cells are allowed for every type.
  CHECK_NOTHROW(FeatureLayer("x", CrsDef{}, schema, {Feature{{Cell{}}, Geometry::point(1, 2)}}));
}

TEST_CASE("RasterGrid rejects non-finite data and bad cell size") {
  RasterValues v(1, 2);
  v << 1.0, -9999.0;
  CHECK_NOTHROW(RasterGrid(Coord(0, 0), 1.0, v, -9999.0, CrsDef{}));
  CHECK_THROWS_AS(RasterGrid(Coord(0, 0), 0.0, v, -9999.0, CrsDef{}), Error);
  v(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(RasterGrid(Coord(0, 0), 1.0, v, -9999.0, CrsDef{}), Error);
}

TEST_CASE("SiteConfig centroid must be inside the boundary") {
  SiteConfig site{"delos", Coord(5, 5), Geometry(square(0, 0, 10))};
  CHECK_NOTHROW(site.validate());
  site.centroid = Coord(20, 20);
  CHECK_THROWS_AS(site.validate(), Error);
}

TEST_CASE("ProvenanceRecord validation and timestamps") {
  ProvenanceRecord rec;
  rec.sha256 = std::string(64, 'a');
  rec.started = rec.finished = std::chrono::system_clock::now();
  CHECK_NOTHROW(rec.validate());
  rec.sha256 = std::string(64, 'A');
  CHECK_THROWS_AS(rec.validate(), Error);
  rec.sha256 = std::string(64, 'a');
  rec.finished = rec.started - std::chrono::seconds(1);
  CHECK_THROWS_AS(rec.validate(), Error);

  const auto t = parse_timestamp("2024-05-01T12:34:56.789Z");
  REQUIRE(t);
  CHECK(format_timestamp(*t) == "2024-05-01T12:34:56.789Z");
}
