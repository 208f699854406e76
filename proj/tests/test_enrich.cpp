#include "argus/enrich.hpp"

#include "argus/crs.hpp"

#include <doctest.h>

#include <Eigen/Cholesky>

#include <cmath>
#include <numbers>
#include <random>

using namespace argus;
using namespace argus::enrich;

namespace {

const CrsDef& greek() { return crs::CrsRegistry::standard().get(2100); }

Samples samples_of(std::vector<std::array<double, 3>> rows) {
  Samples s{PointMatrix(static_cast<Eigen::Index>(rows.size()), 2), Eigen::VectorXd(static_cast<Eigen::Index>(rows.size())),
            greek()};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s.xy.row(static_cast<Eigen::Index>(i)) << rows[i][0], rows[i][1];
    s.values(static_cast<Eigen::Index>(i)) = rows[i][2];
  }
  return s;
}

GridSpec spec(double x0, double y0, double x1, double y1, double cs) {
  return GridSpec{Envelope{x0, y0, x1, y1}, cs, greek()};
}

Samples random_samples(int n, double extent, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, extent), v(-5, 5);
  Samples s{PointMatrix(n, 2), Eigen::VectorXd(n), greek()};
  for (int i = 0; i < n; ++i) {
    s.xy.row(i) << u(rng), u(rng);
    s.values(i) = v(rng);
  }
  return s;
}

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an argus::Error");
  return Errc::InvalidArgument;
}

// Gauss-Jordan with partial pivoting, written out independently of Eigen's LU.
std::vector<double> gauss_solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    std::swap(a[p], a[c]);
    std::swap(b[p], b[c]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  for (std::size_t i = 0; i < n; ++i) b[i] /= a[i][i];
  return b;
}

}  // namespace

TEST_CASE("grid spec") {
  const auto g = spec(0, 0, 10, 5, 2);
  CHECK(g.ncols() == 5);
  CHECK(g.nrows() == 3);
  CHECK(g.cell_center(0, 0) == Coord(1, 1));
  CHECK(code_of([] { GridSpec{Envelope{0, 0, 1, 1}, 1, crs::CrsRegistry::standard().get(4326)}.validate(); }) ==
        Errc::InvalidArgument);
  CHECK(code_of([] { spec(0, 0, 0, 1, 1).validate(); }) == Errc::InvalidArgument);
  CHECK(code_of([] { spec(0, 0, 1, 1, 0).validate(); }) == Errc::InvalidArgument);
}

TEST_CASE("IDW") {
  SUBCASE("one sample gives a constant grid") {
    const auto g = idw(samples_of({{500, 500, 7.5}}), spec(0, 0, 1000, 1000, 100));
    CHECK(((g.values().array() - 7.5).abs() <= 1e-15 * 7.5).all());
  }
  SUBCASE("equidistant cell takes the mean") {
    for (double p : {0.5, 1.0, 2.0, 3.7}) {
      const auto g = idw(samples_of({{0, 5, 0}, {10, 5, 10}}), spec(0, 0, 10, 10, 10), {.power = p});
      CHECK(g.at(0, 0) == doctest::Approx(5.0).epsilon(1e-15));
    }
  }
  SUBCASE("matches a direct weighted sum") {
    const auto s = random_samples(5, 1000, 11);
    const auto sp = spec(0, 0, 1000, 1000, 37);
    const auto g = idw(s, sp, {.power = 2});
    double worst = 0;
    for (Eigen::Index r = 0; r < g.nrows(); ++r)
      for (Eigen::Index c = 0; c < g.ncols(); ++c) {
        const Coord at = sp.cell_center(r, c);
        double num = 0, den = 0;
        for (int i = 0; i < 5; ++i) {
          const double dx = s.xy(i, 0) - at.x(), dy = s.xy(i, 1) - at.y();
          const double w = 1.0 / (dx * dx + dy * dy);
          num += w * s.values(i);
          den += w;
        }
        worst = std::max(worst, std::abs(g.at(r, c) - num / den));
      }
    CHECK(worst <= 1e-12);
  }
  SUBCASE("exact at sample locations") {
    auto s = samples_of({{5, 5, 3}, {25, 15, -2}, {35, 35, 9}});
    const auto g = idw(s, spec(0, 0, 40, 40, 10));
    CHECK(g.at(0, 0) == 3);
    CHECK(g.at(1, 2) == -2);
    CHECK(g.at(3, 3) == 9);
  }
  SUBCASE("radius leaves far cells empty") {
    const auto g = idw(samples_of({{5, 5, 1}}), spec(0, 0, 100, 10, 10), {.max_radius = 20});
    CHECK(g.at(0, 0) == 1);
    CHECK(g.at(0, 9) == kNodata);
    CHECK(g.is_nodata(g.at(0, 9)));
  }
  SUBCASE("errors") {
    CHECK(code_of([] { idw(samples_of({}), spec(0, 0, 1, 1, 1)); }) == Errc::NoSamples);
    CHECK(code_of([] { idw(samples_of({{1, 1, 1}, {1, 1, 2}}), spec(0, 0, 1, 1, 1)); }) == Errc::DuplicateSampleLocation);
    auto s = samples_of({{1, 1, 1}});
    s.crs = crs::CrsRegistry::standard().get(3035);
    CHECK(code_of([&] { idw(s, spec(0, 0, 1, 1, 1)); }) == Errc::CrsMismatch);
  }
}

TEST_CASE("variogram model") {
  const VariogramModel sph{VariogramKind::spherical, 0.1, 1.0, 500};
  CHECK(sph(0.0) == 0.0);
  CHECK(sph(1e-9) == doctest::Approx(0.1));
  CHECK(sph(500.0) == doctest::Approx(1.0));
  CHECK(sph(5000.0) == 1.0);
  const VariogramModel ex{VariogramKind::exponential, 0, 2, 300};
  CHECK(ex(300.0) == doctest::Approx(2 * (1 - std::exp(-3.0))));
  Eigen::ArrayXd h = Eigen::ArrayXd::LinSpaced(400, 0, 1200);
  for (const auto& m : {sph, ex}) {
    const Eigen::ArrayXd g = m(h);
    CHECK((g.tail(399) - g.head(399) >= 0).all());
  }
  CHECK(code_of([] { VariogramModel{VariogramKind::spherical, 1, 1, 1}.validate(); }) == Errc::InvalidArgument);
}

TEST_CASE("variogram fitting") {
  SUBCASE("constant field has no structure") {
    auto s = random_samples(40, 1000, 3);
    s.values.setConstant(12.0);
    const auto m = fit_variogram(s, 12, VariogramKind::spherical);
    CHECK(m.sill - m.nugget <= 1e-6 * 144.0);
    CHECK(m.sill > m.nugget);
    CHECK(m.nugget >= 0);
  }
  SUBCASE("recovers the range of simulated spherical fields") {
    // One realisation is noisy, so judge the median over fixed seeds.
    const VariogramModel truth{VariogramKind::spherical, 0.1, 1.0, 500};
    const int n = 200;
    std::vector<double> ranges;
    int within = 0;
    for (std::uint64_t seed = 1; seed <= 15; ++seed) {
      auto s = random_samples(n, 2000, seed);
      Eigen::MatrixXd cov(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) cov(i, j) = truth.sill - truth((s.xy.row(i) - s.xy.row(j)).norm());
      const Eigen::LLT<Eigen::MatrixXd> llt(cov);
      REQUIRE(llt.info() == Eigen::Success);
      std::mt19937_64 rng(1000 + seed);
      std::normal_distribution<double> z;
      Eigen::VectorXd e(n);
      for (int i = 0; i < n; ++i) e(i) = z(rng);
      s.values = llt.matrixL() * e;
      const auto m = fit_variogram(s, 15, VariogramKind::spherical);
      ranges.push_back(m.range);
      within += std::abs(m.range - 500) <= 0.25 * 500;
    }
    std::nth_element(ranges.begin(), ranges.begin() + 7, ranges.end());
    MESSAGE("median fitted range " << ranges[7] << ", " << within << "/15 realisations within 25%");
    CHECK(std::abs(ranges[7] - 500) <= 0.25 * 500);
    CHECK(within >= 9);
  }
  SUBCASE("exponential kind fits too") {
    const auto m = fit_variogram(random_samples(30, 1000, 5), 10, VariogramKind::exponential);
    CHECK_NOTHROW(m.validate());
  }
  SUBCASE("errors") {
    CHECK(code_of([] { fit_variogram(random_samples(5, 100, 1), 5, VariogramKind::spherical); }) == Errc::TooFewSamples);
    auto s = random_samples(12, 100, 1);
    s.xy.setConstant(3);
    CHECK(code_of([&] { fit_variogram(s, 5, VariogramKind::spherical); }) == Errc::DegenerateDistances);
  }
}

TEST_CASE("ordinary kriging") {
  const VariogramModel model{VariogramKind::spherical, 0.0, 2.0, 600};

  SUBCASE("exact at samples") {
    const auto s = random_samples(12, 1000, 9);
    const OrdinaryKriging ok(s, model);
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      const auto p = ok.predict(s.xy.row(i).transpose());
      CHECK(std::abs(p.estimate - s.values(i)) <= 1e-9);
      CHECK(std::abs(p.variance) <= 1e-9);
    }
  }
  SUBCASE("midpoint of two samples") {
    const OrdinaryKriging ok(samples_of({{0, 0, 2}, {100, 0, 6}}), model);
    CHECK(ok.predict(Coord(50, 0)).estimate == doctest::Approx(4.0).epsilon(1e-12));
  }
  SUBCASE("weights sum to one and variances are nonnegative") {
    const auto s = random_samples(15, 1000, 4);
    for (const auto& m : {model, VariogramModel{VariogramKind::exponential, 0.3, 1.5, 400}}) {
      const OrdinaryKriging ok(s, m);
      std::mt19937_64 rng(1);
      std::uniform_real_distribution<double> u(-200, 1200);
      for (int k = 0; k < 200; ++k) {
        const auto p = ok.predict(Coord(u(rng), u(rng)));
        CHECK(std::abs(p.weights.sum() - 1) < 1e-9);
        CHECK(p.variance >= -1e-9);
      }
    }
  }
  SUBCASE("grid estimates match an independent solve") {
    const auto s = random_samples(6, 400, 21);
    const auto sp = spec(0, 0, 400, 400, 100);
    const auto [est, var] = ordinary_kriging(s, model, sp);
    REQUIRE(est.nrows() == 4);
    REQUIRE(est.ncols() == 4);
    auto gamma = [&](double h) {
      if (h == 0) return 0.0;
      const double r = h / model.range;
      return r >= 1 ? model.sill : model.nugget + (model.sill - model.nugget) * (1.5 * r - 0.5 * r * r * r);
    };
    double worst = 0, worst_var = 0;
    for (Eigen::Index r = 0; r < 4; ++r)
      for (Eigen::Index c = 0; c < 4; ++c) {
        const Coord at = sp.cell_center(r, c);
        std::vector<std::vector<double>> a(7, std::vector<double>(7, 1.0));
        std::vector<double> b(7, 1.0);
        a[6][6] = 0;
        for (int i = 0; i < 6; ++i) {
          for (int j = 0; j < 6; ++j) a[i][j] = gamma(std::hypot(s.xy(i, 0) - s.xy(j, 0), s.xy(i, 1) - s.xy(j, 1)));
          b[i] = gamma(std::hypot(s.xy(i, 0) - at.x(), s.xy(i, 1) - at.y()));
        }
        const auto x = gauss_solve(a, b);
        double e = 0, v = x[6];
        for (int i = 0; i < 6; ++i) {
          e += x[i] * s.values(i);
          v += x[i] * b[i];
        }
        worst = std::max(worst, std::abs(est.at(r, c) - e));
        worst_var = std::max(worst_var, std::abs(var.at(r, c) - v));
      }
    CHECK(worst <= 1e-8);
    CHECK(worst_var <= 1e-8);
  }
  SUBCASE("errors") {
    CHECK(code_of([&] { ordinary_kriging(samples_of({}), model, spec(0, 0, 1, 1, 1)); }) == Errc::NoSamples);
    CHECK(code_of([&] { OrdinaryKriging(samples_of({{0, 0, 1}, {0, 0, 2}}), model); }) == Errc::DuplicateSampleLocation);
  }
  SUBCASE("singular system, with and without jitter") {
    // Two samples 1e-300 apart: distinct, but their semivariogram rows agree
    // to the last bit.
    const auto close = samples_of({{0, 0, 1}, {1e-300, 0, 2}});
    const VariogramModel m{VariogramKind::spherical, 0, 1, 1.0};
    CHECK(code_of([&] { OrdinaryKriging(close, m); }) == Errc::SingularSystem);
    const OrdinaryKriging ok(close, m, {.jitter = true});
    CHECK(std::abs(ok.predict(Coord(5, 5)).weights.sum() - 1) < 1e-9);
    try {
      ordinary_kriging(close, m, spec(0, 0, 10, 10, 5));
      FAIL("expected SingularSystem");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::SingularSystem);
      CHECK(e.detail() == 0);
    }
  }
}

TEST_CASE("kernel density") {
  SUBCASE("integrates to one on a padded grid") {
    PointMatrix p(1, 2);
    p << 0, 0;
    const double h = 50;
    const auto g = kde(p, h, spec(-6 * h, -6 * h, 6 * h, 6 * h, 10));
    const double mass = g.values().sum() * 100;
    CHECK(std::abs(mass - 1) <= 0.02);
    CHECK((g.values().array() >= 0).all());
  }
  SUBCASE("peak value") {
    PointMatrix p(3, 2);
    p << 0, 0, 300, 0, 0, 300;
    const double h = 40;
    const auto sp = spec(-5, -5, 5, 5, 10);
    const auto g = kde(p, h, sp);
    const double peak = 1.0 / (2 * std::numbers::pi * h * h * 3);
    CHECK(g.at(0, 0) >= peak);
    CHECK(g.at(0, 0) - peak < 2 * peak * std::exp(-300.0 * 300.0 / (2 * h * h)) + 1e-30);
  }
  SUBCASE("coincident points equal one point") {
    PointMatrix one(1, 2), two(2, 2);
    one << 10, 20;
    two << 10, 20, 10, 20;
    const auto sp = spec(0, 0, 100, 100, 10);
    CHECK(kde(one, 15, sp).values().isApprox(kde(two, 15, sp).values(), 1e-15));
  }
  SUBCASE("bandwidth and errors") {
    PointMatrix p(4, 2);
    p << 0, 0, 2, 0, 0, 2, 2, 2;
    // sd per axis = sqrt(4/3); n^(-1/6) = 4^(-1/6)
    CHECK(silverman_bandwidth(p) == doctest::Approx(std::sqrt(4.0 / 3.0) * std::pow(4.0, -1.0 / 6.0)));
    CHECK(code_of([] { kde(PointMatrix(0, 2), 1, spec(0, 0, 1, 1, 1)); }) == Errc::NoPoints);
    CHECK(code_of([&] { kde(p, 0, spec(0, 0, 1, 1, 1)); }) == Errc::NonpositiveBandwidth);
    CHECK(code_of([&] { kde(p, -3, spec(0, 0, 1, 1, 1)); }) == Errc::NonpositiveBandwidth);
  }
}

TEST_CASE("rare-event augmentation") {
  PointMatrix one(1, 2);
  one << 1000, 2000;
  CHECK(augment_rare(one, 0, 10, 1).empty());
  const auto a = augment_rare(one, 50, 10, 99);
  const auto b = augment_rare(one, 50, 10, 99);
  REQUIRE(a.size() == 50);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].at == b[i].at);
    CHECK(a[i].synthetic);
  }
  const auto many = augment_rare(one, 10000, 100, 2024);
  Eigen::ArrayXd dx(10000), dy(10000);
  for (int i = 0; i < 10000; ++i) {
    dx(i) = many[static_cast<std::size_t>(i)].at.x() - 1000;
    dy(i) = many[static_cast<std::size_t>(i)].at.y() - 2000;
  }
  auto sd = [](const Eigen::ArrayXd& v) { return std::sqrt((v - v.mean()).square().sum() / (v.size() - 1)); };
  CHECK(std::abs(sd(dx) - 100) <= 5);
  CHECK(std::abs(sd(dy) - 100) <= 5);
  CHECK(code_of([] { augment_rare(PointMatrix(0, 2), 3, 1, 1); }) == Errc::NoPoints);
}

TEST_CASE("coverage") {
  const Geometry square = Polygon{{{Coord(0, 0), Coord(100, 0), Coord(100, 100), Coord(0, 100), Coord(0, 0)}}};
  SUBCASE("raster form") {
    RasterValues v = RasterValues::Constant(10, 10, 1.0);
    RasterGrid full(Coord(0, 0), 10, v, kNodata, greek());
    CHECK(coverage(full, square, greek()) == 1.0);
    v.topRows(5).setConstant(kNodata);
    CHECK(coverage(full.with_values(v), square, greek()) == 0.5);
    CHECK(code_of([&] { coverage(full, square, crs::CrsRegistry::standard().get(3035)); }) == Errc::CrsMismatch);
    const Geometry flat = Polygon{{{Coord(0, 0), Coord(1, 0), Coord(2, 0), Coord(0, 0)}}};
    CHECK(code_of([&] { coverage(full, flat, greek()); }) == Errc::EmptyBoundary);
  }
  SUBCASE("point form") {
    CHECK(coverage(PointMatrix(0, 2), 10, square) == 0.0);
    PointMatrix c(1, 2);
    c << 50, 50;
    const double f = coverage(c, 25, square);
    CHECK(std::abs(f - std::numbers::pi / 16) <= 0.01);
    PointMatrix more(2, 2);
    more << 50, 50, 10, 10;
    CHECK(coverage(more, 25, square) >= f);
  }
  SUBCASE("IDW over the full extent covers the site") {
    const auto g = idw(samples_of({{50, 50, 1}}), spec(0, 0, 100, 100, 5));
    CHECK(coverage(g, square, greek()) == 1.0);
  }
}
