#include "argus/enrich.hpp"

#include "argus/error.hpp"
#include "argus/text.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace argus::enrich {

namespace {

void require_same_crs(const CrsDef& a, const CrsDef& b, const char* what) {
  if (a.srs_id != b.srs_id)
    fail(Errc::CrsMismatch, std::string(what) + " are in EPSG:" + std::to_string(a.srs_id) + ", grid is in EPSG:" +
                                std::to_string(b.srs_id));
}

void require_distinct(const PointMatrix& xy) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(xy.rows()));
  for (Eigen::Index i = 0; i < xy.rows(); ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return xy(a, 0) < xy(b, 0) || (xy(a, 0) == xy(b, 0) && xy(a, 1) < xy(b, 1));
  });
  for (std::size_t k = 1; k < order.size(); ++k)
    if (xy.row(order[k]) == xy.row(order[k - 1]))
      fail(Errc::DuplicateSampleLocation,
           "samples " + std::to_string(order[k - 1]) + " and " + std::to_string(order[k]) + " share a location",
           order[k]);
}

Coord representative(const Geometry& g) {
  if (g.kind() == GeometryKind::point) return g.as<Point>().at;
  const auto e = g.envelope();
  return Coord((e.min_x + e.max_x) / 2, (e.min_y + e.max_y) / 2);
}

// Distances from one location to every sample.
Eigen::ArrayXd distances(const PointMatrix& xy, const Coord& at) {
  return (xy.rowwise() - at.transpose()).rowwise().norm().array();
}

}  // namespace

PointMatrix points_of(const FeatureLayer& layer) {
  std::vector<Coord> pts;
  for (const auto& f : layer.rows()) {
    if (f.geometry.kind() == GeometryKind::multipoint)
      for (const auto& p : f.geometry.as<MultiPoint>().points) pts.push_back(p);
    else
      pts.push_back(representative(f.geometry));
  }
  PointMatrix m(static_cast<Eigen::Index>(pts.size()), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  return m;
}

Samples Samples::from_layer(const FeatureLayer& layer, std::string_view column) {
  const auto idx = layer.field_index(column);
  if (!idx) fail(Errc::NoSuchColumn, "layer '" + layer.name() + "' has no column '" + std::string(column) + "'");
  const auto t = layer.schema()[*idx].value_type;
  if (t != ValueType::integer && t != ValueType::real)
    fail(Errc::TypeConflict, "column '" + std::string(column) + "' is " + to_string(t) + ", not numeric");
  std::vector<std::pair<Coord, double>> obs;
  for (const auto& f : layer.rows()) {
    const auto& c = f.cells[*idx];
    if (is_null(c)) continue;
    const double v = std::holds_alternative<double>(c) ? std::get<double>(c)
                                                        : static_cast<double>(std::get<std::int64_t>(c));
    if (f.geometry.kind() == GeometryKind::multipoint)
      for (const auto& p : f.geometry.as<MultiPoint>().points) obs.emplace_back(p, v);
    else
      obs.emplace_back(representative(f.geometry), v);
  }
  Samples s{PointMatrix(static_cast<Eigen::Index>(obs.size()), 2), Eigen::VectorXd(static_cast<Eigen::Index>(obs.size())),
            layer.crs()};
  for (std::size_t i = 0; i < obs.size(); ++i) {
    s.xy.row(static_cast<Eigen::Index>(i)) = obs[i].first.transpose();
    s.values(static_cast<Eigen::Index>(i)) = obs[i].second;
  }
  return s;
}

// ---------------------------------------------------------------------------

void GridSpec::validate() const {
  if (!(bbox.max_x > bbox.min_x) || !(bbox.max_y > bbox.min_y))
    fail(Errc::InvalidArgument, "grid extent must have positive width and height");
  if (!(cell_size > 0) || !std::isfinite(cell_size)) fail(Errc::InvalidArgument, "grid cell size must be positive");
  if (crs.is_geographic())
    fail(Errc::InvalidArgument, "enrichment needs a projected CRS; EPSG:" + std::to_string(crs.srs_id) + " is geographic");
}

Eigen::Index GridSpec::ncols() const {
  return std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(bbox.width() / cell_size - 1e-9)));
}

Eigen::Index GridSpec::nrows() const {
  return std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(bbox.height() / cell_size - 1e-9)));
}

RasterGrid GridSpec::make_grid(RasterValues values, double nodata, Metadata metadata) const {
  return RasterGrid(origin(), cell_size, std::move(values), nodata, crs, std::move(metadata));
}

// ---------------------------------------------------------------------------

RasterGrid idw(const Samples& samples, const GridSpec& spec, const IdwOptions& options) {
  spec.validate();
  if (samples.size() == 0) fail(Errc::NoSamples, "IDW needs at least one sample");
  if (!(options.power > 0)) fail(Errc::InvalidArgument, "IDW power must be positive");
  if (options.max_radius && !(*options.max_radius > 0)) fail(Errc::InvalidArgument, "IDW radius must be positive");
  require_same_crs(samples.crs, spec.crs, "IDW samples");
  require_distinct(samples.xy);

  const double coincident = 1e-9 * spec.cell_size;
  const double radius = options.max_radius.value_or(std::numeric_limits<double>::infinity());
  RasterValues out(spec.nrows(), spec.ncols());
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      const Eigen::ArrayXd d = distances(samples.xy, spec.cell_center(r, c));
      Eigen::Index nearest;
      if (d.minCoeff(&nearest) < coincident) {
        out(r, c) = samples.values(nearest);
        continue;
      }
      const Eigen::ArrayXd w = (d <= radius).select(d.pow(-options.power), 0.0);
      const double sw = w.sum();
      out(r, c) = sw > 0 ? (w * samples.values.array()).sum() / sw : kNodata;
    }
  }
  Metadata md{{"enrich.method", "idw"}, {"enrich.power", format_double(options.power)}};
  if (options.max_radius) md["enrich.max_radius"] = format_double(*options.max_radius);
  return spec.make_grid(std::move(out), kNodata, std::move(md));
}

// ---------------------------------------------------------------------------

const char* to_string(VariogramKind k) noexcept { return k == VariogramKind::spherical ? "spherical" : "exponential"; }

std::optional<VariogramKind> parse_variogram_kind(std::string_view s) {
  if (iequals(s, "spherical")) return VariogramKind::spherical;
  if (iequals(s, "exponential")) return VariogramKind::exponential;
  return std::nullopt;
}

void VariogramModel::validate() const {
  if (!(nugget >= 0) || !(sill > nugget) || !(range > 0) || !std::isfinite(sill) || !std::isfinite(range))
    fail(Errc::InvalidArgument, "variogram needs nugget >= 0, sill > nugget and range > 0");
}

double VariogramModel::operator()(double h) const {
  Eigen::ArrayXd a(1);
  a(0) = h;
  return (*this)(a)(0);
}

EmpiricalVariogram empirical_variogram(const Samples& s, int n_bins) {
  if (n_bins < 1) fail(Errc::InvalidArgument, "variogram needs at least one bin");
  const Eigen::Index n = s.size();
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) d.col(i) = distances(s.xy, s.xy.row(i).transpose()).matrix();
  const double hmax = d.maxCoeff() / 2;
  if (!(hmax > 0)) fail(Errc::DegenerateDistances, "all samples are at the same location");

  const double width = hmax / n_bins;
  Eigen::VectorXd sum_d = Eigen::VectorXd::Zero(n_bins), sum_g = sum_d, count = sum_d;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double h = d(i, j);
      if (h > hmax || h <= 0) continue;
      const auto b = std::min<Eigen::Index>(static_cast<Eigen::Index>(h / width), n_bins - 1);
      const double dz = s.values(i) - s.values(j);
      sum_d(b) += h;
      sum_g(b) += dz * dz;
      count(b) += 1;
    }
  std::vector<Eigen::Index> used;
  for (Eigen::Index b = 0; b < n_bins; ++b)
    if (count(b) > 0) used.push_back(b);
  EmpiricalVariogram ev;
  const auto m = static_cast<Eigen::Index>(used.size());
  ev.lag.resize(m);
  ev.gamma.resize(m);
  ev.pairs.resize(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto b = used[static_cast<std::size_t>(k)];
    ev.lag(k) = sum_d(b) / count(b);
    ev.gamma(k) = sum_g(b) / (2 * count(b));
    ev.pairs(k) = count(b);
  }
  return ev;
}

namespace {

struct LinearFit {
  double nugget, partial, sse;
};

// min sum w (g - c0 - c1 f)^2 subject to c0, c1 >= 0.
LinearFit nonnegative_fit(const Eigen::ArrayXd& f, const Eigen::ArrayXd& g, const Eigen::ArrayXd& w) {
  auto sse = [&](double c0, double c1) { return (w * (g - c0 - c1 * f).square()).sum(); };
  const double sw = w.sum(), sf = (w * f).sum(), sff = (w * f * f).sum(), sg = (w * g).sum(), sfg = (w * f * g).sum();
  std::vector<LinearFit> candidates;
  const double det = sw * sff - sf * sf;
  if (det > 1e-12 * sw * sff) {
    const double c0 = (sff * sg - sf * sfg) / det;
    const double c1 = (sw * sfg - sf * sg) / det;
    if (c0 >= 0 && c1 >= 0) return {c0, c1, sse(c0, c1)};
  }
  const double c1 = sff > 0 ? std::max(0.0, sfg / sff) : 0.0;
  candidates.push_back({0.0, c1, sse(0.0, c1)});
  const double c0 = std::max(0.0, sg / sw);
  candidates.push_back({c0, 0.0, sse(c0, 0.0)});
  return *std::min_element(candidates.begin(), candidates.end(),
                           [](const LinearFit& a, const LinearFit& b) { return a.sse < b.sse; });
}

}  // namespace

VariogramModel fit_variogram(const Samples& samples, int n_bins, VariogramKind kind) {
  if (samples.size() < 10)
    fail(Errc::TooFewSamples, "variogram fitting needs at least 10 samples, got " + std::to_string(samples.size()),
         samples.size());
  const auto ev = empirical_variogram(samples, n_bins);
  const Eigen::ArrayXd g = ev.gamma.array(), w = ev.pairs.array(), lag = ev.lag.array();
  const double hmax = lag.maxCoeff();

  auto fit_at = [&](double a) {
    VariogramModel m{kind, 0, 1, a};
    return nonnegative_fit(m.shape(lag), g, w);
  };

  // Log-spaced scan of the range, then golden-section refinement.
  const int scan = 80;
  const double lo = hmax * 1e-2, hi = hmax * 4;
  std::vector<double> grid(scan);
  std::size_t best = 0;
  double best_sse = std::numeric_limits<double>::infinity();
  for (int k = 0; k < scan; ++k) {
    grid[static_cast<std::size_t>(k)] = lo * std::pow(hi / lo, static_cast<double>(k) / (scan - 1));
    const double e = fit_at(grid[static_cast<std::size_t>(k)]).sse;
    if (e < best_sse) {
      best_sse = e;
      best = static_cast<std::size_t>(k);
    }
  }
  double a = grid[best > 0 ? best - 1 : 0], b = grid[std::min<std::size_t>(best + 1, grid.size() - 1)];
  const double phi = (std::sqrt(5.0) - 1) / 2;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = fit_at(x1).sse, f2 = fit_at(x2).sse;
  for (int it = 0; it < 100 && (b - a) > 1e-10 * b; ++it) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = fit_at(x1).sse;
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = fit_at(x2).sse;
    }
  }
  double range = f1 <= f2 ? x1 : x2;
  if (fit_at(range).sse > best_sse) range = grid[best];
  const auto lin = fit_at(range);

  // sill must exceed the nugget; a flat field gets a vanishing partial sill.
  const double floor = 1e-12 * std::max(samples.values.array().square().mean(), 1e-300);
  return VariogramModel{kind, lin.nugget, lin.nugget + std::max(lin.partial, floor), range};
}

// ---------------------------------------------------------------------------

OrdinaryKriging::OrdinaryKriging(Samples samples, VariogramModel model, KrigingOptions options)
    : samples_(std::move(samples)), model_(model) {
  model_.validate();
  const Eigen::Index n = samples_.size();
  if (n == 0) fail(Errc::NoSamples, "kriging needs samples");
  if (n < 2) fail(Errc::TooFewSamples, "kriging needs at least two samples", n);
  require_distinct(samples_.xy);

  Eigen::MatrixXd a(n + 1, n + 1);
  for (Eigen::Index j = 0; j < n; ++j) a.col(j).head(n) = model_(distances(samples_.xy, samples_.xy.row(j).transpose())).matrix();
  a.row(n).setOnes();
  a.col(n).setOnes();
  a(n, n) = 0;

  auto singular = [](const Eigen::PartialPivLU<Eigen::MatrixXd>& lu) {
    const double rc = lu.rcond();
    return !(rc >= 1e-14) || !lu.matrixLU().allFinite();
  };
  lu_.compute(a);
  if (singular(lu_) && options.jitter) {
    a.diagonal().head(n).array() += 1e-10;
    lu_.compute(a);
  }
  if (singular(lu_))
    fail(Errc::SingularSystem, "kriging system is singular (reciprocal condition " + format_double(lu_.rcond()) + ")");
}

KrigingPrediction OrdinaryKriging::predict(const Coord& at) const {
  const Eigen::Index n = samples_.size();
  Eigen::VectorXd rhs(n + 1);
  rhs.head(n) = model_(distances(samples_.xy, at)).matrix();
  rhs(n) = 1;
  const Eigen::VectorXd x = lu_.solve(rhs);
  KrigingPrediction p;
  p.weights = x.head(n);
  p.lagrange = x(n);
  p.estimate = p.weights.dot(samples_.values);
  p.variance = p.weights.dot(rhs.head(n)) + p.lagrange;
  return p;
}

KrigingResult ordinary_kriging(const Samples& samples, const VariogramModel& model, const GridSpec& spec,
                               const KrigingOptions& options) {
  spec.validate();
  if (samples.size() == 0) fail(Errc::NoSamples, "kriging needs samples");
  require_same_crs(samples.crs, spec.crs, "kriging samples");
  const auto solver = [&] {
    try {
      return OrdinaryKriging(samples, model, options);
    } catch (const Error& e) {
      if (e.code() == Errc::SingularSystem) fail(Errc::SingularSystem, std::string(e.what()) + " at cell 0", 0);
      throw;
    }
  }();
  RasterValues est(spec.nrows(), spec.ncols()), var(spec.nrows(), spec.ncols());
  for (Eigen::Index r = 0; r < est.rows(); ++r)
    for (Eigen::Index c = 0; c < est.cols(); ++c) {
      const auto p = solver.predict(spec.cell_center(r, c));
      if (!std::isfinite(p.estimate) || !std::isfinite(p.variance))
        fail(Errc::SingularSystem, "kriging produced a non-finite value at cell " + std::to_string(r * est.cols() + c),
             r * est.cols() + c);
      est(r, c) = p.estimate;
      var(r, c) = p.variance;
    }
  Metadata md{{"enrich.method", "ordinary_kriging"},
              {"enrich.variogram", to_string(model.kind)},
              {"enrich.nugget", format_double(model.nugget)},
              {"enrich.sill", format_double(model.sill)},
              {"enrich.range", format_double(model.range)}};
  auto vmd = md;
  vmd["enrich.output"] = "variance";
  return {spec.make_grid(std::move(est), kNodata, std::move(md)), spec.make_grid(std::move(var), kNodata, std::move(vmd))};
}

// ---------------------------------------------------------------------------

double silverman_bandwidth(const PointMatrix& points) {
  const auto n = points.rows();
  if (n == 0) fail(Errc::NoPoints, "bandwidth needs points");
  if (n < 2) fail(Errc::NonpositiveBandwidth, "a single point has no spread to derive a bandwidth from");
  const Eigen::RowVector2d mean = points.colwise().mean();
  const Eigen::RowVector2d sd = ((points.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(n - 1)).sqrt();
  const double h = sd.mean() * std::pow(static_cast<double>(n), -1.0 / 6.0);
  if (!(h > 0)) fail(Errc::NonpositiveBandwidth, "points have zero spread");
  return h;
}

RasterGrid kde(const PointMatrix& points, double bandwidth, const GridSpec& spec) {
  spec.validate();
  if (points.rows() == 0) fail(Errc::NoPoints, "KDE needs at least one point");
  if (!(bandwidth > 0) || !std::isfinite(bandwidth)) fail(Errc::NonpositiveBandwidth, "KDE bandwidth must be positive");
  const double norm = 1.0 / (2 * std::numbers::pi * bandwidth * bandwidth * static_cast<double>(points.rows()));
  const double k = -1.0 / (2 * bandwidth * bandwidth);
  RasterValues out(spec.nrows(), spec.ncols());
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      const Coord at = spec.cell_center(r, c);
      out(r, c) = norm * (k * (points.rowwise() - at.transpose()).rowwise().squaredNorm().array()).exp().sum();
    }
  return spec.make_grid(std::move(out), kNodata,
                        {{"enrich.method", "kde"}, {"enrich.bandwidth", format_double(bandwidth)}});
}

std::vector<SyntheticPoint> augment_rare(const PointMatrix& points, std::size_t n_synthetic, double sigma,
                                         std::uint64_t seed) {
  if (points.rows() == 0) fail(Errc::NoPoints, "augmentation needs at least one real point");
  if (!(sigma >= 0) || !std::isfinite(sigma)) fail(Errc::InvalidArgument, "augmentation sigma must be nonnegative");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, points.rows() - 1);
  std::normal_distribution<double> jitter(0.0, sigma);
  std::vector<SyntheticPoint> out;
  out.reserve(n_synthetic);
  for (std::size_t i = 0; i < n_synthetic; ++i) {
    const Eigen::Index src = pick(rng);
    const double dx = sigma > 0 ? jitter(rng) : 0.0;
    const double dy = sigma > 0 ? jitter(rng) : 0.0;
    out.push_back({points.row(src).transpose() + Coord(dx, dy), static_cast<std::size_t>(src), true});
  }
  return out;
}

namespace {

void require_area(const Geometry& boundary) {
  const auto k = boundary.kind();
  if ((k != GeometryKind::polygon && k != GeometryKind::multipolygon) || !(area(boundary) > 0))
    fail(Errc::EmptyBoundary, "coverage boundary must be a polygon with positive area");
}

}  // namespace

double coverage(const RasterGrid& raster, const Geometry& boundary, const CrsDef& boundary_crs) {
  require_area(boundary);
  if (raster.crs().srs_id != boundary_crs.srs_id)
    fail(Errc::CrsMismatch, "raster is in EPSG:" + std::to_string(raster.crs().srs_id) + ", boundary in EPSG:" +
                                std::to_string(boundary_crs.srs_id));
  const Envelope env = boundary.envelope();
  std::size_t inside = 0, filled = 0;
  for (Eigen::Index r = 0; r < raster.nrows(); ++r)
    for (Eigen::Index c = 0; c < raster.ncols(); ++c) {
      const Coord p = raster.cell_center(r, c);
      if (!env.contains(p) || !contains(boundary, p)) continue;
      ++inside;
      if (!raster.is_nodata(raster.at(r, c))) ++filled;
    }
  return inside == 0 ? 0.0 : static_cast<double>(filled) / static_cast<double>(inside);
}

double coverage(const PointMatrix& points, double radius, const Geometry& boundary) {
  require_area(boundary);
  if (!(radius >= 0)) fail(Errc::InvalidArgument, "coverage radius must be nonnegative");
  if (points.rows() == 0) return 0.0;
  const Envelope env = boundary.envelope();
  const double dx = env.width() / kCoverageLattice, dy = env.height() / kCoverageLattice;
  const double r2 = radius * radius;
  std::size_t inside = 0, covered = 0;
  for (int j = 0; j < kCoverageLattice; ++j)
    for (int i = 0; i < kCoverageLattice; ++i) {
      const Coord p(env.min_x + (i + 0.5) * dx, env.min_y + (j + 0.5) * dy);
      if (!contains(boundary, p)) continue;
      ++inside;
      if ((points.rowwise() - p.transpose()).rowwise().squaredNorm().minCoeff() <= r2) ++covered;
    }
  return inside == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(inside);
}

}  // namespace argus::enrich
