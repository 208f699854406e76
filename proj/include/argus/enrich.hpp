#pragma once

#include "argus/model.hpp"

#include <Eigen/Core>
#include <Eigen/LU>

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace argus::enrich {

using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 2>;

/// Scattered observations in a projected CRS.
struct Samples {
  PointMatrix xy;
  Eigen::VectorXd values;
  CrsDef crs;

  Eigen::Index size() const noexcept { return xy.rows(); }

  /// Point and multipoint vertices of `layer` with a non-null numeric value
  /// in `column`. Other geometry kinds contribute their envelope centre.
  static Samples from_layer(const FeatureLayer& layer, std::string_view column);
};

/// Vertices (or envelope centres) of every feature.
PointMatrix points_of(const FeatureLayer& layer);

struct GridSpec {
  Envelope bbox;
  double cell_size = 1;
  CrsDef crs;

  /// Throws InvalidArgument for an empty box, nonpositive cell size or a
  /// geographic CRS (distances here are planar).
  void validate() const;
  Eigen::Index ncols() const;
  Eigen::Index nrows() const;
  Coord origin() const noexcept { return Coord(bbox.min_x, bbox.min_y); }
  Coord cell_center(Eigen::Index row, Eigen::Index col) const noexcept {
    return origin() + Coord((static_cast<double>(col) + 0.5) * cell_size, (static_cast<double>(row) + 0.5) * cell_size);
  }
  RasterGrid make_grid(RasterValues values, double nodata, Metadata metadata = {}) const;
};

inline constexpr double kNodata = -9999.0;

// --- inverse distance weighting ------------------------------------------

struct IdwOptions {
  double power = 2.0;
  std::optional<double> max_radius;
};

RasterGrid idw(const Samples& samples, const GridSpec& spec, const IdwOptions& options = {});

// --- variograms and kriging ------------------------------------------------

enum class VariogramKind { spherical, exponential };

const char* to_string(VariogramKind k) noexcept;
std::optional<VariogramKind> parse_variogram_kind(std::string_view s);

struct VariogramModel {
  VariogramKind kind = VariogramKind::spherical;
  double nugget = 0;
  double sill = 1;
  double range = 1;  // practical range for the exponential model

  void validate() const;

  /// Structure function rising from 0 at h=0 to 1 at (or towards) the range.
  template <typename Derived>
  auto shape(const Eigen::ArrayBase<Derived>& h) const {
    using Array = Eigen::Array<typename Derived::Scalar, Eigen::Dynamic, 1>;
    const auto r = (h / range).eval();
    if (kind == VariogramKind::spherical)
      return Array((r < 1).select(1.5 * r - 0.5 * r.cube(), Array::Ones(r.size())));
    return Array(1 - (-3 * r).exp());
  }

  /// gamma(0) = 0; for h > 0, nugget + (sill - nugget) * shape(h).
  template <typename Derived>
  auto operator()(const Eigen::ArrayBase<Derived>& h) const {
    using Array = Eigen::Array<typename Derived::Scalar, Eigen::Dynamic, 1>;
    return Array((h > 0).select(nugget + (sill - nugget) * shape(h), Array::Zero(h.size())));
  }
  double operator()(double h) const;
};

struct EmpiricalVariogram {
  Eigen::VectorXd lag;    // mean pair distance per non-empty bin
  Eigen::VectorXd gamma;  // Matheron estimate
  Eigen::VectorXd pairs;  // pair counts (fit weights)
};

/// Equal-width bins up to half the largest pairwise distance.
EmpiricalVariogram empirical_variogram(const Samples& samples, int n_bins);

/// Weighted least squares over (nugget, sill, range). For a fixed range the
/// model is linear in nugget and partial sill, solved exactly under
/// nonnegativity; the range is searched on a log grid and refined by golden
/// section.
VariogramModel fit_variogram(const Samples& samples, int n_bins, VariogramKind kind);

struct KrigingOptions {
  /// Add 1e-10 to the diagonal when the system is singular, then retry.
  bool jitter = false;
};

struct KrigingPrediction {
  double estimate;
  double variance;
  Eigen::VectorXd weights;
  double lagrange;
};

/// Global-neighbourhood ordinary kriging. The bordered semivariogram system
/// is factorised once and reused for every target.
class OrdinaryKriging {
 public:
  OrdinaryKriging(Samples samples, VariogramModel model, KrigingOptions options = {});

  KrigingPrediction predict(const Coord& at) const;
  const Samples& samples() const noexcept { return samples_; }

 private:
  Samples samples_;
  VariogramModel model_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

struct KrigingResult {
  RasterGrid estimates;
  RasterGrid variances;
};

KrigingResult ordinary_kriging(const Samples& samples, const VariogramModel& model, const GridSpec& spec,
                               const KrigingOptions& options = {});

// --- density, augmentation, coverage -------------------------------------

/// Silverman's rule per axis, sigma * n^(-1/6), averaged over x and y.
double silverman_bandwidth(const PointMatrix& points);

/// Gaussian kernel density per unit area at cell centres.
RasterGrid kde(const PointMatrix& points, double bandwidth, const GridSpec& spec);

struct SyntheticPoint {
  Coord at;
  std::size_t source;  // index of the real point it was drawn around
  bool synthetic = true;
};

std::vector<SyntheticPoint> augment_rare(const PointMatrix& points, std::size_t n_synthetic, double sigma,
                                         std::uint64_t seed);

/// Share of cells with centres inside `boundary` that hold data. The
/// boundary must be in the raster's CRS.
double coverage(const RasterGrid& raster, const Geometry& boundary, const CrsDef& boundary_crs);

inline constexpr int kCoverageLattice = 200;

/// Share of a 200x200 lattice over the boundary envelope, restricted to the
/// boundary, lying within `radius` of some point.
double coverage(const PointMatrix& points, double radius, const Geometry& boundary);

}  // namespace argus::enrich
