#pragma once

#include "argus/error.hpp"
#include "argus/model.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>

namespace argus::crs {

inline constexpr double kDegToRad = std::numbers::pi / 180.0;
inline constexpr double kRadToDeg = 180.0 / std::numbers::pi;
inline constexpr double kArcSecToRad = kDegToRad / 3600.0;

/// EPSG:4326, 2100 (GGRS87 / Greek Grid) and 3035 (ETRS89-extended / LAEA
/// Europe) are always present.
class CrsRegistry {
 public:
  CrsRegistry();

  /// Shared immutable instance with the preloaded definitions.
  static const CrsRegistry& standard();

  const CrsDef& get(int srs_id) const;
  const CrsDef* find(int srs_id) const noexcept;
  void add(CrsDef def);
  std::vector<int> ids() const;

  /// Matches a PRJ/WKT text against each definition's alias list
  /// (case-insensitive substring). Projected definitions are tried first.
  std::optional<int> resolve_wkt(std::string_view wkt) const;

 private:
  std::map<int, CrsDef> entries_;
};

CrsDef wgs84();
CrsDef ggrs87_greek_grid();
CrsDef etrs89_laea_europe();

// ---------------------------------------------------------------------------
// Geodesy kernels

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

template <typename Scalar>
struct GeodeticT {
  Scalar lat_deg;
  Scalar lon_deg;
  Scalar height;
};
using Geodetic = GeodeticT<double>;

/// Ellipsoidal (lat, lon, h) to Earth-centred Earth-fixed Cartesian.
template <typename Scalar>
Vector3<Scalar> geodetic_to_ecef(Scalar lat_deg, Scalar lon_deg, Scalar height, const Ellipsoid& ell) {
  using std::abs, std::cos, std::sin, std::sqrt;
  if (!(abs(lat_deg) <= Scalar(90)))
    fail(Errc::LatitudeOutOfRange, "latitude " + std::to_string(static_cast<double>(lat_deg)) + " outside [-90, 90]");
  const Scalar a = ell.semi_major_a;
  const Scalar e2 = ell.e2();
  const Scalar phi = lat_deg * Scalar(kDegToRad);
  const Scalar lam = lon_deg * Scalar(kDegToRad);
  const Scalar s = sin(phi), c = cos(phi);
  const Scalar n = a / sqrt(Scalar(1) - e2 * s * s);
  return {(n + height) * c * cos(lam), (n + height) * c * sin(lam), (n * (Scalar(1) - e2) + height) * s};
}

template <typename Scalar>
Vector3<Scalar> geodetic_to_ecef(Scalar lat_deg, Scalar lon_deg, const Ellipsoid& ell) {
  return geodetic_to_ecef(lat_deg, lon_deg, Scalar(0), ell);
}

/// Inverse of geodetic_to_ecef; latitude is iterated until it moves by less
/// than 1e-13 rad (or four ulps for wider scalars).
template <typename Scalar>
GeodeticT<Scalar> ecef_to_geodetic(const Vector3<Scalar>& p, const Ellipsoid& ell) {
  using std::abs, std::atan2, std::cos, std::hypot, std::sin, std::sqrt;
  const Scalar a = ell.semi_major_a;
  const Scalar e2 = ell.e2();
  const Scalar tol = std::max(Scalar(1e-13) * (sizeof(Scalar) > sizeof(double) ? Scalar(1e-5) : Scalar(1)),
                              Scalar(4) * std::numeric_limits<Scalar>::epsilon());
  const Scalar lon = atan2(p.y(), p.x());
  const Scalar rho = hypot(p.x(), p.y());
  Scalar lat = atan2(p.z(), rho * (Scalar(1) - e2));
  for (int i = 0; i < 64; ++i) {
    const Scalar s = sin(lat);
    const Scalar n = a / sqrt(Scalar(1) - e2 * s * s);
    const Scalar next = atan2(p.z() + e2 * n * s, rho);
    const Scalar delta = abs(next - lat);
    lat = next;
    if (delta < tol) break;
  }
  const Scalar s = sin(lat), c = cos(lat);
  const Scalar n = a / sqrt(Scalar(1) - e2 * s * s);
  const Scalar h = rho * c + p.z() * s - a * a / n;
  return {lat * Scalar(kRadToDeg), lon * Scalar(kRadToDeg), h};
}

/// Small-angle rotation matrix of the position-vector convention.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> helmert_rotation(const HelmertParams& h) {
  const Scalar rx = h.rx * kArcSecToRad, ry = h.ry * kArcSecToRad, rz = h.rz * kArcSecToRad;
  Eigen::Matrix<Scalar, 3, 3> r;
  r << Scalar(1), -rz, ry,
       rz, Scalar(1), -rx,
       -ry, rx, Scalar(1);
  return r;
}

/// p' = (1 + s*1e-6) * R * p + t
template <typename Derived>
Vector3<typename Derived::Scalar> helmert7(const Eigen::MatrixBase<Derived>& p, const HelmertParams& h) {
  using Scalar = typename Derived::Scalar;
  const Vector3<Scalar> t(h.dx, h.dy, h.dz);
  return (Scalar(1) + Scalar(h.scale_ppm) * Scalar(1e-6)) * (helmert_rotation<Scalar>(h) * p) + t;
}

/// Exact inverse of helmert7 (solves the 3x3 system rather than negating
/// parameters).
Eigen::Vector3d helmert7_inverse(const Eigen::Vector3d& p, const HelmertParams& h);

// ---------------------------------------------------------------------------
// Projections. Geographic coordinates are (lon, lat) in degrees, projected
// ones (E, N) in meters.

/// Transverse Mercator via the Krüger series to sixth order in n.
Coord tm_forward(const Coord& lonlat, const CrsDef& crs);
Coord tm_inverse(const Coord& en, const CrsDef& crs);

/// Ellipsoidal Lambert azimuthal equal-area (authalic latitude form).
Coord laea_forward(const Coord& lonlat, const CrsDef& crs);
Coord laea_inverse(const Coord& en, const CrsDef& crs);

/// Projection-dispatching forward/inverse; identity for geographic CRSs.
Coord project(const Coord& lonlat, const CrsDef& crs);
Coord unproject(const Coord& xy, const CrsDef& crs);

/// Full datum-aware pipeline for one coordinate.
Coord transform_point(const Coord& xy, const CrsDef& from, const CrsDef& to);

Geometry transform(const Geometry& g, const CrsDef& from, const CrsDef& to);

/// Re-grids to `to` by mapping each output cell centre back into the source
/// and taking the nearest source cell. Output cell size defaults to the
/// square root of the mean projected cell area.
RasterGrid transform(const RasterGrid& grid, const CrsDef& to, std::optional<double> cell_size = std::nullopt);

}  // namespace argus::crs
