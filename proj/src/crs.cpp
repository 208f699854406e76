#include "argus/crs.hpp"

#include "argus/text.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>

namespace argus::crs {

namespace {

const char* kWgs84Wkt =
    R"(GEOGCS["WGS 84",DATUM["WGS_1984",SPHEROID["WGS 84",6378137,298.257223563,AUTHORITY["EPSG","7030"]],AUTHORITY["EPSG","6326"]],PRIMEM["Greenwich",0,AUTHORITY["EPSG","8901"]],UNIT["degree",0.0174532925199433,AUTHORITY["EPSG","9122"]],AXIS["Latitude",NORTH],AXIS["Longitude",EAST],AUTHORITY["EPSG","4326"]])";

const char* kGreekGridWkt =
    R"(PROJCS["GGRS87 / Greek Grid",GEOGCS["GGRS87",DATUM["Greek_Geodetic_Reference_System_1987",SPHEROID["GRS 1980",6378137,298.257222101,AUTHORITY["EPSG","7019"]],TOWGS84[-199.87,74.79,246.62,0,0,0,0],AUTHORITY["EPSG","6121"]],PRIMEM["Greenwich",0,AUTHORITY["EPSG","8901"]],UNIT["degree",0.0174532925199433,AUTHORITY["EPSG","9122"]],AUTHORITY["EPSG","4121"]],PROJECTION["Transverse_Mercator"],PARAMETER["latitude_of_origin",0],PARAMETER["central_meridian",24],PARAMETER["scale_factor",0.9996],PARAMETER["false_easting",500000],PARAMETER["false_northing",0],UNIT["metre",1,AUTHORITY["EPSG","9001"]],AXIS["Easting",EAST],AXIS["Northing",NORTH],AUTHORITY["EPSG","2100"]])";

const char* kLaeaWkt =
    R"(PROJCS["ETRS89-extended / LAEA Europe",GEOGCS["ETRS89",DATUM["European_Terrestrial_Reference_System_1989",SPHEROID["GRS 1980",6378137,298.257222101,AUTHORITY["EPSG","7019"]],TOWGS84[0,0,0,0,0,0,0],AUTHORITY["EPSG","6258"]],PRIMEM["Greenwich",0,AUTHORITY["EPSG","8901"]],UNIT["degree",0.0174532925199433,AUTHORITY["EPSG","9122"]],AUTHORITY["EPSG","4258"]],PROJECTION["Lambert_Azimuthal_Equal_Area"],PARAMETER["latitude_of_center",52],PARAMETER["longitude_of_center",10],PARAMETER["false_easting",4321000],PARAMETER["false_northing",3210000],UNIT["metre",1,AUTHORITY["EPSG","9001"]],AUTHORITY["EPSG","3035"]])";

constexpr Ellipsoid kGrs80{6378137.0, 298.257222101};

}  // namespace

CrsDef wgs84() {
  CrsDef d;
  d.srs_id = 4326;
  d.kind = CrsKind::geographic;
  d.ellipsoid = Ellipsoid{6378137.0, 298.257223563};
  d.name = "WGS 84";
  d.wkt_aliases = {"GCS_WGS_1984", "WGS 84", "WGS_1984", "WGS84", "EPSG:4326"};
  d.wkt = kWgs84Wkt;
  return d;
}

CrsDef ggrs87_greek_grid() {
  CrsDef d;
  d.srs_id = 2100;
  d.kind = CrsKind::transverse_mercator;
  d.ellipsoid = kGrs80;
  d.helmert_to_wgs84 = HelmertParams{-199.87, 74.79, 246.62, 0, 0, 0, 0};
  d.projection = ProjectionParams{0.0, 24.0, 0.9996, 500000.0, 0.0};
  d.name = "GGRS87 / Greek Grid";
  d.wkt_aliases = {"GGRS87", "GGRS_1987", "Greek_Grid", "Greek Grid", "EPSG:2100"};
  d.wkt = kGreekGridWkt;
  return d;
}

CrsDef etrs89_laea_europe() {
  CrsDef d;
  d.srs_id = 3035;
  d.kind = CrsKind::lambert_azimuthal_equal_area;
  d.ellipsoid = kGrs80;
  d.projection = ProjectionParams{52.0, 10.0, 1.0, 4321000.0, 3210000.0};
  d.name = "ETRS89-extended / LAEA Europe";
  d.wkt_aliases = {"ETRS89-extended", "ETRS89_extended", "LAEA_Europe", "LAEA Europe", "ETRS_1989_LAEA",
                   "ETRS89_LAEA", "EPSG:3035"};
  d.wkt = kLaeaWkt;
  return d;
}

CrsRegistry::CrsRegistry() {
  add(wgs84());
  add(ggrs87_greek_grid());
  add(etrs89_laea_europe());
}

const CrsRegistry& CrsRegistry::standard() {
  static const CrsRegistry registry;
  return registry;
}

const CrsDef& CrsRegistry::get(int srs_id) const {
  const auto* d = find(srs_id);
  if (!d) fail(Errc::UnknownCrs, "EPSG:" + std::to_string(srs_id) + " is not registered", srs_id);
  return *d;
}

const CrsDef* CrsRegistry::find(int srs_id) const noexcept {
  const auto it = entries_.find(srs_id);
  return it == entries_.end() ? nullptr : &it->second;
}

void CrsRegistry::add(CrsDef def) {
  def.validate();
  const int id = def.srs_id;
  entries_.insert_or_assign(id, std::move(def));
}

std::vector<int> CrsRegistry::ids() const {
  std::vector<int> out;
  for (const auto& [id, _] : entries_) out.push_back(id);
  return out;
}

std::optional<int> CrsRegistry::resolve_wkt(std::string_view wkt) const {
  const std::string text = to_lower(wkt);
  // Projected definitions embed their geographic base, so they go first.
  for (const bool geographic : {false, true}) {
    for (const auto& [id, def] : entries_) {
      if (def.is_geographic() != geographic) continue;
      for (const auto& alias : def.wkt_aliases)
        if (text.find(to_lower(alias)) != std::string::npos) return id;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

Eigen::Vector3d helmert7_inverse(const Eigen::Vector3d& p, const HelmertParams& h) {
  const Eigen::Vector3d t(h.dx, h.dy, h.dz);
  const double scale = 1.0 + h.scale_ppm * 1e-6;
  return (scale * helmert_rotation<double>(h)).partialPivLu().solve(p - t);
}

// ---------------------------------------------------------------------------
// Transverse Mercator

namespace {

struct KruegerSeries {
  double rectifying_radius;  // A
  std::array<double, 6> alpha;
  std::array<double, 6> beta;
  double e;
};

KruegerSeries krueger(const Ellipsoid& ell) {
  const double f = ell.flattening();
  const double n = f / (2.0 - f);
  const double n2 = n * n, n3 = n2 * n, n4 = n3 * n, n5 = n4 * n, n6 = n5 * n;
  KruegerSeries k;
  k.e = std::sqrt(ell.e2());
  k.rectifying_radius = ell.semi_major_a / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0);
  k.alpha = {
      n / 2 - 2 * n2 / 3 + 5 * n3 / 16 + 41 * n4 / 180 - 127 * n5 / 288 + 7891 * n6 / 37800,
      13 * n2 / 48 - 3 * n3 / 5 + 557 * n4 / 1440 + 281 * n5 / 630 - 1983433 * n6 / 1935360,
      61 * n3 / 240 - 103 * n4 / 140 + 15061 * n5 / 26880 + 167603 * n6 / 181440,
      49561 * n4 / 161280 - 179 * n5 / 168 + 6601661 * n6 / 7257600,
      34729 * n5 / 80640 - 3418889 * n6 / 1995840,
      212378941 * n6 / 319334400,
  };
  k.beta = {
      n / 2 - 2 * n2 / 3 + 37 * n3 / 96 - n4 / 360 - 81 * n5 / 512 + 96199 * n6 / 604800,
      n2 / 48 + n3 / 15 - 437 * n4 / 1440 + 46 * n5 / 105 - 1118711 * n6 / 3870720,
      17 * n3 / 480 - 37 * n4 / 840 - 209 * n5 / 4480 + 5569 * n6 / 90720,
      4397 * n4 / 161280 - 11 * n5 / 504 - 830251 * n6 / 7257600,
      4583 * n5 / 161280 - 108847 * n6 / 3991680,
      20648693 * n6 / 638668800,
  };
  return k;
}

// tan of the conformal latitude from tan of the geodetic latitude.
double conformal_tau(double tau, double e) {
  const double sigma = std::sinh(e * std::atanh(e * tau / std::hypot(1.0, tau)));
  return tau * std::hypot(1.0, sigma) - sigma * std::hypot(1.0, tau);
}

// Newton inversion of conformal_tau.
double geodetic_tau(double taup, double e) {
  const double e2m = 1.0 - e * e;
  double tau = taup / e2m;
  const double tol = 1e-15 * std::max(1.0, std::abs(taup));
  for (int i = 0; i < 50; ++i) {
    const double tp = conformal_tau(tau, e);
    const double dtau = (taup - tp) * (1.0 + e2m * tau * tau) /
                        (e2m * std::hypot(1.0, tau) * std::hypot(1.0, tp));
    tau += dtau;
    if (std::abs(dtau) <= tol) break;
  }
  return tau;
}

// Gauss-Krüger (xi, eta) for geodetic latitude and longitude difference (rad).
Eigen::Vector2d tm_xi_eta(double phi, double dlam, const KruegerSeries& k) {
  double xip, etap;
  if (std::abs(std::cos(phi)) < 1e-300) {
    xip = std::copysign(std::numbers::pi / 2, phi);
    etap = 0.0;
  } else {
    const double taup = conformal_tau(std::tan(phi), k.e);
    xip = std::atan2(taup, std::cos(dlam));
    etap = std::asinh(std::sin(dlam) / std::hypot(taup, std::cos(dlam)));
  }
  double xi = xip, eta = etap;
  for (int j = 1; j <= 6; ++j) {
    const double a = k.alpha[static_cast<std::size_t>(j - 1)];
    xi += a * std::sin(2 * j * xip) * std::cosh(2 * j * etap);
    eta += a * std::cos(2 * j * xip) * std::sinh(2 * j * etap);
  }
  return {xi, eta};
}

void check_tm_domain(double dlon_deg) {
  if (!(std::abs(dlon_deg) < 30.0))
    fail(Errc::OutOfProjectionDomain,
         "longitude offset " + format_double(dlon_deg) + " deg from the central meridian exceeds 30 deg");
}

double wrap_degrees(double d) {
  d = std::fmod(d + 180.0, 360.0);
  if (d < 0) d += 360.0;
  return d - 180.0;
}

}  // namespace

Coord tm_forward(const Coord& lonlat, const CrsDef& crs) {
  const auto& pp = crs.projection;
  const double lat = lonlat.y();
  if (!(std::abs(lat) <= 90.0)) fail(Errc::LatitudeOutOfRange, "latitude " + format_double(lat) + " outside [-90, 90]");
  const double dlon = wrap_degrees(lonlat.x() - pp.lon_origin);
  check_tm_domain(dlon);
  const auto k = krueger(crs.ellipsoid);
  const Eigen::Vector2d xe = tm_xi_eta(lat * kDegToRad, dlon * kDegToRad, k);
  const double y0 = tm_xi_eta(pp.lat_origin * kDegToRad, 0.0, k).x();
  const double scale = pp.scale_factor_k0 * k.rectifying_radius;
  return {pp.false_easting + scale * xe.y(), pp.false_northing + scale * (xe.x() - y0)};
}

Coord tm_inverse(const Coord& en, const CrsDef& crs) {
  const auto& pp = crs.projection;
  const auto k = krueger(crs.ellipsoid);
  const double scale = pp.scale_factor_k0 * k.rectifying_radius;
  const double y0 = tm_xi_eta(pp.lat_origin * kDegToRad, 0.0, k).x();
  const double xi = (en.y() - pp.false_northing) / scale + y0;
  const double eta = (en.x() - pp.false_easting) / scale;
  double xip = xi, etap = eta;
  for (int j = 1; j <= 6; ++j) {
    const double b = k.beta[static_cast<std::size_t>(j - 1)];
    xip -= b * std::sin(2 * j * xi) * std::cosh(2 * j * eta);
    etap -= b * std::cos(2 * j * xi) * std::sinh(2 * j * eta);
  }
  const double s = std::sinh(etap);
  const double r = std::hypot(s, std::cos(xip));
  const double dlam = std::atan2(s, std::cos(xip));
  double phi;
  if (r == 0.0) {
    phi = std::copysign(std::numbers::pi / 2, xip);
  } else {
    const double taup = std::sin(xip) / r;
    phi = std::atan(geodetic_tau(taup, k.e));
  }
  const double dlon_deg = dlam * kRadToDeg;
  check_tm_domain(dlon_deg);
  return {pp.lon_origin + dlon_deg, phi * kRadToDeg};
}

// ---------------------------------------------------------------------------
// Lambert azimuthal equal-area

namespace {

// Authalic q(phi) including the (1 - e^2) factor.
double authalic_q(double sin_phi, double e, double e2) {
  if (e < 1e-12) return 2.0 * sin_phi;
  const double es = e * sin_phi;
  return (1.0 - e2) * (sin_phi / (1.0 - es * es) - (1.0 / (2.0 * e)) * std::log((1.0 - es) / (1.0 + es)));
}

struct LaeaConstants {
  double e, e2, qp, rq, d, sin_b0, cos_b0, lam0;
};

LaeaConstants laea_constants(const CrsDef& crs) {
  LaeaConstants c{};
  c.e2 = crs.ellipsoid.e2();
  c.e = std::sqrt(c.e2);
  const double a = crs.ellipsoid.semi_major_a;
  const double phi0 = crs.projection.lat_origin * kDegToRad;
  c.qp = authalic_q(1.0, c.e, c.e2);
  c.rq = a * std::sqrt(c.qp / 2.0);
  const double q0 = authalic_q(std::sin(phi0), c.e, c.e2);
  const double beta0 = std::asin(std::clamp(q0 / c.qp, -1.0, 1.0));
  c.sin_b0 = std::sin(beta0);
  c.cos_b0 = std::cos(beta0);
  c.d = a * (std::cos(phi0) / std::sqrt(1.0 - c.e2 * std::sin(phi0) * std::sin(phi0))) / (c.rq * c.cos_b0);
  c.lam0 = crs.projection.lon_origin * kDegToRad;
  return c;
}

}  // namespace

Coord laea_forward(const Coord& lonlat, const CrsDef& crs) {
  const double lat = lonlat.y();
  if (!(std::abs(lat) <= 90.0)) fail(Errc::LatitudeOutOfRange, "latitude " + format_double(lat) + " outside [-90, 90]");
  const auto c = laea_constants(crs);
  const double phi = lat * kDegToRad;
  const double dlam = lonlat.x() * kDegToRad - c.lam0;
  const double q = authalic_q(std::sin(phi), c.e, c.e2);
  const double beta = std::asin(std::clamp(q / c.qp, -1.0, 1.0));
  const double sb = std::sin(beta), cb = std::cos(beta);
  const double denom = 1.0 + c.sin_b0 * sb + c.cos_b0 * cb * std::cos(dlam);
  if (denom < 1e-12) fail(Errc::AntipodalPoint, "point is antipodal to the projection centre");
  const double b = c.rq * std::sqrt(2.0 / denom);
  const auto& pp = crs.projection;
  return {pp.false_easting + b * c.d * cb * std::sin(dlam),
          pp.false_northing + (b / c.d) * (c.cos_b0 * sb - c.sin_b0 * cb * std::cos(dlam))};
}

Coord laea_inverse(const Coord& en, const CrsDef& crs) {
  const auto c = laea_constants(crs);
  const auto& pp = crs.projection;
  const double x = en.x() - pp.false_easting;
  const double y = en.y() - pp.false_northing;
  const double rho = std::hypot(x / c.d, c.d * y);
  if (rho == 0.0) return {pp.lon_origin, pp.lat_origin};
  const double arg = rho / (2.0 * c.rq);
  if (arg > 1.0 + 1e-12) fail(Errc::AntipodalPoint, "coordinates lie beyond the antipode of the projection centre");
  const double cc = 2.0 * std::asin(std::min(arg, 1.0));
  const double sc = std::sin(cc), cosc = std::cos(cc);
  const double beta = std::asin(std::clamp(cosc * c.sin_b0 + c.d * y * sc * c.cos_b0 / rho, -1.0, 1.0));
  const double lam = c.lam0 + std::atan2(x * sc, c.d * rho * c.cos_b0 * cosc - c.d * c.d * y * c.sin_b0 * sc);
  // Recover geodetic latitude from the authalic one by Newton iteration on q.
  const double q = c.qp * std::sin(beta);
  double phi = beta;
  for (int i = 0; i < 50; ++i) {
    const double s = std::sin(phi);
    const double cphi = std::cos(phi);
    if (std::abs(cphi) < 1e-15) break;
    const double one = 1.0 - c.e2 * s * s;
    const double dphi = one * one / (2.0 * cphi) * (q / (1.0 - c.e2) - s / one +
                                                     (1.0 / (2.0 * c.e)) * std::log((1.0 - c.e * s) / (1.0 + c.e * s)));
    phi += dphi;
    if (std::abs(dphi) < 1e-15) break;
  }
  return {wrap_degrees(lam * kRadToDeg), phi * kRadToDeg};
}

// ---------------------------------------------------------------------------

Coord project(const Coord& lonlat, const CrsDef& crs) {
  switch (crs.kind) {
    case CrsKind::geographic: return lonlat;
    case CrsKind::transverse_mercator: return tm_forward(lonlat, crs);
    case CrsKind::lambert_azimuthal_equal_area: return laea_forward(lonlat, crs);
  }
  return lonlat;
}

Coord unproject(const Coord& xy, const CrsDef& crs) {
  switch (crs.kind) {
    case CrsKind::geographic: return xy;
    case CrsKind::transverse_mercator: return tm_inverse(xy, crs);
    case CrsKind::lambert_azimuthal_equal_area: return laea_inverse(xy, crs);
  }
  return xy;
}

Coord transform_point(const Coord& xy, const CrsDef& from, const CrsDef& to) {
  if (from.srs_id == to.srs_id) return xy;
  Coord lonlat = unproject(xy, from);
  const bool same_datum = from.ellipsoid == to.ellipsoid && from.helmert_to_wgs84 == to.helmert_to_wgs84;
  if (!same_datum) {
    const Eigen::Vector3d src = geodetic_to_ecef(lonlat.y(), lonlat.x(), from.ellipsoid);
    const Eigen::Vector3d wgs = helmert7(src, from.helmert_to_wgs84);
    const Eigen::Vector3d dst = helmert7_inverse(wgs, to.helmert_to_wgs84);
    const Geodetic g = ecef_to_geodetic(dst, to.ellipsoid);
    lonlat = Coord(g.lon_deg, g.lat_deg);
  }
  return project(lonlat, to);
}

Geometry transform(const Geometry& g, const CrsDef& from, const CrsDef& to) {
  if (from.srs_id == to.srs_id) return g;
  return g.map_vertices([&](const Coord& c, std::size_t index) -> Coord {
    try {
      return transform_point(c, from, to);
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + " at vertex " + std::to_string(index),
                  static_cast<std::int64_t>(index));
    }
  });
}

RasterGrid transform(const RasterGrid& grid, const CrsDef& to, std::optional<double> cell_size) {
  const CrsDef& from = grid.crs();
  if (from.srs_id == to.srs_id && (!cell_size || *cell_size == grid.cell_size())) return grid;

  // Densified source outline gives the target extent.
  const Envelope src = grid.envelope();
  Envelope dst;
  constexpr int kSteps = 32;
  for (int i = 0; i <= kSteps; ++i) {
    const double t = static_cast<double>(i) / kSteps;
    for (const Coord& c : {Coord(src.min_x + t * src.width(), src.min_y), Coord(src.min_x + t * src.width(), src.max_y),
                           Coord(src.min_x, src.min_y + t * src.height()),
                           Coord(src.max_x, src.min_y + t * src.height())})
      dst.expand(transform_point(c, from, to));
  }

  double cs = cell_size.value_or(0.0);
  if (!cell_size) {
    const Coord mid = grid.cell_center(grid.nrows() / 2, grid.ncols() / 2);
    const double h = grid.cell_size() / 2;
    Ring quad;
    for (const Coord& off : {Coord(-h, -h), Coord(h, -h), Coord(h, h), Coord(-h, h), Coord(-h, -h)})
      quad.push_back(transform_point(mid + off, from, to));
    cs = std::sqrt(std::abs(signed_area(quad)));
  }
  if (!(cs > 0)) fail(Errc::InvalidArgument, "target cell size must be positive");

  const auto ncols = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(dst.width() / cs - 1e-9)));
  const auto nrows = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(dst.height() / cs - 1e-9)));
  const Coord origin(dst.min_x, dst.min_y);
  RasterValues out = RasterValues::Constant(nrows, ncols, grid.nodata());
  for (Eigen::Index r = 0; r < nrows; ++r) {
    for (Eigen::Index c = 0; c < ncols; ++c) {
      const Coord centre = origin + Coord((static_cast<double>(c) + 0.5) * cs, (static_cast<double>(r) + 0.5) * cs);
      Coord back;
      try {
        back = transform_point(centre, to, from);
      } catch (const Error&) {
        continue;
      }
      const double fc = std::floor((back.x() - grid.origin().x()) / grid.cell_size());
      const double fr = std::floor((back.y() - grid.origin().y()) / grid.cell_size());
      if (fc < 0 || fr < 0 || fc >= static_cast<double>(grid.ncols()) || fr >= static_cast<double>(grid.nrows()))
        continue;
      out(r, c) = grid.at(static_cast<Eigen::Index>(fr), static_cast<Eigen::Index>(fc));
    }
  }
  return RasterGrid(origin, cs, std::move(out), grid.nodata(), to, grid.metadata());
}

}  // namespace argus::crs
