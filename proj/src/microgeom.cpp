#include "homog2s/microgeom.hpp"

#include <cmath>
#include <sstream>

#include "homog2s/error.hpp"

namespace homog2s {

namespace {

// Cubic Hermite basis on [0,1] and derivatives.
double h00(double s) { return (2.0 * s - 3.0) * s * s + 1.0; }
double h10(double s) { return ((s - 2.0) * s + 1.0) * s; }
double dh00(double s) { return 6.0 * s * (s - 1.0); }
double dh10(double s) { return (3.0 * s - 4.0) * s + 1.0; }

bool is_multiple(double value, int resolution) {
  const double scaled = value * resolution;
  return std::abs(scaled - std::round(scaled)) < 1e-9;
}

int integer_reciprocal(double epsilon) {
  if (!(epsilon > 0.0)) throw Error(ErrorKind::Tiling, "epsilon must be positive");
  const double inv = 1.0 / epsilon;
  const long n = std::lround(inv);
  if (n < 1 || std::abs(inv - static_cast<double>(n)) > 1e-9 * inv) {
    std::ostringstream os;
    os << "epsilon = " << epsilon << " is not the reciprocal of an integer";
    throw Error(ErrorKind::Tiling, os.str());
  }
  return static_cast<int>(n);
}

int cells_along(double length, int per_unit) {
  const double cells = length * per_unit;
  const long n = std::lround(cells);
  if (n < 1 || std::abs(cells - static_cast<double>(n)) > 1e-9) {
    std::ostringstream os;
    os << "domain length " << length << " is not tiled by cells of size 1/" << per_unit;
    throw Error(ErrorKind::Tiling, os.str());
  }
  return static_cast<int>(n);
}

constexpr double kGauss = 0.21132486540518711775;  // (1 - 1/sqrt(3)) / 2 on [0,1]
constexpr double kGaussPts[2] = {kGauss, 1.0 - kGauss};

}  // namespace

// ---------------------------------------------------------------------------
// ReferenceCell

ReferenceCell ReferenceCell::square_hole(double halfwidth, double blend_radius) {
  if (!(halfwidth > 0.0 && halfwidth < 0.375)) {
    throw Error(ErrorKind::ParameterOutOfRange, "hole half-width must lie in (0, 3/8)");
  }
  if (!(blend_radius > halfwidth && blend_radius < 0.5)) {
    throw Error(ErrorKind::ParameterOutOfRange, "blend radius must lie in (h*, 1/2)");
  }
  ReferenceCell c;
  c.hole_halfwidth_ref = halfwidth;
  c.blend_radius = blend_radius;
  return c;
}

ReferenceCell ReferenceCell::unperforated() {
  ReferenceCell c;
  c.hole_halfwidth_ref = 0.0;
  return c;
}

bool ReferenceCell::in_hole(Vec2 y) const {
  if (!has_hole()) return false;
  return norm_inf(y - hole_center) <= hole_halfwidth_ref;
}

bool ReferenceCell::box_in_hole(Vec2 lo, Vec2 hi) const {
  if (!has_hole()) return false;
  constexpr double tol = 1e-12;
  return lo.x >= hole_center.x - hole_halfwidth_ref - tol && hi.x <= hole_center.x + hole_halfwidth_ref + tol &&
         lo.y >= hole_center.y - hole_halfwidth_ref - tol && hi.y <= hole_center.y + hole_halfwidth_ref + tol;
}

double ReferenceCell::reference_porosity() const {
  return 1.0 - 4.0 * hole_halfwidth_ref * hole_halfwidth_ref;
}

void ReferenceCell::check_alignment(int resolution) const {
  if (!has_hole()) return;
  if (!is_multiple(hole_center.x - hole_halfwidth_ref, resolution) ||
      !is_multiple(hole_center.y - hole_halfwidth_ref, resolution) ||
      !is_multiple(blend_radius, resolution)) {
    std::ostringstream os;
    os << "hole half-width " << hole_halfwidth_ref << " / blend radius " << blend_radius
       << " not aligned with cell resolution " << resolution;
    throw Error(ErrorKind::MisalignedGrid, os.str());
  }
}

// ---------------------------------------------------------------------------
// CellTransform

CellTransform::CellTransform(ReferenceCell cell, GeometryBounds bounds) : cell_(cell), bounds_(bounds) {
  if (!cell_.has_hole()) {
    interval_ = {0.0, 1.0};
    return;
  }
  const double ref = reference_porosity();
  if (!check(ref).admissible) {
    throw Error(ErrorKind::ParameterOutOfRange, "reference cell violates the geometry bounds");
  }
  // Admissibility fails monotonically away from the reference porosity; bisect both sides.
  auto bisect = [&](double good, double bad) {
    if (check(bad).admissible) return bad;
    for (int it = 0; it < 40; ++it) {
      const double mid = 0.5 * (good + bad);
      (check(mid).admissible ? good : bad) = mid;
    }
    return good;
  };
  interval_ = {bisect(ref, 7.0 / 16.0), bisect(ref, 1.0)};
}

double CellTransform::halfwidth(double theta) const {
  if (!cell_.has_hole()) return 0.0;
  return 0.5 * std::sqrt(std::max(1.0 - theta, 0.0));
}

double CellTransform::kappa(double theta) const {
  if (!cell_.has_hole()) return 0.0;
  return halfwidth(theta) / cell_.hole_halfwidth_ref - 1.0;
}

bool CellTransform::is_admissible(double theta) const {
  return theta >= interval_.first && theta <= interval_.second;
}

void CellTransform::require_admissible(double theta) const {
  if (!is_admissible(theta)) {
    std::ostringstream os;
    os << "porosity " << theta << " outside admissible interval [" << interval_.first << ", " << interval_.second
       << "]";
    throw Error(ErrorKind::ParameterOutOfRange, os.str());
  }
}

double CellTransform::beta(double t) const {
  const double hs = cell_.hole_halfwidth_ref;
  const double ro = cell_.blend_radius;
  if (t <= hs) return 1.0;
  if (t >= ro) return 0.0;
  const double len = ro - hs;
  const double s = (t - hs) / len;
  return (hs / t) * (h00(s) + h10(s) * len / hs);
}

double CellTransform::beta_slope(double t) const {
  const double hs = cell_.hole_halfwidth_ref;
  const double ro = cell_.blend_radius;
  if (t <= hs || t >= ro) return 0.0;
  const double len = ro - hs;
  const double s = (t - hs) / len;
  const double inner = h00(s) + h10(s) * len / hs;
  const double dinner = (dh00(s) + dh10(s) * len / hs) / len;
  return hs * (dinner * t - inner) / (t * t);
}

double CellTransform::sigma(double theta, Vec2 d) const {
  return 1.0 + kappa(theta) * beta(std::abs(d.x)) * beta(std::abs(d.y));
}

double CellTransform::profile(double theta, double r) const {
  if (!cell_.has_hole()) return r;
  return r * (1.0 + kappa(theta) * beta(r));
}

double CellTransform::profile_slope(double theta, double r) const {
  if (!cell_.has_hole()) return 1.0;
  const double k = kappa(theta);
  return 1.0 + k * beta(r) + k * r * beta_slope(r);
}

Vec2 CellTransform::map(double theta, Vec2 y) const {
  if (!cell_.has_hole()) return y;
  require_admissible(theta);
  const double k = kappa(theta);
  if (k == 0.0) return y;
  const Vec2 d = y - cell_.hole_center;
  return cell_.hole_center + sigma(theta, d) * d;
}

Vec2 CellTransform::map_dtheta(double theta, Vec2 y) const {
  if (!cell_.has_hole()) return {0.0, 0.0};
  const double dh = -0.25 / std::sqrt(std::max(1.0 - theta, 1e-300));
  const double dk = dh / cell_.hole_halfwidth_ref;
  const Vec2 d = y - cell_.hole_center;
  return dk * beta(std::abs(d.x)) * beta(std::abs(d.y)) * d;
}

CellJacobian CellTransform::jacobian_unchecked(double theta, Vec2 y) const {
  const double k = kappa(theta);
  if (k == 0.0) return {};
  const Vec2 d = y - cell_.hole_center;
  const double ax = std::abs(d.x);
  const double ay = std::abs(d.y);
  const double bx = beta(ax);
  const double by = beta(ay);
  const double s = 1.0 + k * bx * by;
  const Vec2 grad{k * beta_slope(ax) * (d.x < 0.0 ? -1.0 : 1.0) * by,
                  k * bx * beta_slope(ay) * (d.y < 0.0 ? -1.0 : 1.0)};
  const Mat2 m = Mat2::scalar(s) + Mat2::outer(d, grad);
  return {m, m.det()};
}

CellJacobian CellTransform::jacobian(double theta, Vec2 y) const {
  if (!cell_.has_hole()) return {};
  require_admissible(theta);
  CellJacobian jac = jacobian_unchecked(theta, y);
  if (!(jac.det > bounds_.c_J)) {
    std::ostringstream os;
    os << "det D_y psi = " << jac.det << " <= c_J = " << bounds_.c_J << " at Theta = " << theta << ", y = (" << y.x
       << ", " << y.y << ")";
    throw Error(ErrorKind::DegenerateJacobian, os.str());
  }
  return jac;
}

Vec2 CellTransform::inverse(double theta, Vec2 z) const {
  if (!cell_.has_hole()) return z;
  require_admissible(theta);
  const double k = kappa(theta);
  if (k == 0.0) return z;
  const Vec2 c = cell_.hole_center;
  const double h = halfwidth(theta);
  const Vec2 dz = z - c;
  // Inside the deformed linear zone the inverse is exact.
  Vec2 y = norm_inf(dz) <= h ? c + (cell_.hole_halfwidth_ref / h) * dz : z;
  auto residual = [&](Vec2 p) { return c + sigma(theta, p - c) * (p - c) - z; };
  Vec2 f = residual(y);
  double fn = norm2(f);
  for (int it = 0; it < 50; ++it) {
    if (fn <= 1e-15) return y;
    const CellJacobian jac = jacobian_unchecked(theta, y);
    const Vec2 step = jac.matrix.inverse() * f;
    double lambda = 1.0;
    Vec2 trial = y - step;
    Vec2 ft = residual(trial);
    while (norm2(ft) >= fn && lambda > 1e-6) {
      lambda *= 0.5;
      trial = y - lambda * step;
      ft = residual(trial);
    }
    if (norm2(ft) >= fn) {
      // No further decrease: accept if already at round-off level.
      if (fn <= 1e-13) return y;
      break;
    }
    y = trial;
    f = ft;
    fn = norm2(f);
  }
  if (fn <= 1e-13) return y;
  std::ostringstream os;
  os << "inverse cell map did not converge (residual " << fn << ") at Theta = " << theta;
  throw Error(ErrorKind::NoConvergence, os.str());
}

AdmissibilityReport CellTransform::check(double theta) const {
  AdmissibilityReport rep;
  rep.theta = theta;
  if (!cell_.has_hole()) {
    rep.halfwidth = 0.0;
    rep.min_slope = rep.min_det = rep.max_det = rep.max_norm = 1.0;
    rep.admissible = true;
    return rep;
  }
  rep.halfwidth = halfwidth(theta);
  const double hs = cell_.hole_halfwidth_ref;
  rep.min_slope = 1e300;
  constexpr int kSlopeSamples = 2000;
  for (int i = 0; i <= kSlopeSamples; ++i) {
    const double r = 0.5 * i / kSlopeSamples;
    rep.min_slope = std::min(rep.min_slope, profile_slope(theta, r));
  }
  rep.min_det = 1e300;
  rep.max_det = 0.0;
  rep.max_norm = 0.0;
  // The map commutes with the reflections d_i -> -d_i and with swapping d1, d2,
  // so the triangle 0 <= d2 <= d1 <= 1/2 covers Y.
  constexpr int n = 96;
  for (int i = 0; i < n; ++i) {
    const double d1 = (i + 0.5) * 0.5 / n;
    for (int j = 0; j <= i; ++j) {
      const double d2 = (j + 0.5) * 0.5 / n;
      if (std::max(d1, d2) <= hs) continue;  // hole interior is not material
      const CellJacobian jac = jacobian_unchecked(theta, cell_.hole_center + Vec2{d1, d2});
      rep.min_det = std::min(rep.min_det, jac.det);
      rep.max_det = std::max(rep.max_det, jac.det);
      if (jac.det > 0.0) {
        rep.max_norm = std::max({rep.max_norm, spectral_norm(jac.matrix), spectral_norm(jac.matrix.inverse())});
      }
    }
  }
  rep.admissible = rep.halfwidth > 0.0 && rep.halfwidth <= bounds_.margin * cell_.blend_radius &&
                   rep.min_slope >= bounds_.min_slope && rep.min_det >= bounds_.c_J && rep.max_det <= bounds_.C &&
                   rep.max_norm <= bounds_.C;
  return rep;
}

// ---------------------------------------------------------------------------
// EpsTransform

EpsTransform::EpsTransform(double epsilon, CellTransform cell, PorosityField porosity)
    : epsilon_(epsilon),
      cells_per_unit_(integer_reciprocal(epsilon)),
      cell_(std::move(cell)),
      porosity_(porosity) {}

double EpsTransform::cell_porosity(std::array<int, 2> k) const {
  const double n = cells_per_unit_;
  return porosity_(Vec2{k[0] / n, k[1] / n});
}

double EpsTransform::cell_porosity(Vec2 x) const {
  const double n = cells_per_unit_;
  return cell_porosity(std::array<int, 2>{static_cast<int>(std::floor(x.x * n)), static_cast<int>(std::floor(x.y * n))});
}

Vec2 EpsTransform::map_in_cell(std::array<int, 2> k, Vec2 y) const {
  if (!cell_.cell().has_hole()) return Vec2{(k[0] + y.x) * epsilon_, (k[1] + y.y) * epsilon_};
  const Vec2 z = cell_.map(cell_porosity(k), y);
  const double n = cells_per_unit_;
  return {(k[0] + z.x) / n, (k[1] + z.y) / n};
}

CellJacobian EpsTransform::jacobian_in_cell(std::array<int, 2> k, Vec2 y) const {
  // The eps and 1/eps factors of the chain rule cancel.
  return cell_.jacobian(cell_porosity(k), y);
}

Vec2 EpsTransform::map(Vec2 x) const {
  const double n = cells_per_unit_;
  const std::array<int, 2> k{static_cast<int>(std::floor(x.x * n)), static_cast<int>(std::floor(x.y * n))};
  const double theta = cell_porosity(k);
  if (!cell_.cell().has_hole() || theta == cell_.reference_porosity()) return x;
  const Vec2 y{x.x * n - k[0], x.y * n - k[1]};
  const Vec2 z = cell_.map(theta, y);
  return {(k[0] + z.x) / n, (k[1] + z.y) / n};
}

CellJacobian EpsTransform::jacobian(Vec2 x) const {
  const double n = cells_per_unit_;
  const std::array<int, 2> k{static_cast<int>(std::floor(x.x * n)), static_cast<int>(std::floor(x.y * n))};
  return jacobian_in_cell(k, Vec2{x.x * n - k[0], x.y * n - k[1]});
}

Vec2 EpsTransform::inverse(Vec2 x_deformed) const {
  const double n = cells_per_unit_;
  const std::array<int, 2> k{static_cast<int>(std::floor(x_deformed.x * n)),
                             static_cast<int>(std::floor(x_deformed.y * n))};
  const double theta = cell_porosity(k);
  if (!cell_.cell().has_hole() || theta == cell_.reference_porosity()) return x_deformed;
  const Vec2 y = cell_.inverse(theta, Vec2{x_deformed.x * n - k[0], x_deformed.y * n - k[1]});
  return {(k[0] + y.x) / n, (k[1] + y.y) / n};
}

// ---------------------------------------------------------------------------
// LimitTransform

LimitTransform::LimitTransform(CellTransform cell, PorosityField porosity)
    : cell_(std::move(cell)), porosity_(porosity) {}

Vec2 LimitTransform::map(Vec2 x, Vec2 y) const { return cell_.map(porosity_(x), y); }

CellJacobian LimitTransform::jacobian(Vec2 x, Vec2 y) const { return cell_.jacobian(porosity_(x), y); }

Vec2 LimitTransform::inverse(Vec2 x, Vec2 y) const { return cell_.inverse(porosity_(x), y); }

bool LimitTransform::in_material(Vec2 x, Vec2 y) const { return !cell_.cell().in_hole(inverse(x, y)); }

// ---------------------------------------------------------------------------
// Diagnostics

SampledBounds sample_eps_bounds(const EpsTransform& t, double lx, double ly, int samples_per_cell) {
  const int n = t.cells_per_unit();
  const int cx = cells_along(lx, n);
  const int cy = cells_along(ly, n);
  SampledBounds out;
  out.min_det = 1e300;
  const ReferenceCell& ref = t.cell_transform().cell();
  for (int kx = 0; kx < cx; ++kx) {
    for (int ky = 0; ky < cy; ++ky) {
      for (int i = 0; i < samples_per_cell; ++i) {
        for (int j = 0; j < samples_per_cell; ++j) {
          const Vec2 y{(i + 0.5) / samples_per_cell, (j + 0.5) / samples_per_cell};
          if (ref.in_hole(y)) continue;
          const CellJacobian jac = t.jacobian_in_cell({kx, ky}, y);
          out.min_det = std::min(out.min_det, jac.det);
          out.max_det = std::max(out.max_det, jac.det);
          out.max_norm = std::max(out.max_norm, spectral_norm(jac.matrix));
          out.max_inv_norm = std::max(out.max_inv_norm, spectral_norm(jac.matrix.inverse()));
          const Vec2 x{(kx + y.x) / n, (ky + y.y) / n};
          const Vec2 disp = t.map_in_cell({kx, ky}, y) - x;
          out.max_scaled_displacement = std::max(out.max_scaled_displacement, norm2(disp) * n);
        }
      }
    }
  }
  return out;
}

SampledBounds sample_limit_bounds(const LimitTransform& t, double lx, double ly, int nx, int ny) {
  SampledBounds out;
  out.min_det = 1e300;
  const ReferenceCell& ref = t.cell_transform().cell();
  for (int a = 0; a < nx; ++a) {
    for (int b = 0; b < nx; ++b) {
      const Vec2 x{(a + 0.5) * lx / nx, (b + 0.5) * ly / nx};
      for (int i = 0; i < ny; ++i) {
        for (int j = 0; j < ny; ++j) {
          const Vec2 y{(i + 0.5) / ny, (j + 0.5) / ny};
          if (ref.in_hole(y)) continue;
          const CellJacobian jac = t.jacobian(x, y);
          out.min_det = std::min(out.min_det, jac.det);
          out.max_det = std::max(out.max_det, jac.det);
          out.max_norm = std::max(out.max_norm, spectral_norm(jac.matrix));
          out.max_inv_norm = std::max(out.max_inv_norm, spectral_norm(jac.matrix.inverse()));
          out.max_scaled_displacement = std::max(out.max_scaled_displacement, norm2(t.displacement(x, y)));
        }
      }
    }
  }
  return out;
}

DisplacementConsistency displacement_consistency(const EpsTransform& t, double lx, double ly,
                                                 int samples_per_cell) {
  const int n = t.cells_per_unit();
  const int cx = cells_along(lx, n);
  const int cy = cells_along(ly, n);
  const CellTransform& cell = t.cell_transform();
  const PorosityField& theta = t.porosity();
  DisplacementConsistency out;
  out.epsilon = t.epsilon();

  // Lipschitz constant of psi_check in Theta over the porosity range. |d psi/d Theta|
  // grows with Theta (through 1/sqrt(1-Theta)), so the upper end of the range bounds it.
  const auto range = theta.range(lx, ly);
  double lip_psi = 0.0;
  for (int i = 0; i < 64; ++i) {
    for (int j = 0; j < 64; ++j) {
      const Vec2 y{(i + 0.5) / 64.0, (j + 0.5) / 64.0};
      lip_psi = std::max(lip_psi, norm2(cell.map_dtheta(range.second, y)));
    }
  }
  out.bound = theta.lipschitz() * std::sqrt(2.0) * t.epsilon() * lip_psi;

  for (int kx = 0; kx < cx; ++kx) {
    for (int ky = 0; ky < cy; ++ky) {
      for (int i = 0; i < samples_per_cell; ++i) {
        for (int j = 0; j < samples_per_cell; ++j) {
          const Vec2 y{(i + 0.5) / samples_per_cell, (j + 0.5) / samples_per_cell};
          const Vec2 x{(kx + y.x) / n, (ky + y.y) / n};
          const Vec2 scaled = (t.map_in_cell({kx, ky}, y) - x) * static_cast<double>(n);
          const Vec2 limit = cell.displacement(theta(x), y);
          out.max_gap = std::max(out.max_gap, norm2(scaled - limit));
        }
      }
    }
  }
  return out;
}

TransformLimitGaps transform_limit_gaps(const EpsTransform& t, double lx, double ly, int micro_resolution) {
  const int n = t.cells_per_unit();
  const int cx = cells_along(lx, n);
  const int cy = cells_along(ly, n);
  const CellTransform& cell = t.cell_transform();
  const ReferenceCell& ref = cell.cell();
  const PorosityField& theta = t.porosity();
  const int m = micro_resolution;
  const double hy = 1.0 / m;

  // Micro quadrature points over Y* (2x2 Gauss per material element).
  std::vector<Vec2> ys;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (ref.box_in_hole({i * hy, j * hy}, {(i + 1) * hy, (j + 1) * hy})) continue;
      for (double gx : kGaussPts) {
        for (double gy : kGaussPts) ys.push_back({(i + gx) * hy, (j + gy) * hy});
      }
    }
  }
  const double wy = hy * hy / 4.0;
  const double wx = t.epsilon() * t.epsilon() / 4.0;

  double sum_j = 0.0;
  double sum_inv = 0.0;
  std::vector<CellJacobian> cell_jac(ys.size());
  for (int kx = 0; kx < cx; ++kx) {
    for (int ky = 0; ky < cy; ++ky) {
      for (std::size_t p = 0; p < ys.size(); ++p) cell_jac[p] = t.jacobian_in_cell({kx, ky}, ys[p]);
      for (double gx : kGaussPts) {
        for (double gy : kGaussPts) {
          const double th = theta(Vec2{(kx + gx) / n, (ky + gy) / n});
          for (std::size_t p = 0; p < ys.size(); ++p) {
            const CellJacobian lim = cell.jacobian(th, ys[p]);
            const double dj = cell_jac[p].det - lim.det;
            sum_j += wx * wy * dj * dj;
            const double di = frobenius(cell_jac[p].matrix.inverse() - lim.matrix.inverse());
            sum_inv += wx * wy * di * di;
          }
        }
      }
    }
  }
  return {t.epsilon(), std::sqrt(sum_j), std::sqrt(sum_inv)};
}

}  // namespace homog2s
