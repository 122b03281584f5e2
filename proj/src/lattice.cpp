#include "homog2s/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "homog2s/error.hpp"

namespace homog2s::lattice {

namespace {

constexpr double kPi = std::numbers::pi;

// Scale factor 1/eps as an exact integer when eps is a reciprocal of one.
double inverse_scale(double epsilon, bool& integral) {
  const double inv = 1.0 / epsilon;
  const double r = std::round(inv);
  integral = std::abs(inv - r) < 1e-9 * inv;
  return integral ? r : inv;
}

double lp_accumulate(double acc, double value, double weight, PNorm p) {
  switch (p) {
    case PNorm::L1:
      return acc + weight * std::abs(value);
    case PNorm::L2:
      return acc + weight * value * value;
    case PNorm::LInf:
      return std::max(acc, std::abs(value));
  }
  return acc;
}

double lp_finish(double acc, PNorm p) { return p == PNorm::L2 ? std::sqrt(acc) : acc; }

}  // namespace

LatticePoint decompose(double epsilon, Vec2 x) {
  if (!(epsilon > 0.0)) throw Error(ErrorKind::ParameterOutOfRange, "epsilon must be positive");
  bool integral = false;
  const double n = inverse_scale(epsilon, integral);
  LatticePoint out;
  for (int i = 0; i < 2; ++i) {
    const double s = x[i] * n;
    double k = std::floor(s);
    double frac = s - k;
    if (frac >= 1.0) {
      k += 1.0;
      frac = 0.0;
    }
    out.corner[i] = integral ? k / n : k * epsilon;
    out.fraction[i] = frac;
  }
  return out;
}

CellIndexSet cell_index_set(double epsilon, double lx, double ly) {
  if (!(epsilon > 0.0)) throw Error(ErrorKind::ParameterOutOfRange, "epsilon must be positive");
  CellIndexSet set;
  set.cells_x = static_cast<int>(std::floor(lx / epsilon + 1e-9));
  set.cells_y = static_cast<int>(std::floor(ly / epsilon + 1e-9));
  set.leftover_measure = std::max(0.0, lx * ly - set.size() * epsilon * epsilon);
  if (set.leftover_measure < 1e-12) set.leftover_measure = 0.0;
  return set;
}

// ---------------------------------------------------------------------------
// GridFunction

GridFunction GridFunction::from_function(int nx, int ny, double h, const std::function<double(Vec2)>& fn,
                                         std::vector<std::uint8_t> active) {
  GridFunction g;
  g.nx_ = nx;
  g.ny_ = ny;
  g.h_ = h;
  g.active_ = std::move(active);
  if (!g.active_.empty() && g.active_.size() != static_cast<std::size_t>(nx) * ny) {
    throw Error(ErrorKind::ResolutionMismatch, "mask size does not match the grid");
  }
  g.nodal_.resize(static_cast<std::size_t>(nx + 1) * (ny + 1));
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) g.nodal_[j * (nx + 1) + i] = fn(Vec2{i * h, j * h});
  }
  g.gauss_.resize(static_cast<std::size_t>(nx) * ny * 4);
  for (int e = 0; e < nx * ny; ++e) {
    for (int q = 0; q < 4; ++q) g.gauss_[e * 4 + q] = fn(g.gauss_point(e, q));
  }
  g.zero_inactive();
  return g;
}

GridFunction GridFunction::from_nodal(int nx, int ny, double h, std::vector<double> nodal,
                                      std::vector<std::uint8_t> active) {
  if (nodal.size() != static_cast<std::size_t>(nx + 1) * (ny + 1)) {
    throw Error(ErrorKind::ResolutionMismatch, "nodal vector size does not match the grid");
  }
  GridFunction g;
  g.nx_ = nx;
  g.ny_ = ny;
  g.h_ = h;
  g.active_ = std::move(active);
  if (!g.active_.empty() && g.active_.size() != static_cast<std::size_t>(nx) * ny) {
    throw Error(ErrorKind::ResolutionMismatch, "mask size does not match the grid");
  }
  g.nodal_ = std::move(nodal);
  g.gauss_.resize(static_cast<std::size_t>(nx) * ny * 4);
  const auto& rule = fem::gauss2x2();
  for (int e = 0; e < nx * ny; ++e) {
    const int i = e % nx;
    const int j = e / nx;
    const double v00 = g.nodal_[j * (nx + 1) + i];
    const double v10 = g.nodal_[j * (nx + 1) + i + 1];
    const double v11 = g.nodal_[(j + 1) * (nx + 1) + i + 1];
    const double v01 = g.nodal_[(j + 1) * (nx + 1) + i];
    for (int q = 0; q < 4; ++q) {
      const Vec2 s = rule.points[q];
      g.gauss_[e * 4 + q] =
          (1 - s.x) * (1 - s.y) * v00 + s.x * (1 - s.y) * v10 + s.x * s.y * v11 + (1 - s.x) * s.y * v01;
    }
  }
  g.zero_inactive();
  return g;
}

GridFunction GridFunction::from_mesh_field(const fem::QuadMesh& mesh, const std::vector<double>& field) {
  if (mesh.is_mapped()) throw Error(ErrorKind::MisalignedGrid, "grid functions live on unmapped meshes");
  if (std::abs(mesh.origin().x) > 1e-14 || std::abs(mesh.origin().y) > 1e-14) {
    throw Error(ErrorKind::MisalignedGrid, "grid functions are anchored at the origin");
  }
  return from_nodal(mesh.nx(), mesh.ny(), mesh.h(), field, mesh.active_mask());
}

void GridFunction::zero_inactive() {
  if (active_.empty()) return;
  std::vector<std::uint8_t> touched(nodal_.size(), 0);
  for (int e = 0; e < nx_ * ny_; ++e) {
    if (active_[e]) {
      const int i = e % nx_;
      const int j = e / nx_;
      touched[j * (nx_ + 1) + i] = touched[j * (nx_ + 1) + i + 1] = 1;
      touched[(j + 1) * (nx_ + 1) + i] = touched[(j + 1) * (nx_ + 1) + i + 1] = 1;
    } else {
      for (int q = 0; q < 4; ++q) gauss_[e * 4 + q] = 0.0;
    }
  }
  for (std::size_t v = 0; v < nodal_.size(); ++v) {
    if (!touched[v]) nodal_[v] = 0.0;
  }
}

Vec2 GridFunction::gauss_point(int e, int q) const {
  const Vec2 s = fem::gauss2x2().points[q];
  return Vec2{((e % nx_) + s.x) * h_, ((e / nx_) + s.y) * h_};
}

double GridFunction::integral() const {
  const double w = h_ * h_ / 4.0;
  double acc = 0.0;
  for (double v : gauss_) acc += w * v;
  return acc;
}

double GridFunction::norm(PNorm p) const {
  const double w = h_ * h_ / 4.0;
  double acc = 0.0;
  for (double v : gauss_) acc = lp_accumulate(acc, v, w, p);
  return lp_finish(acc, p);
}

GridFunction GridFunction::operator*(const GridFunction& other) const {
  if (other.nx_ != nx_ || other.ny_ != ny_) throw Error(ErrorKind::ResolutionMismatch, "grid mismatch");
  GridFunction g = *this;
  for (std::size_t i = 0; i < g.nodal_.size(); ++i) g.nodal_[i] *= other.nodal_[i];
  for (std::size_t i = 0; i < g.gauss_.size(); ++i) g.gauss_[i] *= other.gauss_[i];
  return g;
}

GridFunction GridFunction::combine(double a, const GridFunction& other, double b) const {
  if (other.nx_ != nx_ || other.ny_ != ny_) throw Error(ErrorKind::ResolutionMismatch, "grid mismatch");
  GridFunction g = *this;
  for (std::size_t i = 0; i < g.nodal_.size(); ++i) g.nodal_[i] = a * nodal_[i] + b * other.nodal_[i];
  for (std::size_t i = 0; i < g.gauss_.size(); ++i) g.gauss_[i] = a * gauss_[i] + b * other.gauss_[i];
  return g;
}

// ---------------------------------------------------------------------------
// UnfoldedFunction

UnfoldedFunction::UnfoldedFunction(double epsilon, int cells_x, int cells_y, int micro)
    : epsilon_(epsilon), cells_x_(cells_x), cells_y_(cells_y), micro_(micro) {
  const std::size_t cells = static_cast<std::size_t>(cells_x) * cells_y;
  nodal_.assign(cells * (micro + 1) * (micro + 1), 0.0);
  gauss_.assign(cells * micro * micro * 4, 0.0);
  active_.assign(cells * micro * micro, 1);
}

double& UnfoldedFunction::nodal(int kx, int ky, int i, int j) {
  return nodal_[cell_offset(kx, ky) * (micro_ + 1) * (micro_ + 1) + j * (micro_ + 1) + i];
}
double UnfoldedFunction::nodal(int kx, int ky, int i, int j) const {
  return nodal_[cell_offset(kx, ky) * (micro_ + 1) * (micro_ + 1) + j * (micro_ + 1) + i];
}
double& UnfoldedFunction::gauss(int kx, int ky, int i, int j, int q) {
  return gauss_[(cell_offset(kx, ky) * micro_ * micro_ + j * micro_ + i) * 4 + q];
}
double UnfoldedFunction::gauss(int kx, int ky, int i, int j, int q) const {
  return gauss_[(cell_offset(kx, ky) * micro_ * micro_ + j * micro_ + i) * 4 + q];
}
std::uint8_t& UnfoldedFunction::active(int kx, int ky, int i, int j) {
  return active_[cell_offset(kx, ky) * micro_ * micro_ + j * micro_ + i];
}
std::uint8_t UnfoldedFunction::active(int kx, int ky, int i, int j) const {
  return active_[cell_offset(kx, ky) * micro_ * micro_ + j * micro_ + i];
}

double UnfoldedFunction::integral() const {
  // dx over each cell is eps^2, dy over each micro Gauss point is (1/m)^2 / 4.
  const double w = epsilon_ * epsilon_ / (4.0 * micro_ * micro_);
  double acc = 0.0;
  for (double v : gauss_) acc += w * v;
  return acc;
}

double UnfoldedFunction::norm(PNorm p) const {
  const double w = epsilon_ * epsilon_ / (4.0 * micro_ * micro_);
  double acc = 0.0;
  for (double v : gauss_) acc = lp_accumulate(acc, v, w, p);
  return lp_finish(acc, p);
}

// ---------------------------------------------------------------------------
// Unfolding

int micro_resolution(double epsilon, const GridFunction& u) {
  const double ratio = epsilon / u.h();
  const long m = std::lround(ratio);
  if (m < 1 || std::abs(ratio - static_cast<double>(m)) > 1e-9) {
    std::ostringstream os;
    os << "grid spacing " << u.h() << " does not divide epsilon " << epsilon;
    throw Error(ErrorKind::MisalignedGrid, os.str());
  }
  if (u.nx() % m != 0 || u.ny() % m != 0) {
    throw Error(ErrorKind::MisalignedGrid, "domain is not tiled by complete eps-cells");
  }
  return static_cast<int>(m);
}

UnfoldedFunction unfold(double epsilon, const GridFunction& u) {
  const int m = micro_resolution(epsilon, u);
  const int cx = u.nx() / m;
  const int cy = u.ny() / m;
  UnfoldedFunction out(epsilon, cx, cy, m);
  const int stride = u.nx() + 1;
  for (int ky = 0; ky < cy; ++ky) {
    for (int kx = 0; kx < cx; ++kx) {
      for (int j = 0; j <= m; ++j) {
        for (int i = 0; i <= m; ++i) out.nodal(kx, ky, i, j) = u.nodal()[(ky * m + j) * stride + kx * m + i];
      }
      for (int j = 0; j < m; ++j) {
        for (int i = 0; i < m; ++i) {
          const int e = (ky * m + j) * u.nx() + kx * m + i;
          out.active(kx, ky, i, j) = u.active(e) ? 1 : 0;
          for (int q = 0; q < 4; ++q) out.gauss(kx, ky, i, j, q) = u.gauss()[e * 4 + q];
        }
      }
    }
  }
  return out;
}

double unfold_isometry_check(double epsilon, const GridFunction& u, PNorm p) {
  const double base = u.norm(p);
  const double unfolded = unfold(epsilon, u).norm(p);
  if (base == 0.0) return unfolded;
  return std::abs(unfolded - base) / base;
}

// ---------------------------------------------------------------------------
// Test functions and two-scale estimators

double TestFunction::macro_value(Vec2 x) const {
  switch (macro) {
    case MacroFactor::One:
      return 1.0;
    case MacroFactor::X1:
      return x.x;
    case MacroFactor::X2:
      return x.y;
    case MacroFactor::CosPiX1:
      return std::cos(kPi * x.x);
    case MacroFactor::CosPiX2:
      return std::cos(kPi * x.y);
  }
  return 1.0;
}

double TestFunction::micro_value(Vec2 y) const {
  switch (micro) {
    case MicroFactor::One:
      return 1.0;
    case MicroFactor::Sin2PiY1:
      return std::sin(2.0 * kPi * y.x);
    case MicroFactor::Sin2PiY2:
      return std::sin(2.0 * kPi * y.y);
    case MicroFactor::Cos2PiY1:
      return std::cos(2.0 * kPi * y.x);
  }
  return 1.0;
}

std::string TestFunction::name() const {
  static const char* macro_names[] = {"1", "x1", "x2", "cos(pi x1)", "cos(pi x2)"};
  static const char* micro_names[] = {"1", "sin(2pi y1)", "sin(2pi y2)", "cos(2pi y1)"};
  return std::string(macro_names[static_cast<int>(macro)]) + "*" + micro_names[static_cast<int>(micro)];
}

std::vector<TestFunction> test_battery() {
  using M = TestFunction::MacroFactor;
  using Y = TestFunction::MicroFactor;
  std::vector<TestFunction> out;
  for (M m : {M::One, M::X1, M::CosPiX1}) {
    for (Y y : {Y::One, Y::Sin2PiY1, Y::Sin2PiY2, Y::Cos2PiY1}) out.push_back({m, y});
  }
  return out;
}

double two_scale_pairing(double epsilon, const GridFunction& u, const TwoScaleFunction& phi) {
  const double w = u.h() * u.h() / 4.0;
  const double inv = 1.0 / epsilon;
  double acc = 0.0;
  for (int e = 0; e < u.nx() * u.ny(); ++e) {
    if (!u.active(e)) continue;
    for (int q = 0; q < 4; ++q) {
      const Vec2 x = u.gauss_point(e, q);
      acc += w * u.gauss()[e * 4 + q] * phi(x, x * inv);
    }
  }
  return acc;
}

double two_scale_error(double epsilon, const GridFunction& u, const TwoScaleFunction& u0) {
  const UnfoldedFunction tu = unfold(epsilon, u);
  const int m = tu.micro_resolution();
  const auto& rule = fem::gauss2x2();
  const double wy = 1.0 / (4.0 * m * m);
  const double wx = epsilon * epsilon / 4.0;
  double acc = 0.0;
  for (int ky = 0; ky < tu.cells_y(); ++ky) {
    for (int kx = 0; kx < tu.cells_x(); ++kx) {
      for (const Vec2& gx : rule.points) {
        const Vec2 x{(kx + gx.x) * epsilon, (ky + gx.y) * epsilon};
        for (int j = 0; j < m; ++j) {
          for (int i = 0; i < m; ++i) {
            if (!tu.active(kx, ky, i, j)) continue;
            for (int q = 0; q < 4; ++q) {
              const Vec2 y{(i + rule.points[q].x) / m, (j + rule.points[q].y) / m};
              const double d = tu.gauss(kx, ky, i, j, q) - u0(x, y);
              acc += wx * wy * d * d;
            }
          }
        }
      }
    }
  }
  return std::sqrt(acc);
}

double two_scale_error(double epsilon, const GridFunction& u, const CellSampler& u0, int micro_res) {
  const UnfoldedFunction tu = unfold(epsilon, u);
  const int m = tu.micro_resolution();
  if (m != micro_res) {
    std::ostringstream os;
    os << "limit sampled on " << micro_res << " elements per cell, unfolded function has " << m;
    throw Error(ErrorKind::ResolutionMismatch, os.str());
  }
  const auto& rule = fem::gauss2x2();
  const double wy = 1.0 / (4.0 * m * m);
  const double wx = epsilon * epsilon / 4.0;
  const std::size_t expected = static_cast<std::size_t>(m + 1) * (m + 1);
  double acc = 0.0;
  for (int ky = 0; ky < tu.cells_y(); ++ky) {
    for (int kx = 0; kx < tu.cells_x(); ++kx) {
      for (const Vec2& gx : rule.points) {
        const Vec2 x{(kx + gx.x) * epsilon, (ky + gx.y) * epsilon};
        const std::vector<double> lim = u0(x);
        if (lim.size() != expected) throw Error(ErrorKind::ResolutionMismatch, "limit sample size");
        for (int j = 0; j < m; ++j) {
          for (int i = 0; i < m; ++i) {
            if (!tu.active(kx, ky, i, j)) continue;
            const double v00 = lim[j * (m + 1) + i];
            const double v10 = lim[j * (m + 1) + i + 1];
            const double v11 = lim[(j + 1) * (m + 1) + i + 1];
            const double v01 = lim[(j + 1) * (m + 1) + i];
            for (int q = 0; q < 4; ++q) {
              const Vec2 s = rule.points[q];
              const double l =
                  (1 - s.x) * (1 - s.y) * v00 + s.x * (1 - s.y) * v10 + s.x * s.y * v11 + (1 - s.x) * s.y * v01;
              const double d = tu.gauss(kx, ky, i, j, q) - l;
              acc += wx * wy * d * d;
            }
          }
        }
      }
    }
  }
  return std::sqrt(acc);
}

}  // namespace homog2s::lattice
