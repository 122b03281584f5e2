#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "homog2s/fem.hpp"
#include "homog2s/linalg.hpp"

namespace homog2s::lattice {

/// x = corner + eps * fraction with fraction in [0,1)^2.
struct LatticePoint {
  Vec2 corner;
  Vec2 fraction;
};

LatticePoint decompose(double epsilon, Vec2 x);

/// Complete eps-cells k + eps Y inside the rectangle (0,lx) x (0,ly).
struct CellIndexSet {
  int cells_x = 0;
  int cells_y = 0;
  double leftover_measure = 0.0;  // |Lambda_eps|

  int size() const { return cells_x * cells_y; }
};

CellIndexSet cell_index_set(double epsilon, double lx, double ly);

enum class PNorm { L1, L2, LInf };

/// Scalar field on the uniform macro grid of nx x ny square elements of size h,
/// anchored at the origin. Values are held at vertices (Q1) and at the 2x2 Gauss
/// points of each element; inactive elements carry zero (extension by zero).
class GridFunction {
 public:
  static GridFunction from_function(int nx, int ny, double h, const std::function<double(Vec2)>& fn,
                                    std::vector<std::uint8_t> active = {});
  /// Gauss values are the Q1 interpolant of the nodal values.
  static GridFunction from_nodal(int nx, int ny, double h, std::vector<double> nodal,
                                 std::vector<std::uint8_t> active = {});
  /// From a vertex field on an unmapped structured mesh anchored at the origin.
  static GridFunction from_mesh_field(const fem::QuadMesh& mesh, const std::vector<double>& field);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double h() const { return h_; }
  const std::vector<double>& nodal() const { return nodal_; }
  const std::vector<double>& gauss() const { return gauss_; }
  bool active(int e) const { return active_.empty() || active_[e] != 0; }
  const std::vector<std::uint8_t>& active_mask() const { return active_; }

  /// Physical position of Gauss point q (0..3) of element e.
  Vec2 gauss_point(int e, int q) const;
  double integral() const;
  double norm(PNorm p) const;

  GridFunction operator*(const GridFunction& other) const;
  GridFunction combine(double a, const GridFunction& other, double b) const;

 private:
  void zero_inactive();

  int nx_ = 0, ny_ = 0;
  double h_ = 0.0;
  std::vector<double> nodal_;
  std::vector<double> gauss_;
  std::vector<std::uint8_t> active_;
};

/// T_eps(u) stored per cell k over an m x m micro grid of Y.
class UnfoldedFunction {
 public:
  UnfoldedFunction(double epsilon, int cells_x, int cells_y, int micro);

  double epsilon() const { return epsilon_; }
  int cells_x() const { return cells_x_; }
  int cells_y() const { return cells_y_; }
  int micro_resolution() const { return micro_; }

  /// Nodal value at micro vertex (i, j) of cell (kx, ky).
  double& nodal(int kx, int ky, int i, int j);
  double nodal(int kx, int ky, int i, int j) const;
  /// Value at Gauss point q of micro element (i, j) of cell (kx, ky).
  double& gauss(int kx, int ky, int i, int j, int q);
  double gauss(int kx, int ky, int i, int j, int q) const;
  std::uint8_t& active(int kx, int ky, int i, int j);
  std::uint8_t active(int kx, int ky, int i, int j) const;

  /// Integral over Omega x Y.
  double integral() const;
  double norm(PNorm p) const;

 private:
  std::size_t cell_offset(int kx, int ky) const { return static_cast<std::size_t>(ky) * cells_x_ + kx; }

  double epsilon_;
  int cells_x_, cells_y_, micro_;
  std::vector<double> nodal_;
  std::vector<double> gauss_;
  std::vector<std::uint8_t> active_;
};

/// Checks that the grid tiles the domain by eps-cells; returns elements per cell.
int micro_resolution(double epsilon, const GridFunction& u);

UnfoldedFunction unfold(double epsilon, const GridFunction& u);

/// | ||T_eps u||_{L^p(Omega x Y)} - ||u||_{L^p(Omega)} | / ||u|| (0 for u == 0).
double unfold_isometry_check(double epsilon, const GridFunction& u, PNorm p);

/// Separable test expression phi(x, y) = X(x) Y(y), Y-periodic in y.
struct TestFunction {
  enum class MacroFactor { One, X1, X2, CosPiX1, CosPiX2 };
  enum class MicroFactor { One, Sin2PiY1, Sin2PiY2, Cos2PiY1 };

  MacroFactor macro = MacroFactor::One;
  MicroFactor micro = MicroFactor::One;

  double macro_value(Vec2 x) const;
  double micro_value(Vec2 y) const;
  double operator()(Vec2 x, Vec2 y) const { return macro_value(x) * micro_value(y); }
  std::string name() const;
};

/// The fixed battery of 12 products {1, x1, cos pi x1} x {1, sin 2pi y1, sin 2pi y2, cos 2pi y1}.
std::vector<TestFunction> test_battery();

using TwoScaleFunction = std::function<double(Vec2 x, Vec2 y)>;

/// Quadrature approximation of int u(x) phi(x, x/eps) dx on the Gauss samples of u.
double two_scale_pairing(double epsilon, const GridFunction& u, const TwoScaleFunction& phi);

/// ||T_eps(u~) - u0~||_{L2(Omega x Y)}; u0 is evaluated only on active micro elements.
double two_scale_error(double epsilon, const GridFunction& u, const TwoScaleFunction& u0);

/// Same, with u0(x, .) supplied as nodal values on the (m+1)^2 micro grid of Y.
/// Throws ResolutionMismatch when the supplied grid differs from the unfolded one.
using CellSampler = std::function<std::vector<double>(Vec2 x)>;
double two_scale_error(double epsilon, const GridFunction& u, const CellSampler& u0, int micro_resolution);

}  // namespace homog2s::lattice
