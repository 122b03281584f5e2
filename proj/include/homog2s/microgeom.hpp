#pragma once

#include <array>
#include <utility>
#include <vector>

#include "homog2s/fields.hpp"
#include "homog2s/linalg.hpp"

namespace homog2s {

/// Unit cell Y = [0,1]^2 with an optional centred square hole.
/// hole_halfwidth_ref == 0 means the cell is not perforated.
struct ReferenceCell {
  Vec2 hole_center{0.5, 0.5};
  double hole_halfwidth_ref = 0.125;
  double blend_radius = 0.375;

  static ReferenceCell square_hole(double halfwidth = 0.125, double blend_radius = 0.375);
  static ReferenceCell unperforated();

  bool has_hole() const { return hole_halfwidth_ref > 0.0; }
  /// Closed hole box [c - h*, c + h*]^2.
  bool in_hole(Vec2 y) const;
  /// True when the axis-aligned box [lo, hi] lies inside the closed hole.
  bool box_in_hole(Vec2 lo, Vec2 hi) const;
  /// Porosity 1 - 4 h*^2 of the undeformed cell.
  double reference_porosity() const;
  /// |Y*| of the undeformed cell.
  double material_measure() const { return reference_porosity(); }
  /// Throws MisalignedGrid unless h* and R_out are multiples of 1/resolution.
  void check_alignment(int resolution) const;
};

struct GeometryBounds {
  double c_J = 0.2;         // lower bound on Jacobian determinants
  double C = 3.0;           // upper bound on ||D psi||, ||D psi^{-1}|| and det
  double min_slope = 0.1;   // lower bound on the radial profile slope
  double margin = 0.9;      // h(Theta) <= margin * R_out
};

struct CellJacobian {
  Mat2 matrix = Mat2::identity();
  double det = 1.0;
};

struct AdmissibilityReport {
  double theta = 0.0;
  double halfwidth = 0.0;
  double min_slope = 0.0;
  double min_det = 0.0;     // over sampled points of Y*
  double max_det = 0.0;
  double max_norm = 0.0;    // max of ||D psi|| and ||D psi^{-1}||
  bool admissible = false;
};

/// Porosity-parametrized cell deformation psi(Theta, .): Y -> Y.
///
/// With d = y - c the map is psi(Theta, y) = c + sigma(d) d where
///   sigma(d) = 1 + kappa(Theta) beta(|d1|) beta(|d2|),   kappa = h(Theta)/h* - 1.
/// beta == 1 on [0, h*], beta == 0 beyond R_out, and on the blend annulus it is
/// chosen so that along the axes psi reproduces the cubic Hermite radial profile
/// rho_Theta (linear on [0,h*], C^1 blend on [h*,R_out], identity beyond).
/// The hole box of half-width h* is mapped linearly onto the box of half-width
/// h(Theta) = sqrt(1 - Theta)/2, so the deformed material part has area Theta.
/// The map is C^1 with compactly supported displacement.
class CellTransform {
 public:
  explicit CellTransform(ReferenceCell cell = {}, GeometryBounds bounds = {});

  const ReferenceCell& cell() const { return cell_; }
  const GeometryBounds& bounds() const { return bounds_; }

  /// Hole half-width h(Theta) of the deformed cell.
  double halfwidth(double theta) const;
  /// Theta at which the map is the identity.
  double reference_porosity() const { return cell_.reference_porosity(); }
  /// Admissible porosity interval [lo, hi] (found by sampling at construction).
  std::pair<double, double> admissible_interval() const { return interval_; }
  bool is_admissible(double theta) const;
  /// Throws ParameterOutOfRange when theta is outside the admissible interval.
  void require_admissible(double theta) const;

  /// Radial profile rho_Theta(r) and its derivative.
  double profile(double theta, double r) const;
  double profile_slope(double theta, double r) const;

  Vec2 map(double theta, Vec2 y) const;
  Vec2 displacement(double theta, Vec2 y) const { return map(theta, y) - y; }
  /// d psi / d Theta at fixed y.
  Vec2 map_dtheta(double theta, Vec2 y) const;
  /// Analytic D_y psi; throws DegenerateJacobian when det <= c_J.
  CellJacobian jacobian(double theta, Vec2 y) const;
  /// Same as jacobian() without the bound check.
  CellJacobian jacobian_unchecked(double theta, Vec2 y) const;
  /// Damped Newton solve of psi(theta, y) = z; throws NoConvergence after 50 iterations.
  Vec2 inverse(double theta, Vec2 z) const;

  /// Dense-sampling diagnostics for one porosity value.
  AdmissibilityReport check(double theta) const;

 private:
  double kappa(double theta) const;
  double beta(double t) const;
  double beta_slope(double t) const;
  double sigma(double theta, Vec2 d) const;

  ReferenceCell cell_;
  GeometryBounds bounds_;
  std::pair<double, double> interval_{1.0, 1.0};
};

/// psi_eps(x) = [x] + eps psi(Theta([x]), {x}), built cell by cell on the eps-lattice.
class EpsTransform {
 public:
  EpsTransform(double epsilon, CellTransform cell, PorosityField porosity);

  double epsilon() const { return epsilon_; }
  /// 1/eps, which must be an integer.
  int cells_per_unit() const { return cells_per_unit_; }
  const CellTransform& cell_transform() const { return cell_; }
  const PorosityField& porosity() const { return porosity_; }

  /// Porosity at the lattice corner [x] of the cell containing x.
  double cell_porosity(Vec2 x) const;
  /// Porosity of the cell with integer index k.
  double cell_porosity(std::array<int, 2> k) const;

  Vec2 map(Vec2 x) const;
  Vec2 displacement(Vec2 x) const { return map(x) - x; }
  CellJacobian jacobian(Vec2 x) const;
  /// Newton inverse inside the cell containing x_deformed (psi_eps maps each cell into itself).
  Vec2 inverse(Vec2 x_deformed) const;

  /// Cell-explicit evaluation for points known to lie in cell k at local coordinate y.
  Vec2 map_in_cell(std::array<int, 2> k, Vec2 y) const;
  CellJacobian jacobian_in_cell(std::array<int, 2> k, Vec2 y) const;

 private:
  double epsilon_;
  int cells_per_unit_;
  CellTransform cell_;
  PorosityField porosity_;
};

/// psi_0(x, y) = y + psi_check(Theta(x), y).
class LimitTransform {
 public:
  LimitTransform(CellTransform cell, PorosityField porosity);

  const CellTransform& cell_transform() const { return cell_; }
  const PorosityField& porosity() const { return porosity_; }

  double porosity_at(Vec2 x) const { return porosity_(x); }
  Vec2 map(Vec2 x, Vec2 y) const;
  Vec2 displacement(Vec2 x, Vec2 y) const { return map(x, y) - y; }
  CellJacobian jacobian(Vec2 x, Vec2 y) const;
  Vec2 inverse(Vec2 x, Vec2 y) const;
  /// psi_check_0^{-1}(x, y) = psi_0^{-1}(x, y) - y.
  Vec2 inverse_displacement(Vec2 x, Vec2 y) const { return inverse(x, y) - y; }
  /// y in Y*_x, decided through the inverse map.
  bool in_material(Vec2 x, Vec2 y) const;

 private:
  CellTransform cell_;
  PorosityField porosity_;
};

// ---------------------------------------------------------------------------
// Diagnostics

struct SampledBounds {
  double min_det = 0.0;
  double max_det = 0.0;
  double max_norm = 0.0;      // ||Psi||
  double max_inv_norm = 0.0;  // ||Psi^{-1}||
  double max_scaled_displacement = 0.0;  // eps^{-1} ||psi_check_eps||_inf
};

/// Samples J_eps, Psi_eps over an n x n grid of material points of the domain.
SampledBounds sample_eps_bounds(const EpsTransform& t, double lx, double ly, int samples_per_cell);

/// Samples J_0 and Psi_0 over an nx x nx macro grid times an ny x ny grid of Y*.
SampledBounds sample_limit_bounds(const LimitTransform& t, double lx, double ly, int nx, int ny);

struct DisplacementConsistency {
  double epsilon = 0.0;
  double max_gap = 0.0;  // max_x |eps^{-1} psi_check_eps(x) - psi_check_0(x, {x})|
  double bound = 0.0;    // omega_Theta(eps) * L
};

/// Grid-sampled rescaled displacement gap against its two-scale limit.
DisplacementConsistency displacement_consistency(const EpsTransform& t, double lx, double ly,
                                                 int samples_per_cell);

struct TransformLimitGaps {
  double epsilon = 0.0;
  double jacobian_gap = 0.0;          // ||T_eps(J~_eps) - J~_0||_{L2(Omega x Y)}
  double inverse_jacobian_gap = 0.0;  // ||T_eps(Psi~_eps^{-1}) - Psi~_0^{-1}||
};

/// Unfolded transformation coefficients against their limits, by quadrature on Omega x Y*.
TransformLimitGaps transform_limit_gaps(const EpsTransform& t, double lx, double ly, int micro_resolution);

}  // namespace homog2s
