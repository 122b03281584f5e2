#pragma once

#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "homog2s/cell.hpp"
#include "homog2s/fem.hpp"
#include "homog2s/lattice.hpp"
#include "homog2s/micro.hpp"

namespace homog2s::macro {

/// Element Gauss points of the n x n macro mesh of (0,1)^2, ordered e * 4 + q.
std::vector<Vec2> macro_gauss_points(int resolution);

struct HomogenizedSolution {
  fem::QuadMesh mesh;
  std::vector<double> u0;  // per vertex
  cell::EffectiveTensorField field;
  fem::SolveReport solver;
};

/// int B grad u0 . grad phi + Theta u0 phi = int Theta f phi on the unperforated unit square.
/// The tensor field must be sampled at macro_gauss_points(resolution).
HomogenizedSolution solve_homogenized(const cell::EffectiveTensorField& field, const SourceField& source,
                                      int resolution, int jobs = 0);

/// Relative L2 gap between two macro solutions on the same mesh.
double macro_gap(const HomogenizedSolution& a, const HomogenizedSolution& b);

/// Per-point cell solutions of the l = 2 limit problem
///   int D_hat_0 grad_y u grad_y phi + J_0 u phi = int J_0 f(x) phi   on Y*   (transformed), or
///   int A_0 grad_y u grad_y phi + u phi = int f(x) phi                on Y*_x (deformed).
/// The solution is f(x) W(Theta(x), .) with W solved for unit source and memoized
/// per porosity value.
class TwoScaleLimit {
 public:
  TwoScaleLimit(cell::CellProblem problem, SourceField source, cell::Route route);

  const cell::CellProblem& problem() const { return problem_; }
  cell::Route route() const { return route_; }
  int resolution() const { return problem_.resolution; }

  /// Vertex values of u_hat_0(x, .) on the (res+1)^2 cell grid (zero on hole vertices).
  std::vector<double> sample(Vec2 x);
  /// Unit-source profile W(theta, .) and the iteration count of its solve.
  const std::vector<double>& profile(double theta);
  std::size_t solves() const;

 private:
  cell::CellProblem problem_;
  SourceField source_;
  cell::Route route_;
  mutable std::mutex mutex_;
  std::map<double, std::vector<double>> profiles_;
};

struct TwoScaleRouteGap {
  double theta = 0.0;
  double relative_gap = 0.0;  // ||W_transformed - W_deformed o psi_0|| / ||W_transformed||
};

/// Compares the transformed and deformed l = 2 cell solutions at the same mesh node
/// indices (the deformed mesh is the vertex image of the reference mesh).
TwoScaleRouteGap two_scale_route_gap(const cell::CellProblem& problem, double theta);

// ---------------------------------------------------------------------------
// eps-sweep

struct SweepSetup {
  micro::MicroProblem micro;  // l, coefficient, source, geometry, per_cell
  std::vector<double> epsilons;
  int macro_resolution = 64;
  int jobs = 0;
  cell::TensorCache* cache = nullptr;
};

struct ConvergenceRow {
  double epsilon = 0.0;
  double error = 0.0;      // criterion error (l=2: two-scale L2; l=0: cell-average pairing)
  double order = 0.0;      // log2(e(2 eps) / e(eps)); NaN for the first row
  double l2_error = 0.0;   // ||T_eps(u_hat_eps) - u0||_{L2(Omega x Y)}
  double pairing_gap = 0.0;  // l = 0: max gradient pairing gap over the battery
  int iterations = 0;
};

struct ConvergenceTable {
  int l = 0;
  std::vector<ConvergenceRow> rows;
  bool monotone = true;
  double mean_order = 0.0;
};

/// Fills order, monotone and mean_order from the errors.
void finalize_table(ConvergenceTable& table);

/// Micro solves for every eps against the limit (u0 for l = 0, u_hat_0 for l = 2).
ConvergenceTable sweep_epsilon(const SweepSetup& setup);

// ---------------------------------------------------------------------------
// Back-transformation rules

struct CorrectorRule {
  double theta = 0.0;
  int resolution = 0;
  double residual = 0.0;  // relative, or absolute when ||w_hat|| < 1e-14
  bool relative = true;
};

/// w_hat_j = w_j o psi_0 + psi_check_0,j + c_j, compared on the reference cell mesh.
CorrectorRule corrector_rule(const cell::CellProblem& problem, double theta);

struct BacktransformReport {
  std::vector<TwoScaleRouteGap> l2_rule;
  std::vector<CorrectorRule> corrector;         // at problem.resolution
  std::vector<CorrectorRule> corrector_refined; // at 2 x problem.resolution
  double max_l2_gap = 0.0;
  double max_corrector = 0.0;
  bool decreasing = true;
};

BacktransformReport verify_backtransform_rules(const cell::CellProblem& problem,
                                               const std::vector<double>& thetas, int jobs = 0);

}  // namespace homog2s::macro
