#pragma once

#include <vector>

#include "homog2s/fem.hpp"
#include "homog2s/fields.hpp"
#include "homog2s/microgeom.hpp"

namespace homog2s::micro {

/// Fine-scale problem on Omega = (0,1)^2 perforated by eps-periodic holes.
///   int eps^l A_eps grad u . grad phi + u phi = int f phi   over Omega_eps,
/// with natural boundary conditions and A_eps(x) = A(x, x/eps).
struct MicroProblem {
  int l = 0;
  double epsilon = 0.25;
  CoefficientField coefficient = CoefficientField::identity();
  SourceField source = SourceField::constant(1.0);
  CellTransform transform{};
  PorosityField porosity = PorosityField::constant(15.0 / 16.0);
  int per_cell = 16;  // mesh elements per eps-cell edge
  int jobs = 0;
};

struct MicroNorms {
  double l2 = 0.0;
  double gradient_l2 = 0.0;
  double estimate = 0.0;  // ||u||_{L2} + eps^{l/2} ||grad u||_{L2}
};

struct CoercivitySample {
  double min_eigenvalue = 0.0;  // min over quadrature points of lambda_min(J Psi^-1 A Psi^-T)
  double bound = 0.0;           // alpha c_J / C^2
  double sharp_bound = 0.0;     // min over quadrature points of alpha J / ||Psi||^2
};

struct MicroSolution {
  fem::QuadMesh mesh;           // reference mesh (substitute) or vertex-mapped mesh (fine)
  std::vector<double> values;   // per vertex, zero on inactive vertices
  MicroNorms norms;
  fem::SolveReport solver;
  CoercivitySample coercivity;  // substitute route only
  bool mapped = false;
};

/// Assembled system, exposed for residual and energy checks.
struct MicroDiscretization {
  fem::QuadMesh mesh;
  fem::DofMap dofs;
  fem::SparseSystem system;
  CoercivitySample coercivity;
};

/// Reference perforated mesh of Omega_hat_eps (structured, holes removed).
fem::QuadMesh reference_mesh(const MicroProblem& problem);

MicroDiscretization discretize_substitute(const MicroProblem& problem);
MicroDiscretization discretize_fine_mapped(const MicroProblem& problem);

/// Transformed problem on the fixed perforated mesh:
///   int eps^l J Psi^-1 A_hat Psi^-T grad u . grad phi + J u phi = int J f_hat phi.
/// Throws CoercivityViolation when a sampled coefficient drops below alpha c_J / C^2.
MicroSolution solve_substitute(const MicroProblem& problem);

/// Untransformed problem on the vertex-mapped mesh psi_eps(reference mesh).
/// Throws InvertedElement for a mapped element with non-positive Jacobian.
MicroSolution solve_fine_mapped(const MicroProblem& problem);

struct EquivalenceEntry {
  int per_cell = 0;
  double relative_gap = 0.0;  // ||u_hat - u o psi_eps|| / ||u_hat|| on Omega_hat_eps
  double absolute_gap = 0.0;
};

struct EquivalenceReport {
  std::vector<EquivalenceEntry> entries;
  bool decreasing = true;
};

EquivalenceReport verify_equivalence(const MicroProblem& problem, const std::vector<int>& per_cell);

struct UniformEstimateRow {
  double epsilon = 0.0;
  MicroNorms norms;
  int iterations = 0;
};

struct UniformEstimateTable {
  int l = 0;
  std::vector<UniformEstimateRow> rows;
  double max_ratio = 0.0;  // max_k estimate_k / estimate_0
  bool bounded = true;     // max_ratio <= 1.5
};

/// Solves the substitute problem for each eps and tabulates the uniform estimate.
/// Independent eps cases run concurrently.
UniformEstimateTable uniform_estimate_sweep(const MicroProblem& problem, const std::vector<double>& epsilons,
                                            int jobs = 0);

}  // namespace homog2s::micro
