#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "homog2s/linalg.hpp"

namespace homog2s::fem {

/// Tensor-product Gauss rule on the unit square [0,1]^2.
struct GaussRule {
  std::vector<Vec2> points;
  std::vector<double> weights;
};

const GaussRule& gauss2x2();
const GaussRule& gauss3x3();

/// Structured Q1 mesh of nx x ny square elements of size h. Vertices can be
/// moved by a mapping (elements stay bilinear); the structured ("reference")
/// coordinates stay available for coefficient evaluation.
class QuadMesh {
 public:
  static QuadMesh structured(Vec2 origin, int nx, int ny, double h);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double h() const { return h_; }
  Vec2 origin() const { return origin_; }
  int num_vertices() const { return (nx_ + 1) * (ny_ + 1); }
  int num_elements() const { return nx_ * ny_; }

  int vertex_index(int i, int j) const { return j * (nx_ + 1) + i; }
  std::array<int, 2> vertex_ij(int v) const { return {v % (nx_ + 1), v / (nx_ + 1)}; }
  std::array<int, 2> element_ij(int e) const { return {e % nx_, e / nx_}; }
  /// Counter-clockwise: (i,j), (i+1,j), (i+1,j+1), (i,j+1).
  std::array<int, 4> element_vertices(int e) const;

  const std::vector<Vec2>& vertices() const { return vertices_; }
  Vec2 vertex(int v) const { return vertices_[v]; }
  Vec2 reference_vertex(int v) const;
  Vec2 reference_point(int e, Vec2 local) const;

  bool element_active(int e) const { return active_[e] != 0; }
  const std::vector<std::uint8_t>& active_mask() const { return active_; }
  /// Vertices touching at least one active element.
  std::vector<std::uint8_t> vertex_mask() const;
  int num_active_elements() const;

  /// Deactivates elements whose reference box [lo, hi] satisfies pred.
  void deactivate_if(const std::function<bool(Vec2 lo, Vec2 hi)>& pred);
  void set_active_mask(std::vector<std::uint8_t> mask);
  /// Moves every vertex to map(reference position).
  void map_vertices(const std::function<Vec2(Vec2)>& map);
  bool is_mapped() const { return mapped_; }
  /// Throws InvertedElement if a mapped active element has non-positive Jacobian at a Gauss point.
  void check_orientation() const;

 private:
  int nx_ = 0, ny_ = 0;
  double h_ = 0.0;
  Vec2 origin_;
  bool mapped_ = false;
  std::vector<Vec2> vertices_;
  std::vector<std::uint8_t> active_;
};

/// Quadrature point with physical shape gradients.
struct QuadPoint {
  int element = 0;
  Vec2 local;      // in [0,1]^2
  Vec2 reference;  // structured coordinates
  Vec2 point;      // physical (mapped) coordinates
  double weight = 0.0;  // rule weight times |det F|
  double det = 0.0;     // det F of the bilinear element map
  std::array<double, 4> shape{};
  std::array<Vec2, 4> grad{};
};

/// Evaluates the element geometry at every point of the rule.
void element_quadrature(const QuadMesh& mesh, int e, const GaussRule& rule, std::vector<QuadPoint>& out);

/// Vertex -> DOF numbering. Periodic identification glues opposite faces of the
/// mesh; the mean-zero flag realises the quotient by constants through projection.
struct DofMap {
  std::vector<int> vertex_to_dof;  // -1 for inactive vertices
  int num_dofs = 0;
  bool periodic = false;
  bool mean_zero = false;

  static DofMap build(const QuadMesh& mesh, bool periodic = false, bool mean_zero = false);
  /// Expands DOF values to all vertices (inactive vertices get 0).
  std::vector<double> to_vertex(const std::vector<double>& dofs) const;
  std::vector<double> to_dofs(const std::vector<double>& vertex_values) const;
};

/// Compressed-row sparse matrix.
struct CsrMatrix {
  int n = 0;
  std::vector<int> row_ptr;
  std::vector<int> cols;
  std::vector<double> vals;

  void multiply(const std::vector<double>& x, std::vector<double>& y) const;
  std::vector<double> diagonal() const;
  double at(int i, int j) const;
  double max_abs_row_sum() const;
  double symmetry_error() const;
};

struct SparseSystem {
  CsrMatrix matrix;
  std::vector<double> rhs;
  std::vector<double> mean_weights;  // integral of weight * phi_i; used when mean_zero
  bool mean_zero = false;
  double tol = 1e-10;
  int max_iterations = 0;  // 0 = automatic
};

/// Integrand data at one quadrature point for
///   int A grad u . grad phi + c u phi = int f phi + int g . grad phi.
struct PointData {
  Mat2 coefficient;
  double reaction = 0.0;
  double load = 0.0;
  Vec2 flux{0.0, 0.0};
  double mean_weight = 1.0;
};

using PointEvaluator = std::function<PointData(const QuadPoint&)>;

/// Assembles stiffness, mass and load with 2x2 Gauss quadrature over active elements.
SparseSystem assemble(const QuadMesh& mesh, const DofMap& dofs, const PointEvaluator& eval, int jobs = 0);

struct SolveReport {
  int iterations = 0;
  double residual = 0.0;  // relative
  bool converged = false;
};

struct SolveResult {
  std::vector<double> x;
  SolveReport report;
};

/// Jacobi-preconditioned conjugate gradients; throws MaxIterationsExceeded.
SolveResult solve_cg(const SparseSystem& system, bool jacobi = true);

enum class NormKind { L2, H1Semi, LInf };

/// Gauss-quadrature norm of a vertex field over active elements (3x3 rule).
double norm(const QuadMesh& mesh, const std::vector<double>& field, NormKind kind);
/// Norm of a field given analytically at physical points (L2 or LInf over quadrature points).
double norm(const QuadMesh& mesh, const std::function<double(Vec2)>& field, NormKind kind);
/// L2 distance to an analytic function of the physical coordinates.
double l2_error(const QuadMesh& mesh, const std::vector<double>& field, const std::function<double(Vec2)>& exact);
/// Energy-type seminorm error sqrt(int |grad u_h - grad u|^2).
double h1_error(const QuadMesh& mesh, const std::vector<double>& field,
                const std::function<Vec2(Vec2)>& exact_grad);
/// Integral of a vertex field, optionally weighted by w(quad point).
double integrate(const QuadMesh& mesh, const std::vector<double>& field);
/// Measure of the active (mapped) elements.
double measure(const QuadMesh& mesh);
/// Q1 interpolation of a vertex field at local coordinates of element e.
double interpolate(const QuadMesh& mesh, const std::vector<double>& field, int e, Vec2 local);
/// Gradient of a vertex field at local coordinates of element e (physical coordinates).
Vec2 interpolate_gradient(const QuadMesh& mesh, const std::vector<double>& field, int e, Vec2 local);
/// Evaluates a vertex field at a reference-coordinate point of an unmapped structured mesh.
double evaluate_at(const QuadMesh& mesh, const std::vector<double>& field, Vec2 reference_point);
Vec2 gradient_at(const QuadMesh& mesh, const std::vector<double>& field, Vec2 reference_point);

}  // namespace homog2s::fem
