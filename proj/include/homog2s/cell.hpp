#pragma once

#include <array>
#include <atomic>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "homog2s/fem.hpp"
#include "homog2s/fields.hpp"
#include "homog2s/microgeom.hpp"

namespace homog2s::cell {

enum class Route { Transformed, Deformed };

std::string to_string(Route route);

/// Geometry and coefficient data shared by all cell problems.
struct CellProblem {
  CellTransform transform{};
  PorosityField porosity = PorosityField::constant(15.0 / 16.0);
  CoefficientField coefficient = CoefficientField::identity();
  int resolution = 32;  // cell mesh is resolution x resolution
  int jobs = 1;         // assembly workers per cell solve
};

/// Macro point x with its porosity Theta(x). A theta override lets callers probe a
/// single porosity value independently of the porosity field.
struct MacroPoint {
  Vec2 x;
  double theta = 0.0;
};

MacroPoint macro_point(const CellProblem& problem, Vec2 x);

/// Periodic perforated cell mesh of Y* (reference configuration).
fem::QuadMesh reference_cell_mesh(const ReferenceCell& cell, int resolution);

struct CellCorrectors {
  Route route = Route::Transformed;
  fem::QuadMesh mesh;   // reference mesh or vertex-mapped mesh of Y*_x
  fem::DofMap dofs;     // periodic, mean zero
  std::array<std::vector<double>, 2> w;  // per vertex
  std::array<fem::SolveReport, 2> solver{};
  double residual = 0.0;  // max_j ||K w_j - b_j|| / ||b_j|| (0 when b_j == 0)
};

/// Periodic, mean-zero solutions of int D_hat_0 (grad w_hat_j + e_j) . grad phi = 0 on Y*.
CellCorrectors solve_cell_transformed(const CellProblem& problem, const MacroPoint& point);

/// Solutions of int A_0 (grad w_j + e_j) . grad phi = 0 on the vertex-mapped mesh of Y*_x.
CellCorrectors solve_cell_deformed(const CellProblem& problem, const MacroPoint& point);

struct EffectiveTensor {
  Route route = Route::Transformed;
  MacroPoint point;
  Mat2 B;
  double theta = 0.0;       // int J_0 (transformed) or mapped measure (deformed)
  double energy_gap = 0.0;  // max_j |B_jj - int D (e_j + grad w_j) . (e_j + grad w_j)|
  double residual = 0.0;
};

/// B_hat_0 and Theta = int_{Y*} J_0 dy.
EffectiveTensor effective_tensor_transformed(const CellProblem& problem, const MacroPoint& point);
/// B_0 and Theta = |Y*_x|.
EffectiveTensor effective_tensor_deformed(const CellProblem& problem, const MacroPoint& point);
EffectiveTensor effective_tensor(const CellProblem& problem, const MacroPoint& point, Route route);

/// Effective tensor and porosity stored per cache bin.
struct TensorSample {
  Mat2 B;
  double porosity = 0.0;
};

/// Tensors over quantized porosity bins with linear interpolation between bin nodes.
/// Concurrent lookups share the read lock; inserts are serialized.
class TensorCache {
 public:
  using Compute = std::function<TensorSample(double theta)>;

  explicit TensorCache(std::string key, double bin_width = 1e-3);

  const std::string& key() const { return key_; }
  double bin_width() const { return bin_width_; }
  std::size_t size() const;
  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }

  /// Interpolated tensor at theta; missing bin nodes are computed by compute().
  /// Falls back to compute(theta) when a bin node cannot be evaluated.
  TensorSample lookup(double theta, const Compute& compute);

  /// Versioned CSV: a "# version=1 key=..." line, then theta,B11,B12,B21,B22,porosity.
  void save(const std::string& path) const;
  /// Loads entries when the file exists and its key matches; returns the number loaded.
  std::size_t load(const std::string& path);

 private:
  std::optional<TensorSample> find(long bin) const;
  TensorSample node(long bin, const Compute& compute);

  std::string key_;
  double bin_width_;
  mutable std::shared_mutex mutex_;
  std::map<long, TensorSample> entries_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

/// Cache key for a cell problem and route; empty when A depends on x (no caching).
std::string cache_key(const CellProblem& problem, Route route);

struct EffectiveTensorField {
  Route route = Route::Transformed;
  std::vector<Vec2> points;
  std::vector<Mat2> tensors;
  std::vector<double> porosity;
  bool cached = false;
};

/// Tensors at every macro point, computed in a parallel map. When the cache is
/// non-null and A is x-independent, tensors are read from the porosity cache.
EffectiveTensorField tensor_field(const CellProblem& problem, const std::vector<Vec2>& points, Route route,
                                  TensorCache* cache = nullptr, int jobs = 0);

/// Relative Frobenius gap ||B_hat - B|| / ||B||.
double relative_gap(const Mat2& b_hat, const Mat2& b);

}  // namespace homog2s::cell
