#include "homog2s/fem.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "homog2s/error.hpp"
#include "homog2s/parallel.hpp"

namespace homog2s::fem {

namespace {

GaussRule tensor_rule(std::initializer_list<double> pts, std::initializer_list<double> wts) {
  GaussRule rule;
  const std::vector<double> p(pts), w(wts);
  for (std::size_t j = 0; j < p.size(); ++j) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      rule.points.push_back({p[i], p[j]});
      rule.weights.push_back(w[i] * w[j]);
    }
  }
  return rule;
}

std::array<double, 4> shape_values(Vec2 xi) {
  return {(1.0 - xi.x) * (1.0 - xi.y), xi.x * (1.0 - xi.y), xi.x * xi.y, (1.0 - xi.x) * xi.y};
}

std::array<Vec2, 4> shape_local_grads(Vec2 xi) {
  return {Vec2{-(1.0 - xi.y), -(1.0 - xi.x)}, Vec2{1.0 - xi.y, -xi.x}, Vec2{xi.y, xi.x}, Vec2{-xi.y, 1.0 - xi.x}};
}

bool finite(const Mat2& m) {
  return std::isfinite(m.a) && std::isfinite(m.b) && std::isfinite(m.c) && std::isfinite(m.d);
}

double dotv(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

const GaussRule& gauss2x2() {
  static const GaussRule rule = [] {
    const double g = 0.5 / std::sqrt(3.0);
    return tensor_rule({0.5 - g, 0.5 + g}, {0.5, 0.5});
  }();
  return rule;
}

const GaussRule& gauss3x3() {
  static const GaussRule rule = [] {
    const double g = 0.5 * std::sqrt(0.6);
    return tensor_rule({0.5 - g, 0.5, 0.5 + g}, {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0});
  }();
  return rule;
}

// ---------------------------------------------------------------------------
// QuadMesh

QuadMesh QuadMesh::structured(Vec2 origin, int nx, int ny, double h) {
  if (nx < 1 || ny < 1 || !(h > 0.0)) throw Error(ErrorKind::ParameterOutOfRange, "empty mesh");
  QuadMesh m;
  m.nx_ = nx;
  m.ny_ = ny;
  m.h_ = h;
  m.origin_ = origin;
  m.vertices_.resize(static_cast<std::size_t>(nx + 1) * (ny + 1));
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) m.vertices_[m.vertex_index(i, j)] = origin + Vec2{i * h, j * h};
  }
  m.active_.assign(static_cast<std::size_t>(nx) * ny, 1);
  return m;
}

std::array<int, 4> QuadMesh::element_vertices(int e) const {
  const auto [i, j] = element_ij(e);
  return {vertex_index(i, j), vertex_index(i + 1, j), vertex_index(i + 1, j + 1), vertex_index(i, j + 1)};
}

Vec2 QuadMesh::reference_vertex(int v) const {
  const auto [i, j] = vertex_ij(v);
  return origin_ + Vec2{i * h_, j * h_};
}

Vec2 QuadMesh::reference_point(int e, Vec2 local) const {
  const auto [i, j] = element_ij(e);
  return origin_ + Vec2{(i + local.x) * h_, (j + local.y) * h_};
}

std::vector<std::uint8_t> QuadMesh::vertex_mask() const {
  std::vector<std::uint8_t> mask(vertices_.size(), 0);
  for (int e = 0; e < num_elements(); ++e) {
    if (!active_[e]) continue;
    for (int v : element_vertices(e)) mask[v] = 1;
  }
  return mask;
}

int QuadMesh::num_active_elements() const {
  return static_cast<int>(std::count(active_.begin(), active_.end(), std::uint8_t{1}));
}

void QuadMesh::deactivate_if(const std::function<bool(Vec2, Vec2)>& pred) {
  for (int e = 0; e < num_elements(); ++e) {
    const auto [i, j] = element_ij(e);
    const Vec2 lo = origin_ + Vec2{i * h_, j * h_};
    const Vec2 hi = origin_ + Vec2{(i + 1) * h_, (j + 1) * h_};
    if (pred(lo, hi)) active_[e] = 0;
  }
}

void QuadMesh::set_active_mask(std::vector<std::uint8_t> mask) {
  if (mask.size() != active_.size()) throw Error(ErrorKind::ResolutionMismatch, "active mask size");
  active_ = std::move(mask);
}

void QuadMesh::map_vertices(const std::function<Vec2(Vec2)>& map) {
  const auto mask = vertex_mask();
  for (int v = 0; v < num_vertices(); ++v) {
    if (mask[v]) vertices_[v] = map(reference_vertex(v));
  }
  mapped_ = true;
}

void QuadMesh::check_orientation() const {
  std::vector<QuadPoint> qps;
  for (int e = 0; e < num_elements(); ++e) {
    if (!active_[e]) continue;
    element_quadrature(*this, e, gauss2x2(), qps);
  }
}

void element_quadrature(const QuadMesh& mesh, int e, const GaussRule& rule, std::vector<QuadPoint>& out) {
  out.resize(rule.points.size());
  const auto vids = mesh.element_vertices(e);
  std::array<Vec2, 4> xv;
  for (int a = 0; a < 4; ++a) xv[a] = mesh.vertex(vids[a]);
  for (std::size_t q = 0; q < rule.points.size(); ++q) {
    const Vec2 xi = rule.points[q];
    QuadPoint& qp = out[q];
    qp.element = e;
    qp.local = xi;
    qp.reference = mesh.reference_point(e, xi);
    qp.shape = shape_values(xi);
    const auto lg = shape_local_grads(xi);
    Vec2 x{0.0, 0.0};
    Mat2 f{0.0, 0.0, 0.0, 0.0};
    for (int a = 0; a < 4; ++a) {
      x += qp.shape[a] * xv[a];
      f = f + Mat2::outer(xv[a], lg[a]);
    }
    qp.point = x;
    qp.det = f.det();
    if (!(qp.det > 0.0)) {
      std::ostringstream os;
      os << "element " << e << " has det F = " << qp.det;
      throw Error(ErrorKind::InvertedElement, os.str());
    }
    const Mat2 finv_t = f.inverse().transpose();
    for (int a = 0; a < 4; ++a) qp.grad[a] = finv_t * lg[a];
    qp.weight = rule.weights[q] * qp.det;
  }
}

// ---------------------------------------------------------------------------
// DofMap

DofMap DofMap::build(const QuadMesh& mesh, bool periodic, bool mean_zero) {
  DofMap map;
  map.periodic = periodic;
  map.mean_zero = mean_zero;
  const auto mask = mesh.vertex_mask();
  const int nx = mesh.nx();
  const int ny = mesh.ny();
  // Representative vertex of each periodic class: fold i = nx onto 0 and j = ny onto 0.
  std::vector<int> rep(mesh.num_vertices());
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    auto [i, j] = mesh.vertex_ij(v);
    if (periodic) {
      if (i == nx) i = 0;
      if (j == ny) j = 0;
    }
    rep[v] = mesh.vertex_index(i, j);
  }
  if (periodic) {
    for (int v = 0; v < mesh.num_vertices(); ++v) {
      if (mask[v] != mask[rep[v]]) {
        throw Error(ErrorKind::MisalignedGrid, "periodic faces have mismatched active vertices");
      }
    }
  }
  map.vertex_to_dof.assign(mesh.num_vertices(), -1);
  int next = 0;
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (!mask[v] || rep[v] != v) continue;
    map.vertex_to_dof[v] = next++;
  }
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (mask[v]) map.vertex_to_dof[v] = map.vertex_to_dof[rep[v]];
  }
  map.num_dofs = next;
  return map;
}

std::vector<double> DofMap::to_vertex(const std::vector<double>& dofs) const {
  std::vector<double> out(vertex_to_dof.size(), 0.0);
  for (std::size_t v = 0; v < vertex_to_dof.size(); ++v) {
    if (vertex_to_dof[v] >= 0) out[v] = dofs[vertex_to_dof[v]];
  }
  return out;
}

std::vector<double> DofMap::to_dofs(const std::vector<double>& vertex_values) const {
  std::vector<double> out(num_dofs, 0.0);
  for (std::size_t v = 0; v < vertex_to_dof.size(); ++v) {
    if (vertex_to_dof[v] >= 0) out[vertex_to_dof[v]] = vertex_values[v];
  }
  return out;
}

// ---------------------------------------------------------------------------
// CsrMatrix

void CsrMatrix::multiply(const std::vector<double>& x, std::vector<double>& y) const {
  y.resize(n);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += vals[k] * x[cols[k]];
    y[i] = s;
  }
}

std::vector<double> CsrMatrix::diagonal() const {
  std::vector<double> d(n, 0.0);
  for (int i = 0; i < n; ++i) d[i] = at(i, i);
  return d;
}

double CsrMatrix::at(int i, int j) const {
  const auto begin = cols.begin() + row_ptr[i];
  const auto end = cols.begin() + row_ptr[i + 1];
  const auto it = std::lower_bound(begin, end, j);
  if (it == end || *it != j) return 0.0;
  return vals[static_cast<std::size_t>(it - cols.begin())];
}

double CsrMatrix::max_abs_row_sum() const {
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += vals[k];
    worst = std::max(worst, std::abs(s));
  }
  return worst;
}

double CsrMatrix::symmetry_error() const {
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
      worst = std::max(worst, std::abs(vals[k] - at(cols[k], i)));
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Assembly

SparseSystem assemble(const QuadMesh& mesh, const DofMap& dofs, const PointEvaluator& eval, int jobs) {
  const int n = dofs.num_dofs;
  const int ne = mesh.num_elements();

  // Sparsity pattern.
  std::vector<std::vector<int>> rows(n);
  for (int e = 0; e < ne; ++e) {
    if (!mesh.element_active(e)) continue;
    const auto vids = mesh.element_vertices(e);
    for (int a : vids) {
      for (int b : vids) rows[dofs.vertex_to_dof[a]].push_back(dofs.vertex_to_dof[b]);
    }
  }
  SparseSystem sys;
  CsrMatrix& mat = sys.matrix;
  mat.n = n;
  mat.row_ptr.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) {
    auto& r = rows[i];
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    mat.row_ptr[i + 1] = mat.row_ptr[i] + static_cast<int>(r.size());
  }
  mat.cols.reserve(mat.row_ptr[n]);
  for (auto& r : rows) {
    mat.cols.insert(mat.cols.end(), r.begin(), r.end());
    std::vector<int>().swap(r);
  }
  mat.vals.assign(mat.cols.size(), 0.0);
  sys.rhs.assign(n, 0.0);
  sys.mean_weights.assign(n, 0.0);
  sys.mean_zero = dofs.mean_zero;

  struct ElementBlock {
    std::array<double, 16> k{};
    std::array<double, 4> f{};
    std::array<double, 4> w{};
  };

  // Element matrices are computed in parallel blocks and scattered in element order.
  constexpr int kBlock = 2048;
  std::vector<ElementBlock> blocks(kBlock);
  for (int start = 0; start < ne; start += kBlock) {
    const int count = std::min(kBlock, ne - start);
    parallel_for(
        static_cast<std::size_t>(count),
        [&](std::size_t idx) {
          const int e = start + static_cast<int>(idx);
          ElementBlock& blk = blocks[idx];
          blk = ElementBlock{};
          if (!mesh.element_active(e)) return;
          thread_local std::vector<QuadPoint> qps;
          element_quadrature(mesh, e, gauss2x2(), qps);
          for (const QuadPoint& qp : qps) {
            const PointData pd = eval(qp);
            if (!finite(pd.coefficient) || !std::isfinite(pd.reaction) || !std::isfinite(pd.load) ||
                !std::isfinite(pd.flux.x) || !std::isfinite(pd.flux.y)) {
              std::ostringstream os;
              os << "non-finite integrand at element " << e;
              throw Error(ErrorKind::NonFiniteCoefficient, os.str());
            }
            if (pd.reaction < 0.0) {
              throw Error(ErrorKind::NegativeReaction, "negative reaction weight");
            }
            for (int a = 0; a < 4; ++a) {
              const Vec2 agrad = pd.coefficient.transpose() * qp.grad[a];
              for (int b = 0; b < 4; ++b) {
                blk.k[a * 4 + b] +=
                    qp.weight * (dot(agrad, qp.grad[b]) + pd.reaction * qp.shape[a] * qp.shape[b]);
              }
              blk.f[a] += qp.weight * (pd.load * qp.shape[a] + dot(pd.flux, qp.grad[a]));
              blk.w[a] += qp.weight * pd.mean_weight * qp.shape[a];
            }
          }
        },
        jobs);
    for (int idx = 0; idx < count; ++idx) {
      const int e = start + idx;
      if (!mesh.element_active(e)) continue;
      const auto vids = mesh.element_vertices(e);
      const ElementBlock& blk = blocks[idx];
      for (int a = 0; a < 4; ++a) {
        const int i = dofs.vertex_to_dof[vids[a]];
        const auto rb = mat.cols.begin() + mat.row_ptr[i];
        const auto re = mat.cols.begin() + mat.row_ptr[i + 1];
        for (int b = 0; b < 4; ++b) {
          const int j = dofs.vertex_to_dof[vids[b]];
          const auto it = std::lower_bound(rb, re, j);
          mat.vals[static_cast<std::size_t>(it - mat.cols.begin())] += blk.k[a * 4 + b];
        }
        sys.rhs[i] += blk.f[a];
        sys.mean_weights[i] += blk.w[a];
      }
    }
  }
  return sys;
}

// ---------------------------------------------------------------------------
// Solver

SolveResult solve_cg(const SparseSystem& sys, bool jacobi) {
  const CsrMatrix& a = sys.matrix;
  const int n = a.n;
  SolveResult res;
  res.x.assign(n, 0.0);
  if (n == 0) {
    res.report.converged = true;
    return res;
  }
  const bool constrained = sys.mean_zero;
  const double wsum = constrained ? std::accumulate(sys.mean_weights.begin(), sys.mean_weights.end(), 0.0) : 0.0;

  auto project_range = [&](std::vector<double>& v) {
    // The kernel of the constrained operator is the constants; keep v orthogonal to it.
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
    for (double& x : v) x -= m;
  };
  auto project_mean = [&](std::vector<double>& v) {
    const double m = dotv(sys.mean_weights, v) / wsum;
    for (double& x : v) x -= m;
  };

  std::vector<double> r = sys.rhs;
  if (constrained) project_range(r);
  const double bnorm = std::sqrt(dotv(r, r));
  if (bnorm == 0.0) {
    res.report.converged = true;
    return res;
  }
  std::vector<double> inv_diag(n, 1.0);
  if (jacobi) {
    const auto d = a.diagonal();
    for (int i = 0; i < n; ++i) inv_diag[i] = d[i] > 0.0 ? 1.0 / d[i] : 1.0;
  }
  std::vector<double> z(n), p(n), ap(n);
  for (int i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
  p = z;
  double rz = dotv(r, z);
  const int max_it = sys.max_iterations > 0 ? sys.max_iterations : std::max(1000, 10 * n);
  double rnorm = bnorm;
  int it = 0;
  while (rnorm > sys.tol * bnorm) {
    if (it >= max_it) {
      std::ostringstream os;
      os << "CG stopped after " << it << " iterations at relative residual " << rnorm / bnorm;
      throw Error(ErrorKind::MaxIterationsExceeded, os.str());
    }
    a.multiply(p, ap);
    const double pap = dotv(p, ap);
    const double alpha = rz / pap;
    for (int i = 0; i < n; ++i) {
      res.x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    if (constrained) {
      project_range(r);
      project_mean(res.x);
    }
    ++it;
    rnorm = std::sqrt(dotv(r, r));
    for (int i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    const double rz_new = dotv(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  if (constrained) project_mean(res.x);
  res.report = {it, rnorm / bnorm, true};
  return res;
}

// ---------------------------------------------------------------------------
// Norms and evaluation

double norm(const QuadMesh& mesh, const std::vector<double>& field, NormKind kind) {
  std::vector<QuadPoint> qps;
  double acc = 0.0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    if (!mesh.element_active(e)) continue;
    const auto vids = mesh.element_vertices(e);
    if (kind == NormKind::LInf) {
      for (int v : vids) acc = std::max(acc, std::abs(field[v]));
      continue;
    }
    element_quadrature(mesh, e, gauss3x3(), qps);
    for (const QuadPoint& qp : qps) {
      if (kind == NormKind::L2) {
        double u = 0.0;
        for (int a = 0; a < 4; ++a) u += qp.shape[a] * field[vids[a]];
        acc += qp.weight * u * u;
      } else {
        Vec2 g{0.0, 0.0};
        for (int a = 0; a < 4; ++a) g += field[vids[a]] * qp.grad[a];
        acc += qp.weight * dot(g, g);
      }
    }
  }
  return kind == NormKind::LInf ? acc : std::sqrt(acc);
}

double norm(const QuadMesh& mesh, const std::function<double(Vec2)>& field, NormKind kind) {
  if (kind == NormKind::H1Semi) throw Error(ErrorKind::ParameterOutOfRange, "analytic H1 seminorm needs a gradient");
  std::vector<QuadPoint> qps;
  double acc = 0.0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    if (!mesh.element_active(e)) continue;
    element_quadrature(mesh, e, gauss3x3(), qps);
    for (const QuadPoint& qp : qps) {
      const double u = field(qp.point);
      acc = kind == NormKind::L2 ? acc + qp.weight * u * u : std::max(acc, std::abs(u));
    }
  }
  return kind == NormKind::LInf ? acc : std::sqrt(acc);
}

double l2_error(const QuadMesh& mesh, const std::vector<double>& field, const std::function<double(Vec2)>& exact) {
  std::vector<QuadPoint> qps;
  double acc = 0.0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    if (!mesh.element_active(e)) continue;
    const auto vids = mesh.element_vertices(e);
    element_quadrature(mesh, e, gauss3x3(), qps);
    for (const QuadPoint& qp : qps) {
      double u = 0.0;
      for (int a = 0; a < 4; ++a) u += qp.shape[a] * field[vids[a]];
      const double d = u - exact(qp.point);
      acc += qp.weight * d * d;
    }
  }
  return std::sqrt(acc);
}

double h1_error(const QuadMesh& mesh, const std::vector<double>& field,
                const std::function<Vec2(Vec2)>& exact_grad) {
  std::vector<QuadPoint> qps;
  double acc = 0.0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    if (!mesh.element_active(e)) continue;
    const auto vids = mesh.element_vertices(e);
    element_quadrature(mesh, e, gauss3x3(), qps);
    for (const QuadPoint& qp : qps) {
      Vec2 g{0.0, 0.0};
      for (int a = 0; a < 4; ++a) g += field[vids[a]] * qp.grad[a];
      const Vec2 d = g - exact_grad(qp.point);
      acc += qp.weight * dot(d, d);
    }
  }
  return std::sqrt(acc);
}

double integrate(const QuadMesh& mesh, const std::vector<double>& field) {
  std::vector<QuadPoint> qps;
  double acc = 0.0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    if (!mesh.element_active(e)) continue;
    const auto vids = mesh.element_vertices(e);
    element_quadrature(mesh, e, gauss2x2(), qps);
    for (const QuadPoint& qp : qps) {
      double u = 0.0;
      for (int a = 0; a < 4; ++a) u += qp.shape[a] * field[vids[a]];
      acc += qp.weight * u;
    }
  }
  return acc;
}

double measure(const QuadMesh& mesh) {
  std::vector<QuadPoint> qps;
  double acc = 0.0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    if (!mesh.element_active(e)) continue;
    element_quadrature(mesh, e, gauss2x2(), qps);
    for (const QuadPoint& qp : qps) acc += qp.weight;
  }
  return acc;
}

double interpolate(const QuadMesh& mesh, const std::vector<double>& field, int e, Vec2 local) {
  const auto vids = mesh.element_vertices(e);
  const auto n = shape_values(local);
  double u = 0.0;
  for (int a = 0; a < 4; ++a) u += n[a] * field[vids[a]];
  return u;
}

Vec2 interpolate_gradient(const QuadMesh& mesh, const std::vector<double>& field, int e, Vec2 local) {
  GaussRule one;
  one.points = {local};
  one.weights = {1.0};
  std::vector<QuadPoint> qps;
  element_quadrature(mesh, e, one, qps);
  const auto vids = mesh.element_vertices(e);
  Vec2 g{0.0, 0.0};
  for (int a = 0; a < 4; ++a) g += field[vids[a]] * qps[0].grad[a];
  return g;
}

namespace {
std::pair<int, Vec2> locate(const QuadMesh& mesh, Vec2 p) {
  const Vec2 s = (p - mesh.origin()) * (1.0 / mesh.h());
  int i = std::clamp(static_cast<int>(std::floor(s.x)), 0, mesh.nx() - 1);
  int j = std::clamp(static_cast<int>(std::floor(s.y)), 0, mesh.ny() - 1);
  return {j * mesh.nx() + i, Vec2{s.x - i, s.y - j}};
}
}  // namespace

double evaluate_at(const QuadMesh& mesh, const std::vector<double>& field, Vec2 reference_point) {
  const auto [e, local] = locate(mesh, reference_point);
  return interpolate(mesh, field, e, local);
}

Vec2 gradient_at(const QuadMesh& mesh, const std::vector<double>& field, Vec2 reference_point) {
  const auto [e, local] = locate(mesh, reference_point);
  return interpolate_gradient(mesh, field, e, local);
}

}  // namespace homog2s::fem
