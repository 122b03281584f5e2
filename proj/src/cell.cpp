#include "homog2s/cell.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>

#include "homog2s/error.hpp"
#include "homog2s/parallel.hpp"

namespace homog2s::cell {

std::string to_string(Route route) { return route == Route::Transformed ? "transformed" : "deformed"; }

MacroPoint macro_point(const CellProblem& problem, Vec2 x) { return {x, problem.porosity(x)}; }

fem::QuadMesh reference_cell_mesh(const ReferenceCell& cell, int resolution) {
  cell.check_alignment(resolution);
  fem::QuadMesh mesh = fem::QuadMesh::structured({0.0, 0.0}, resolution, resolution, 1.0 / resolution);
  if (cell.has_hole()) mesh.deactivate_if([&](Vec2 lo, Vec2 hi) { return cell.box_in_hole(lo, hi); });
  return mesh;
}

namespace {

// Coefficient of the cell problem at a quadrature point, together with the weight
// used for the mean-zero normalization.
struct CellCoefficient {
  Mat2 D;
  double weight = 1.0;
};

using CoefficientAt = std::function<CellCoefficient(const fem::QuadPoint&)>;

double vector_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

CellCorrectors solve_correctors(fem::QuadMesh mesh, Route route, const CoefficientAt& coeff, int jobs) {
  CellCorrectors out;
  out.route = route;
  out.dofs = fem::DofMap::build(mesh, true, true);
  for (int j = 0; j < 2; ++j) {
    const Vec2 ej = j == 0 ? Vec2{1.0, 0.0} : Vec2{0.0, 1.0};
    fem::SparseSystem sys = fem::assemble(
        mesh, out.dofs,
        [&](const fem::QuadPoint& q) {
          const CellCoefficient c = coeff(q);
          fem::PointData pd;
          pd.coefficient = c.D;
          pd.flux = Vec2{-(c.D.a * ej.x + c.D.b * ej.y), -(c.D.c * ej.x + c.D.d * ej.y)};
          pd.mean_weight = c.weight;
          return pd;
        },
        jobs);
    sys.mean_zero = true;
    const fem::SolveResult r = fem::solve_cg(sys);
    out.solver[j] = r.report;
    std::vector<double> kw;
    sys.matrix.multiply(r.x, kw);
    for (std::size_t i = 0; i < kw.size(); ++i) kw[i] -= sys.rhs[i];
    const double bn = vector_norm(sys.rhs);
    out.residual = std::max(out.residual, bn > 0.0 ? vector_norm(kw) / bn : vector_norm(kw));
    out.w[j] = out.dofs.to_vertex(r.x);
  }
  out.mesh = std::move(mesh);
  return out;
}

struct TensorIntegrals {
  Mat2 B;
  double measure = 0.0;
  double energy_gap = 0.0;
};

TensorIntegrals integrate_tensor(const CellCorrectors& c, const CoefficientAt& coeff) {
  TensorIntegrals t;
  double b[2][2] = {{0, 0}, {0, 0}};
  double energy[2] = {0, 0};
  std::vector<fem::QuadPoint> qps;
  for (int e = 0; e < c.mesh.num_elements(); ++e) {
    if (!c.mesh.element_active(e)) continue;
    const auto vids = c.mesh.element_vertices(e);
    fem::element_quadrature(c.mesh, e, fem::gauss2x2(), qps);
    for (const fem::QuadPoint& q : qps) {
      const CellCoefficient cc = coeff(q);
      t.measure += q.weight * cc.weight;
      for (int j = 0; j < 2; ++j) {
        Vec2 g = j == 0 ? Vec2{1.0, 0.0} : Vec2{0.0, 1.0};
        for (int a = 0; a < 4; ++a) g += c.w[j][vids[a]] * q.grad[a];
        const Vec2 flux{cc.D.a * g.x + cc.D.b * g.y, cc.D.c * g.x + cc.D.d * g.y};
        b[0][j] += q.weight * flux.x;
        b[1][j] += q.weight * flux.y;
        energy[j] += q.weight * dot(flux, g);
      }
    }
  }
  t.B = Mat2{b[0][0], b[0][1], b[1][0], b[1][1]};
  t.energy_gap = std::max(std::abs(t.B.a - energy[0]), std::abs(t.B.d - energy[1]));
  return t;
}

CoefficientAt transformed_coefficient(const CellProblem& p, const MacroPoint& pt) {
  const bool hole = p.transform.cell().has_hole();
  if (hole) p.transform.require_admissible(pt.theta);
  return [&p, pt, hole](const fem::QuadPoint& q) {
    if (!hole) return CellCoefficient{p.coefficient(pt.x, q.point), 1.0};
    const CellJacobian jac = p.transform.jacobian(pt.theta, q.point);
    const Mat2 a_hat = p.coefficient(pt.x, p.transform.map(pt.theta, q.point));
    return CellCoefficient{pull_back(a_hat, jac.matrix, jac.det), jac.det};
  };
}

CoefficientAt deformed_coefficient(const CellProblem& p, const MacroPoint& pt) {
  return [&p, pt](const fem::QuadPoint& q) { return CellCoefficient{p.coefficient(pt.x, q.point), 1.0}; };
}

fem::QuadMesh deformed_mesh(const CellProblem& p, const MacroPoint& pt) {
  fem::QuadMesh mesh = reference_cell_mesh(p.transform.cell(), p.resolution);
  if (p.transform.cell().has_hole()) {
    p.transform.require_admissible(pt.theta);
    mesh.map_vertices([&](Vec2 y) { return p.transform.map(pt.theta, y); });
    mesh.check_orientation();
  }
  return mesh;
}

}  // namespace

CellCorrectors solve_cell_transformed(const CellProblem& p, const MacroPoint& pt) {
  return solve_correctors(reference_cell_mesh(p.transform.cell(), p.resolution), Route::Transformed,
                          transformed_coefficient(p, pt), p.jobs);
}

CellCorrectors solve_cell_deformed(const CellProblem& p, const MacroPoint& pt) {
  return solve_correctors(deformed_mesh(p, pt), Route::Deformed, deformed_coefficient(p, pt), p.jobs);
}

EffectiveTensor effective_tensor_transformed(const CellProblem& p, const MacroPoint& pt) {
  const CoefficientAt coeff = transformed_coefficient(p, pt);
  const CellCorrectors c = solve_correctors(reference_cell_mesh(p.transform.cell(), p.resolution),
                                            Route::Transformed, coeff, p.jobs);
  const TensorIntegrals t = integrate_tensor(c, coeff);
  return {Route::Transformed, pt, t.B, t.measure, t.energy_gap, c.residual};
}

EffectiveTensor effective_tensor_deformed(const CellProblem& p, const MacroPoint& pt) {
  const CoefficientAt coeff = deformed_coefficient(p, pt);
  const CellCorrectors c = solve_correctors(deformed_mesh(p, pt), Route::Deformed, coeff, p.jobs);
  const TensorIntegrals t = integrate_tensor(c, coeff);
  return {Route::Deformed, pt, t.B, t.measure, t.energy_gap, c.residual};
}

EffectiveTensor effective_tensor(const CellProblem& p, const MacroPoint& pt, Route route) {
  return route == Route::Transformed ? effective_tensor_transformed(p, pt) : effective_tensor_deformed(p, pt);
}

double relative_gap(const Mat2& b_hat, const Mat2& b) {
  const double denom = frobenius(b);
  const double num = frobenius(b_hat - b);
  return denom > 0.0 ? num / denom : num;
}

// ---------------------------------------------------------------------------
// Cache

TensorCache::TensorCache(std::string key, double bin_width) : key_(std::move(key)), bin_width_(bin_width) {
  if (!(bin_width > 0.0)) throw Error(ErrorKind::ParameterOutOfRange, "cache bin width must be positive");
}

std::size_t TensorCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::optional<TensorSample> TensorCache::find(long bin) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(bin);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

TensorSample TensorCache::node(long bin, const Compute& compute) {
  if (auto hit = find(bin)) {
    ++hits_;
    return *hit;
  }
  ++misses_;
  const TensorSample s = compute(static_cast<double>(bin) * bin_width_);
  std::unique_lock lock(mutex_);
  // The first insert wins; compute() is deterministic so both candidates agree.
  return entries_.emplace(bin, s).first->second;
}

TensorSample TensorCache::lookup(double theta, const Compute& compute) {
  const double s = theta / bin_width_;
  const long b0 = static_cast<long>(std::floor(s + 1e-9));
  const double t = std::max(0.0, s - static_cast<double>(b0));
  try {
    const TensorSample lo = node(b0, compute);
    if (t < 1e-9) return lo;
    const TensorSample hi = node(b0 + 1, compute);
    return {(1.0 - t) * lo.B + t * hi.B, (1.0 - t) * lo.porosity + t * hi.porosity};
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::ParameterOutOfRange && e.kind() != ErrorKind::DegenerateJacobian) throw;
    return compute(theta);
  }
}

void TensorCache::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write tensor cache " + path);
  std::shared_lock lock(mutex_);
  out << "# version=1 key=" << key_ << "\n";
  out << "theta,B11,B12,B21,B22,porosity\n";
  out << std::setprecision(17);
  for (const auto& [bin, s] : entries_) {
    out << static_cast<double>(bin) * bin_width_ << ',' << s.B.a << ',' << s.B.b << ',' << s.B.c << ',' << s.B.d
        << ',' << s.porosity << '\n';
  }
}

std::size_t TensorCache::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) return 0;
  std::string line;
  if (!std::getline(in, line) || line != "# version=1 key=" + key_) return 0;
  std::getline(in, line);  // header
  std::size_t n = 0;
  std::unique_lock lock(mutex_);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    double v[6];
    char comma;
    ss >> v[0];
    for (int i = 1; i < 6; ++i) ss >> comma >> v[i];
    if (!ss) throw Error(ErrorKind::Io, "malformed tensor cache row in " + path);
    entries_[std::lround(v[0] / bin_width_)] = {Mat2{v[1], v[2], v[3], v[4]}, v[5]};
    ++n;
  }
  return n;
}

std::string cache_key(const CellProblem& p, Route route) {
  if (p.coefficient.depends_on_x()) return {};
  const ReferenceCell& c = p.transform.cell();
  std::ostringstream os;
  os << std::setprecision(12) << to_string(route) << ";hole=" << c.hole_halfwidth_ref << ";blend=" << c.blend_radius
     << ";cJ=" << p.transform.bounds().c_J << ";C=" << p.transform.bounds().C << ";res=" << p.resolution
     << ";A=" << p.coefficient.describe();
  return os.str();
}

EffectiveTensorField tensor_field(const CellProblem& p, const std::vector<Vec2>& points, Route route,
                                  TensorCache* cache, int jobs) {
  EffectiveTensorField f;
  f.route = route;
  f.points = points;
  f.tensors.resize(points.size());
  f.porosity.resize(points.size());
  const std::string key = cache_key(p, route);
  f.cached = cache != nullptr && !key.empty();
  if (f.cached && cache->key() != key) throw Error(ErrorKind::Config, "tensor cache key mismatch");
  CellProblem local = p;
  local.jobs = 1;
  parallel_for(
      points.size(),
      [&](std::size_t i) {
        const Vec2 x = points[i];
        if (f.cached) {
          const TensorSample s = cache->lookup(p.porosity(x), [&](double theta) {
            const EffectiveTensor t = effective_tensor(local, {x, theta}, route);
            return TensorSample{t.B, t.theta};
          });
          f.tensors[i] = s.B;
          f.porosity[i] = s.porosity;
        } else {
          const EffectiveTensor t = effective_tensor(local, macro_point(local, x), route);
          f.tensors[i] = t.B;
          f.porosity[i] = t.theta;
        }
      },
      jobs);
  return f;
}

}  // namespace homog2s::cell
