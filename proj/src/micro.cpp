#include "homog2s/micro.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "homog2s/error.hpp"
#include "homog2s/parallel.hpp"

namespace homog2s::micro {

namespace {

void validate(const MicroProblem& p) {
  if (p.l != 0 && p.l != 2) throw Error(ErrorKind::ParameterOutOfRange, "flux scaling l must be 0 or 2");
  if (p.per_cell < 1) throw Error(ErrorKind::ParameterOutOfRange, "per_cell must be positive");
  p.transform.cell().check_alignment(p.per_cell);
  if (p.transform.cell().has_hole()) {
    auto [lo, hi] = p.porosity.range(1.0, 1.0);
    p.transform.require_admissible(lo);
    p.transform.require_admissible(hi);
  }
}

// Local cell coordinates of a quadrature point, computed from the element index so
// that points on cell faces are never assigned to the neighbouring cell.
struct CellLocation {
  std::array<int, 2> k;
  Vec2 y;
};

CellLocation locate(const fem::QuadMesh& mesh, const fem::QuadPoint& q, int m) {
  const auto ij = mesh.element_ij(q.element);
  return {{ij[0] / m, ij[1] / m},
          Vec2{((ij[0] % m) + q.local.x) / m, ((ij[1] % m) + q.local.y) / m}};
}

MicroNorms compute_norms(const fem::QuadMesh& mesh, const std::vector<double>& u, int l, double eps) {
  MicroNorms n;
  n.l2 = fem::norm(mesh, u, fem::NormKind::L2);
  n.gradient_l2 = fem::norm(mesh, u, fem::NormKind::H1Semi);
  n.estimate = n.l2 + std::pow(eps, 0.5 * l) * n.gradient_l2;
  return n;
}

}  // namespace

fem::QuadMesh reference_mesh(const MicroProblem& p) {
  validate(p);
  const EpsTransform eps(p.epsilon, p.transform, p.porosity);
  const int cells = eps.cells_per_unit();
  const int n = cells * p.per_cell;
  fem::QuadMesh mesh = fem::QuadMesh::structured({0.0, 0.0}, n, n, 1.0 / n);
  const ReferenceCell& cell = p.transform.cell();
  if (cell.has_hole()) {
    const int m = p.per_cell;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(n) * n, 1);
    for (int e = 0; e < n * n; ++e) {
      const auto ij = mesh.element_ij(e);
      const Vec2 lo{double(ij[0] % m) / m, double(ij[1] % m) / m};
      if (cell.box_in_hole(lo, lo + Vec2{1.0 / m, 1.0 / m})) mask[e] = 0;
    }
    mesh.set_active_mask(std::move(mask));
  }
  return mesh;
}

MicroDiscretization discretize_substitute(const MicroProblem& p) {
  MicroDiscretization out{reference_mesh(p), {}, {}, {}};
  out.dofs = fem::DofMap::build(out.mesh);
  const EpsTransform eps(p.epsilon, p.transform, p.porosity);
  const double scale = std::pow(p.epsilon, p.l);
  const int m = p.per_cell;
  const fem::QuadMesh& mesh = out.mesh;

  // Per-element minimum eigenvalue and sharp bound, reduced after assembly.
  std::vector<double> min_eig(mesh.num_elements(), 1e300);
  std::vector<double> sharp(mesh.num_elements(), 1e300);
  const double alpha = p.coefficient.coercivity();

  out.system = fem::assemble(
      mesh, out.dofs,
      [&](const fem::QuadPoint& q) {
        const CellLocation loc = locate(mesh, q, m);
        const CellJacobian jac = eps.jacobian_in_cell(loc.k, loc.y);
        const Vec2 x = eps.map_in_cell(loc.k, loc.y);
        const double theta = eps.cell_porosity(loc.k);
        const Vec2 y_def = p.transform.cell().has_hole() ? p.transform.map(theta, loc.y) : loc.y;
        const Mat2 a_hat = p.coefficient(x, y_def);
        const Mat2 d = pull_back(a_hat, jac.matrix, jac.det);
        const double lam = sym_eigenvalues(d)[0];
        const double psi = spectral_norm(jac.matrix);
        min_eig[q.element] = std::min(min_eig[q.element], lam);
        sharp[q.element] = std::min(sharp[q.element], alpha * jac.det / (psi * psi));
        fem::PointData pd;
        pd.coefficient = scale * d;
        pd.reaction = jac.det;
        pd.load = jac.det * p.source(x);
        pd.mean_weight = jac.det;
        return pd;
      },
      p.jobs);

  CoercivitySample& c = out.coercivity;
  c.min_eigenvalue = 1e300;
  c.sharp_bound = 1e300;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    if (!mesh.element_active(e)) continue;
    c.min_eigenvalue = std::min(c.min_eigenvalue, min_eig[e]);
    c.sharp_bound = std::min(c.sharp_bound, sharp[e]);
  }
  const double C = p.transform.bounds().C;
  c.bound = alpha * p.transform.bounds().c_J / (C * C);
  if (!(c.min_eigenvalue >= c.bound)) {
    std::ostringstream os;
    os << "transformed coefficient eigenvalue " << c.min_eigenvalue << " below " << c.bound;
    throw Error(ErrorKind::CoercivityViolation, os.str());
  }
  return out;
}

MicroDiscretization discretize_fine_mapped(const MicroProblem& p) {
  MicroDiscretization out{reference_mesh(p), {}, {}, {}};
  const EpsTransform eps(p.epsilon, p.transform, p.porosity);
  if (p.transform.cell().has_hole()) {
    const int m = p.per_cell;
    const int n = out.mesh.nx();
    std::vector<Vec2> mapped(out.mesh.num_vertices());
    for (int v = 0; v < out.mesh.num_vertices(); ++v) {
      const auto ij = out.mesh.vertex_ij(v);
      // vertices on the far faces belong to the last cell with local coordinate 1
      const int kx = std::min(ij[0] / m, n / m - 1);
      const int ky = std::min(ij[1] / m, n / m - 1);
      mapped[v] = eps.map_in_cell({kx, ky}, Vec2{double(ij[0] - kx * m) / m, double(ij[1] - ky * m) / m});
    }
    out.mesh.map_vertices([&](Vec2 ref) {
      const int i = static_cast<int>(std::lround(ref.x * n));
      const int j = static_cast<int>(std::lround(ref.y * n));
      return mapped[out.mesh.vertex_index(i, j)];
    });
    out.mesh.check_orientation();
  }
  out.dofs = fem::DofMap::build(out.mesh);
  const double inv_eps = 1.0 / p.epsilon;
  const double scale = std::pow(p.epsilon, p.l);
  out.system = fem::assemble(
      out.mesh, out.dofs,
      [&](const fem::QuadPoint& q) {
        fem::PointData pd;
        pd.coefficient = scale * p.coefficient(q.point, q.point * inv_eps);
        pd.reaction = 1.0;
        pd.load = p.source(q.point);
        return pd;
      },
      p.jobs);
  return out;
}

MicroSolution solve_substitute(const MicroProblem& p) {
  MicroDiscretization d = discretize_substitute(p);
  fem::SolveResult r = fem::solve_cg(d.system);
  MicroSolution s;
  s.values = d.dofs.to_vertex(r.x);
  s.mesh = std::move(d.mesh);
  s.norms = compute_norms(s.mesh, s.values, p.l, p.epsilon);
  s.solver = r.report;
  s.coercivity = d.coercivity;
  return s;
}

MicroSolution solve_fine_mapped(const MicroProblem& p) {
  MicroDiscretization d = discretize_fine_mapped(p);
  fem::SolveResult r = fem::solve_cg(d.system);
  MicroSolution s;
  s.values = d.dofs.to_vertex(r.x);
  s.mesh = std::move(d.mesh);
  s.norms = compute_norms(s.mesh, s.values, p.l, p.epsilon);
  s.solver = r.report;
  s.mapped = true;
  return s;
}

EquivalenceReport verify_equivalence(const MicroProblem& problem, const std::vector<int>& per_cell) {
  EquivalenceReport rep;
  for (int m : per_cell) {
    MicroProblem p = problem;
    p.per_cell = m;
    const MicroSolution hat = solve_substitute(p);
    const MicroSolution fine = solve_fine_mapped(p);
    // Vertex i of the mapped mesh is psi_eps(vertex i of the reference mesh), so the
    // vertex vector of u_eps is u_eps o psi_eps at the reference vertices.
    std::vector<double> diff(hat.values.size());
    for (std::size_t v = 0; v < diff.size(); ++v) diff[v] = hat.values[v] - fine.values[v];
    EquivalenceEntry e;
    e.per_cell = m;
    e.absolute_gap = fem::norm(hat.mesh, diff, fem::NormKind::L2);
    e.relative_gap = hat.norms.l2 > 0.0 ? e.absolute_gap / hat.norms.l2 : e.absolute_gap;
    if (!rep.entries.empty() && !(e.relative_gap < rep.entries.back().relative_gap)) rep.decreasing = false;
    rep.entries.push_back(e);
  }
  return rep;
}

UniformEstimateTable uniform_estimate_sweep(const MicroProblem& problem, const std::vector<double>& epsilons,
                                            int jobs) {
  UniformEstimateTable t;
  t.l = problem.l;
  t.rows.resize(epsilons.size());
  parallel_for(
      epsilons.size(),
      [&](std::size_t i) {
        MicroProblem p = problem;
        p.epsilon = epsilons[i];
        p.jobs = 1;
        const MicroSolution s = solve_substitute(p);
        t.rows[i] = {epsilons[i], s.norms, s.solver.iterations};
      },
      jobs);
  if (!t.rows.empty()) {
    const double first = t.rows.front().norms.estimate;
    for (const auto& r : t.rows) {
      const double ratio = first > 0.0 ? r.norms.estimate / first : (r.norms.estimate > 0.0 ? 1e300 : 1.0);
      t.max_ratio = std::max(t.max_ratio, ratio);
    }
    t.bounded = t.max_ratio <= 1.5;
  }
  return t;
}

}  // namespace homog2s::micro
