#include "homog2s/macro.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "homog2s/error.hpp"
#include "homog2s/parallel.hpp"

namespace homog2s::macro {

namespace {

int gauss_index(Vec2 local) { return (local.y > 0.5 ? 2 : 0) + (local.x > 0.5 ? 1 : 0); }

// Value and gradient of a Q1 vertex field on an unmapped structured mesh.
struct Q1Sample {
  double value;
  Vec2 gradient;
};

Q1Sample q1_sample(const fem::QuadMesh& mesh, const std::vector<double>& field, int e, Vec2 s) {
  const auto v = mesh.element_vertices(e);
  const double u00 = field[v[0]], u10 = field[v[1]], u11 = field[v[2]], u01 = field[v[3]];
  const double inv_h = 1.0 / mesh.h();
  Q1Sample out;
  out.value = (1 - s.x) * (1 - s.y) * u00 + s.x * (1 - s.y) * u10 + s.x * s.y * u11 + (1 - s.x) * s.y * u01;
  out.gradient = Vec2{((1 - s.y) * (u10 - u00) + s.y * (u11 - u01)) * inv_h,
                      ((1 - s.x) * (u01 - u00) + s.x * (u11 - u10)) * inv_h};
  return out;
}

}  // namespace

std::vector<Vec2> macro_gauss_points(int resolution) {
  const auto& rule = fem::gauss2x2();
  const double h = 1.0 / resolution;
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(resolution) * resolution * 4);
  for (int j = 0; j < resolution; ++j)
    for (int i = 0; i < resolution; ++i)
      for (const Vec2& s : rule.points) pts.push_back({(i + s.x) * h, (j + s.y) * h});
  return pts;
}

HomogenizedSolution solve_homogenized(const cell::EffectiveTensorField& field, const SourceField& source,
                                      int resolution, int jobs) {
  const std::size_t expected = static_cast<std::size_t>(resolution) * resolution * 4;
  if (field.tensors.size() != expected || field.porosity.size() != expected) {
    std::ostringstream os;
    os << "tensor field has " << field.tensors.size() << " samples, macro mesh needs " << expected;
    throw Error(ErrorKind::ResolutionMismatch, os.str());
  }
  HomogenizedSolution out;
  out.mesh = fem::QuadMesh::structured({0.0, 0.0}, resolution, resolution, 1.0 / resolution);
  out.field = field;
  const fem::DofMap dofs = fem::DofMap::build(out.mesh);
  const fem::SparseSystem sys = fem::assemble(
      out.mesh, dofs,
      [&](const fem::QuadPoint& q) {
        const std::size_t i = static_cast<std::size_t>(q.element) * 4 + gauss_index(q.local);
        fem::PointData pd;
        pd.coefficient = field.tensors[i];
        pd.reaction = field.porosity[i];
        pd.load = field.porosity[i] * source(q.point);
        return pd;
      },
      jobs);
  const fem::SolveResult r = fem::solve_cg(sys);
  out.u0 = dofs.to_vertex(r.x);
  out.solver = r.report;
  return out;
}

double macro_gap(const HomogenizedSolution& a, const HomogenizedSolution& b) {
  std::vector<double> d(a.u0.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.u0[i] - b.u0[i];
  const double num = fem::norm(a.mesh, d, fem::NormKind::L2);
  const double den = fem::norm(a.mesh, a.u0, fem::NormKind::L2);
  return den > 0.0 ? num / den : num;
}

// ---------------------------------------------------------------------------
// l = 2 limit

namespace {

std::vector<double> solve_unit_profile(const cell::CellProblem& p, Vec2 x, double theta, cell::Route route) {
  const bool hole = p.transform.cell().has_hole();
  fem::QuadMesh mesh = cell::reference_cell_mesh(p.transform.cell(), p.resolution);
  if (hole) p.transform.require_admissible(theta);
  if (route == cell::Route::Deformed && hole) {
    mesh.map_vertices([&](Vec2 y) { return p.transform.map(theta, y); });
    mesh.check_orientation();
  }
  const fem::DofMap dofs = fem::DofMap::build(mesh, true, false);
  const fem::SparseSystem sys = fem::assemble(
      mesh, dofs,
      [&](const fem::QuadPoint& q) {
        fem::PointData pd;
        if (route == cell::Route::Transformed && hole) {
          const CellJacobian jac = p.transform.jacobian(theta, q.point);
          pd.coefficient = pull_back(p.coefficient(x, p.transform.map(theta, q.point)), jac.matrix, jac.det);
          pd.reaction = jac.det;
          pd.load = jac.det;
        } else {
          pd.coefficient = p.coefficient(x, q.point);
          pd.reaction = 1.0;
          pd.load = 1.0;
        }
        return pd;
      },
      p.jobs);
  return dofs.to_vertex(fem::solve_cg(sys).x);
}

}  // namespace

TwoScaleLimit::TwoScaleLimit(cell::CellProblem problem, SourceField source, cell::Route route)
    : problem_(std::move(problem)), source_(source), route_(route) {}

const std::vector<double>& TwoScaleLimit::profile(double theta) {
  {
    std::lock_guard lock(mutex_);
    auto it = profiles_.find(theta);
    if (it != profiles_.end()) return it->second;
  }
  std::vector<double> w = solve_unit_profile(problem_, {0.0, 0.0}, theta, route_);
  std::lock_guard lock(mutex_);
  return profiles_.emplace(theta, std::move(w)).first->second;
}

std::vector<double> TwoScaleLimit::sample(Vec2 x) {
  const double f = source_(x);
  const double theta = problem_.transform.cell().has_hole() ? problem_.porosity(x) : 1.0;
  std::vector<double> w = problem_.coefficient.depends_on_x() ? solve_unit_profile(problem_, x, theta, route_)
                                                              : profile(theta);
  for (double& v : w) v *= f;
  return w;
}

std::size_t TwoScaleLimit::solves() const {
  std::lock_guard lock(mutex_);
  return profiles_.size();
}

TwoScaleRouteGap two_scale_route_gap(const cell::CellProblem& p, double theta) {
  const std::vector<double> wt = solve_unit_profile(p, {0.5, 0.5}, theta, cell::Route::Transformed);
  const std::vector<double> wd = solve_unit_profile(p, {0.5, 0.5}, theta, cell::Route::Deformed);
  const fem::QuadMesh mesh = cell::reference_cell_mesh(p.transform.cell(), p.resolution);
  std::vector<double> d(wt.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = wt[i] - wd[i];
  const double den = fem::norm(mesh, wt, fem::NormKind::L2);
  const double num = fem::norm(mesh, d, fem::NormKind::L2);
  return {theta, den > 0.0 ? num / den : num};
}

// ---------------------------------------------------------------------------
// eps-sweep

void finalize_table(ConvergenceTable& t) {
  t.monotone = true;
  t.mean_order = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    ConvergenceRow& r = t.rows[i];
    if (i == 0) {
      r.order = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const ConvergenceRow& prev = t.rows[i - 1];
    if (!(r.error < prev.error)) t.monotone = false;
    if (r.error > 0.0 && prev.error > 0.0) {
      r.order = std::log(prev.error / r.error) / std::log(prev.epsilon / r.epsilon);
    } else {
      r.order = std::numeric_limits<double>::quiet_NaN();
    }
    if (std::isfinite(r.order)) {
      t.mean_order += r.order;
      ++count;
    }
  }
  if (count > 0) t.mean_order /= count;
}

namespace {

// Moments int_{Y*} d_{y_i} w_hat_j(theta, y) Y_m(y) dy of the cell correctors for the
// four micro factors of the test battery, tabulated on porosity bins.
class CorrectorMoments {
 public:
  static constexpr int kModes = 4;
  using Table = std::array<double, 2 * 2 * kModes>;  // [i][j][mode]

  explicit CorrectorMoments(const cell::CellProblem& p) : problem_(p) {}

  Table at(double theta) {
    const double s = theta / kBin;
    const long b0 = static_cast<long>(std::floor(s + 1e-9));
    const double t = std::max(0.0, s - static_cast<double>(b0));
    const Table lo = node(b0);
    if (t < 1e-9) return lo;
    const Table hi = node(b0 + 1);
    Table out{};
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = (1 - t) * lo[k] + t * hi[k];
    return out;
  }

  static int index(int i, int j, int mode) { return (i * 2 + j) * kModes + mode; }

 private:
  static constexpr double kBin = 1e-3;

  Table node(long bin) {
    {
      std::lock_guard lock(mutex_);
      auto it = nodes_.find(bin);
      if (it != nodes_.end()) return it->second;
    }
    const Table t = compute(static_cast<double>(bin) * kBin);
    std::lock_guard lock(mutex_);
    return nodes_.emplace(bin, t).first->second;
  }

  Table compute(double theta) const {
    cell::CellProblem p = problem_;
    p.jobs = 1;
    const double th = p.transform.cell().has_hole() ? theta : 1.0;
    const cell::CellCorrectors c = cell::solve_cell_transformed(p, {{0.5, 0.5}, th});
    Table out{};
    const auto battery = lattice::test_battery();
    std::vector<fem::QuadPoint> qps;
    for (int e = 0; e < c.mesh.num_elements(); ++e) {
      if (!c.mesh.element_active(e)) continue;
      fem::element_quadrature(c.mesh, e, fem::gauss2x2(), qps);
      for (const fem::QuadPoint& q : qps) {
        for (int mode = 0; mode < kModes; ++mode) {
          const lattice::TestFunction phi{lattice::TestFunction::MacroFactor::One,
                                          static_cast<lattice::TestFunction::MicroFactor>(mode)};
          const double ym = phi.micro_value(q.point);
          for (int j = 0; j < 2; ++j) {
            const Q1Sample g = q1_sample(c.mesh, c.w[j], e, q.local);
            out[index(0, j, mode)] += q.weight * g.gradient.x * ym;
            out[index(1, j, mode)] += q.weight * g.gradient.y * ym;
          }
        }
      }
    }
    return out;
  }

  cell::CellProblem problem_;
  std::mutex mutex_;
  std::map<long, Table> nodes_;
};

// int_{Y*} Y_m dy on the reference cell mesh.
std::array<double, CorrectorMoments::kModes> material_moments(const ReferenceCell& cell, int res) {
  const fem::QuadMesh mesh = cell::reference_cell_mesh(cell, res);
  std::array<double, CorrectorMoments::kModes> out{};
  std::vector<fem::QuadPoint> qps;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    if (!mesh.element_active(e)) continue;
    fem::element_quadrature(mesh, e, fem::gauss3x3(), qps);
    for (const fem::QuadPoint& q : qps)
      for (int mode = 0; mode < CorrectorMoments::kModes; ++mode) {
        const lattice::TestFunction phi{lattice::TestFunction::MacroFactor::One,
                                        static_cast<lattice::TestFunction::MicroFactor>(mode)};
        out[mode] += q.weight * phi.micro_value(q.point);
      }
  }
  return out;
}

struct L0Limit {
  HomogenizedSolution u0;
  std::vector<double> theta_at_gauss;  // porosity at macro Gauss points
  // Limit side of the gradient pairings, per battery entry and component.
  std::vector<std::array<double, 2>> gradient_pairings;
};

L0Limit build_l0_limit(const SweepSetup& s, const cell::CellProblem& cp) {
  L0Limit lim;
  const std::vector<Vec2> pts = macro_gauss_points(s.macro_resolution);
  cell::TensorCache* cache = s.cache;
  const cell::EffectiveTensorField field = cell::tensor_field(cp, pts, cell::Route::Transformed, cache, s.jobs);
  lim.u0 = solve_homogenized(field, s.micro.source, s.macro_resolution, s.jobs);
  lim.theta_at_gauss = field.porosity;

  CorrectorMoments moments(cp);
  const auto base = material_moments(cp.transform.cell(), cp.resolution);
  const auto battery = lattice::test_battery();
  const int n = s.macro_resolution;
  const double w = 1.0 / (4.0 * n * n);
  // Per Gauss point contributions, summed serially for determinism.
  std::vector<std::vector<std::array<double, 2>>> contrib(pts.size());
  parallel_for(
      pts.size(),
      [&](std::size_t g) {
        const int e = static_cast<int>(g / 4);
        const Vec2 local = fem::gauss2x2().points[g % 4];
        const Vec2 grad = q1_sample(lim.u0.mesh, lim.u0.u0, e, local).gradient;
        const double theta = cp.transform.cell().has_hole() ? cp.porosity(pts[g]) : 1.0;
        const auto m = moments.at(theta);
        auto& out = contrib[g];
        out.resize(battery.size());
        for (std::size_t b = 0; b < battery.size(); ++b) {
          const int mode = static_cast<int>(battery[b].micro);
          const double xm = battery[b].macro_value(pts[g]);
          for (int i = 0; i < 2; ++i) {
            double v = grad[i] * base[mode];
            for (int j = 0; j < 2; ++j) v += grad[j] * m[CorrectorMoments::index(i, j, mode)];
            out[b][i] = w * xm * v;
          }
        }
      },
      s.jobs);
  lim.gradient_pairings.assign(battery.size(), {0.0, 0.0});
  for (const auto& c : contrib)
    for (std::size_t b = 0; b < battery.size(); ++b)
      for (int i = 0; i < 2; ++i) lim.gradient_pairings[b][i] += c[b][i];
  return lim;
}

struct L0Errors {
  double cell_average = 0.0;
  double l2 = 0.0;
  double pairing_gap = 0.0;
};

L0Errors l0_errors(const SweepSetup& s, const L0Limit& lim, const micro::MicroProblem& mp,
                   const micro::MicroSolution& sol) {
  L0Errors out;
  const double eps = mp.epsilon;
  const fem::QuadMesh& mesh = sol.mesh;
  const int m = mp.per_cell;
  const int cells = static_cast<int>(std::lround(1.0 / eps));
  const EpsTransform et(eps, mp.transform, mp.porosity);
  const auto& rule = fem::gauss2x2();
  const double wq = mesh.h() * mesh.h() / 4.0;
  const auto battery = lattice::test_battery();

  std::vector<double> avg_eps(static_cast<std::size_t>(cells) * cells, 0.0);
  // Per cell: int_Y d_i u_hat(k eps + eps y) Y_mode(y) dy.
  std::vector<std::array<double, 2 * CorrectorMoments::kModes>> cell_moments(avg_eps.size());
  for (auto& a : cell_moments) a.fill(0.0);
  for (int e = 0; e < mesh.num_elements(); ++e) {
    if (!mesh.element_active(e)) continue;
    const auto ij = mesh.element_ij(e);
    const std::array<int, 2> k{ij[0] / m, ij[1] / m};
    const std::size_t kc = static_cast<std::size_t>(k[1]) * cells + k[0];
    for (const Vec2& s : rule.points) {
      const Vec2 y{((ij[0] % m) + s.x) / m, ((ij[1] % m) + s.y) / m};
      const Q1Sample u = q1_sample(mesh, sol.values, e, s);
      const double J = et.jacobian_in_cell(k, y).det;
      avg_eps[kc] += wq * J * u.value / (eps * eps);
      for (int mode = 0; mode < CorrectorMoments::kModes; ++mode) {
        const lattice::TestFunction phi{lattice::TestFunction::MacroFactor::One,
                                        static_cast<lattice::TestFunction::MicroFactor>(mode)};
        const double ym = phi.micro_value(y);
        for (int i = 0; i < 2; ++i) cell_moments[kc][i * CorrectorMoments::kModes + mode] += wq * u.gradient[i] * ym / (eps * eps);
      }
    }
  }

  // Limit cell averages eps^-2 int_cell Theta u0 from macro Gauss points.
  const fem::QuadMesh& mm = lim.u0.mesh;
  const int n = mm.nx();
  std::vector<double> avg0(avg_eps.size(), 0.0);
  const double wm = mm.h() * mm.h() / 4.0;
  for (int e = 0; e < mm.num_elements(); ++e) {
    for (int q = 0; q < 4; ++q) {
      const Vec2 local = rule.points[q];
      const auto ij = mm.element_ij(e);
      const Vec2 x{(ij[0] + local.x) / n, (ij[1] + local.y) / n};
      const int kx = std::min(cells - 1, static_cast<int>(std::floor(x.x * cells)));
      const int ky = std::min(cells - 1, static_cast<int>(std::floor(x.y * cells)));
      const double u = q1_sample(mm, lim.u0.u0, e, local).value;
      avg0[static_cast<std::size_t>(ky) * cells + kx] += wm * lim.theta_at_gauss[e * 4 + q] * u / (eps * eps);
    }
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < avg0.size(); ++k) acc += eps * eps * (avg_eps[k] - avg0[k]) * (avg_eps[k] - avg0[k]);
  out.cell_average = std::sqrt(acc);

  // Strong two-scale distance to u0(x) on Omega x Y*.
  const lattice::GridFunction g = lattice::GridFunction::from_mesh_field(mesh, sol.values);
  out.l2 = lattice::two_scale_error(eps, g, [&](Vec2 x, Vec2) { return fem::evaluate_at(mm, lim.u0.u0, x); });

  // Gradient pairings: sum_k (int_cell X dx) * cell moment.
  for (std::size_t b = 0; b < battery.size(); ++b) {
    const int mode = static_cast<int>(battery[b].micro);
    double lhs[2] = {0.0, 0.0};
    for (int ky = 0; ky < cells; ++ky)
      for (int kx = 0; kx < cells; ++kx) {
        double xint = 0.0;
        for (const Vec2& s : rule.points) xint += eps * eps / 4.0 * battery[b].macro_value({(kx + s.x) * eps, (ky + s.y) * eps});
        const auto& cm = cell_moments[static_cast<std::size_t>(ky) * cells + kx];
        for (int i = 0; i < 2; ++i) lhs[i] += xint * cm[i * CorrectorMoments::kModes + mode];
      }
    for (int i = 0; i < 2; ++i)
      out.pairing_gap = std::max(out.pairing_gap, std::abs(lhs[i] - lim.gradient_pairings[b][i]));
  }
  (void)s;
  return out;
}

}  // namespace

ConvergenceTable sweep_epsilon(const SweepSetup& s) {
  ConvergenceTable table;
  table.l = s.micro.l;
  table.rows.resize(s.epsilons.size());
  if (s.epsilons.empty()) return table;

  cell::CellProblem cp;
  cp.transform = s.micro.transform;
  cp.porosity = s.micro.porosity;
  cp.coefficient = s.micro.coefficient;
  cp.resolution = s.micro.per_cell;
  cp.jobs = 1;

  L0Limit l0;
  if (s.micro.l == 0) l0 = build_l0_limit(s, cp);
  TwoScaleLimit l2(cp, s.micro.source, cell::Route::Transformed);

  parallel_for(
      s.epsilons.size(),
      [&](std::size_t i) {
        micro::MicroProblem mp = s.micro;
        mp.epsilon = s.epsilons[i];
        mp.jobs = 1;
        const micro::MicroSolution sol = micro::solve_substitute(mp);
        ConvergenceRow& row = table.rows[i];
        row.epsilon = mp.epsilon;
        row.iterations = sol.solver.iterations;
        if (mp.l == 2) {
          const lattice::GridFunction g = lattice::GridFunction::from_mesh_field(sol.mesh, sol.values);
          row.error = lattice::two_scale_error(mp.epsilon, g, lattice::CellSampler([&](Vec2 x) { return l2.sample(x); }),
                                               mp.per_cell);
          row.l2_error = row.error;
        } else {
          const L0Errors e = l0_errors(s, l0, mp, sol);
          row.error = e.cell_average;
          row.l2_error = e.l2;
          row.pairing_gap = e.pairing_gap;
        }
      },
      s.jobs);
  finalize_table(table);
  return table;
}

// ---------------------------------------------------------------------------
// Back-transformation rules

CorrectorRule corrector_rule(const cell::CellProblem& p, double theta) {
  CorrectorRule r;
  r.theta = theta;
  r.resolution = p.resolution;
  const cell::CellCorrectors hat = cell::solve_cell_transformed(p, {{0.5, 0.5}, theta});
  const cell::CellCorrectors def = cell::solve_cell_deformed(p, {{0.5, 0.5}, theta});
  const fem::QuadMesh& mesh = hat.mesh;
  const bool hole = p.transform.cell().has_hole();
  const double area = fem::measure(mesh);
  double num = 0.0, den = 0.0;
  for (int j = 0; j < 2; ++j) {
    std::vector<double> d(hat.w[j].size(), 0.0);
    for (int v = 0; v < mesh.num_vertices(); ++v) {
      const Vec2 y = mesh.vertex(v);
      const double shift = hole ? p.transform.displacement(theta, y)[j] : 0.0;
      d[v] = hat.w[j][v] - def.w[j][v] - shift;
    }
    const double c = fem::integrate(mesh, d) / area;
    for (double& v : d) v -= c;
    const double a = fem::norm(mesh, d, fem::NormKind::L2);
    const double b = fem::norm(mesh, hat.w[j], fem::NormKind::L2);
    num += a * a;
    den += b * b;
  }
  r.relative = std::sqrt(den) >= 1e-14;
  r.residual = r.relative ? std::sqrt(num / den) : std::sqrt(num);
  return r;
}

BacktransformReport verify_backtransform_rules(const cell::CellProblem& problem, const std::vector<double>& thetas,
                                               int jobs) {
  BacktransformReport rep;
  rep.l2_rule.resize(thetas.size());
  rep.corrector.resize(thetas.size());
  rep.corrector_refined.resize(thetas.size());
  cell::CellProblem p = problem;
  p.jobs = 1;
  cell::CellProblem fine = p;
  fine.resolution = 2 * p.resolution;
  parallel_for(
      thetas.size(),
      [&](std::size_t i) {
        rep.l2_rule[i] = two_scale_route_gap(p, thetas[i]);
        rep.corrector[i] = corrector_rule(p, thetas[i]);
        rep.corrector_refined[i] = corrector_rule(fine, thetas[i]);
      },
      jobs);
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    rep.max_l2_gap = std::max(rep.max_l2_gap, rep.l2_rule[i].relative_gap);
    rep.max_corrector = std::max(rep.max_corrector, rep.corrector[i].residual);
    const double coarse = rep.corrector[i].residual;
    const double refined = rep.corrector_refined[i].residual;
    if (!(refined < coarse || coarse <= 1e-10)) rep.decreasing = false;
  }
  return rep;
}

}  // namespace homog2s::macro
