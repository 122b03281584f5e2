// One line per acceptance criterion; exit status 1 when any line fails.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "homog2s/cell.hpp"
#include "homog2s/config.hpp"
#include "homog2s/fem.hpp"
#include "homog2s/lattice.hpp"
#include "homog2s/macro.hpp"
#include "homog2s/micro.hpp"
#include "homog2s/pipeline.hpp"

using namespace homog2s;

namespace {

constexpr double pi = std::numbers::pi;
const std::string root = HOMOG2S_SOURCE_DIR;

RunConfig config(const std::string& name) { return load_config(root + "/configs/" + name + ".toml"); }

int failures = 0;

void line(int id, const std::string& title, bool ok, const std::string& detail) {
  std::printf("[%s] AC%-2d %s: %s\n", ok ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

void guarded(int id, const std::string& title, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    line(id, title, false, std::string("exception: ") + e.what());
  }
}

// Composite Simpson rule on [0, 1].
template <class F>
double simpson(F f, int n = 20000) {
  double s = f(0.0) + f(1.0);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(double(i) / n);
  return s / (3.0 * n);
}

void unfolding_identities() {
  std::mt19937_64 rng(20240531);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const int n = 64;
  double worst_int = 0.0, worst_norm = 0.0;
  for (int k = 0; k < 100; ++k) {
    std::vector<double> nodal((n + 1) * (n + 1));
    for (double& v : nodal) v = dist(rng);
    const lattice::GridFunction u = lattice::GridFunction::from_nodal(n, n, 1.0 / n, nodal);
    for (double eps : {0.25, 0.125}) {
      const lattice::UnfoldedFunction t = lattice::unfold(eps, u);
      worst_int = std::max(worst_int, std::abs(t.integral() - u.integral()) / std::abs(u.integral()));
      worst_norm = std::max(worst_norm, lattice::unfold_isometry_check(eps, u, lattice::PNorm::L2));
    }
  }
  line(1, "unfolding identities (100 random fields, eps 1/4 and 1/8, mesh 64)",
       worst_int <= 1e-12 && worst_norm <= 1e-12,
       "integral " + sci(worst_int) + ", L2 norm " + sci(worst_norm) + " (tol 1e-12)");
}

void pairing_sanity() {
  double worst_sin = 0.0, worst_chi = 0.0;
  for (double eps : {0.25, 0.125}) {
    const int n = static_cast<int>(std::lround(16 / eps));
    const auto u = lattice::GridFunction::from_function(n, n, 1.0 / n,
                                                        [&](Vec2 x) { return std::sin(2 * pi * x.x / eps); });
    const lattice::TestFunction phi{lattice::TestFunction::MacroFactor::One,
                                    lattice::TestFunction::MicroFactor::Sin2PiY1};
    worst_sin = std::max(worst_sin, std::abs(lattice::two_scale_pairing(eps, u, phi) - 0.5));

    const fem::QuadMesh mesh = micro::reference_mesh([&] {
      micro::MicroProblem p;
      p.epsilon = eps;
      p.per_cell = 16;
      return p;
    }());
    const auto chi =
        lattice::GridFunction::from_function(n, n, 1.0 / n, [](Vec2) { return 1.0; }, mesh.active_mask());
    worst_chi = std::max(worst_chi, std::abs(lattice::two_scale_pairing(eps, chi, lattice::TestFunction{}) - 15.0 / 16));
  }
  line(2, "two-scale pairing sanity (16 per cell)", worst_sin <= 2e-3 && worst_chi <= 1e-3,
       "|<sin, sin> - 1/2| " + sci(worst_sin) + " (tol 2e-3), |<chi, 1> - 15/16| " + sci(worst_chi) + " (tol 1e-3)");
}

void equivalence() {
  const RunConfig d = config("deformed-constant");
  const auto p = pipeline::micro_problem(d, d.mesh.equivalence_eps, 16, d.l);
  const micro::EquivalenceReport r = micro::verify_equivalence(p, {16, 32});
  const RunConfig id = config("identity");
  const auto pi_ = pipeline::micro_problem(id, id.mesh.equivalence_eps, 16, id.l);
  const micro::EquivalenceReport ri = micro::verify_equivalence(pi_, {16, 32});
  const double idmax = std::max(ri.entries[0].relative_gap, ri.entries[1].relative_gap);
  const bool ok = r.entries[0].relative_gap <= 2e-2 && r.entries[1].relative_gap <= 6e-3 && idmax <= 1e-10;
  line(3, "substitute/fine equivalence (eps 1/4)", ok,
       "deformed " + sci(r.entries[0].relative_gap) + " @16 (tol 2e-2), " + sci(r.entries[1].relative_gap) +
           " @32 (tol 6e-3); identity " + sci(idmax) + " (tol 1e-10)");
}

void commuting_diagram() {
  const RunConfig c = config("sinus-porosity-l0");
  const auto pts = pipeline::sample_points();
  double worst = 0.0;
  bool decreasing = true;
  std::string gaps;
  for (Vec2 x : pts) {
    double g[2];
    for (int level = 0; level < 2; ++level) {
      const cell::CellProblem cp = pipeline::cell_problem(c, level == 0 ? 32 : 64);
      const cell::MacroPoint mp = cell::macro_point(cp, x);
      g[level] = cell::relative_gap(cell::effective_tensor_transformed(cp, mp).B,
                                    cell::effective_tensor_deformed(cp, mp).B);
    }
    worst = std::max(worst, g[0]);
    decreasing = decreasing && g[1] < g[0];
    gaps += (gaps.empty() ? "" : " ") + sci(g[0]) + "->" + sci(g[1]);
  }
  line(4, "commuting-diagram tensors (5 porosities, 32 then 64)", worst <= 2e-2 && decreasing,
       "max " + sci(worst) + " (tol 2e-2), strictly decreasing " + (decreasing ? "yes" : "no") + " [" + gaps + "]");
}

void laminate() {
  cell::CellProblem p;
  p.transform = CellTransform(ReferenceCell::unperforated());
  p.porosity = PorosityField::constant(1.0);
  p.coefficient = CoefficientField::layered(1.0, 0.5, 1.0, CoefficientField::Trig::Sin, 0);
  const cell::EffectiveTensor t = cell::effective_tensor_deformed(p, {{0.5, 0.5}, 1.0});
  const double harmonic = 1.0 / simpson([](double s) { return 1.0 / (1.0 + 0.5 * std::sin(2 * pi * s)); });
  const double arithmetic = simpson([](double) { return 1.0; });
  const double err = std::max({std::abs(t.B.a - harmonic), std::abs(t.B.d - arithmetic), std::abs(t.B.b),
                               std::abs(t.B.c)});
  line(5, "laminate oracle (no hole, A = diag(1 + 0.5 sin 2 pi y1, 1))", err <= 1e-3,
       "B11 " + std::to_string(t.B.a) + " vs harmonic " + std::to_string(harmonic) + ", max entry error " + sci(err) +
           " (tol 1e-3)");
}

void sweeps() {
  std::string detail;
  bool ok = true;
  for (const char* name : {"sinus-porosity-l2", "sinus-porosity-l0"}) {
    const RunConfig c = config(name);
    macro::SweepSetup s;
    s.micro = pipeline::micro_problem(c, c.epsilons.front(), c.mesh.per_cell, c.l);
    s.epsilons = {0.25, 0.125, 0.0625, 0.03125};
    s.macro_resolution = c.mesh.macro;
    const macro::ConvergenceTable t = macro::sweep_epsilon(s);
    ok = ok && t.monotone && t.mean_order >= 0.8;
    detail += (detail.empty() ? "" : "; ") + std::string("l=") + std::to_string(c.l) + " errors";
    for (const auto& r : t.rows) detail += " " + sci(r.error);
    detail += ", monotone " + std::string(t.monotone ? "yes" : "no") + ", mean order " + sci(t.mean_order);
  }
  line(6, "eps-sweep convergence (order >= 0.8)", ok, detail);
}

void backtransform() {
  const RunConfig c = config("sinus-porosity-l0");
  const macro::BacktransformReport r =
      macro::verify_backtransform_rules(pipeline::cell_problem(c, 32), pipeline::sample_thetas(c));
  const RunConfig id = config("deformed-constant");
  cell::CellProblem ip = pipeline::cell_problem(id, 32);
  ip.porosity = PorosityField::constant(15.0 / 16.0);
  const macro::BacktransformReport ri = macro::verify_backtransform_rules(ip, {15.0 / 16.0});
  const bool ok = r.max_corrector <= 2e-2 && r.decreasing && ri.max_corrector <= 1e-10;
  double refined = 0.0;
  for (const auto& e : r.corrector_refined) refined = std::max(refined, e.residual);
  line(7, "corrector back-transformation rule (32x32)", ok,
       "residual " + sci(r.max_corrector) + " (tol 2e-2) -> " + sci(refined) + " @64, decreasing " +
           (r.decreasing ? "yes" : "no") + "; identity " + sci(ri.max_corrector) + " (tol 1e-10)");
}

void well_posedness() {
  const RunConfig c = config("sinus-porosity-l0");
  std::string detail;
  bool ok = true;
  for (int l : {0, 2}) {
    const auto p = pipeline::micro_problem(c, c.epsilons.front(), c.mesh.per_cell, l);
    const micro::UniformEstimateTable t = micro::uniform_estimate_sweep(p, c.epsilons);
    ok = ok && t.max_ratio <= 1.5;
    detail += "l=" + std::to_string(l) + " ratio " + sci(t.max_ratio) + "; ";
  }
  double margin = 1e300;
  for (double eps : c.epsilons) {
    const auto cs = micro::discretize_substitute(pipeline::micro_problem(c, eps, c.mesh.per_cell, c.l)).coercivity;
    margin = std::min(margin, cs.min_eigenvalue / cs.bound);
  }
  ok = ok && margin >= 1.0;
  line(8, "well-posedness diagnostics", ok,
       detail + "tol 1.5; min eigenvalue / (alpha c_J / C^2) " + sci(margin) + " (needs >= 1)");
}

void fem_core() {
  std::vector<double> errs;
  for (int n : {8, 16, 32, 64}) {
    fem::QuadMesh mesh = fem::QuadMesh::structured({0, 0}, n, n, 1.0 / n);
    const fem::DofMap dofs = fem::DofMap::build(mesh);
    const auto sys = fem::assemble(mesh, dofs, [](const fem::QuadPoint& q) {
      fem::PointData d;
      d.coefficient = Mat2::identity();
      d.reaction = 1.0;
      d.load = (2 * pi * pi + 1) * std::cos(pi * q.point.x) * std::cos(pi * q.point.y);
      return d;
    });
    const auto u = dofs.to_vertex(fem::solve_cg(sys).x);
    errs.push_back(fem::l2_error(mesh, u, [](Vec2 x) { return std::cos(pi * x.x) * std::cos(pi * x.y); }));
  }
  double min_order = 1e300;
  for (std::size_t i = 1; i < errs.size(); ++i) min_order = std::min(min_order, std::log2(errs[i - 1] / errs[i]));

  double row_sum = 0.0;
  for (bool periodic : {false, true}) {
    const cell::CellProblem cp;
    const fem::QuadMesh mesh = cell::reference_cell_mesh(cp.transform.cell(), 32);
    const fem::DofMap dofs = fem::DofMap::build(mesh, periodic, periodic);
    const auto sys = fem::assemble(mesh, dofs, [](const fem::QuadPoint& q) {
      fem::PointData d;
      d.coefficient = Mat2{2 + std::sin(6 * q.point.x), 0.3, 0.3, 1 + q.point.y};
      return d;
    });
    row_sum = std::max(row_sum, sys.matrix.max_abs_row_sum());
  }
  line(9, "FEM core (manufactured solution, Neumann row sums)", min_order >= 1.9 && row_sum <= 1e-12,
       "min L2 order " + sci(min_order) + " over 3 halvings (needs >= 1.9), max |row sum| " + sci(row_sum) +
           " (tol 1e-12)");
}

void determinism() {
  const RunConfig c = config("sinus-porosity-l0");
  const std::string a = pipeline::run_pipeline(c).to_json().dump();
  const std::string b = pipeline::run_pipeline(c).to_json().dump();
  line(10, "determinism (two run_pipeline executions, sinus-porosity-l0)", a == b,
       std::string(a == b ? "identical" : "different") + " reports (" + std::to_string(a.size()) + " bytes)");
}

}  // namespace

int main() {
  guarded(1, "unfolding identities", unfolding_identities);
  guarded(2, "two-scale pairing sanity", pairing_sanity);
  guarded(3, "substitute/fine equivalence", equivalence);
  guarded(4, "commuting-diagram tensors", commuting_diagram);
  guarded(5, "laminate oracle", laminate);
  guarded(6, "eps-sweep convergence", sweeps);
  guarded(7, "corrector back-transformation rule", backtransform);
  guarded(8, "well-posedness diagnostics", well_posedness);
  guarded(9, "FEM core", fem_core);
  guarded(10, "determinism", determinism);
  std::printf("%d of 10 acceptance criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
