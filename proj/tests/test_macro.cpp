#include <cmath>
#include <numbers>

#include "doctest.h"
#include "homog2s/error.hpp"
#include "homog2s/macro.hpp"

using namespace homog2s;
using namespace homog2s::macro;

namespace {
constexpr double pi = std::numbers::pi;

cell::EffectiveTensorField constant_field(int n, Mat2 B, double theta) {
  cell::EffectiveTensorField f;
  f.points = macro_gauss_points(n);
  f.tensors.assign(f.points.size(), B);
  f.porosity.assign(f.points.size(), theta);
  return f;
}

SweepSetup sinus_setup(int l) {
  SweepSetup s;
  s.micro.l = l;
  s.micro.porosity = PorosityField::sinusoidal(0.9, 0.04, 1, 1);
  s.micro.coefficient = CoefficientField::isotropic(1.0, 0.5, CoefficientField::Trig::Cos);
  s.micro.source = SourceField::cosine(1.0);
  s.micro.per_cell = 8;
  s.epsilons = {0.25, 0.125, 0.0625, 0.03125};
  return s;
}
}  // namespace

TEST_CASE("homogenized problem: constant state") {
  const HomogenizedSolution s = solve_homogenized(constant_field(16, Mat2::identity(), 1.0), SourceField::constant(1), 16);
  for (double v : s.u0) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("homogenized problem: single Neumann mode") {
  const double b = 0.8, theta = 0.9;
  const auto exact = [&](Vec2 x) { return theta * std::cos(pi * x.x) * std::cos(pi * x.y) / (2 * pi * pi * b + theta); };
  double prev = 1e9;
  for (int n : {16, 32, 64}) {
    const HomogenizedSolution s = solve_homogenized(constant_field(n, Mat2::scalar(b), theta), SourceField::cosine(1), n);
    const double err = fem::l2_error(s.mesh, s.u0, exact);
    CHECK(err < prev / 3.6);
    prev = err;
  }
  CHECK(prev <= 1e-5);
  CHECK_THROWS_AS(solve_homogenized(constant_field(8, Mat2::identity(), 1.0), SourceField::constant(1), 16), Error);
}

TEST_CASE("homogenized solutions from both tensor routes agree") {
  cell::CellProblem cp;
  cp.porosity = PorosityField::sinusoidal(0.9, 0.04, 1, 1);
  cp.coefficient = CoefficientField::isotropic(1.0, 0.5, CoefficientField::Trig::Cos);
  cp.resolution = 32;
  const int n = 16;
  const auto pts = macro_gauss_points(n);
  cell::TensorCache ct(cell::cache_key(cp, cell::Route::Transformed));
  cell::TensorCache cd(cell::cache_key(cp, cell::Route::Deformed));
  const auto ft = cell::tensor_field(cp, pts, cell::Route::Transformed, &ct);
  const auto fd = cell::tensor_field(cp, pts, cell::Route::Deformed, &cd);
  double tensor_gap = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) tensor_gap = std::max(tensor_gap, cell::relative_gap(ft.tensors[i], fd.tensors[i]));
  const auto ut = solve_homogenized(ft, SourceField::cosine(1), n);
  const auto ud = solve_homogenized(fd, SourceField::cosine(1), n);
  MESSAGE("tensor gap " << tensor_gap << " solution gap " << macro_gap(ut, ud));
  CHECK(macro_gap(ut, ud) <= tensor_gap + 1e-4);
}

TEST_CASE("l = 2 limit") {
  cell::CellProblem cp;
  cp.transform = CellTransform(ReferenceCell::unperforated());
  cp.porosity = PorosityField::constant(1.0);
  cp.resolution = 8;
  TwoScaleLimit lim(cp, SourceField::constant(1.0), cell::Route::Transformed);
  for (double v : lim.sample({0.3, 0.4})) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));

  cell::CellProblem dp;
  dp.porosity = PorosityField::sinusoidal(0.9, 0.04, 1, 0);
  dp.coefficient = CoefficientField::isotropic(1.0, 0.5, CoefficientField::Trig::Sin);
  dp.resolution = 8;
  TwoScaleLimit a(dp, SourceField::cosine(1.0), cell::Route::Transformed);
  TwoScaleLimit b(dp, SourceField::cosine(3.0), cell::Route::Transformed);
  const auto sa = a.sample({0.2, 0.1});
  const auto sb = b.sample({0.2, 0.1});
  for (std::size_t i = 0; i < sa.size(); ++i) CHECK(sb[i] == doctest::Approx(3 * sa[i]).epsilon(1e-12));
  a.sample({0.2, 0.7});
  CHECK(a.solves() == 1);

  for (double theta : {0.86, 0.9, 0.94}) {
    dp.resolution = 32;
    const double g32 = two_scale_route_gap(dp, theta).relative_gap;
    dp.resolution = 64;
    const double g64 = two_scale_route_gap(dp, theta).relative_gap;
    CHECK(g32 <= 2e-2);
    CHECK(g64 <= g32 + 1e-12);
  }
}

TEST_CASE("convergence table orders") {
  ConvergenceTable t;
  for (double e : {0.25, 0.125, 0.0625, 0.03125}) t.rows.push_back({e, e * e, 0, 0, 0, 0});
  finalize_table(t);
  CHECK(std::isnan(t.rows[0].order));
  for (std::size_t i = 1; i < 4; ++i) CHECK(t.rows[i].order == doctest::Approx(2.0));
  CHECK(t.monotone);
  CHECK(t.mean_order == doctest::Approx(2.0));
  ConvergenceTable empty;
  finalize_table(empty);
  CHECK(empty.rows.empty());
}

TEST_CASE("eps sweep, l = 2") {
  const ConvergenceTable t = sweep_epsilon(sinus_setup(2));
  for (const auto& r : t.rows) MESSAGE("eps " << r.epsilon << " error " << r.error << " order " << r.order);
  CHECK(t.monotone);
  CHECK(t.mean_order >= 0.8);
}

TEST_CASE("eps sweep, l = 0") {
  SweepSetup s = sinus_setup(0);
  cell::CellProblem cp;
  cp.transform = s.micro.transform;
  cp.porosity = s.micro.porosity;
  cp.coefficient = s.micro.coefficient;
  cp.resolution = s.micro.per_cell;
  cell::TensorCache cache(cell::cache_key(cp, cell::Route::Transformed));
  s.cache = &cache;
  const ConvergenceTable t = sweep_epsilon(s);
  for (const auto& r : t.rows)
    MESSAGE("eps " << r.epsilon << " cell-average " << r.error << " l2 " << r.l2_error << " pairing " << r.pairing_gap);
  CHECK(t.monotone);
  CHECK(t.mean_order >= 0.8);
  for (std::size_t i = 1; i < t.rows.size(); ++i) {
    CHECK(t.rows[i].l2_error < t.rows[i - 1].l2_error);
    CHECK(t.rows[i].pairing_gap < t.rows[i - 1].pairing_gap);
  }
}

TEST_CASE("eps sweep without holes reduces to classical homogenization") {
  SweepSetup s = sinus_setup(0);
  s.micro.transform = CellTransform(ReferenceCell::unperforated());
  s.micro.porosity = PorosityField::constant(1.0);
  s.micro.coefficient = CoefficientField::identity();
  s.epsilons = {0.25, 0.125};
  const ConvergenceTable t = sweep_epsilon(s);
  // A = I: u_eps = u0 up to discretization, so the two-scale distance is the unfolding
  // shift ||u0([x] + eps y) - u0(x)||, evaluated here by brute-force midpoint quadrature.
  const auto u0 = [](Vec2 x) { return std::cos(pi * x.x) * std::cos(pi * x.y) / (2 * pi * pi + 1); };
  for (const auto& r : t.rows) {
    const int cells = static_cast<int>(std::lround(1 / r.epsilon));
    const int q = 12;
    double acc = 0;
    for (int k = 0; k < cells * cells; ++k)
      for (int a = 0; a < q * q; ++a)
        for (int b = 0; b < q * q; ++b) {
          const Vec2 corner{(k % cells) * r.epsilon, (k / cells) * r.epsilon};
          const Vec2 x = corner + Vec2{(a % q + 0.5) / q, (a / q + 0.5) / q} * r.epsilon;
          const Vec2 y{(b % q + 0.5) / q, (b / q + 0.5) / q};
          const double d = u0(corner + y * r.epsilon) - u0(x);
          acc += d * d * r.epsilon * r.epsilon / (q * q * q * q);
        }
    MESSAGE("eps " << r.epsilon << " error " << r.l2_error << " brute force " << std::sqrt(acc));
    CHECK(r.l2_error == doctest::Approx(std::sqrt(acc)).epsilon(0.05));
    CHECK(r.l2_error <= 0.05 * r.epsilon);
  }

  SweepSetup z = sinus_setup(2);
  z.micro.source = SourceField::zero();
  z.epsilons = {0.25, 0.125};
  for (const auto& r : sweep_epsilon(z).rows) CHECK(r.error == 0.0);
}

TEST_CASE("back-transformation rules") {
  cell::CellProblem id;
  id.porosity = PorosityField::constant(15.0 / 16.0);
  id.coefficient = CoefficientField::isotropic(1.0, 0.5, CoefficientField::Trig::Cos);
  id.resolution = 32;
  const BacktransformReport ri = verify_backtransform_rules(id, {15.0 / 16.0});
  CHECK(ri.max_corrector <= 1e-10);
  CHECK(ri.max_l2_gap <= 1e-10);

  cell::CellProblem dp = id;
  const BacktransformReport rd = verify_backtransform_rules(dp, {0.86, 0.88, 0.9, 0.92, 0.94});
  for (std::size_t i = 0; i < rd.corrector.size(); ++i)
    MESSAGE("theta " << rd.corrector[i].theta << " residual32 " << rd.corrector[i].residual << " residual64 "
                     << rd.corrector_refined[i].residual);
  CHECK(rd.max_corrector <= 2e-2);
  CHECK(rd.decreasing);
  CHECK(rd.max_l2_gap <= 2e-2);
}
