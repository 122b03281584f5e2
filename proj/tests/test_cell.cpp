#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "homog2s/cell.hpp"
#include "homog2s/error.hpp"

using namespace homog2s;
using namespace homog2s::cell;

namespace {
constexpr double pi = std::numbers::pi;

// Composite Simpson rule on [0,1].
template <class F>
double simpson(F f, int n = 20000) {
  double s = f(0.0) + f(1.0);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(double(i) / n);
  return s / (3.0 * n);
}

CellProblem no_hole() {
  CellProblem p;
  p.transform = CellTransform(ReferenceCell::unperforated());
  p.porosity = PorosityField::constant(1.0);
  return p;
}

CellProblem deformed(double theta, int res) {
  CellProblem p;
  p.porosity = PorosityField::constant(theta);
  p.coefficient = CoefficientField::isotropic(1.0, 0.5, CoefficientField::Trig::Cos);
  p.resolution = res;
  return p;
}
}  // namespace

TEST_CASE("no hole, identity coefficient") {
  CellProblem p = no_hole();
  const CellCorrectors c = solve_cell_transformed(p, {{0.5, 0.5}, 1.0});
  for (int j = 0; j < 2; ++j)
    for (double v : c.w[j]) CHECK(std::abs(v) <= 1e-14);
  const EffectiveTensor t = effective_tensor_transformed(p, {{0.5, 0.5}, 1.0});
  CHECK(relative_gap(t.B, Mat2::identity()) <= 1e-12);
  CHECK(t.theta == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("laminate oracle") {
  CellProblem p = no_hole();
  p.coefficient = CoefficientField::layered(1.0, 0.5, 1.0, CoefficientField::Trig::Sin);
  const double harmonic = 1.0 / simpson([](double s) { return 1.0 / (1.0 + 0.5 * std::sin(2 * pi * s)); });
  const double arithmetic = simpson([](double) { return 1.0; });
  CHECK(harmonic == doctest::Approx(std::sqrt(0.75)).epsilon(1e-10));
  for (int res : {32, 64}) {
    p.resolution = res;
    const EffectiveTensor t = effective_tensor_transformed(p, {{0.5, 0.5}, 1.0});
    MESSAGE("res " << res << " B11 " << t.B.a << " harmonic " << harmonic);
    CHECK(std::abs(t.B.a - harmonic) <= 1e-3);
    CHECK(std::abs(t.B.d - arithmetic) <= 1e-3);
    CHECK(std::abs(t.B.b) <= 1e-12);
    CHECK(std::abs(t.B.c) <= 1e-12);
  }
}

TEST_CASE("one-dimensional corrector oracle") {
  CellProblem p = no_hole();
  p.coefficient = CoefficientField::isotropic(1.0, 0.5, CoefficientField::Trig::Sin);
  p.resolution = 64;
  const CellCorrectors c = solve_cell_transformed(p, {{0.5, 0.5}, 1.0});
  const auto a = [](double s) { return 1.0 + 0.5 * std::sin(2 * pi * s); };
  const double H = 1.0 / simpson([&](double s) { return 1.0 / a(s); });
  // w1(y) = int_0^y (H/a - 1), normalised to mean zero
  std::vector<double> w(65);
  for (int i = 0; i <= 64; ++i) {
    const double y = i / 64.0;
    w[i] = y * simpson([&](double s) { return H / a(s * y) - 1.0; }, 2000);
  }
  const double mean = simpson([&](double y) { return y * simpson([&](double s) { return H / a(s * y) - 1.0; }, 200); }, 200);
  double worst = 0;
  for (int j = 0; j <= 64; ++j)
    for (int i = 0; i <= 64; ++i)
      worst = std::max(worst, std::abs(c.w[0][c.mesh.vertex_index(i, j)] - (w[i] - mean)));
  MESSAGE("corrector max error " << worst);
  CHECK(worst <= 2e-3);
  for (double v : c.w[1]) CHECK(std::abs(v) <= 1e-12);
}

TEST_CASE("identity transform: both routes agree") {
  CellProblem p = deformed(15.0 / 16.0, 32);
  const EffectiveTensor a = effective_tensor_transformed(p, {{0.3, 0.3}, 15.0 / 16.0});
  const EffectiveTensor b = effective_tensor_deformed(p, {{0.3, 0.3}, 15.0 / 16.0});
  CHECK(relative_gap(a.B, b.B) <= 1e-10);
  CHECK(a.theta == doctest::Approx(15.0 / 16.0).epsilon(1e-13));
  CHECK(b.theta == doctest::Approx(15.0 / 16.0).epsilon(1e-13));
}

TEST_CASE("commuting-diagram tensors") {
  for (double theta : {0.86, 0.88, 0.9, 0.92, 0.94}) {
    double gaps[2];
    for (int k = 0; k < 2; ++k) {
      CellProblem p = deformed(theta, k == 0 ? 32 : 64);
      const EffectiveTensor th = effective_tensor_transformed(p, {{0.5, 0.5}, theta});
      const EffectiveTensor td = effective_tensor_deformed(p, {{0.5, 0.5}, theta});
      gaps[k] = relative_gap(th.B, td.B);
      CHECK(th.residual <= 1e-10);
      CHECK(td.residual <= 1e-10);
      CHECK(th.energy_gap <= 1e-10);
      CHECK(td.energy_gap <= 1e-10);
      CHECK(std::abs(th.B.b - th.B.c) <= 1e-10);
      CHECK(std::abs(td.B.b - td.B.c) <= 1e-10);
      if (k == 1) CHECK(std::abs(th.theta - td.theta) <= 1e-4);
      // arithmetic-mean upper bound: lambda_max(A) = 1.5 at most, integrated over Y*_x
      CHECK(sym_eigenvalues(td.B)[1] <= 1.5 * td.theta);
      CHECK(sym_eigenvalues(td.B)[0] > 0.0);
    }
    MESSAGE("theta " << theta << " gap32 " << gaps[0] << " gap64 " << gaps[1]);
    CHECK(gaps[0] <= 2e-2);
    CHECK(gaps[1] < gaps[0]);
  }
}

TEST_CASE("reparametrized cell map leaves B0 unchanged") {
  const double theta = 0.9;
  CellProblem p = deformed(theta, 64);
  CellProblem q = p;
  q.transform = CellTransform(ReferenceCell::square_hole(0.125, 7.0 / 16.0));
  const EffectiveTensor a = effective_tensor_deformed(p, {{0.5, 0.5}, theta});
  const EffectiveTensor b = effective_tensor_deformed(q, {{0.5, 0.5}, theta});
  const EffectiveTensor bh = effective_tensor_transformed(q, {{0.5, 0.5}, theta});
  MESSAGE("reparametrization gap " << relative_gap(b.B, a.B));
  CHECK(relative_gap(b.B, a.B) <= 1e-2);
  CHECK(relative_gap(bh.B, a.B) <= 2e-2);
}

TEST_CASE("tensor cache") {
  CellProblem p = deformed(0.9, 16);
  const std::string key = cache_key(p, Route::Transformed);
  CHECK_FALSE(key.empty());
  std::vector<Vec2> pts;
  for (int i = 0; i < 6; ++i) pts.push_back({(i + 0.5) / 6, 0.5});

  TensorCache cache(key);
  const EffectiveTensorField f = tensor_field(p, pts, Route::Transformed, &cache, 4);
  CHECK(f.cached);
  CHECK(cache.size() == 1);

  p.porosity = PorosityField::affine(0.88, 0.04, 0.0);
  TensorCache cache2(cache_key(p, Route::Transformed));
  const EffectiveTensorField cached = tensor_field(p, pts, Route::Transformed, &cache2, 4);
  const EffectiveTensorField direct = tensor_field(p, pts, Route::Transformed, nullptr, 4);
  CHECK_FALSE(direct.cached);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(frobenius(cached.tensors[i] - direct.tensors[i]) <= 1e-3);
    if (i > 0) CHECK(direct.porosity[i] > direct.porosity[i - 1]);
  }
  const std::string path = (std::filesystem::temp_directory_path() / "homog2s_cache_test.csv").string();
  cache2.save(path);
  TensorCache reloaded(cache2.key());
  CHECK(reloaded.load(path) == cache2.size());
  const TensorSample s = reloaded.lookup(p.porosity(pts[2]), [](double) -> TensorSample { throw Error(ErrorKind::Io, "miss"); });
  const TensorSample s2 = cache2.lookup(p.porosity(pts[2]), [](double) -> TensorSample { throw Error(ErrorKind::Io, "miss"); });
  CHECK(frobenius(s.B - s2.B) <= 1e-15);
  TensorCache other("other");
  CHECK(other.load(path) == 0);
  std::filesystem::remove(path);

  CellProblem x_dep = p;
  x_dep.coefficient.x_modulation = 0.2;
  CHECK(cache_key(x_dep, Route::Transformed).empty());
}
