#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "homog2s/error.hpp"
#include "homog2s/lattice.hpp"

using namespace homog2s;
using namespace homog2s::lattice;

namespace {
constexpr double pi = std::numbers::pi;

GridFunction random_grid(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> nodal((n + 1) * (n + 1));
  for (double& v : nodal) v = u(rng);
  return GridFunction::from_nodal(n, n, 1.0 / n, nodal);
}
}  // namespace

TEST_CASE("lattice decomposition") {
  auto a = decompose(0.25, {0.30, 0.70});
  CHECK(a.corner.x == doctest::Approx(0.25));
  CHECK(a.corner.y == doctest::Approx(0.50));
  CHECK(a.fraction.x == doctest::Approx(0.20));
  CHECK(a.fraction.y == doctest::Approx(0.80));
  auto b = decompose(0.5, {0.5, 0.0});
  CHECK(b.corner.x == 0.5);
  CHECK(b.corner.y == 0.0);
  CHECK(b.fraction.x == 0.0);
  CHECK(b.fraction.y == 0.0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const Vec2 x{u(rng), u(rng)};
    for (double eps : {0.25, 1.0 / 3, 0.1, 1.0 / 32}) {
      const auto d = decompose(eps, x);
      CHECK(norm_inf(d.corner + d.fraction * eps - x) <= 1e-14);
      CHECK(d.fraction.x >= 0);
      CHECK(d.fraction.x < 1);
      CHECK(d.fraction.y >= 0);
      CHECK(d.fraction.y < 1);
    }
  }
}

TEST_CASE("cell index set") {
  auto a = cell_index_set(0.25, 1, 1);
  CHECK(a.size() == 16);
  CHECK(a.leftover_measure == 0.0);
  auto b = cell_index_set(0.25, 0.9, 1);
  CHECK(b.size() == 12);
  CHECK(b.leftover_measure == doctest::Approx(0.15));
  auto c = cell_index_set(1.0 / 3, 1, 1);
  CHECK(c.size() == 9);
  CHECK(c.leftover_measure == 0.0);
}

TEST_CASE("unfolding identities on random grid functions") {
  std::mt19937_64 rng(42);
  for (int s = 0; s < 100; ++s) {
    const GridFunction u = random_grid(rng, 64);
    for (double eps : {0.25, 0.125}) {
      const UnfoldedFunction t = unfold(eps, u);
      CHECK(std::abs(t.integral() - u.integral()) <= 1e-12 * std::abs(u.integral()) + 1e-15);
      CHECK(unfold_isometry_check(eps, u, PNorm::L2) <= 1e-12);
      CHECK(unfold_isometry_check(eps, u, PNorm::L1) <= 1e-12);
      CHECK(unfold_isometry_check(eps, u, PNorm::LInf) == 0.0);
    }
  }
}

TEST_CASE("unfolding is linear and multiplicative") {
  std::mt19937_64 rng(9);
  const GridFunction u = random_grid(rng, 32), v = random_grid(rng, 32);
  const double eps = 0.25;
  const UnfoldedFunction tu = unfold(eps, u), tv = unfold(eps, v);
  const UnfoldedFunction lin = unfold(eps, u.combine(2.0, v, -3.0));
  const UnfoldedFunction prod = unfold(eps, u * v);
  for (int k = 0; k < 16; ++k)
    for (int j = 0; j < 8; ++j)
      for (int i = 0; i < 8; ++i)
        for (int q = 0; q < 4; ++q) {
          const int kx = k % 4, ky = k / 4;
          CHECK(lin.gauss(kx, ky, i, j, q) ==
                doctest::Approx(2 * tu.gauss(kx, ky, i, j, q) - 3 * tv.gauss(kx, ky, i, j, q)).epsilon(1e-14));
          CHECK(prod.gauss(kx, ky, i, j, q) == tu.gauss(kx, ky, i, j, q) * tv.gauss(kx, ky, i, j, q));
        }
}

TEST_CASE("unfold examples") {
  const double eps = 0.125;
  const GridFunction one = GridFunction::from_function(64, 64, 1.0 / 64, [](Vec2) { return 1.0; });
  const UnfoldedFunction t1 = unfold(eps, one);
  CHECK(t1.norm(PNorm::LInf) == 1.0);
  const GridFunction s = GridFunction::from_function(64, 64, 1.0 / 64, [&](Vec2 x) { return std::sin(2 * pi * x.x / eps); });
  const UnfoldedFunction ts = unfold(eps, s);
  for (int k = 0; k < 64; ++k)
    for (int i = 0; i <= 8; ++i)
      CHECK(std::abs(ts.nodal(k % 8, k / 8, i, 3) - std::sin(2 * pi * i / 8.0)) <= 1e-12);
  CHECK_THROWS_AS(unfold(0.1, one), Error);
  CHECK_THROWS_AS(unfold(3.0 / 64, one), Error);
}

TEST_CASE("two-scale pairing sanity") {
  for (double eps : {0.25, 0.125, 1.0 / 16}) {
    const int n = static_cast<int>(std::lround(16 / eps));
    const GridFunction u =
        GridFunction::from_function(n, n, 1.0 / n, [&](Vec2 x) { return std::sin(2 * pi * x.x / eps); });
    const TestFunction phi{TestFunction::MacroFactor::One, TestFunction::MicroFactor::Sin2PiY1};
    CHECK(std::abs(two_scale_pairing(eps, u, phi) - 0.5) <= 2e-3);

    // indicator of the perforated domain
    std::vector<std::uint8_t> mask(n * n, 1);
    for (int e = 0; e < n * n; ++e) {
      const double yi = (e % n) % 16, yj = (e / n) % 16;
      if (yi >= 6 && yi < 10 && yj >= 6 && yj < 10) mask[e] = 0;
    }
    const GridFunction chi = GridFunction::from_function(n, n, 1.0 / n, [](Vec2) { return 1.0; }, mask);
    const TestFunction one{};
    CHECK(std::abs(two_scale_pairing(eps, chi, one) - 15.0 / 16) <= 1e-3);
  }
  const GridFunction one = GridFunction::from_function(32, 32, 1.0 / 32, [](Vec2) { return 1.0; });
  const TestFunction cx{TestFunction::MacroFactor::X1, TestFunction::MicroFactor::One};
  CHECK(two_scale_pairing(0.25, one, cx) == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(test_battery().size() == 12);
}

TEST_CASE("two-scale error of oscillating products decreases at first order") {
  auto g = [](Vec2 x) { return 1 + x.x * x.y; };
  auto hfn = [](Vec2 y) { return std::cos(2 * pi * y.x) + 0.5 * std::sin(2 * pi * y.y); };
  std::vector<double> errs;
  for (int n : {4, 8, 16, 32}) {
    const double eps = 1.0 / n;
    const int m = 8;
    const GridFunction u = GridFunction::from_function(n * m, n * m, eps / m,
                                                       [&](Vec2 x) { return g(x) * hfn(x * n); });
    errs.push_back(two_scale_error(eps, u, [&](Vec2 x, Vec2 y) { return g(x) * hfn(y); }));
  }
  double mean_order = 0;
  for (std::size_t i = 1; i < errs.size(); ++i) {
    CHECK(errs[i] < errs[i - 1]);
    mean_order += std::log2(errs[i - 1] / errs[i]) / (errs.size() - 1);
  }
  CHECK(mean_order >= 0.9);

  const GridFunction zero = GridFunction::from_function(16, 16, 1.0 / 16, [](Vec2) { return 0.0; });
  CHECK(two_scale_error(0.25, zero, [](Vec2, Vec2) { return 0.0; }) == 0.0);
  CHECK_THROWS_AS(two_scale_error(0.25, zero, CellSampler([](Vec2) { return std::vector<double>(9, 0.0); }), 2),
                  Error);
}

TEST_CASE("product of strong and weak two-scale sequences") {
  // u_eps = g(x) -> strong, v_eps = h(x/eps) -> weak; pairing of u v against phi
  // converges to int int g h phi.
  const TestFunction phi{TestFunction::MacroFactor::CosPiX1, TestFunction::MicroFactor::Cos2PiY1};
  const double exact = [] {
    // int_0^1 (1+x1) cos(pi x1) dx1 * int_Y cos(2 pi y1)^2 dy = (-2/pi^2) * 1/2
    return (-2.0 / (pi * pi)) * 0.5;
  }();
  double prev = 1e9;
  for (int n : {4, 8, 16}) {
    const double eps = 1.0 / n;
    const int N = n * 16;
    const GridFunction u = GridFunction::from_function(N, N, 1.0 / N, [](Vec2 x) { return 1 + x.x; });
    const GridFunction v =
        GridFunction::from_function(N, N, 1.0 / N, [&](Vec2 x) { return std::cos(2 * pi * x.x / eps); });
    const double gap = std::abs(two_scale_pairing(eps, u * v, phi) - exact);
    CHECK(gap <= prev + 1e-12);
    prev = gap;
  }
  CHECK(prev <= 1e-3);
}
