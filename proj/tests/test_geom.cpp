#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "calinv/errors.hpp"
#include "calinv/geom.hpp"

using namespace calinv;
using geom::SupportBox;
using geom::Vec;

TEST_CASE("omega canonical pairing and antisymmetry") {
  Vec eq = {1, 0}, ep = {0, 1};
  CHECK(geom::omega(eq, ep) == 1.0);
  CHECK(geom::omega(ep, eq) == -1.0);

  Vec u = {1, 2, 3, 4}, v = {5, 6, 7, 8};
  CHECK(geom::omega(u, v) == -16.0);  // (1*7-3*5) + (2*8-4*6)

  std::mt19937 rng(7);
  std::uniform_real_distribution<double> dist(-2, 2);
  for (int k = 0; k < 20; ++k) {
    Vec w(6);
    for (auto& c : w) c = dist(rng);
    CHECK(geom::omega(w, w) == 0.0);
  }
  CHECK_THROWS_AS(geom::omega(Vec{1, 2}, Vec{1, 2, 3, 4}), std::invalid_argument);
}

TEST_CASE("liouville flow basics and group law") {
  geom::LiouvilleFlow mu{{0.0, 0.0}};
  Vec x = {0.4, -0.3};
  CHECK(mu.apply(0.0, x) == x);

  Vec doubled = mu.apply(2.0 * std::log(2.0), x);
  CHECK(doubled[0] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(doubled[1] == doctest::Approx(-0.6).epsilon(1e-15));

  geom::LiouvilleFlow shifted{{0.5, -0.25}};
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> dist(-1, 1);
  for (int k = 0; k < 100; ++k) {
    double s = dist(rng), t = dist(rng);
    Vec y = {dist(rng), dist(rng)};
    Vec a = shifted.apply(s, shifted.apply(t, y));
    Vec b = shifted.apply(s + t, y);
    for (int i = 0; i < 2; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-10);
  }
}

TEST_CASE("liouville conformal factor via finite differences") {
  geom::LiouvilleFlow mu{{0.1, 0.0, -0.2, 0.3}};
  double t = 0.35;
  auto map = [&](const Vec& x) { return mu.apply(t, x); };
  Vec x = {0.5, -0.4, 0.2, 0.7};
  auto J = geom::finite_difference_jacobian(map, x, 1e-5);
  CHECK(geom::conformal_defect(J, std::exp(t)) < 1e-6);
}

TEST_CASE("liouville volume scaling via box corners") {
  // Image of a box under mu_t scales each edge by e^{t/2}; the volume of the
  // image therefore scales by e^{nt} (here 2n = 2 coordinates, n = 1).
  geom::LiouvilleFlow mu{{0.0, 0.0}};
  double t = 0.4;
  Vec lo = {0.2, 0.3}, hi = {0.5, 0.9};
  Vec lo2 = mu.apply(t, lo), hi2 = mu.apply(t, hi);
  double vol = (hi[0] - lo[0]) * (hi[1] - lo[1]);
  double vol2 = (hi2[0] - lo2[0]) * (hi2[1] - lo2[1]);
  CHECK(std::abs(vol2 - std::exp(t) * vol) < 1e-12);
}

TEST_CASE("quadrature normalization on the unit box") {
  SupportBox box{{0.5, 0.5}, 0.5};
  auto one = [](const Vec&) { return 1.0; };
  geom::QuadOptions open;
  open.check_boundary = false;
  CHECK(geom::integrate(one, box, 16, geom::QuadRule::Midpoint, open) ==
        doctest::Approx(1.0).epsilon(1e-14));
  CHECK(geom::integrate(one, box, 16, geom::QuadRule::Simpson, open) ==
        doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("quadrature of the disk bump equals pi/4") {
  // 2*pi*Int_0^1 (1-r^2)^3 r dr = pi/4.
  SupportBox box{{0.0, 0.0}, 1.0};
  auto f = [](const Vec& x) {
    double s = 1.0 - x[0] * x[0] - x[1] * x[1];
    return s > 0 ? s * s * s : 0.0;
  };
  double expected = std::numbers::pi / 4.0;
  double got = geom::integrate(f, box, 128, geom::QuadRule::Simpson);
  CHECK(std::abs(got - expected) / expected < 2e-4);
  double mid = geom::integrate(f, box, 128, geom::QuadRule::Midpoint);
  CHECK(std::abs(mid - expected) / expected < 2e-3);
}

TEST_CASE("boundary check rejects non-vanishing integrands") {
  SupportBox box{{0.0, 0.0}, 1.0};
  auto f = [](const Vec&) { return 1.0; };
  CHECK_THROWS_AS(geom::integrate(f, box, 16, geom::QuadRule::Simpson), SupportError);
}

TEST_CASE("simpson error falls by roughly 16x under refinement") {
  SupportBox box{{0.0, 0.0}, 1.0};
  auto b = [](double s) {
    return std::abs(s) < 1 ? std::exp(1.0 - 1.0 / (1.0 - s * s)) : 0.0;
  };
  auto f = [b](const Vec& x) { return b(x[0]) * b(x[1]); };
  double ref = geom::integrate(f, box, 512, geom::QuadRule::Simpson);
  double e32 = std::abs(geom::integrate(f, box, 32, geom::QuadRule::Simpson) - ref);
  double e64 = std::abs(geom::integrate(f, box, 64, geom::QuadRule::Simpson) - ref);
  CHECK(e64 * 8.0 < e32);  // order >= 3 observed; nominal order 4 gives ~16x
}

TEST_CASE("quadrature linearity on shared grids") {
  SupportBox box{{0.0, 0.0}, 1.0};
  auto f = [](const Vec& x) {
    double s = 1.0 - x[0] * x[0] - x[1] * x[1];
    return s > 0 ? s * s : 0.0;
  };
  auto g = [](const Vec& x) {
    double s = 1.0 - std::max(std::abs(x[0]), std::abs(x[1]));
    return s > 0 ? s * s * x[0] : 0.0;
  };
  geom::QuadOptions open;
  open.check_boundary = false;
  double a = 2.0, b = -0.5;
  auto combo = [&](const Vec& x) { return a * f(x) + b * g(x); };
  double lhs = geom::integrate(combo, box, 32, geom::QuadRule::Simpson, open);
  double rhs = a * geom::integrate(f, box, 32, geom::QuadRule::Simpson, open) +
               b * geom::integrate(g, box, 32, geom::QuadRule::Simpson, open);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-14));
}

TEST_CASE("polar round trips") {
  Vec axis = geom::polar_to_cartesian(1.0, 0.0);
  CHECK(axis[0] == 1.0);
  CHECK(axis[1] == 0.0);

  auto pol = geom::cartesian_to_polar(Vec{0.0, 2.0});
  CHECK(pol.r == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(pol.theta == doctest::Approx(std::numbers::pi / 2).epsilon(1e-15));

  auto origin = geom::cartesian_to_polar(Vec{0.0, 0.0});
  CHECK(origin.r == 0.0);
  CHECK(origin.theta == 0.0);

  std::mt19937 rng(3);
  std::uniform_real_distribution<double> dist(-3, 3);
  for (int k = 0; k < 200; ++k) {
    Vec x = {dist(rng), dist(rng)};
    if (std::hypot(x[0], x[1]) < 1e-6) continue;
    auto p = geom::cartesian_to_polar(x);
    Vec back = geom::polar_to_cartesian(p.r, p.theta);
    CHECK(std::abs(back[0] - x[0]) < 1e-12);
    CHECK(std::abs(back[1] - x[1]) < 1e-12);
  }
}

TEST_CASE("grid field interpolation and integration") {
  auto g = geom::GridField::zeros({0.0, 0.0}, {1.0, 1.0}, {9, 9});
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j) {
      int idx[2] = {i, j};
      double x = i / 8.0, y = j / 8.0;
      g.at(std::span<const int>(idx, 2)) = x + 2.0 * y;
    }
  CHECK(g.interp(Vec{0.5, 0.5}) == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(g.interp(Vec{0.31, 0.77}) == doctest::Approx(0.31 + 1.54).epsilon(1e-12));
  CHECK(g.interp(Vec{1.5, 0.5}) == 0.0);  // outside reads as zero
  // Int (x + 2y) over the unit square = 0.5 + 1 = 1.5; Simpson is exact.
  CHECK(geom::integrate(g) == doctest::Approx(1.5).epsilon(1e-13));
}

TEST_CASE("halton sampling is deterministic and in-box") {
  SupportBox box{{0.25, -0.5}, 0.75};
  auto a = geom::sample_box(box, 64, 42);
  auto b = geom::sample_box(box, 64, 42);
  auto c = geom::sample_box(box, 64, 43);
  CHECK(a == b);
  CHECK(a != c);
  for (const auto& x : a) CHECK(box.contains(x));
}
