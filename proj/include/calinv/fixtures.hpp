#pragma once

#include <cmath>

#include "calinv/geom.hpp"
#include "calinv/hamflow.hpp"

// Shared bump fixtures with analytic gradients. Test suites and the
// verification harness use these so that heavy flow-based checks do not pay
// for finite-difference gradients.

namespace calinv::fixtures {

/// amplitude * (1 - |z-c|^2 / R^2)^3 inside the ball of radius R about c,
/// 0 outside. Smooth gradient supplied in closed form.
inline ham::HamiltonianField radial_bump(int n, double amplitude, double inner_radius,
                                         geom::Vec center = {},
                                         double box_radius = -1.0) {
  int d = 2 * n;
  if (center.empty()) center.assign(d, 0.0);
  double R2 = inner_radius * inner_radius;
  ham::HamiltonianField H;
  H.value_fn = [center, amplitude, R2](double, std::span<const double> x) {
    double rho = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double dxi = x[i] - center[i];
      rho += dxi * dxi;
    }
    double s = 1.0 - rho / R2;
    return s > 0 ? amplitude * s * s * s : 0.0;
  };
  H.gradient_fn = [center, amplitude, R2](double, std::span<const double> x,
                                          std::span<double> g) {
    double rho = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double dxi = x[i] - center[i];
      rho += dxi * dxi;
    }
    double s = 1.0 - rho / R2;
    double c = s > 0 ? -6.0 * amplitude * s * s / R2 : 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = c * (x[i] - center[i]);
  };
  H.support.center = center;
  H.support.radius = box_radius > 0 ? box_radius : inner_radius;
  H.autonomous = true;
  return H;
}

/// Exact Cal of radial_bump: amplitude * R^{2n} * 6 pi^n / (n+3)!.
/// (n=1: amplitude R^2 pi/4; n=2: amplitude R^4 pi^2/20.)
inline double radial_bump_calabi(int n, double amplitude, double inner_radius) {
  double pin = std::pow(4.0 * std::atan(1.0), n);
  double fact = 1.0;
  for (int k = 2; k <= n + 3; ++k) fact *= k;
  return amplitude * std::pow(inner_radius, 2 * n) * pin * 6.0 / fact;
}

}  // namespace calinv::fixtures
