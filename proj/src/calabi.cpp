#include "calinv/calabi.hpp"

#include <cmath>
#include <stdexcept>

#include "calinv/errors.hpp"

namespace calinv::cal {

using geom::SupportBox;
using geom::Vec;
using ham::HamiltonianField;
using ham::MapRep;

namespace {

double space_integral(const HamiltonianField& H, double t, int grid) {
  auto f = [&H, t](const Vec& x) { return H.value(t, x); };
  return geom::integrate(f, H.support, grid, geom::QuadRule::Simpson);
}

double eq1_at(const HamiltonianField& H, int grid, int time_steps) {
  if (H.autonomous) return (H.t1 - H.t0) * space_integral(H, H.t0, grid);
  if (time_steps % 2 != 0)
    throw std::invalid_argument("calabi_eq1: time_steps must be even");
  double h = (H.t1 - H.t0) / time_steps;
  double acc = 0.0;
  for (int k = 0; k <= time_steps; ++k) {
    double w = (k == 0 || k == time_steps) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    acc += w * space_integral(H, H.t0 + k * h, grid);
  }
  return acc * h / 3.0;
}

}  // namespace

CalabiResult calabi_eq1(const HamiltonianField& H, const QuadParams& params) {
  CalabiResult out;
  out.method = "eq1-quadrature";
  out.grid = params.grid;
  out.time_steps = params.time_steps;
  double fine = eq1_at(H, params.grid, params.time_steps);
  out.value = fine;
  if (params.grid / 2 >= 8) {
    int coarse_t = std::max(2, params.time_steps / 2);
    if (coarse_t % 2 != 0) ++coarse_t;
    double coarse = eq1_at(H, params.grid / 2, coarse_t);
    out.error_estimate = std::abs(fine - coarse);
  }
  return out;
}

HomomorphismReport homomorphism_check(const HamiltonianField& F,
                                      const HamiltonianField& G,
                                      const QuadParams& params,
                                      ham::AlgebraVariant variant) {
  HomomorphismReport rep;
  CalabiResult cf = calabi_eq1(F, params);
  CalabiResult cg = calabi_eq1(G, params);
  HamiltonianField FG = ham::compose_hamiltonian(F, G, params.flow_steps, variant);
  CalabiResult cfg = calabi_eq1(FG, params);
  HamiltonianField Finv = ham::inverse_hamiltonian(F, params.flow_steps, variant);
  CalabiResult cinv = calabi_eq1(Finv, params);

  rep.cal_f = cf.value;
  rep.cal_g = cg.value;
  rep.cal_compose = cfg.value;
  rep.cal_inverse_f = cinv.value;
  rep.additivity_defect = std::abs(cfg.value - cf.value - cg.value);
  rep.inverse_defect = std::abs(cinv.value + cf.value);
  rep.error_estimate = std::max({cf.error_estimate, cg.error_estimate,
                                 cfg.error_estimate, cinv.error_estimate});
  return rep;
}

HamiltonianField liouville_conjugated_hamiltonian(const HamiltonianField& H,
                                                  double delta,
                                                  const geom::LiouvilleFlow& mu) {
  double scale = std::exp(delta);
  HamiltonianField out;
  out.value_fn = [H, mu, delta, scale](double t, std::span<const double> x) {
    return scale * H.value(t, mu.apply(-delta, x));
  };
  if (H.gradient_fn) {
    double grad_scale = std::exp(0.5 * delta);
    out.gradient_fn = [H, mu, delta, grad_scale](double t, std::span<const double> x,
                                                 std::span<double> g) {
      Vec y = mu.apply(-delta, x);
      H.gradient(t, y, g);
      for (auto& v : g) v *= grad_scale;
    };
  }
  out.support = H.support.scaled_about(mu.center, std::exp(0.5 * delta));
  out.t0 = H.t0;
  out.t1 = H.t1;
  out.autonomous = H.autonomous;
  return out;
}

CommutatorCalabiReport commutator_calabi(const HamiltonianField& H, double delta,
                                         const geom::LiouvilleFlow& mu,
                                         const QuadParams& params) {
  CommutatorCalabiReport rep;
  int d = H.support.dim() / 2;
  rep.cal_phi = calabi_eq1(H, params).value;
  rep.law = (std::exp((d + 1) * delta) - 1.0) * rep.cal_phi;

  // [mu_delta, phi] = (mu_delta o phi o mu_delta^{-1}) o phi^{-1}; its
  // generator is the conjugated generator composed with the inverse one.
  HamiltonianField K = liouville_conjugated_hamiltonian(H, delta, mu);
  HamiltonianField Hinv = ham::inverse_hamiltonian(H, params.flow_steps);
  HamiltonianField C = ham::compose_hamiltonian(K, Hinv, params.flow_steps);
  rep.direct = calabi_eq1(C, params).value;
  rep.gap = std::abs(rep.direct - rep.law);
  return rep;
}

CalabiResult extended_calabi(const geom::GridField& slice, int n) {
  CalabiResult out;
  out.method = "extended";
  out.grid = slice.shape[0] - 1;
  out.value = geom::integrate(slice) / (n + 1);
  return out;
}

ExtendedFromCommutatorResult extended_calabi_from_commutator(
    const MapRep& phi, const geom::LiouvilleFlow& mu, const std::vector<double>& deltas,
    const SupportBox& recovery_box, int res, int trace_steps, int n) {
  ExtendedFromCommutatorResult out;
  out.deltas = deltas;
  for (double delta : deltas) {
    ham::IsotopyTrace trace = ham::commutator_isotopy(phi, delta, mu, trace_steps);
    ham::RecoveryOptions opts;
    opts.res = res;
    opts.slices = {0};  // only the t=0 slice enters the extended value
    auto rec = ham::hamiltonian_from_isotopy(trace, recovery_box, opts);
    out.values.push_back(extended_calabi(rec.value_slices[0], n).value);
    out.closedness_residual = std::max(out.closedness_residual, rec.closedness_residual);
  }
  // One-sided time differencing makes the per-delta bias O(delta^2); a
  // two-point Richardson step on the two smallest deltas removes it.
  std::size_t m = deltas.size();
  if (m >= 2) {
    double d_prev = deltas[m - 2], d_last = deltas[m - 1];
    double r = d_prev / d_last;
    out.extrapolated = out.values[m - 1] +
                       (out.values[m - 1] - out.values[m - 2]) / (r * r - 1.0);
  } else {
    out.extrapolated = out.values.back();
  }
  return out;
}

MapRep counterexample_sequence(const MapRep& phi, int n, int budget) {
  if (n < 1) throw std::invalid_argument("counterexample_sequence: n >= 1");
  if (phi.support().dim() != 2)
    throw std::invalid_argument("counterexample_sequence: R^2 only");
  if (n == 1) return phi;
  long long iterates = static_cast<long long>(n) * n * n * n;
  if (iterates > budget)
    throw std::invalid_argument("counterexample_sequence: iterate budget exceeded");
  Vec origin(phi.support().dim(), 0.0);
  SupportBox shrunk = phi.support().scaled_about(origin, 1.0 / n);
  MapRep grow = MapRep::homothety(origin, static_cast<double>(n), phi.support());
  MapRep chain = MapRep::compose(
      {grow.inverse(), MapRep::iterate(phi, static_cast<int>(iterates), budget), grow});
  return MapRep("counterexample", [chain](const Vec& x) { return chain.apply(x); },
                [chain](const Vec& x) { return chain.apply_inverse(x); }, shrunk);
}

HamiltonianField counterexample_generator(const HamiltonianField& H, int n) {
  if (!H.autonomous)
    throw std::invalid_argument("counterexample_generator: autonomous generators only");
  if (H.support.dim() != 2)
    throw std::invalid_argument("counterexample_generator: R^2 only");
  if (n == 1) return H;
  double factor = static_cast<double>(n) * n;
  HamiltonianField out;
  out.value_fn = [H, n, factor](double t, std::span<const double> x) {
    Vec y(x.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = n * x[i];
    return factor * H.value(t, y);
  };
  if (H.gradient_fn) {
    out.gradient_fn = [H, n, factor](double t, std::span<const double> x,
                                     std::span<double> g) {
      Vec y(x.size());
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = n * x[i];
      H.gradient(t, y, g);
      for (auto& v : g) v *= factor * n;
    };
  }
  Vec origin(H.support.dim(), 0.0);
  out.support = H.support.scaled_about(origin, 1.0 / n);
  out.t0 = H.t0;
  out.t1 = H.t1;
  out.autonomous = true;
  return out;
}

}  // namespace calinv::cal
