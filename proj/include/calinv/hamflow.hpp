#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "calinv/expr.hpp"
#include "calinv/geom.hpp"

// Hamiltonian vector fields and flows, phase-space map representations,
// isotopy traces, commutators with Liouville flows, C0 metrics, and the
// recovery of a generating Hamiltonian from an isotopy.
//
// Sign table (everything downstream inherits these):
//   iota(X_H) omega = dH           => X_H = (dH/dp, -dH/dq)
//   harmonic H=(q^2+p^2)/2         => flow (q,p) -> (q cos t + p sin t, -q sin t + p cos t)
//   radial H(r) in R^2             => d(theta)/dt = -H'(r)/r, r constant
//   fibered rotation by rho        => autonomous generator h with h'(r) = -r rho(r), h(R)=0
//   inverse of flow of F           => generated by -F(t, phi_F^t(x))
//   phi_F^t o phi_G^t              => generated by F(t,x) + G(t, (phi_F^t)^{-1}(x))
//   f^{-1} o phi_F^t o f           => generated by F(t, f(x))
//   Liouville conj mu_d o phi o mu_d^{-1} => generated by e^d H(t, mu_d^{-1}(x))

namespace calinv::ham {

using geom::SupportBox;
using geom::Vec;

// Resolved orientation constants. Mutable only so that tests can tamper with
// a sign and observe the verification checks fail.
struct Conventions {
  int iota_sign = +1;  // +1: iota(X_H) omega = +dH
  int hj_sigma = +1;   // Hamilton-Jacobi sign, fixed by the flow oracle
};
Conventions& conventions();

// Time-dependent scalar field H(t, x) with declared compact support.
// `gradient_fn` is optional; when absent, gradients come from central
// differences of `value_fn` with step h_fd.
struct HamiltonianField {
  std::function<double(double, std::span<const double>)> value_fn;
  std::function<void(double, std::span<const double>, std::span<double>)> gradient_fn;
  SupportBox support;
  double t0 = 0.0, t1 = 1.0;
  bool autonomous = false;
  double h_fd = 1e-4;

  double value(double t, std::span<const double> x) const { return value_fn(t, x); }
  void gradient(double t, std::span<const double> x, std::span<double> out) const;

  static HamiltonianField zero(const SupportBox& box);
  /// Expression over variables (t, q1..qn, p1..pn).
  static HamiltonianField from_expression(const expr::Expression& e, int n,
                                          const SupportBox& box, bool autonomous = false);
  HamiltonianField scaled(double factor) const;
};

/// X_H = iota_sign * (dH/dp, -dH/dq); zero outside the padded support box.
Vec vector_field(const HamiltonianField& H, double t, const Vec& x);

/// Classical fixed-step 4th-order integration of X_H from t0 to t1
/// (backwards when t1 < t0). Points outside the padded support stay put.
Vec flow(const HamiltonianField& H, double t0, double t1, Vec x, int steps);

struct FlowCheck {
  Vec value;           // finer result
  double discrepancy;  // |coarse - fine|_inf, a Richardson error estimate
};
/// Integrates with `steps` and `2*steps`; throws ResolutionError when the
/// step-halving disagreement exceeds tol.
FlowCheck flow_checked(const HamiltonianField& H, double t0, double t1, const Vec& x,
                       int steps, double tol);

// Phase-space map with forward and inverse application. Kind is metadata
// ("flow", "liouville", "composition", ...) used in reports.
class MapRep {
 public:
  MapRep() = default;
  MapRep(std::string kind, std::function<Vec(const Vec&)> fwd,
         std::function<Vec(const Vec&)> inv, SupportBox support);

  Vec apply(const Vec& x) const { return fwd_(x); }
  Vec apply_inverse(const Vec& x) const { return inv_(x); }
  MapRep inverse() const;
  const std::string& kind() const { return kind_; }
  const SupportBox& support() const { return support_; }

  static MapRep identity(const SupportBox& box);
  static MapRep from_flow(const HamiltonianField& H, double t0, double t1, int steps);
  static MapRep liouville(const geom::LiouvilleFlow& flow, double t, const SupportBox& box);
  static MapRep compose(const MapRep& outer, const MapRep& inner);
  static MapRep compose(const std::vector<MapRep>& chain);  // chain[0] applied last
  /// k-fold iterate; throws when k exceeds the budget.
  static MapRep iterate(const MapRep& m, int k, int budget = 10000);
  /// Homothety x -> about + factor (x - about).
  static MapRep homothety(const Vec& about, double factor, const SupportBox& box);

 private:
  std::string kind_;
  std::function<Vec(const Vec&)> fwd_, inv_;
  SupportBox support_;
};

// Generator algebra. Validated formulas are the ones selected by the
// flow-composition oracle; Literal keeps the alternate argument maps for
// side-by-side reports.
enum class AlgebraVariant { Validated, Literal };

HamiltonianField inverse_hamiltonian(const HamiltonianField& F, int steps = 32,
                                     AlgebraVariant variant = AlgebraVariant::Validated);
HamiltonianField compose_hamiltonian(const HamiltonianField& F, const HamiltonianField& G,
                                     int steps = 32,
                                     AlgebraVariant variant = AlgebraVariant::Validated);
HamiltonianField conjugate_hamiltonian(const HamiltonianField& F, const MapRep& f,
                                       const SupportBox& result_box);

// Time-sampled family of maps on [0, delta] with a common support box.
struct IsotopyTrace {
  std::vector<double> times;
  std::vector<MapRep> maps;
  SupportBox support;
};

/// Trace of t -> [mu_t, phi] = mu_t o phi o mu_t^{-1} o phi^{-1} on [0, delta].
/// Throws SupportError if the commutator support escapes `working`, when given.
IsotopyTrace commutator_isotopy(const MapRep& phi, double delta,
                                const geom::LiouvilleFlow& mu, int steps,
                                const SupportBox* working = nullptr);

/// Sup over low-discrepancy samples of |f(x) - g(x)|_2 (C0 seminorm estimate).
double c0_distance(const MapRep& f, const MapRep& g, const SupportBox& box,
                   int samples, std::uint64_t seed);

struct RecoveryOptions {
  int res = 64;                 // cells per axis of the output grid
  std::vector<int> slices;      // time indices to recover; empty = all
};

// Generating Hamiltonian recovered from an isotopy: per selected time,
// the velocity 1-form iota_V omega sampled on a grid (stored as the
// gradient) and its potential integrated from the box boundary.
struct RecoveredHamiltonian {
  std::vector<double> times;
  std::vector<geom::GridField> value_slices;
  std::vector<std::vector<geom::GridField>> gradient_slices;  // [slice][axis]
  double closedness_residual = 0.0;  // max |loop integral| over grid plaquettes
  SupportBox box;

  /// Field interpolating linearly in t between slices (clamped at the ends).
  HamiltonianField field() const;
};

RecoveredHamiltonian hamiltonian_from_isotopy(const IsotopyTrace& trace,
                                              const SupportBox& box,
                                              const RecoveryOptions& opts);

// Shared helper: potential of a sampled 1-form alpha on a node grid over
// `box` (res cells per axis), integrated along axis 0 from the lower
// boundary with composite Simpson on half-step samples. Also returns the
// max plaquette loop integral (exactness residual) and the node samples of
// alpha itself.
struct PotentialFromOneForm {
  geom::GridField value;
  std::vector<geom::GridField> alpha;  // per axis, on the same nodes
  double loop_residual = 0.0;
};
PotentialFromOneForm potential_from_one_form(
    const std::function<Vec(const Vec&)>& alpha, const SupportBox& box, int res);

}  // namespace calinv::ham
