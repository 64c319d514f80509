#pragma once

#include <string>
#include <vector>

#include "calinv/geom.hpp"
#include "calinv/hamflow.hpp"

// The Calabi invariant: time-and-space quadrature of a generating
// Hamiltonian, Liouville-conjugation scaling, the commutator route to the
// extended invariant, the C0 counterexample sequence, and invariance under
// a change of Liouville center.

namespace calinv::cal {

struct CalabiResult {
  double value = 0.0;
  std::string method;        // "eq1-quadrature" | "commutator-limit" | "extended"
  int grid = 0;
  int time_steps = 0;
  double error_estimate = 0.0;  // |finest - next-to-finest resolution|
};

struct QuadParams {
  int grid = 64;        // cells per spatial axis (even)
  int time_steps = 8;   // Simpson intervals over [t0, t1]
  int flow_steps = 32;  // integration steps for generator-algebra flows
};

/// Cal(H) = Int_0^1 Int H(t, x) dvol dt over the declared support box.
/// Linear in H; the time integral collapses for autonomous fields.
CalabiResult calabi_eq1(const ham::HamiltonianField& H, const QuadParams& params = {});

struct HomomorphismReport {
  double cal_f = 0.0, cal_g = 0.0, cal_compose = 0.0, cal_inverse_f = 0.0;
  double additivity_defect = 0.0;  // |Cal(F#G) - Cal F - Cal G|
  double inverse_defect = 0.0;     // |Cal(F^-1 generator) + Cal F|
  double error_estimate = 0.0;
};
HomomorphismReport homomorphism_check(const ham::HamiltonianField& F,
                                      const ham::HamiltonianField& G,
                                      const QuadParams& params = {},
                                      ham::AlgebraVariant variant =
                                          ham::AlgebraVariant::Validated);

/// e^delta H(t, mu_delta^{-1}(x)): the generator of mu_delta o phi_H^t o
/// mu_delta^{-1}. Cal scales by e^{(d+1) delta}; support scales by e^{delta/2}.
ham::HamiltonianField liouville_conjugated_hamiltonian(const ham::HamiltonianField& H,
                                                       double delta,
                                                       const geom::LiouvilleFlow& mu);

struct CommutatorCalabiReport {
  double cal_phi = 0.0;  // Cal of the base element
  double direct = 0.0;   // Eq.-(1) quadrature of the composed commutator generator
  double law = 0.0;      // (e^{(d+1) delta} - 1) Cal(phi)
  double gap = 0.0;
};
/// Cal([mu_delta, phi_H^1]) two ways: composed-generator quadrature vs the
/// conformal scaling law.
CommutatorCalabiReport commutator_calabi(const ham::HamiltonianField& H, double delta,
                                         const geom::LiouvilleFlow& mu,
                                         const QuadParams& params = {});

/// Extended value (1/(d+1)) Int H0_slice dvol for a recovered t=0 slice.
CalabiResult extended_calabi(const geom::GridField& slice, int n);

struct ExtendedFromCommutatorResult {
  std::vector<double> deltas;
  std::vector<double> values;       // extended Calabi per delta
  double extrapolated = 0.0;        // Richardson limit (order 2 in delta)
  double closedness_residual = 0.0;
};
/// Extended Calabi of phi from the t=0 slice of the generator recovered from
/// the commutator isotopy [mu_t, phi] on [0, delta], per delta, with the
/// delta -> 0 limit taken by Richardson extrapolation.
ExtendedFromCommutatorResult extended_calabi_from_commutator(
    const ham::MapRep& phi, const geom::LiouvilleFlow& mu,
    const std::vector<double>& deltas, const geom::SupportBox& recovery_box, int res,
    int trace_steps, int n);

/// h_n^{-1} o phi^{n^4} o h_n with h_n the homothety x -> n x: shrinking
/// supports and C0 collapse to the identity at constant Calabi (R^2 only).
ham::MapRep counterexample_sequence(const ham::MapRep& phi, int n, int budget = 10000);

/// Generator of counterexample_sequence(flow of H, n) when H is autonomous
/// on R^2: n^2 H(n x), supported in the 1/n-scaled box.
ham::HamiltonianField counterexample_generator(const ham::HamiltonianField& H, int n);

}  // namespace calinv::cal
