#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "calinv/calabi.hpp"
#include "calinv/expr.hpp"
#include "calinv/geom.hpp"
#include "calinv/hamflow.hpp"

// Fibered rotations of the plane: (r, theta) -> (r, theta + rho(r)) for an
// angular profile rho with bounded support. Closed-form commutators with the
// Liouville flow, commutator generators (printed formula and recovery
// oracle), Calabi values of smooth profiles, smoothing studies for singular
// profiles, and the angle-bound diagnostic.

namespace calinv::rot {

using geom::SupportBox;
using geom::Vec;

struct AngularProfile {
  std::function<double(double)> rho_fn;  // evaluated for 0 < r < R
  double R = 1.0;                        // support bound: rho = 0 for r >= R
  bool integrable_near_zero = true;
  bool r_rho_to_zero = true;
  bool bounded = true;

  double rho(double r) const { return (r <= 0.0 || r >= R) ? 0.0 : rho_fn(r); }

  /// Expression in the single variable r.
  static AngularProfile from_expression(const expr::Expression& e, double R,
                                        bool integrable = true, bool r_rho_zero = true,
                                        bool bounded = true);
};

Vec rotation_apply(const AngularProfile& profile, const Vec& point);
ham::MapRep rotation_map(const AngularProfile& profile);

/// Closed form [mu_t, phi]: (r, theta) -> (r, theta - rho(r) + rho(e^{-t/2} r)).
ham::MapRep rotation_commutator_map(const AngularProfile& profile, double t);

/// The printed commutator-generator formula
///   r rho(e^{-t/2} r) - (1/2) Int_0^r rho(e^{-t/2} s) ds,
/// quadrature tolerant of an integrable singularity at 0. Kept for
/// side-by-side reports; the recovery oracle below is the ground truth.
double commutator_hamiltonian_literal(const AngularProfile& profile, double t, double r,
                                      int panels = 48);

/// Radial oracle derived from the closed-form commutator flow:
///   H(t, r) = e^t [ (1/2) a^2 rho(a) + Int_a^R u rho(u) du ],  a = e^{-t/2} r.
double commutator_hamiltonian_derived(const AngularProfile& profile, double t, double r);

/// Generator recovered numerically from the closed-form commutator isotopy
/// on [0, delta]; the module's ground truth for the commutator Hamiltonian.
/// trace_steps controls the time-stencil step delta/trace_steps (the
/// velocity bias is quadratic in it); slice_stride > 1 recovers only every
/// stride-th slice while keeping the fine stencil.
ham::RecoveredHamiltonian commutator_hamiltonian_recovered(const AngularProfile& profile,
                                                           double delta, int trace_steps,
                                                           int res, int slice_stride = 1);

/// Flow of the recovered field against the closed-form commutator maps.
double recovered_flow_match(const ham::RecoveredHamiltonian& rec,
                            const AngularProfile& profile, double delta, int flow_steps,
                            int samples, std::uint64_t seed);

/// Max spread of slice values over the dihedral orbit of each grid node
/// (exact symmetry of the grid): a theta-independence measure.
double recovered_theta_variation(const ham::RecoveredHamiltonian& rec);

/// Autonomous radial generator h(|x|) of the rotation: h'(r) = -r rho(r),
/// h(R) = 0, with the exact gradient -rho(r) x.
ham::HamiltonianField rotation_generator(const AngularProfile& profile,
                                         int radial_res = 4096);

/// Cal of a smooth fibered rotation: 2 pi Int_0^R h(r) r dr.
cal::CalabiResult rotation_calabi_smooth(const AngularProfile& profile,
                                         int radial_res = 4096);

/// rho scaled by a smooth cutoff vanishing on [0, eps], equal to 1 on
/// [2 eps, infinity).
AngularProfile smoothed_profile(const AngularProfile& profile, double eps);

struct SingularStudyRow {
  double eps = 0.0;
  double map_distance = 0.0;      // C0 distance of the smoothed rotation to the original
  double ham_gap = 0.0;           // sup gap of commutator generators vs previous level
  double extended_calabi = 0.0;   // (1/(d+1)) Int of the recovered t=0 slice
  double extended_gap = 0.0;      // |value - previous value|
};
struct SingularStudyReport {
  std::vector<SingularStudyRow> rows;
  double closedness_residual = 0.0;
};
/// Smoothing study for a singular profile: Cauchy behavior of the maps, the
/// commutator generators, and the extended Calabi values as eps -> 0.
SingularStudyReport singular_profile_study(const AngularProfile& profile,
                                           const std::vector<double>& eps_list,
                                           double delta, int res, int trace_steps,
                                           int samples, std::uint64_t seed);

struct AngleBoundReport {
  std::vector<double> estimates;  // sup |rho| per radial refinement level
  double sup_angle = 0.0;
  bool obstructed = false;  // exceeded pi and still growing toward r = 0
};
AngleBoundReport angle_bound_diagnostic(const AngularProfile& profile,
                                        int samples_per_level = 64, int levels = 6);
/// Generic proxy for an arbitrary map: sup of the (wrapped) angle between a
/// point and its image over low-discrepancy samples.
AngleBoundReport angle_bound_diagnostic(const ham::MapRep& map, const SupportBox& box,
                                        int samples, std::uint64_t seed);

}  // namespace calinv::rot
