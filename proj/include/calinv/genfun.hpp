#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "calinv/expr.hpp"
#include "calinv/geom.hpp"
#include "calinv/hamflow.hpp"

// The global chart on pairs of phase points, the generating-function <-> map
// correspondence Psi and its inverse, admissibility checking, mollification,
// Liouville-conjugated generating functions, Hamilton-Jacobi fields, and the
// numerical map -> S construction through the section of the chart graph.
//
// Chart: ((x,y),(xi,eta)) -> (base, fiber) = ((x,eta), (y-eta, xi-x)) with
// x,y,xi,eta in R^n. A function S(x,eta) generates the map
//   (x,y) -> (xi,eta)  with  xi = x + dS/deta,  y = eta + dS/dx.

namespace calinv::gen {

using geom::SupportBox;
using geom::Vec;

struct ChartImage {
  Vec base;   // (x, eta), length 2n
  Vec fiber;  // (y - eta, xi - x), length 2n
};
ChartImage chart_forward(std::span<const double> z1, std::span<const double> z2);
std::pair<Vec, Vec> chart_backward(std::span<const double> base,
                                   std::span<const double> fiber);

struct SolveParams {
  double tol = 1e-12;
  int max_iter = 200;
  double contraction_threshold = 0.9;  // Hessian bound gate for fixed point
  enum class Method { Auto, FixedPoint, Bisection };
  Method method = Method::Auto;
};

// C1 scalar S(x, eta) with compact support; expression-, closure-, or
// grid-backed. Grid-backed functions interpolate values multilinearly and
// read gradients from stored slope grids.
class GeneratingFunction {
 public:
  GeneratingFunction() = default;

  double value(std::span<const double> base) const;
  void gradient(std::span<const double> base, std::span<double> out) const;
  int n() const;
  const SupportBox& support() const;

  /// Cached estimate of max |second partial| over a sample grid; gates the
  /// fixed-point solver.
  double hessian_bound() const;
  /// Cached max |gradient|_inf over a sample grid; brackets the bisection.
  double gradient_bound() const;

  /// Expression over (x1..xn, eta1..etan); gradients by central differences.
  static GeneratingFunction from_expression(const expr::Expression& e, int n,
                                            const SupportBox& support,
                                            double h_fd = 1e-5);
  static GeneratingFunction from_closure(
      std::function<double(std::span<const double>)> value,
      std::function<void(std::span<const double>, std::span<double>)> gradient,
      const SupportBox& support, double h_fd = 1e-5);
  static GeneratingFunction from_grids(geom::GridField value,
                                       std::vector<geom::GridField> slopes,
                                       const SupportBox& support);

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

/// (x,y) -> (xi,eta): solves eta = y - dS/dx(x,eta), then xi = x + dS/deta.
Vec psi_apply(const GeneratingFunction& S, const Vec& z, const SolveParams& = {});
/// (xi,eta) -> (x,y): solves x = xi - dS/deta(x,eta), then y = eta + dS/dx.
Vec psi_inverse_apply(const GeneratingFunction& S, const Vec& w, const SolveParams& = {});
ham::MapRep psi_map(const GeneratingFunction& S, const SolveParams& = {});

struct AdmissibilityReport {
  bool pass = false;
  double min_slope = 0.0;  // worst difference quotient over all checked lines
  Vec worst_location;      // grid point realizing it
  int worst_axis = -1;     // 0..n-1: x_i line; n..2n-1: eta_i line
};
/// Checks x_i -> x_i + dS/deta_i and eta_i -> eta_i + dS/dx_i strictly
/// increasing along every grid line (res >= 32 cells per axis).
AdmissibilityReport admissibility_check(const GeneratingFunction& S, int res = 32);

// Nonnegative unit-mass kernel supported in the unit ball of R^{2n},
// shrunk by the scale k: chi_k(u) = k^{2n} chi(k u).
struct MollifierKernel {
  int k = 8;
  std::function<double(std::span<const double>)> chi;
  static MollifierKernel radial(int k, int dim);
  /// Quadrature mass of chi over the unit ball (should be 1).
  double mass(int dim, int res = 64) const;
};

/// Discrete convolution with chi_k on a node grid; support grows by at most
/// 1/k; admissible inputs stay admissible (convex combinations of increasing
/// slices are increasing). Throws when the grid cannot resolve 1/k.
GeneratingFunction mollify(const GeneratingFunction& S, const MollifierKernel& kernel,
                           int out_res, int kernel_res = 9);

/// e^t S(e^{-t/2} x, e^{-t/2} eta); Psi of it equals mu_t o Psi(S) o mu_t^{-1}
/// for the center-0 Liouville flow.
GeneratingFunction liouville_conjugated_genfun(const GeneratingFunction& S, double t);

// C1 path of generating functions with its native time step for d/dt.
struct GeneratingPath {
  std::function<GeneratingFunction(double)> at;
  double t0 = 0.0, t1 = 1.0;
  double dt = 1e-3;
};

/// sigma * dS_t/dt evaluated at (x-part of Psi(S_t)^{-1}(w), momentum of w).
/// sigma defaults to the module conventions (resolved by the flow oracle).
double hamilton_jacobi_hamiltonian(const GeneratingPath& path, double t, const Vec& w,
                                   const SolveParams& = {}, int sigma = 0);
ham::HamiltonianField hamilton_jacobi_field(const GeneratingPath& path,
                                            const SupportBox& box,
                                            const SolveParams& = {}, int sigma = 0);

struct HjSignResolution {
  int sigma = 0;              // winner
  double residual_plus = 0.0;  // flow-match C0 error with sigma = +1
  double residual_minus = 0.0;
};
/// Flows both candidate fields against t -> Psi(S_t) and picks the sign that
/// reproduces the path.
HjSignResolution resolve_hj_sign(const GeneratingPath& path, const SupportBox& box,
                                 int flow_steps = 40, int samples = 40,
                                 const SolveParams& = {});

struct GenfunFromMapResult {
  GeneratingFunction S;
  double exactness_residual = 0.0;  // max plaquette loop integral of the section
};
/// Solves the chart section of phi per base point, stores the fiber as a
/// 1-form, integrates it to S, and reports the exactness residual.
GenfunFromMapResult genfun_from_map(const ham::MapRep& phi, const SupportBox& base_box,
                                    int res, const SolveParams& = {});

}  // namespace calinv::gen
