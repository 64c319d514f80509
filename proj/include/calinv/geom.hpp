#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "calinv/errors.hpp"

// Phase-space geometry on R^{2n}: the standard form omega = sum dq_i ^ dp_i,
// Liouville flows about a configurable center, sup-norm support boxes,
// tensor-grid quadrature, grid-backed scalar fields, polar coordinates, and
// low-discrepancy sampling.
//
// Points and tangent vectors are plain vectors of length 2n ordered
// (q1..qn, p1..pn). The volume form used everywhere is the top power of
// omega normalized to the standard Lebesgue volume dq1 dp1 ... dqn dpn
// (no factorial factor).

namespace calinv::geom {

using Vec = std::vector<double>;

/// omega(u, v) = sum_i u_qi v_pi - u_pi v_qi. Throws on odd or mismatched lengths.
double omega(std::span<const double> u, std::span<const double> v);

// Sup-norm box { x : |x - center|_inf <= radius }. All declared fields of a
// scenario vanish outside their box; `padding` is slack used by flows and
// finite differences (default 10% of radius).
struct SupportBox {
  Vec center;
  double radius = 1.0;
  double padding = -1.0;  // negative = default 0.1 * radius

  int dim() const { return static_cast<int>(center.size()); }
  double pad() const { return padding < 0 ? 0.1 * radius : padding; }
  double lo(int axis) const { return center[axis] - radius; }
  double hi(int axis) const { return center[axis] + radius; }
  bool contains(std::span<const double> x, double extra = 0.0) const;
  SupportBox padded() const { return {center, radius + pad(), 0.0}; }
  SupportBox expanded(double extra) const { return {center, radius + extra, padding}; }
  /// Image of this box under x -> about + factor (x - about), grown to a box.
  SupportBox scaled_about(const Vec& about, double factor) const;
  static SupportBox hull(const SupportBox& a, const SupportBox& b);
};

// Flow of the Liouville (radial) vector field X(x) = (x - center)/2:
// mu_t(x) = center + e^{t/2} (x - center). A nonzero center realizes an
// alternate Liouville field for the invariance checks.
struct LiouvilleFlow {
  Vec center;
  Vec apply(double t, std::span<const double> x) const;
};

enum class QuadRule { Midpoint, Simpson };

struct QuadOptions {
  bool check_boundary = true;   // reject integrands visible on the box boundary
  double boundary_tol = 1e-7;
};

/// Tensor-grid quadrature of f over the box against the standard volume.
/// cells_per_axis >= 8; Simpson requires an even cell count.
double integrate(const std::function<double(const Vec&)>& f, const SupportBox& box,
                 int cells_per_axis, QuadRule rule, const QuadOptions& opts = {});

// Scalar samples on a uniform node grid over an axis-aligned box.
// Values are multilinearly interpolated and read as 0 outside the domain.
struct GridField {
  Vec lo, hi;                // per-axis bounds
  std::vector<int> shape;    // nodes per axis, >= 2
  std::vector<double> values;  // row-major, last axis fastest

  int dim() const { return static_cast<int>(shape.size()); }
  double spacing(int axis) const { return (hi[axis] - lo[axis]) / (shape[axis] - 1); }
  std::size_t index(std::span<const int> idx) const;
  double& at(std::span<const int> idx) { return values[index(idx)]; }
  double at(std::span<const int> idx) const { return values[index(idx)]; }
  double node_coord(int axis, int i) const { return lo[axis] + spacing(axis) * i; }
  double interp(std::span<const double> x) const;

  static GridField zeros(const Vec& lo, const Vec& hi, const std::vector<int>& shape);
};

/// Simpson integration of node samples over the grid domain (odd node counts).
double integrate(const GridField& field, QuadRule rule = QuadRule::Simpson);

struct Polar { double r; double theta; };
Vec polar_to_cartesian(double r, double theta);
Polar cartesian_to_polar(std::span<const double> x);  // theta = 0 at the origin

/// Central-difference Jacobian of a map R^m -> R^m; J[i][j] = d f_i / d x_j.
std::vector<Vec> finite_difference_jacobian(const std::function<Vec(const Vec&)>& f,
                                            const Vec& x, double h);

/// max_ij | (J^T Omega J - factor * Omega)_ij |; factor 1 tests symplecticity,
/// factor e^t tests the conformal scaling of a Liouville-time-t map.
double conformal_defect(const std::vector<Vec>& jacobian, double factor);

/// Halton point in [0,1)^dim (1-based index).
Vec halton_point(std::uint64_t index, int dim);

/// Deterministic low-discrepancy samples inside the box; the seed offsets the
/// Halton index so distinct seeds give distinct, reproducible point sets.
std::vector<Vec> sample_box(const SupportBox& box, int count, std::uint64_t seed);

}  // namespace calinv::geom
