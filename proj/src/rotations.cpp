#include "calinv/rotations.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "calinv/errors.hpp"
#include "calinv/parallel.hpp"

namespace calinv::rot {

AngularProfile AngularProfile::from_expression(const expr::Expression& e, double R,
                                               bool integrable, bool r_rho_zero,
                                               bool bounded) {
  std::vector<std::string> order = {"r"};
  expr::Compiled prog = e.compile(order);
  AngularProfile p;
  p.rho_fn = [prog](double r) {
    double v = r;
    return prog.eval(std::span<const double>(&v, 1));
  };
  p.R = R;
  p.integrable_near_zero = integrable;
  p.r_rho_to_zero = r_rho_zero;
  p.bounded = bounded;
  return p;
}

namespace {

Vec turn(const Vec& z, double angle) {
  double c = std::cos(angle), s = std::sin(angle);
  return {c * z[0] - s * z[1], s * z[0] + c * z[1]};
}

}  // namespace

Vec rotation_apply(const AngularProfile& profile, const Vec& point) {
  double r = std::hypot(point[0], point[1]);
  if (r <= 0.0 || r >= profile.R) return point;
  return turn(point, profile.rho(r));
}

ham::MapRep rotation_map(const AngularProfile& profile) {
  SupportBox box{{0.0, 0.0}, profile.R};
  auto fwd = [profile](const Vec& z) { return rotation_apply(profile, z); };
  auto inv = [profile](const Vec& z) {
    double r = std::hypot(z[0], z[1]);
    if (r <= 0.0 || r >= profile.R) return z;
    return turn(z, -profile.rho(r));
  };
  return ham::MapRep("rotation", fwd, inv, box);
}

ham::MapRep rotation_commutator_map(const AngularProfile& profile, double t) {
  double reach = std::exp(0.5 * t) * profile.R;
  SupportBox box{{0.0, 0.0}, reach};
  double shrink = std::exp(-0.5 * t);
  auto angle = [profile, shrink](double r) {
    return -profile.rho(r) + profile.rho(shrink * r);
  };
  auto fwd = [angle](const Vec& z) {
    double r = std::hypot(z[0], z[1]);
    if (r <= 0.0) return z;
    double a = angle(r);
    return a == 0.0 ? z : turn(z, a);
  };
  auto inv = [angle](const Vec& z) {
    double r = std::hypot(z[0], z[1]);
    if (r <= 0.0) return z;
    double a = angle(r);
    return a == 0.0 ? z : turn(z, -a);
  };
  return ham::MapRep("rotation-commutator", fwd, inv, box);
}

double commutator_hamiltonian_literal(const AngularProfile& profile, double t, double r,
                                      int panels) {
  if (!profile.integrable_near_zero)
    throw std::invalid_argument("literal commutator generator needs an integrable profile");
  if (r <= 0.0) return 0.0;
  double shrink = std::exp(-0.5 * t);
  // Int_0^r rho(shrink * s) ds with geometric panels toward the integrable
  // singularity at 0; composite Simpson per panel.
  double integral = 0.0;
  double hi = r;
  for (int k = 0; k < panels; ++k) {
    double lo = hi * 0.5;
    double h = hi - lo;
    double a = profile.rho(shrink * lo);
    double m = profile.rho(shrink * (lo + 0.5 * h));
    double b = profile.rho(shrink * hi);
    integral += h / 6.0 * (a + 4.0 * m + b);
    hi = lo;
  }
  integral += hi * profile.rho(shrink * 0.5 * hi);  // midpoint tail
  return r * profile.rho(shrink * r) - 0.5 * integral;
}

double commutator_hamiltonian_derived(const AngularProfile& profile, double t, double r) {
  double a = std::exp(-0.5 * t) * r;
  if (a >= profile.R) return 0.0;
  // Int_a^R u rho(u) du, geometric refinement toward 0 is not needed since
  // u rho(u) -> 0; plain composite Simpson suffices.
  int cells = 512;
  double h = (profile.R - a) / cells;
  double integral = 0.0;
  for (int k = 0; k < cells; ++k) {
    double u0 = a + k * h, u1 = u0 + h, um = u0 + 0.5 * h;
    auto f = [&](double u) { return u * profile.rho(u); };
    integral += h / 6.0 * (f(u0) + 4.0 * f(um) + f(u1));
  }
  return std::exp(t) * (0.5 * a * a * profile.rho(a) + integral);
}

ham::RecoveredHamiltonian commutator_hamiltonian_recovered(const AngularProfile& profile,
                                                           double delta, int trace_steps,
                                                           int res, int slice_stride) {
  double reach = std::exp(0.5 * delta) * profile.R;
  SupportBox box{{0.0, 0.0}, 1.05 * reach};
  ham::IsotopyTrace trace;
  trace.support = box;
  for (int k = 0; k <= trace_steps; ++k) {
    double t = delta * k / trace_steps;
    trace.times.push_back(t);
    trace.maps.push_back(rotation_commutator_map(profile, t));
  }
  ham::RecoveryOptions opts;
  opts.res = res;
  if (slice_stride > 1) {
    for (int k = 0; k <= trace_steps; k += slice_stride) opts.slices.push_back(k);
    if (opts.slices.back() != trace_steps) opts.slices.push_back(trace_steps);
  }
  return ham::hamiltonian_from_isotopy(trace, box, opts);
}

double recovered_flow_match(const ham::RecoveredHamiltonian& rec,
                            const AngularProfile& profile, double delta, int flow_steps,
                            int samples, std::uint64_t seed) {
  ham::HamiltonianField H = rec.field();
  auto pts = geom::sample_box(SupportBox{{0.0, 0.0}, profile.R}, samples, seed);
  std::vector<double> errs(pts.size(), 0.0);
  par::parallel_for(static_cast<int>(pts.size()), [&](int k) {
    double worst = 0.0;
    for (double frac : {0.5, 1.0}) {
      double t = frac * delta;
      Vec flowed = ham::flow(H, 0.0, t, pts[k], flow_steps);
      Vec target = rotation_commutator_map(profile, t).apply(pts[k]);
      for (int i = 0; i < 2; ++i)
        worst = std::max(worst, std::abs(flowed[i] - target[i]));
    }
    errs[k] = worst;
  });
  double worst = 0.0;
  for (double e : errs) worst = std::max(worst, e);
  return worst;
}

double recovered_theta_variation(const ham::RecoveredHamiltonian& rec) {
  double worst = 0.0;
  for (const auto& slice : rec.value_slices) {
    int nx = slice.shape[0], ny = slice.shape[1];
    if (nx != ny) continue;
    int m = nx - 1;
    for (int i = 0; i <= m; ++i) {
      for (int j = 0; j <= m; ++j) {
        // Dihedral orbit of the node (i, j) on the symmetric grid.
        int idx[8][2] = {{i, j},         {m - i, j},     {i, m - j}, {m - i, m - j},
                         {j, i},         {m - j, i},     {j, m - i}, {m - j, m - i}};
        double lo = 1e300, hi = -1e300;
        for (auto& id : idx) {
          double v = slice.at(std::span<const int>(id, 2));
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
        worst = std::max(worst, hi - lo);
      }
    }
  }
  return worst;
}

namespace {

// Radial table of h(r) = Int_r^R s rho(s) ds on a uniform grid.
std::vector<double> generator_table(const AngularProfile& profile, int radial_res) {
  std::vector<double> h(radial_res + 1, 0.0);
  double dr = profile.R / radial_res;
  for (int k = radial_res - 1; k >= 0; --k) {
    double r0 = k * dr, r1 = r0 + dr, rm = r0 + 0.5 * dr;
    auto f = [&](double s) { return s * profile.rho(s); };
    h[k] = h[k + 1] + dr / 6.0 * (f(r0) + 4.0 * f(rm) + f(r1));
  }
  return h;
}

}  // namespace

ham::HamiltonianField rotation_generator(const AngularProfile& profile, int radial_res) {
  if (!profile.bounded || !profile.integrable_near_zero)
    throw std::invalid_argument("rotation_generator: smooth bounded profiles only");
  auto table = std::make_shared<std::vector<double>>(generator_table(profile, radial_res));
  double R = profile.R;
  double dr = R / radial_res;
  ham::HamiltonianField H;
  H.value_fn = [table, R, dr](double, std::span<const double> x) {
    double r = std::hypot(x[0], x[1]);
    if (r >= R) return 0.0;
    double u = r / dr;
    int i = std::min(static_cast<int>(u), static_cast<int>(table->size()) - 2);
    double frac = u - i;
    return (1.0 - frac) * (*table)[i] + frac * (*table)[i + 1];
  };
  // h'(r) = -r rho(r) gives the exact gradient -rho(r) x.
  auto rho = profile;
  H.gradient_fn = [rho](double, std::span<const double> x, std::span<double> g) {
    double r = std::hypot(x[0], x[1]);
    double c = -rho.rho(r);
    g[0] = c * x[0];
    g[1] = c * x[1];
  };
  H.support = SupportBox{{0.0, 0.0}, R};
  H.autonomous = true;
  return H;
}

cal::CalabiResult rotation_calabi_smooth(const AngularProfile& profile, int radial_res) {
  if (!profile.bounded || !profile.integrable_near_zero)
    throw std::invalid_argument("rotation_calabi_smooth: smooth bounded profiles only");
  auto value_at = [&](int res) {
    auto h = generator_table(profile, res);
    double dr = profile.R / res;
    // 2 pi Int_0^R h(r) r dr, composite Simpson over the table (res even).
    double acc = 0.0;
    for (int k = 0; k <= res; ++k) {
      double w = (k == 0 || k == res) ? 1.0 : (k % 2 ? 4.0 : 2.0);
      acc += w * h[k] * (k * dr);
    }
    return 2.0 * std::numbers::pi * acc * dr / 3.0;
  };
  cal::CalabiResult out;
  out.method = "eq1-quadrature";
  out.grid = radial_res;
  out.value = value_at(radial_res);
  out.error_estimate = std::abs(out.value - value_at(radial_res / 2));
  return out;
}

AngularProfile smoothed_profile(const AngularProfile& profile, double eps) {
  auto step = [](double v) {
    // smooth 0 -> 1 transition on [0, 1]
    if (v <= 0.0) return 0.0;
    if (v >= 1.0) return 1.0;
    double f = std::exp(-1.0 / v);
    double g = std::exp(-1.0 / (1.0 - v));
    return f / (f + g);
  };
  auto base = profile;
  AngularProfile out = profile;
  out.rho_fn = [base, step, eps](double r) {
    if (r <= eps) return 0.0;
    return base.rho(r) * step((r - eps) / eps);
  };
  out.bounded = true;  // vanishing near 0 caps the profile
  return out;
}

SingularStudyReport singular_profile_study(const AngularProfile& profile,
                                           const std::vector<double>& eps_list,
                                           double delta, int res, int trace_steps,
                                           int samples, std::uint64_t seed) {
  if (!profile.integrable_near_zero || !profile.r_rho_to_zero)
    throw std::invalid_argument(
        "singular_profile_study: profile must be integrable with r rho(r) -> 0");
  SingularStudyReport report;
  ham::MapRep base_map = rotation_map(profile);
  SupportBox sample_box{{0.0, 0.0}, profile.R};

  std::vector<geom::GridField> prev_slices;
  double prev_extended = 0.0;
  bool first = true;
  for (double eps : eps_list) {
    SingularStudyRow row;
    row.eps = eps;
    AngularProfile smooth = smoothed_profile(profile, eps);

    // (a) C0 distance of the smoothed rotation to the original; the maps
    // differ only on r < 2 eps, so add deterministic near-origin probes.
    double dist = ham::c0_distance(rotation_map(smooth), base_map, sample_box,
                                   samples, seed);
    for (int j = 1; j <= 32; ++j) {
      double r = 2.0 * eps * j / 32.0;
      Vec z = {r, 0.0};
      Vec a = rotation_apply(smooth, z);
      Vec b = rotation_apply(profile, z);
      dist = std::max(dist, std::hypot(a[0] - b[0], a[1] - b[1]));
    }
    row.map_distance = dist;

    // (b,c) commutator generator slices and the extended value.
    auto rec = commutator_hamiltonian_recovered(smooth, delta, trace_steps, res);
    report.closedness_residual =
        std::max(report.closedness_residual, rec.closedness_residual);
    row.extended_calabi = cal::extended_calabi(rec.value_slices[0], 1).value;
    if (!first) {
      double gap = 0.0;
      for (std::size_t s = 0; s < rec.value_slices.size(); ++s) {
        const auto& cur = rec.value_slices[s].values;
        const auto& pre = prev_slices[s].values;
        for (std::size_t i = 0; i < cur.size(); ++i)
          gap = std::max(gap, std::abs(cur[i] - pre[i]));
      }
      row.ham_gap = gap;
      row.extended_gap = std::abs(row.extended_calabi - prev_extended);
    }
    prev_slices = rec.value_slices;
    prev_extended = row.extended_calabi;
    first = false;
    report.rows.push_back(row);
  }
  return report;
}

AngleBoundReport angle_bound_diagnostic(const AngularProfile& profile,
                                        int samples_per_level, int levels) {
  AngleBoundReport rep;
  constexpr double pi = std::numbers::pi;
  for (int level = 0; level < levels; ++level) {
    double r_min = profile.R * std::pow(4.0, -(level + 1));
    double sup = 0.0;
    // log-spaced radii in [r_min, R)
    for (int j = 0; j < samples_per_level; ++j) {
      double f = static_cast<double>(j) / samples_per_level;
      double r = r_min * std::pow(profile.R / r_min, f);
      sup = std::max(sup, std::abs(profile.rho(r)));
    }
    rep.estimates.push_back(sup);
  }
  rep.sup_angle = rep.estimates.back();
  double first = rep.estimates.front(), last = rep.estimates.back();
  rep.obstructed = last > pi && last > first + 1e-9;
  return rep;
}

AngleBoundReport angle_bound_diagnostic(const ham::MapRep& map, const SupportBox& box,
                                        int samples, std::uint64_t seed) {
  AngleBoundReport rep;
  auto pts = geom::sample_box(box, samples, seed);
  double sup = 0.0;
  for (const auto& z : pts) {
    Vec w = map.apply(z);
    double dot = z[0] * w[0] + z[1] * w[1];
    double cross = z[0] * w[1] - z[1] * w[0];
    if (dot == 0.0 && cross == 0.0) continue;
    sup = std::max(sup, std::abs(std::atan2(cross, dot)));
  }
  rep.estimates.push_back(sup);
  rep.sup_angle = sup;
  rep.obstructed = false;  // a single-level proxy cannot witness growth
  return rep;
}

}  // namespace calinv::rot
