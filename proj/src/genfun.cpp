#include "calinv/genfun.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "calinv/errors.hpp"
#include "calinv/parallel.hpp"

namespace calinv::gen {

ChartImage chart_forward(std::span<const double> z1, std::span<const double> z2) {
  if (z1.size() != z2.size() || z1.size() % 2 != 0)
    throw std::invalid_argument("chart_forward: points must share an even length");
  std::size_t n = z1.size() / 2;
  ChartImage out;
  out.base.resize(2 * n);
  out.fiber.resize(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = z1[i], y = z1[n + i];
    double xi = z2[i], eta = z2[n + i];
    out.base[i] = x;
    out.base[n + i] = eta;
    out.fiber[i] = y - eta;
    out.fiber[n + i] = xi - x;
  }
  return out;
}

std::pair<Vec, Vec> chart_backward(std::span<const double> base,
                                   std::span<const double> fiber) {
  if (base.size() != fiber.size() || base.size() % 2 != 0)
    throw std::invalid_argument("chart_backward: bad lengths");
  std::size_t n = base.size() / 2;
  Vec z1(2 * n), z2(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = base[i], eta = base[n + i];
    z1[i] = x;
    z1[n + i] = fiber[i] + eta;   // y
    z2[i] = fiber[n + i] + x;     // xi
    z2[n + i] = eta;
  }
  return {std::move(z1), std::move(z2)};
}

struct GeneratingFunction::Impl {
  std::function<double(std::span<const double>)> value;
  std::function<void(std::span<const double>, std::span<double>)> gradient;
  SupportBox support;
  double h_fd = 1e-5;
  mutable double hessian_cache = -1.0;
  mutable double gradient_cache = -1.0;

  void fd_gradient(std::span<const double> b, std::span<double> out) const {
    Vec xb(b.begin(), b.end());
    for (std::size_t i = 0; i < b.size(); ++i) {
      double orig = xb[i];
      xb[i] = orig + h_fd;
      double vp = value(xb);
      xb[i] = orig - h_fd;
      double vm = value(xb);
      xb[i] = orig;
      out[i] = (vp - vm) / (2.0 * h_fd);
    }
  }
};

double GeneratingFunction::value(std::span<const double> base) const {
  return impl_->value(base);
}

void GeneratingFunction::gradient(std::span<const double> base,
                                  std::span<double> out) const {
  if (impl_->gradient) {
    impl_->gradient(base, out);
  } else {
    impl_->fd_gradient(base, out);
  }
}

int GeneratingFunction::n() const { return impl_->support.dim() / 2; }

const SupportBox& GeneratingFunction::support() const { return impl_->support; }

double GeneratingFunction::gradient_bound() const {
  if (impl_->gradient_cache >= 0) return impl_->gradient_cache;
  int d = impl_->support.dim();
  int per_axis = d <= 2 ? 33 : 9;
  std::vector<int> idx(d, 0);
  Vec x(d), g(d);
  double bound = 0.0;
  for (;;) {
    for (int a = 0; a < d; ++a)
      x[a] = impl_->support.lo(a) + 2.0 * impl_->support.radius * idx[a] / (per_axis - 1);
    gradient(x, g);
    for (double v : g) bound = std::max(bound, std::abs(v));
    int a = d - 1;
    for (; a >= 0; --a) {
      if (++idx[a] < per_axis) break;
      idx[a] = 0;
    }
    if (a < 0) break;
  }
  impl_->gradient_cache = bound;
  return bound;
}

double GeneratingFunction::hessian_bound() const {
  if (impl_->hessian_cache >= 0) return impl_->hessian_cache;
  int d = impl_->support.dim();
  int per_axis = d <= 2 ? 17 : 7;
  double h = impl_->support.radius / 64.0;
  std::vector<int> idx(d, 0);
  Vec x(d), gp(d), gm(d);
  double bound = 0.0;
  for (;;) {
    for (int a = 0; a < d; ++a)
      x[a] = impl_->support.lo(a) + 2.0 * impl_->support.radius * idx[a] / (per_axis - 1);
    for (int a = 0; a < d; ++a) {
      double orig = x[a];
      x[a] = orig + h;
      gradient(x, gp);
      x[a] = orig - h;
      gradient(x, gm);
      x[a] = orig;
      for (int b = 0; b < d; ++b)
        bound = std::max(bound, std::abs(gp[b] - gm[b]) / (2.0 * h));
    }
    int a = d - 1;
    for (; a >= 0; --a) {
      if (++idx[a] < per_axis) break;
      idx[a] = 0;
    }
    if (a < 0) break;
  }
  impl_->hessian_cache = bound;
  return bound;
}

GeneratingFunction GeneratingFunction::from_expression(const expr::Expression& e, int n,
                                                       const SupportBox& support,
                                                       double h_fd) {
  std::vector<std::string> order;
  for (int i = 1; i <= n; ++i) order.push_back("x" + std::to_string(i));
  for (int i = 1; i <= n; ++i) order.push_back("eta" + std::to_string(i));
  expr::Compiled prog = e.compile(order);
  auto impl = std::make_shared<Impl>();
  impl->value = [prog, n](std::span<const double> b) {
    std::array<double, 16> vals;
    for (int i = 0; i < 2 * n; ++i) vals[i] = b[i];
    return prog.eval(std::span<const double>(vals.data(), 2 * n));
  };
  impl->support = support;
  impl->h_fd = h_fd;
  GeneratingFunction S;
  S.impl_ = std::move(impl);
  return S;
}

GeneratingFunction GeneratingFunction::from_closure(
    std::function<double(std::span<const double>)> value,
    std::function<void(std::span<const double>, std::span<double>)> gradient,
    const SupportBox& support, double h_fd) {
  auto impl = std::make_shared<Impl>();
  impl->value = std::move(value);
  impl->gradient = std::move(gradient);
  impl->support = support;
  impl->h_fd = h_fd;
  GeneratingFunction S;
  S.impl_ = std::move(impl);
  return S;
}

GeneratingFunction GeneratingFunction::from_grids(geom::GridField value,
                                                  std::vector<geom::GridField> slopes,
                                                  const SupportBox& support) {
  auto impl = std::make_shared<Impl>();
  auto vgrid = std::make_shared<geom::GridField>(std::move(value));
  auto sgrids = std::make_shared<std::vector<geom::GridField>>(std::move(slopes));
  impl->value = [vgrid](std::span<const double> b) { return vgrid->interp(b); };
  impl->gradient = [sgrids](std::span<const double> b, std::span<double> out) {
    for (std::size_t a = 0; a < out.size(); ++a) out[a] = (*sgrids)[a].interp(b);
  };
  impl->support = support;
  GeneratingFunction S;
  S.impl_ = std::move(impl);
  return S;
}

namespace {

// Shared implicit solve: find u with u + g_sel(fixed, u) = target, where
// g_sel reads `half` (0: x-block slot with dS/dx, 1: eta-block with dS/deta)
// of the gradient. `fixed` occupies the other block.
//
// psi_apply:        solve eta from eta + dS/dx(x, eta)  = y   (half = 0)
// psi_inverse:      solve x   from x  + dS/deta(x, eta) = xi  (half = 1)
struct BlockSolve {
  const GeneratingFunction& S;
  int n;
  bool solve_eta;  // true: unknown is eta (uses dS/dx); false: unknown is x

  // Gradient block relevant to the equation.
  void residual(const Vec& unknown, const Vec& fixed, const Vec& target,
                Vec& res) const {
    Vec b(2 * n), g(2 * n);
    for (int i = 0; i < n; ++i) {
      b[i] = solve_eta ? fixed[i] : unknown[i];
      b[n + i] = solve_eta ? unknown[i] : fixed[i];
    }
    S.gradient(b, g);
    for (int i = 0; i < n; ++i) {
      double grad = solve_eta ? g[i] : g[n + i];
      res[i] = unknown[i] + grad - target[i];
    }
  }

  Vec run(const Vec& fixed, const Vec& target, const SolveParams& params) const {
    Vec u = target;  // zero-gradient initial guess
    Vec res(n);
    bool try_fixed_point =
        params.method == SolveParams::Method::FixedPoint ||
        (params.method == SolveParams::Method::Auto &&
         S.hessian_bound() < params.contraction_threshold);
    if (try_fixed_point) {
      double prev = std::numeric_limits<double>::infinity();
      int stalled = 0;
      for (int it = 0; it < params.max_iter; ++it) {
        residual(u, fixed, target, res);
        double worst = 0.0;
        for (int i = 0; i < n; ++i) {
          u[i] -= res[i];
          worst = std::max(worst, std::abs(res[i]));
        }
        if (worst < params.tol) return u;
        if (worst > 0.95 * prev && ++stalled > 4) break;  // not contracting
        prev = worst;
      }
      if (params.method == SolveParams::Method::FixedPoint)
        throw SolveError("fixed-point solve did not converge within budget");
    }
    // Cyclic per-coordinate monotone bisection. The slice map
    // u_i -> u_i + grad_i is strictly increasing for admissible S, and
    // |grad| <= M gives the bracket.
    double M = S.gradient_bound() + 1.0;
    u = target;
    for (int cycle = 0; cycle < params.max_iter; ++cycle) {
      residual(u, fixed, target, res);
      double worst = 0.0;
      for (double r : res) worst = std::max(worst, std::abs(r));
      if (worst < params.tol) return u;
      for (int i = 0; i < n; ++i) {
        double lo = target[i] - M, hi = target[i] + M;
        for (int it = 0; it < 80; ++it) {
          double mid = 0.5 * (lo + hi);
          u[i] = mid;
          residual(u, fixed, target, res);
          if (hi - lo < 0.25 * params.tol) break;
          if (res[i] > 0) {
            hi = mid;
          } else {
            lo = mid;
          }
        }
      }
    }
    residual(u, fixed, target, res);
    double worst = 0.0;
    for (double r : res) worst = std::max(worst, std::abs(r));
    if (worst > 100 * params.tol)
      throw SolveError("monotone bisection did not converge (residual " +
                       std::to_string(worst) + "); admissibility violation?");
    return u;
  }
};

}  // namespace

Vec psi_apply(const GeneratingFunction& S, const Vec& z, const SolveParams& params) {
  int n = S.n();
  Vec x(z.begin(), z.begin() + n);
  Vec y(z.begin() + n, z.end());
  BlockSolve solve{S, n, true};
  Vec eta = solve.run(x, y, params);
  Vec b(2 * n), g(2 * n);
  for (int i = 0; i < n; ++i) {
    b[i] = x[i];
    b[n + i] = eta[i];
  }
  S.gradient(b, g);
  Vec out(2 * n);
  for (int i = 0; i < n; ++i) {
    out[i] = x[i] + g[n + i];  // xi = x + dS/deta
    out[n + i] = eta[i];
  }
  return out;
}

Vec psi_inverse_apply(const GeneratingFunction& S, const Vec& w,
                      const SolveParams& params) {
  int n = S.n();
  Vec xi(w.begin(), w.begin() + n);
  Vec eta(w.begin() + n, w.end());
  BlockSolve solve{S, n, false};
  Vec x = solve.run(eta, xi, params);
  Vec b(2 * n), g(2 * n);
  for (int i = 0; i < n; ++i) {
    b[i] = x[i];
    b[n + i] = eta[i];
  }
  S.gradient(b, g);
  Vec out(2 * n);
  for (int i = 0; i < n; ++i) {
    out[i] = x[i];
    out[n + i] = eta[i] + g[i];  // y = eta + dS/dx
  }
  return out;
}

ham::MapRep psi_map(const GeneratingFunction& S, const SolveParams& params) {
  SupportBox box = S.support().expanded(S.gradient_bound());
  return ham::MapRep(
      "genfun", [S, params](const Vec& z) { return psi_apply(S, z, params); },
      [S, params](const Vec& w) { return psi_inverse_apply(S, w, params); }, box);
}

AdmissibilityReport admissibility_check(const GeneratingFunction& S, int res) {
  if (res < 32) throw std::invalid_argument("admissibility_check: res >= 32");
  int n = S.n();
  int d = 2 * n;
  const SupportBox& box = S.support();
  double h = 2.0 * box.radius / res;

  AdmissibilityReport rep;
  rep.pass = true;
  rep.min_slope = std::numeric_limits<double>::infinity();
  rep.worst_location.assign(d, 0.0);

  // March every grid line along `axis`; the checked slice map couples x_i
  // with dS/deta_i and eta_i with dS/dx_i.
  for (int axis = 0; axis < d; ++axis) {
    int grad_index = axis < n ? axis + n : axis - n;
    int lines = 1;
    for (int a = 0; a < d; ++a)
      if (a != axis) lines *= res + 1;
    std::vector<double> slopes(lines,
                               std::numeric_limits<double>::infinity());
    std::vector<int> where(lines, 0);
    par::parallel_for(lines, [&](int line) {
      std::vector<int> idx(d, 0);
      int rem = line;
      for (int a = d - 1; a >= 0; --a) {
        if (a == axis) continue;
        idx[a] = rem % (res + 1);
        rem /= res + 1;
      }
      Vec b(d), g(d);
      for (int a = 0; a < d; ++a) b[a] = box.lo(a) + h * idx[a];
      double prev = 0.0;
      for (int i = 0; i <= res; ++i) {
        b[axis] = box.lo(axis) + h * i;
        S.gradient(b, g);
        double slice = b[axis] + g[grad_index];
        if (i > 0) {
          double slope = (slice - prev) / h;
          if (slope < slopes[line]) {
            slopes[line] = slope;
            where[line] = i;
          }
        }
        prev = slice;
      }
    });
    for (int line = 0; line < lines; ++line) {
      if (slopes[line] < rep.min_slope) {
        rep.min_slope = slopes[line];
        rep.worst_axis = axis;
        std::vector<int> idx(d, 0);
        int rem = line;
        for (int a = d - 1; a >= 0; --a) {
          if (a == axis) continue;
          idx[a] = rem % (res + 1);
          rem /= res + 1;
        }
        idx[axis] = where[line];
        for (int a = 0; a < d; ++a)
          rep.worst_location[a] = box.lo(a) + h * idx[a];
      }
    }
  }
  rep.pass = rep.min_slope > 0.0;
  return rep;
}

MollifierKernel MollifierKernel::radial(int k, int dim) {
  // Normalize bump(|u|) over the unit ball by midpoint quadrature once.
  int res = dim <= 2 ? 128 : 24;
  double h = 2.0 / res;
  double mass = 0.0;
  std::vector<int> idx(dim, 0);
  for (;;) {
    double r2 = 0.0;
    for (int a = 0; a < dim; ++a) {
      double u = -1.0 + (idx[a] + 0.5) * h;
      r2 += u * u;
    }
    if (r2 < 1.0) mass += expr::bump(std::sqrt(r2)) * std::pow(h, dim);
    int a = dim - 1;
    for (; a >= 0; --a) {
      if (++idx[a] < res) break;
      idx[a] = 0;
    }
    if (a < 0) break;
  }
  MollifierKernel kernel;
  kernel.k = k;
  double c = 1.0 / mass;
  kernel.chi = [c](std::span<const double> u) {
    double r2 = 0.0;
    for (double v : u) r2 += v * v;
    return r2 >= 1.0 ? 0.0 : c * expr::bump(std::sqrt(r2));
  };
  return kernel;
}

double MollifierKernel::mass(int dim, int res) const {
  double h = 2.0 / res;
  double total = 0.0;
  std::vector<int> idx(dim, 0);
  Vec u(dim);
  for (;;) {
    for (int a = 0; a < dim; ++a) u[a] = -1.0 + (idx[a] + 0.5) * h;
    total += chi(u) * std::pow(h, dim);
    int a = dim - 1;
    for (; a >= 0; --a) {
      if (++idx[a] < res) break;
      idx[a] = 0;
    }
    if (a < 0) break;
  }
  return total;
}

GeneratingFunction mollify(const GeneratingFunction& S, const MollifierKernel& kernel,
                           int out_res, int kernel_res) {
  int d = 2 * S.n();
  double reach = 1.0 / kernel.k;
  SupportBox out_box = S.support().expanded(reach);
  if (2.0 * out_box.radius / out_res > reach)
    throw std::invalid_argument("mollify: output grid too coarse relative to 1/k");

  // Midpoint offsets over [-1/k, 1/k]^d, renormalized to unit mass so the
  // discrete convolution is an exact convex combination.
  double hk = 2.0 * reach / kernel_res;
  std::vector<Vec> offsets;
  std::vector<double> weights;
  {
    std::vector<int> idx(d, 0);
    Vec u(d), scaled(d);
    for (;;) {
      for (int a = 0; a < d; ++a) {
        u[a] = -reach + (idx[a] + 0.5) * hk;
        scaled[a] = u[a] * kernel.k;
      }
      double w = kernel.chi(scaled);
      if (w > 0.0) {
        offsets.push_back(u);
        weights.push_back(w);
      }
      int a = d - 1;
      for (; a >= 0; --a) {
        if (++idx[a] < kernel_res) break;
        idx[a] = 0;
      }
      if (a < 0) break;
    }
    double total = 0.0;
    for (double w : weights) total += w;
    for (double& w : weights) w /= total;
  }

  Vec lo(d), hi(d);
  for (int a = 0; a < d; ++a) {
    lo[a] = out_box.lo(a);
    hi[a] = out_box.hi(a);
  }
  std::vector<int> shape(d, out_res + 1);
  geom::GridField value = geom::GridField::zeros(lo, hi, shape);
  std::vector<geom::GridField> slopes(d, value);

  int rows = 1;
  for (int a = 1; a < d; ++a) rows *= out_res + 1;
  par::parallel_for(rows, [&](int row) {
    std::vector<int> idx(d, 0);
    int rem = row;
    for (int a = d - 1; a >= 1; --a) {
      idx[a] = rem % (out_res + 1);
      rem /= out_res + 1;
    }
    Vec b(d), shifted(d), g(d);
    for (int i = 0; i <= out_res; ++i) {
      idx[0] = i;
      for (int a = 0; a < d; ++a) b[a] = value.node_coord(a, idx[a]);
      double acc = 0.0;
      Vec gacc(d, 0.0);
      for (std::size_t j = 0; j < offsets.size(); ++j) {
        for (int a = 0; a < d; ++a) shifted[a] = b[a] - offsets[j][a];
        acc += weights[j] * S.value(shifted);
        S.gradient(shifted, g);
        for (int a = 0; a < d; ++a) gacc[a] += weights[j] * g[a];
      }
      value.at(idx) = acc;
      for (int a = 0; a < d; ++a) slopes[a].at(idx) = gacc[a];
    }
  });
  return GeneratingFunction::from_grids(std::move(value), std::move(slopes), out_box);
}

GeneratingFunction liouville_conjugated_genfun(const GeneratingFunction& S, double t) {
  double scale = std::exp(t);
  double shrink = std::exp(-0.5 * t);
  double grad_scale = std::exp(0.5 * t);
  auto value = [S, scale, shrink](std::span<const double> b) {
    Vec y(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) y[i] = shrink * b[i];
    return scale * S.value(y);
  };
  auto gradient = [S, grad_scale, shrink](std::span<const double> b,
                                          std::span<double> out) {
    Vec y(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) y[i] = shrink * b[i];
    S.gradient(y, out);
    for (auto& v : out) v *= grad_scale;
  };
  Vec origin(S.support().dim(), 0.0);
  SupportBox box = S.support().scaled_about(origin, std::exp(0.5 * t));
  return GeneratingFunction::from_closure(value, gradient, box);
}

namespace {

double path_dt_slope(const GeneratingPath& path, double t, std::span<const double> b) {
  double dt = path.dt;
  if (t - dt < path.t0) {
    // second-order one-sided at the left end
    double s0 = path.at(t).value(b);
    double s1 = path.at(t + dt).value(b);
    double s2 = path.at(t + 2 * dt).value(b);
    return (-3.0 * s0 + 4.0 * s1 - s2) / (2.0 * dt);
  }
  if (t + dt > path.t1) {
    double s0 = path.at(t).value(b);
    double s1 = path.at(t - dt).value(b);
    double s2 = path.at(t - 2 * dt).value(b);
    return (3.0 * s0 - 4.0 * s1 + s2) / (2.0 * dt);
  }
  return (path.at(t + dt).value(b) - path.at(t - dt).value(b)) / (2.0 * dt);
}

}  // namespace

double hamilton_jacobi_hamiltonian(const GeneratingPath& path, double t, const Vec& w,
                                   const SolveParams& params, int sigma) {
  if (sigma == 0) sigma = ham::conventions().hj_sigma;
  GeneratingFunction St = path.at(t);
  int n = St.n();
  Vec pre = psi_inverse_apply(St, w, params);
  Vec b(2 * n);
  for (int i = 0; i < n; ++i) {
    b[i] = pre[i];        // x-part of the preimage
    b[n + i] = w[n + i];  // momentum half of w is eta
  }
  return sigma * path_dt_slope(path, t, b);
}

ham::HamiltonianField hamilton_jacobi_field(const GeneratingPath& path,
                                            const SupportBox& box,
                                            const SolveParams& params, int sigma) {
  if (sigma == 0) sigma = ham::conventions().hj_sigma;
  ham::HamiltonianField H;
  H.value_fn = [path, params, sigma](double t, std::span<const double> x) {
    return hamilton_jacobi_hamiltonian(path, t, Vec(x.begin(), x.end()), params, sigma);
  };
  H.support = box;
  H.t0 = path.t0;
  H.t1 = path.t1;
  H.h_fd = 1e-5;
  return H;
}

HjSignResolution resolve_hj_sign(const GeneratingPath& path, const SupportBox& box,
                                 int flow_steps, int samples, const SolveParams& params) {
  HjSignResolution out;
  auto pts = geom::sample_box(box, samples, 101);
  for (int sigma : {+1, -1}) {
    ham::HamiltonianField H = hamilton_jacobi_field(path, box, params, sigma);
    GeneratingFunction Send = path.at(path.t1);
    double worst = 0.0;
    std::vector<double> errs(pts.size(), 0.0);
    par::parallel_for(static_cast<int>(pts.size()), [&](int k) {
      Vec flowed = ham::flow(H, path.t0, path.t1, pts[k], flow_steps);
      Vec target = psi_apply(Send, pts[k], params);
      double e = 0.0;
      for (std::size_t i = 0; i < flowed.size(); ++i)
        e = std::max(e, std::abs(flowed[i] - target[i]));
      errs[k] = e;
    });
    for (double e : errs) worst = std::max(worst, e);
    (sigma > 0 ? out.residual_plus : out.residual_minus) = worst;
  }
  out.sigma = out.residual_plus <= out.residual_minus ? +1 : -1;
  return out;
}

GenfunFromMapResult genfun_from_map(const ham::MapRep& phi, const SupportBox& base_box,
                                    int res, const SolveParams& params) {
  int d = base_box.dim();
  int n = d / 2;

  // Section solve: given base (x, eta), find y with momentum(phi(x,y)) = eta.
  auto section = [&, n](const Vec& b) -> Vec {
    Vec x(b.begin(), b.begin() + n);
    Vec eta(b.begin() + n, b.end());
    Vec y = eta;
    Vec z(2 * n);
    auto image = [&](const Vec& yy) {
      for (int i = 0; i < n; ++i) {
        z[i] = x[i];
        z[n + i] = yy[i];
      }
      return phi.apply(z);
    };
    bool converged = false;
    double prev = std::numeric_limits<double>::infinity();
    int stalled = 0;
    for (int it = 0; it < params.max_iter; ++it) {
      Vec img = image(y);
      double worst = 0.0;
      for (int i = 0; i < n; ++i) {
        double r = img[n + i] - eta[i];
        y[i] -= r;
        worst = std::max(worst, std::abs(r));
      }
      if (worst < params.tol) {
        converged = true;
        break;
      }
      if (worst > 0.95 * prev && ++stalled > 6) break;
      prev = worst;
    }
    if (!converged) {
      // Per-coordinate bisection; near-identity maps leave the momentum
      // image increasing in y_i.
      double M = 2.0 * phi.support().radius;
      for (int cycle = 0; cycle < 8; ++cycle) {
        for (int i = 0; i < n; ++i) {
          double lo = eta[i] - M, hi = eta[i] + M;
          for (int it = 0; it < 80; ++it) {
            y[i] = 0.5 * (lo + hi);
            Vec img = image(y);
            if (img[n + i] > eta[i]) {
              hi = y[i];
            } else {
              lo = y[i];
            }
          }
        }
        Vec img = image(y);
        double worst = 0.0;
        for (int i = 0; i < n; ++i) worst = std::max(worst, std::abs(img[n + i] - eta[i]));
        if (worst < 100 * params.tol) {
          converged = true;
          break;
        }
      }
      if (!converged)
        throw SolveError("genfun_from_map: section solve diverged (map too far from identity?)");
    }
    // Fiber of the chart at the solved pair: the 1-form s(x, eta).
    Vec img = image(y);
    Vec s(2 * n);
    for (int i = 0; i < n; ++i) {
      s[i] = y[i] - eta[i];        // dS/dx
      s[n + i] = img[i] - x[i];    // dS/deta
    }
    return s;
  };

  auto pot = ham::potential_from_one_form(section, base_box, res);
  GenfunFromMapResult out;
  out.exactness_residual = pot.loop_residual;
  out.S = GeneratingFunction::from_grids(std::move(pot.value), std::move(pot.alpha),
                                         base_box);
  return out;
}

}  // namespace calinv::gen
