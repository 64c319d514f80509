#include "calinv/hamflow.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "calinv/errors.hpp"
#include "calinv/parallel.hpp"

namespace calinv::ham {

Conventions& conventions() {
  static Conventions c;
  return c;
}

void HamiltonianField::gradient(double t, std::span<const double> x,
                                std::span<double> out) const {
  if (gradient_fn) {
    gradient_fn(t, x, out);
    return;
  }
  Vec xp(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double orig = xp[i];
    xp[i] = orig + h_fd;
    double vp = value_fn(t, xp);
    xp[i] = orig - h_fd;
    double vm = value_fn(t, xp);
    xp[i] = orig;
    out[i] = (vp - vm) / (2.0 * h_fd);
  }
}

HamiltonianField HamiltonianField::zero(const SupportBox& box) {
  HamiltonianField H;
  H.value_fn = [](double, std::span<const double>) { return 0.0; };
  H.gradient_fn = [](double, std::span<const double>, std::span<double> g) {
    std::fill(g.begin(), g.end(), 0.0);
  };
  H.support = box;
  H.autonomous = true;
  return H;
}

HamiltonianField HamiltonianField::from_expression(const expr::Expression& e, int n,
                                                   const SupportBox& box, bool autonomous) {
  std::vector<std::string> order;
  order.push_back("t");
  for (int i = 1; i <= n; ++i) order.push_back("q" + std::to_string(i));
  for (int i = 1; i <= n; ++i) order.push_back("p" + std::to_string(i));
  expr::Compiled prog = e.compile(order);

  HamiltonianField H;
  H.value_fn = [prog, n](double t, std::span<const double> x) {
    std::array<double, 17> vals;
    vals[0] = t;
    for (int i = 0; i < 2 * n; ++i) vals[i + 1] = x[i];
    return prog.eval(std::span<const double>(vals.data(), 2 * n + 1));
  };
  H.support = box;
  H.autonomous = autonomous;
  return H;
}

HamiltonianField HamiltonianField::scaled(double factor) const {
  HamiltonianField out = *this;
  auto value = value_fn;
  out.value_fn = [value, factor](double t, std::span<const double> x) {
    return factor * value(t, x);
  };
  if (gradient_fn) {
    auto grad = gradient_fn;
    out.gradient_fn = [grad, factor](double t, std::span<const double> x,
                                     std::span<double> g) {
      grad(t, x, g);
      for (auto& v : g) v *= factor;
    };
  }
  return out;
}

Vec vector_field(const HamiltonianField& H, double t, const Vec& x) {
  std::size_t d = x.size();
  std::size_t n = d / 2;
  Vec X(d, 0.0);
  if (!H.support.contains(x, H.support.pad())) return X;
  Vec g(d);
  H.gradient(t, x, g);
  double s = conventions().iota_sign;
  for (std::size_t i = 0; i < n; ++i) {
    X[i] = s * g[n + i];
    X[n + i] = -s * g[i];
  }
  return X;
}

Vec flow(const HamiltonianField& H, double t0, double t1, Vec x, int steps) {
  if (steps < 1) throw std::invalid_argument("flow: steps must be >= 1");
  if (t0 == t1) return x;
  if (!H.support.contains(x, H.support.pad())) return x;
  double h = (t1 - t0) / steps;
  std::size_t d = x.size();
  Vec k1, k2, k3, k4, xt(d);
  for (int s = 0; s < steps; ++s) {
    double t = t0 + s * h;
    k1 = vector_field(H, t, x);
    for (std::size_t i = 0; i < d; ++i) xt[i] = x[i] + 0.5 * h * k1[i];
    k2 = vector_field(H, t + 0.5 * h, xt);
    for (std::size_t i = 0; i < d; ++i) xt[i] = x[i] + 0.5 * h * k2[i];
    k3 = vector_field(H, t + 0.5 * h, xt);
    for (std::size_t i = 0; i < d; ++i) xt[i] = x[i] + h * k3[i];
    k4 = vector_field(H, t + h, xt);
    for (std::size_t i = 0; i < d; ++i)
      x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  return x;
}

FlowCheck flow_checked(const HamiltonianField& H, double t0, double t1, const Vec& x,
                       int steps, double tol) {
  Vec coarse = flow(H, t0, t1, x, steps);
  Vec fine = flow(H, t0, t1, x, 2 * steps);
  double disc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    disc = std::max(disc, std::abs(coarse[i] - fine[i]));
  if (disc > tol)
    throw ResolutionError("flow step-halving disagreement " + std::to_string(disc) +
                          " exceeds tolerance " + std::to_string(tol));
  return {std::move(fine), disc};
}

MapRep::MapRep(std::string kind, std::function<Vec(const Vec&)> fwd,
               std::function<Vec(const Vec&)> inv, SupportBox support)
    : kind_(std::move(kind)), fwd_(std::move(fwd)), inv_(std::move(inv)),
      support_(std::move(support)) {}

MapRep MapRep::inverse() const {
  return MapRep(kind_ + "^-1", inv_, fwd_, support_);
}

MapRep MapRep::identity(const SupportBox& box) {
  auto id = [](const Vec& x) { return x; };
  return MapRep("identity", id, id, box);
}

MapRep MapRep::from_flow(const HamiltonianField& H, double t0, double t1, int steps) {
  auto fwd = [H, t0, t1, steps](const Vec& x) { return flow(H, t0, t1, x, steps); };
  auto inv = [H, t0, t1, steps](const Vec& x) { return flow(H, t1, t0, x, steps); };
  return MapRep("flow", fwd, inv, H.support);
}

MapRep MapRep::liouville(const geom::LiouvilleFlow& mu, double t, const SupportBox& box) {
  auto fwd = [mu, t](const Vec& x) { return mu.apply(t, x); };
  auto inv = [mu, t](const Vec& x) { return mu.apply(-t, x); };
  return MapRep("liouville", fwd, inv, box);
}

MapRep MapRep::compose(const MapRep& outer, const MapRep& inner) {
  auto fwd = [outer, inner](const Vec& x) { return outer.apply(inner.apply(x)); };
  auto inv = [outer, inner](const Vec& x) {
    return inner.apply_inverse(outer.apply_inverse(x));
  };
  return MapRep("composition", fwd, inv,
                SupportBox::hull(outer.support(), inner.support()));
}

MapRep MapRep::compose(const std::vector<MapRep>& chain) {
  if (chain.empty()) throw std::invalid_argument("compose: empty chain");
  MapRep out = chain.back();
  for (int i = static_cast<int>(chain.size()) - 2; i >= 0; --i)
    out = compose(chain[i], out);
  return out;
}

MapRep MapRep::iterate(const MapRep& m, int k, int budget) {
  if (k < 0) throw std::invalid_argument("iterate: negative count");
  if (k > budget)
    throw std::invalid_argument("iterate: count " + std::to_string(k) +
                                " exceeds budget " + std::to_string(budget));
  auto fwd = [m, k](const Vec& x) {
    Vec y = x;
    for (int i = 0; i < k; ++i) y = m.apply(y);
    return y;
  };
  auto inv = [m, k](const Vec& x) {
    Vec y = x;
    for (int i = 0; i < k; ++i) y = m.apply_inverse(y);
    return y;
  };
  return MapRep("iterate", fwd, inv, m.support());
}

MapRep MapRep::homothety(const Vec& about, double factor, const SupportBox& box) {
  auto fwd = [about, factor](const Vec& x) {
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      y[i] = about[i] + factor * (x[i] - about[i]);
    return y;
  };
  auto inv = [about, factor](const Vec& x) {
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      y[i] = about[i] + (x[i] - about[i]) / factor;
    return y;
  };
  return MapRep("homothety", fwd, inv, box);
}

namespace {

int scaled_steps(int steps, double t, double span) {
  double frac = span > 0 ? std::abs(t) / span : 1.0;
  return std::max(4, static_cast<int>(std::ceil(steps * frac)));
}

}  // namespace

HamiltonianField inverse_hamiltonian(const HamiltonianField& F, int steps,
                                     AlgebraVariant variant) {
  HamiltonianField out;
  double span = std::abs(F.t1 - F.t0);
  if (variant == AlgebraVariant::Validated) {
    // -F(t, phi_F^t(x))
    out.value_fn = [F, steps, span](double t, std::span<const double> x) {
      Vec y = flow(F, 0.0, t, Vec(x.begin(), x.end()), scaled_steps(steps, t, span));
      return -F.value(t, y);
    };
  } else {
    // Literal variant: -F(t, (phi_F^t)^{-1}(x))
    out.value_fn = [F, steps, span](double t, std::span<const double> x) {
      Vec y = flow(F, t, 0.0, Vec(x.begin(), x.end()), scaled_steps(steps, t, span));
      return -F.value(t, y);
    };
  }
  out.support = F.support;
  out.t0 = F.t0;
  out.t1 = F.t1;
  return out;
}

HamiltonianField compose_hamiltonian(const HamiltonianField& F, const HamiltonianField& G,
                                     int steps, AlgebraVariant variant) {
  HamiltonianField out;
  double span = std::abs(F.t1 - F.t0);
  if (variant == AlgebraVariant::Validated) {
    // F(t,x) + G(t, (phi_F^t)^{-1}(x))
    out.value_fn = [F, G, steps, span](double t, std::span<const double> x) {
      Vec y = flow(F, t, 0.0, Vec(x.begin(), x.end()), scaled_steps(steps, t, span));
      return F.value(t, x) + G.value(t, y);
    };
  } else {
    // Literal variant: F(t,x) + G(t, phi_F^t(x))
    out.value_fn = [F, G, steps, span](double t, std::span<const double> x) {
      Vec y = flow(F, 0.0, t, Vec(x.begin(), x.end()), scaled_steps(steps, t, span));
      return F.value(t, x) + G.value(t, y);
    };
  }
  out.support = SupportBox::hull(F.support, G.support);
  out.t0 = F.t0;
  out.t1 = F.t1;
  return out;
}

HamiltonianField conjugate_hamiltonian(const HamiltonianField& F, const MapRep& f,
                                       const SupportBox& result_box) {
  HamiltonianField out;
  out.value_fn = [F, f](double t, std::span<const double> x) {
    return F.value(t, f.apply(Vec(x.begin(), x.end())));
  };
  out.support = result_box;
  out.t0 = F.t0;
  out.t1 = F.t1;
  out.autonomous = F.autonomous;
  return out;
}

IsotopyTrace commutator_isotopy(const MapRep& phi, double delta,
                                const geom::LiouvilleFlow& mu, int steps,
                                const SupportBox* working) {
  if (steps < 1) throw std::invalid_argument("commutator_isotopy: steps >= 1");
  SupportBox scaled = phi.support().scaled_about(mu.center, std::exp(0.5 * delta));
  SupportBox common = SupportBox::hull(phi.support(), scaled);
  if (working) {
    for (int i = 0; i < common.dim(); ++i) {
      if (std::abs(common.center[i] - working->center[i]) + common.radius >
          working->radius)
        throw SupportError("commutator support escapes the working box");
    }
  }

  IsotopyTrace trace;
  trace.support = common;
  for (int j = 0; j <= steps; ++j) {
    double t = delta * j / steps;
    trace.times.push_back(t);
    if (j == 0) {
      trace.maps.push_back(MapRep::identity(common));
    } else {
      trace.maps.push_back(MapRep::compose({MapRep::liouville(mu, t, common), phi,
                                            MapRep::liouville(mu, -t, common),
                                            phi.inverse()}));
    }
  }
  return trace;
}

double c0_distance(const MapRep& f, const MapRep& g, const SupportBox& box,
                   int samples, std::uint64_t seed) {
  auto pts = geom::sample_box(box, samples, seed);
  std::vector<double> dist(samples, 0.0);
  par::parallel_for(samples, [&](int k) {
    Vec a = f.apply(pts[k]);
    Vec b = g.apply(pts[k]);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    dist[k] = std::sqrt(s);
  });
  double worst = 0.0;
  for (double v : dist) worst = std::max(worst, v);
  return worst;
}

PotentialFromOneForm potential_from_one_form(
    const std::function<Vec(const Vec&)>& alpha, const SupportBox& box, int res) {
  int d = box.dim();
  Vec lo(d), hi(d);
  for (int a = 0; a < d; ++a) {
    lo[a] = box.lo(a);
    hi[a] = box.hi(a);
  }
  std::vector<int> shape(d, res + 1);

  PotentialFromOneForm out;
  out.value = geom::GridField::zeros(lo, hi, shape);
  out.alpha.assign(d, geom::GridField::zeros(lo, hi, shape));

  double h = out.value.spacing(0);
  int rows = 1;
  for (int a = 1; a < d; ++a) rows *= res + 1;

  par::parallel_for(rows, [&](int row) {
    // Decode the fixed indices of axes 1..d-1.
    std::vector<int> idx(d, 0);
    int rem = row;
    for (int a = d - 1; a >= 1; --a) {
      idx[a] = rem % (res + 1);
      rem /= res + 1;
    }
    Vec x(d);
    for (int a = 1; a < d; ++a) x[a] = out.value.node_coord(a, idx[a]);

    // Sample alpha at node and half-step positions along axis 0.
    std::vector<double> a0(2 * res + 1);
    std::vector<Vec> nodes(res + 1);
    for (int j = 0; j <= 2 * res; ++j) {
      x[0] = lo[0] + 0.5 * h * j;
      Vec v = alpha(x);
      a0[j] = v[0];
      if (j % 2 == 0) nodes[j / 2] = std::move(v);
    }

    // Cumulative composite Simpson from the lower boundary (potential 0 there).
    double acc = 0.0;
    for (int i = 0; i <= res; ++i) {
      if (i > 0)
        acc += h / 6.0 * (a0[2 * i - 2] + 4.0 * a0[2 * i - 1] + a0[2 * i]);
      idx[0] = i;
      out.value.at(idx) = acc;
      for (int a = 0; a < d; ++a) out.alpha[a].at(idx) = nodes[i][a];
    }
  });

  // Exactness residual: trapezoid loop integrals around every plaquette of
  // every axis pair.
  double residual = 0.0;
  std::vector<int> idx(d, 0);
  for (int a = 0; a < d; ++a) {
    for (int b = a + 1; b < d; ++b) {
      double ha = out.value.spacing(a), hb = out.value.spacing(b);
      std::fill(idx.begin(), idx.end(), 0);
      for (;;) {
        if (idx[a] < res && idx[b] < res) {
          auto corner = [&](int da, int db) {
            std::vector<int> c = idx;
            c[a] += da;
            c[b] += db;
            return c;
          };
          auto c00 = corner(0, 0), c10 = corner(1, 0), c01 = corner(0, 1),
               c11 = corner(1, 1);
          double loop =
              0.5 * (out.alpha[a].at(c00) + out.alpha[a].at(c10)) * ha +
              0.5 * (out.alpha[b].at(c10) + out.alpha[b].at(c11)) * hb -
              0.5 * (out.alpha[a].at(c01) + out.alpha[a].at(c11)) * ha -
              0.5 * (out.alpha[b].at(c00) + out.alpha[b].at(c01)) * hb;
          residual = std::max(residual, std::abs(loop));
        }
        int ax = d - 1;
        for (; ax >= 0; --ax) {
          if (++idx[ax] <= res) break;
          idx[ax] = 0;
        }
        if (ax < 0) break;
      }
    }
  }
  out.loop_residual = residual;
  return out;
}

namespace {

// First-derivative weights at `at` from three sample times (Lagrange).
std::array<double, 3> stencil_weights(double t0, double t1, double t2, double at) {
  return {
      (2.0 * at - t1 - t2) / ((t0 - t1) * (t0 - t2)),
      (2.0 * at - t0 - t2) / ((t1 - t0) * (t1 - t2)),
      (2.0 * at - t0 - t1) / ((t2 - t0) * (t2 - t1)),
  };
}

}  // namespace

RecoveredHamiltonian hamiltonian_from_isotopy(const IsotopyTrace& trace,
                                              const SupportBox& box,
                                              const RecoveryOptions& opts) {
  int count = static_cast<int>(trace.times.size());
  if (count < 3)
    throw std::invalid_argument("hamiltonian_from_isotopy: need at least 3 trace times");
  std::vector<int> which = opts.slices;
  if (which.empty())
    for (int k = 0; k < count; ++k) which.push_back(k);

  RecoveredHamiltonian out;
  out.box = box;
  int n = box.dim() / 2;
  double sign = conventions().iota_sign;

  for (int k : which) {
    int i0 = std::clamp(k - 1, 0, count - 3);
    auto w = stencil_weights(trace.times[i0], trace.times[i0 + 1], trace.times[i0 + 2],
                             trace.times[k]);
    const MapRep& self = trace.maps[k];
    auto alpha = [&, w, i0](const Vec& x) -> Vec {
      Vec y = self.apply_inverse(x);
      Vec v(x.size(), 0.0);
      for (int j = 0; j < 3; ++j) {
        if (w[j] == 0.0) continue;
        Vec img = trace.maps[i0 + j].apply(y);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += w[j] * img[i];
      }
      Vec a(x.size());
      for (int i = 0; i < n; ++i) {
        a[i] = sign * -v[n + i];   // alpha_q = -V_p
        a[n + i] = sign * v[i];    // alpha_p = +V_q
      }
      return a;
    };
    auto pot = potential_from_one_form(alpha, box, opts.res);
    out.times.push_back(trace.times[k]);
    out.value_slices.push_back(std::move(pot.value));
    out.gradient_slices.push_back(std::move(pot.alpha));
    out.closedness_residual = std::max(out.closedness_residual, pot.loop_residual);
  }
  return out;
}

HamiltonianField RecoveredHamiltonian::field() const {
  HamiltonianField H;
  auto times = this->times;
  auto values = this->value_slices;
  auto grads = this->gradient_slices;

  auto bracket = [times](double t) -> std::pair<int, double> {
    int m = static_cast<int>(times.size());
    if (m == 1 || t <= times.front()) return {0, 0.0};
    if (t >= times.back()) return {m - 2, 1.0};
    int i = 0;
    while (i + 2 < m && times[i + 1] <= t) ++i;
    return {i, (t - times[i]) / (times[i + 1] - times[i])};
  };

  H.value_fn = [values, bracket](double t, std::span<const double> x) {
    auto [i, u] = bracket(t);
    if (values.size() == 1) return values[0].interp(x);
    return (1.0 - u) * values[i].interp(x) + u * values[i + 1].interp(x);
  };
  H.gradient_fn = [grads, bracket](double t, std::span<const double> x,
                                   std::span<double> g) {
    auto [i, u] = bracket(t);
    for (std::size_t a = 0; a < g.size(); ++a) {
      if (grads.size() == 1) {
        g[a] = grads[0][a].interp(x);
      } else {
        g[a] = (1.0 - u) * grads[i][a].interp(x) + u * grads[i + 1][a].interp(x);
      }
    }
  };
  H.support = box;
  H.t0 = times.front();
  H.t1 = times.back();
  H.autonomous = times.size() == 1;
  return H;
}

}  // namespace calinv::ham
