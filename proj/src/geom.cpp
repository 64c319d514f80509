#include "calinv/geom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "calinv/parallel.hpp"

namespace calinv::geom {

double omega(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size() || u.size() % 2 != 0 || u.empty())
    throw std::invalid_argument("omega: vectors must share an even length 2n");
  std::size_t n = u.size() / 2;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += u[i] * v[n + i] - u[n + i] * v[i];
  return s;
}

bool SupportBox::contains(std::span<const double> x, double extra) const {
  for (int i = 0; i < dim(); ++i)
    if (std::abs(x[i] - center[i]) > radius + extra) return false;
  return true;
}

SupportBox SupportBox::scaled_about(const Vec& about, double factor) const {
  SupportBox out;
  out.center.resize(center.size());
  for (std::size_t i = 0; i < center.size(); ++i)
    out.center[i] = about[i] + factor * (center[i] - about[i]);
  out.radius = std::abs(factor) * radius;
  out.padding = pad() * std::abs(factor);
  return out;
}

SupportBox SupportBox::hull(const SupportBox& a, const SupportBox& b) {
  SupportBox out;
  out.center.resize(a.center.size());
  double radius = 0.0;
  for (std::size_t i = 0; i < a.center.size(); ++i) {
    double lo = std::min(a.center[i] - a.radius, b.center[i] - b.radius);
    double hi = std::max(a.center[i] + a.radius, b.center[i] + b.radius);
    out.center[i] = 0.5 * (lo + hi);
    radius = std::max(radius, 0.5 * (hi - lo));
  }
  out.radius = radius;
  out.padding = std::max(a.pad(), b.pad());
  return out;
}

Vec LiouvilleFlow::apply(double t, std::span<const double> x) const {
  double s = std::exp(0.5 * t);
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = center[i] + s * (x[i] - center[i]);
  return out;
}

namespace {

// 1-D node weights on [lo, hi] with `cells` intervals.
std::vector<double> rule_weights(int cells, double h, QuadRule rule) {
  if (rule == QuadRule::Midpoint) return std::vector<double>(cells, h);
  std::vector<double> w(cells + 1, h / 3.0);
  for (int i = 1; i < cells; ++i) w[i] = (i % 2 ? 4.0 : 2.0) * h / 3.0;
  return w;
}

void check_boundary_samples(const std::function<double(const Vec&)>& f,
                            const SupportBox& box, double tol) {
  int d = box.dim();
  // Face centers, face corners, and a few Halton points per face.
  for (int axis = 0; axis < d; ++axis) {
    for (int side = 0; side < 2; ++side) {
      double face = side ? box.hi(axis) : box.lo(axis);
      auto probe = [&](const Vec& rest) {
        Vec x = rest;
        x[axis] = face;
        double v = f(x);
        if (std::abs(v) > tol)
          throw SupportError("integrand is " + std::to_string(v) +
                             " on the box boundary; support box too small");
      };
      probe(box.center);
      int corners = 1 << (d - 1);
      if (corners <= 16) {
        for (int mask = 0; mask < corners; ++mask) {
          Vec x = box.center;
          int bit = 0;
          for (int j = 0; j < d; ++j) {
            if (j == axis) continue;
            x[j] = (mask >> bit & 1) ? box.hi(j) : box.lo(j);
            ++bit;
          }
          probe(x);
        }
      }
      for (int k = 1; k <= 8; ++k) {
        Vec u = halton_point(k, d);
        Vec x(d);
        for (int j = 0; j < d; ++j) x[j] = box.lo(j) + 2.0 * box.radius * u[j];
        probe(x);
      }
    }
  }
}

}  // namespace

double integrate(const std::function<double(const Vec&)>& f, const SupportBox& box,
                 int cells_per_axis, QuadRule rule, const QuadOptions& opts) {
  int d = box.dim();
  if (cells_per_axis < 8)
    throw std::invalid_argument("integrate: need at least 8 cells per axis");
  if (rule == QuadRule::Simpson && cells_per_axis % 2 != 0)
    throw std::invalid_argument("integrate: Simpson needs an even cell count");
  if (opts.check_boundary) check_boundary_samples(f, box, opts.boundary_tol);

  double h = 2.0 * box.radius / cells_per_axis;
  auto w = rule_weights(cells_per_axis, h, rule);
  int points = static_cast<int>(w.size());
  auto coord = [&](int axis, int i) {
    return rule == QuadRule::Midpoint ? box.lo(axis) + (i + 0.5) * h
                                      : box.lo(axis) + i * h;
  };

  // Partial sums per outermost index keep the reduction order fixed no
  // matter how many threads run.
  std::vector<double> partial(points, 0.0);
  par::parallel_for(points, [&](int i0) {
    Vec x(d);
    std::vector<int> idx(d, 0);
    x[0] = coord(0, i0);
    double acc = 0.0;
    for (;;) {
      for (int a = 1; a < d; ++a) x[a] = coord(a, idx[a]);
      double wt = w[i0];
      for (int a = 1; a < d; ++a) wt *= w[idx[a]];
      acc += wt * f(x);
      int a = d - 1;
      for (; a >= 1; --a) {
        if (++idx[a] < points) break;
        idx[a] = 0;
      }
      if (a == 0) break;
    }
    partial[i0] = acc;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

std::size_t GridField::index(std::span<const int> idx) const {
  std::size_t flat = 0;
  for (int a = 0; a < dim(); ++a) flat = flat * shape[a] + idx[a];
  return flat;
}

GridField GridField::zeros(const Vec& lo, const Vec& hi, const std::vector<int>& shape) {
  GridField g;
  g.lo = lo;
  g.hi = hi;
  g.shape = shape;
  std::size_t total = 1;
  for (int s : shape) total *= s;
  g.values.assign(total, 0.0);
  return g;
}

double GridField::interp(std::span<const double> x) const {
  int d = dim();
  int base[8];
  double frac[8];
  for (int a = 0; a < d; ++a) {
    double t = (x[a] - lo[a]) / spacing(a);
    if (t < 0.0 || t > shape[a] - 1) return 0.0;
    int i = static_cast<int>(t);
    if (i > shape[a] - 2) i = shape[a] - 2;
    base[a] = i;
    frac[a] = t - i;
  }
  double acc = 0.0;
  int corners = 1 << d;
  int idx[8];
  for (int mask = 0; mask < corners; ++mask) {
    double wt = 1.0;
    for (int a = 0; a < d; ++a) {
      int bit = mask >> a & 1;
      wt *= bit ? frac[a] : 1.0 - frac[a];
      idx[a] = base[a] + bit;
    }
    if (wt != 0.0) acc += wt * at(std::span<const int>(idx, d));
  }
  return acc;
}

double integrate(const GridField& field, QuadRule rule) {
  int d = field.dim();
  std::vector<std::vector<double>> w(d);
  for (int a = 0; a < d; ++a) {
    int cells = field.shape[a] - 1;
    if (rule == QuadRule::Simpson && cells % 2 != 0)
      throw std::invalid_argument("grid integrate: Simpson needs odd node counts");
    if (rule == QuadRule::Simpson) {
      w[a] = rule_weights(cells, field.spacing(a), QuadRule::Simpson);
    } else {  // trapezoid fallback for node-sampled data
      w[a].assign(cells + 1, field.spacing(a));
      w[a].front() *= 0.5;
      w[a].back() *= 0.5;
    }
  }
  std::vector<int> idx(d, 0);
  double acc = 0.0;
  for (;;) {
    double wt = 1.0;
    for (int a = 0; a < d; ++a) wt *= w[a][idx[a]];
    acc += wt * field.at(idx);
    int a = d - 1;
    for (; a >= 0; --a) {
      if (++idx[a] < field.shape[a]) break;
      idx[a] = 0;
    }
    if (a < 0) break;
  }
  return acc;
}

Vec polar_to_cartesian(double r, double theta) {
  return {r * std::cos(theta), r * std::sin(theta)};
}

Polar cartesian_to_polar(std::span<const double> x) {
  double r = std::hypot(x[0], x[1]);
  if (r == 0.0) return {0.0, 0.0};
  return {r, std::atan2(x[1], x[0])};
}

std::vector<Vec> finite_difference_jacobian(const std::function<Vec(const Vec&)>& f,
                                            const Vec& x, double h) {
  int d = static_cast<int>(x.size());
  std::vector<Vec> jac(d, Vec(d, 0.0));
  for (int j = 0; j < d; ++j) {
    Vec xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    Vec fp = f(xp), fm = f(xm);
    for (int i = 0; i < d; ++i) jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
  }
  return jac;
}

double conformal_defect(const std::vector<Vec>& jacobian, double factor) {
  int d = static_cast<int>(jacobian.size());
  int n = d / 2;
  auto omega_entry = [n](int i, int j) -> double {
    if (j == i + n) return 1.0;
    if (i == j + n) return -1.0;
    return 0.0;
  };
  double worst = 0.0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      // (J^T Omega J)_ij = sum_{k,l} J_ki Omega_kl J_lj
      double s = 0.0;
      for (int k = 0; k < n; ++k)
        s += jacobian[k][i] * jacobian[k + n][j] - jacobian[k + n][i] * jacobian[k][j];
      worst = std::max(worst, std::abs(s - factor * omega_entry(i, j)));
    }
  }
  return worst;
}

Vec halton_point(std::uint64_t index, int dim) {
  static constexpr int primes[] = {2, 3, 5, 7, 11, 13, 17, 19};
  if (dim > 8) throw std::invalid_argument("halton_point: dim > 8");
  Vec out(dim);
  for (int a = 0; a < dim; ++a) {
    std::uint64_t i = index;
    double f = 1.0, r = 0.0;
    while (i > 0) {
      f /= primes[a];
      r += f * static_cast<double>(i % primes[a]);
      i /= primes[a];
    }
    out[a] = r;
  }
  return out;
}

std::vector<Vec> sample_box(const SupportBox& box, int count, std::uint64_t seed) {
  int d = box.dim();
  std::vector<Vec> pts(count);
  std::uint64_t start = seed * 7919 + 1;
  for (int k = 0; k < count; ++k) {
    Vec u = halton_point(start + k, d);
    Vec x(d);
    for (int a = 0; a < d; ++a) x[a] = box.lo(a) + 2.0 * box.radius * u[a];
    pts[k] = std::move(x);
  }
  return pts;
}

}  // namespace calinv::geom
