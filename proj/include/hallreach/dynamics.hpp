#pragma once

// Kinematic bicycle model with zero slip angle:
//   x' = v cos(theta), y' = v sin(theta),
//   v' = -c_a v + c_a c_m (u - c_h),
//   theta' = v tan(delta) / (l_f + l_r).

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "hallreach/affine.hpp"
#include "hallreach/errors.hpp"
#include "hallreach/interval.hpp"
#include "hallreach/state.hpp"

namespace hallreach {

struct DynamicsParams {
  double c_a = 1.633;
  double c_m = 0.2;
  double c_h = 4.0;
  double l_f = 0.225;
  double l_r = 0.225;
  double u = 16.0;

  double wheelbase() const { return l_f + l_r; }
  /// Equilibrium speed c_m (u - c_h).
  double top_speed() const { return c_m * (u - c_h); }

  void validate() const {
    for (double v : {c_a, c_m, c_h, l_f, l_r, u}) {
      if (!std::isfinite(v)) throw ConfigError("dynamics parameters must be finite");
    }
    if (!(c_a > 0.0)) throw ConfigError("c_a must be positive");
    if (!(c_m > 0.0)) throw ConfigError("c_m must be positive");
    if (!(l_f + l_r > 0.0)) throw ConfigError("l_f + l_r must be positive");
  }
};

inline std::array<double, 4> derivative(const CarState& s, double steering, const DynamicsParams& p) {
  return {s.v * std::cos(s.theta), s.v * std::sin(s.theta), -p.c_a * s.v + p.c_a * p.c_m * (p.u - p.c_h),
          s.v * std::tan(steering) / p.wheelbase()};
}

inline constexpr double kDefaultSubstep = 1e-3;

/// One classical RK4 step of length h with the steering held constant.
inline CarState rk4_step(const CarState& s0, double steering, double h, const DynamicsParams& p) {
  auto add = [](const CarState& s, const std::array<double, 4>& d, double f) {
    return CarState{s.x + f * d[0], s.y + f * d[1], s.v + f * d[2], s.theta + f * d[3]};
  };
  CarState s = s0;
  const auto k1 = derivative(s, steering, p);
  const auto k2 = derivative(add(s, k1, h / 2), steering, p);
  const auto k3 = derivative(add(s, k2, h / 2), steering, p);
  const auto k4 = derivative(add(s, k3, h), steering, p);
  s.x += h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]);
  s.y += h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]);
  s.v += h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]);
  s.theta += h / 6 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3]);
  return s;
}

/// RK4 over `duration` with the steering held constant, calling
/// `on_substep(state)` after every substep. The number of substeps is
/// duration / substep rounded to the nearest integer.
template <class Observer>
CarState integrate_step(const CarState& s0, double steering, double duration, const DynamicsParams& p, double substep,
                        Observer&& on_substep) {
  if (!(duration > 0.0)) throw DomainError("integration duration must be positive");
  if (!(substep > 0.0)) throw DomainError("integration substep must be positive");
  const long n = std::max(1L, std::lround(duration / substep));
  const double h = duration / static_cast<double>(n);
  CarState s = s0;
  for (long i = 0; i < n; ++i) {
    s = rk4_step(s, steering, h, p);
    on_substep(s);
  }
  return s;
}

inline CarState integrate_step(const CarState& s0, double steering, double duration, const DynamicsParams& p,
                               double substep = kDefaultSubstep) {
  return integrate_step(s0, steering, duration, p, substep, [](const CarState&) {});
}

/// Car state as first-order forms over the initial-set symbols.
struct AffineState {
  AffineForm x, y, v, theta;

  StateBox box() const { return {x.range(), y.range(), v.range(), theta.range()}; }
  std::array<AffineForm*, 4> forms() { return {&x, &y, &v, &theta}; }
  void substitute(SymbolId id, double shift, double scale) {
    for (AffineForm* f : forms()) f->substitute(id, shift, scale);
  }
};

struct FlowOptions {
  int order = 4;        // Taylor order k
  int substeps = 2;     // power of two, so the substep length is exact
  int tube_slices = 4;  // time slices per substep for the swept box
};

namespace flow_detail {

inline Interval mul(const Interval& a, const Interval& b, NoiseContext*) { return a * b; }
inline AffineForm mul(const AffineForm& a, const AffineForm& b, NoiseContext* ctx) {
  return hallreach::mul(a, b, *ctx);
}
inline Interval cos_of(const Interval& a, NoiseContext*) { return cos(a); }
inline Interval sin_of(const Interval& a, NoiseContext*) { return sin(a); }
inline AffineForm cos_of(const AffineForm& a, NoiseContext* ctx) { return cos(a, *ctx); }
inline AffineForm sin_of(const AffineForm& a, NoiseContext* ctx) { return sin(a, *ctx); }
inline Interval range_of(const Interval& a) { return a; }
inline Interval range_of(const AffineForm& a) { return a.range(); }

inline Interval inverse(int n) { return Interval(1.0) / Interval(static_cast<double>(n)); }

/// Taylor coefficients [0..order] of the flow in time, with kappa = tan(delta)/L
/// held constant. Uses j*theta_j = kappa*v_{j-1}, so cos and sin coefficients
/// reuse the products (v*c)_n and (v*s)_n that also drive x and y.
template <class T>
struct TaylorSeries {
  std::vector<T> x, y, v, theta;
};

template <class T>
TaylorSeries<T> taylor_series(const T& x0, const T& y0, const T& v0, const T& th0, const T& kappa,
                              const DynamicsParams& p, int order, NoiseContext* ctx) {
  const Interval drive = Interval(p.c_a) * Interval(p.c_m) * (Interval(p.u) - Interval(p.c_h));
  const Interval neg_ca(-p.c_a);
  TaylorSeries<T> ts;
  std::vector<T> c, s;
  ts.x.push_back(x0);
  ts.y.push_back(y0);
  ts.v.push_back(v0);
  ts.theta.push_back(th0);
  c.push_back(cos_of(th0, ctx));
  s.push_back(sin_of(th0, ctx));
  for (int n = 0; n < order; ++n) {
    T pc = mul(ts.v[0], c[n], ctx);
    T qs = mul(ts.v[0], s[n], ctx);
    for (int j = 1; j <= n; ++j) {
      pc = pc + mul(ts.v[j], c[n - j], ctx);
      qs = qs + mul(ts.v[j], s[n - j], ctx);
    }
    const Interval inv = inverse(n + 1);
    T dv = neg_ca * ts.v[n];
    if (n == 0) dv = dv + drive;
    ts.v.push_back(inv * dv);
    ts.theta.push_back(inv * mul(kappa, ts.v[n], ctx));
    ts.x.push_back(inv * pc);
    ts.y.push_back(inv * qs);
    c.push_back(-(inv * mul(kappa, qs, ctx)));
    s.push_back(inv * mul(kappa, pc, ctx));
  }
  return ts;
}

/// Rigorous box containing the whole trajectory over [0, h]: the speed stays
/// between v0 and the equilibrium speed, and the other components follow from
/// one Picard step with that speed bound.
inline StateBox a_priori_box(const StateBox& s0, const Interval& kappa, double h, const DynamicsParams& p) {
  const Interval vstar = Interval(p.c_m) * (Interval(p.u) - Interval(p.c_h));
  const Interval speed = hull(s0.v, vstar);
  const Interval t(0.0, h);
  const Interval heading = s0.theta + t * kappa * speed;
  const Interval x = s0.x + t * speed * cos(heading);
  const Interval y = s0.y + t * speed * sin(heading);
  for (const Interval& b : {x, y, speed, heading}) {
    if (!std::isfinite(b.lo()) || !std::isfinite(b.hi())) throw EnclosureFailure("non-finite a-priori box");
  }
  return {x, y, speed, heading};
}

/// Lagrange remainder ranges: coefficient order+1 over the a-priori box.
inline std::array<Interval, 4> remainder_coeffs(const StateBox& b, const Interval& kappa, const DynamicsParams& p,
                                                int order) {
  auto ts = taylor_series<Interval>(b.x, b.y, b.v, b.theta, kappa, p, order + 1, nullptr);
  return {ts.x[order + 1], ts.y[order + 1], ts.v[order + 1], ts.theta[order + 1]};
}

template <class T>
Interval poly_range(const std::vector<T>& coeffs, int order, const Interval& t, const Interval& rem) {
  Interval acc = range_of(coeffs[order]);
  for (int n = order - 1; n >= 0; --n) acc = acc * t + range_of(coeffs[n]);
  return acc + rem * pow(t, order + 1);
}

inline void check_options(const FlowOptions& o, double duration) {
  if (o.order < 1) throw ConfigError("flow order must be at least 1");
  if (o.substeps < 1 || (o.substeps & (o.substeps - 1)) != 0) {
    throw ConfigError("flow substeps must be a power of two");
  }
  if (o.tube_slices < 1) throw ConfigError("tube_slices must be at least 1");
  if (!(duration > 0.0) || !std::isfinite(duration)) throw DomainError("flow duration must be positive");
}

inline Interval kappa_range(const Interval& steering, const DynamicsParams& p) {
  if (!(steering.mag() < 1.5)) throw EnclosureFailure("steering interval too wide for tan");
  return tan(steering) / Interval(p.wheelbase());
}

}  // namespace flow_detail

/// Sound enclosure of the state after `duration` for every initial state in
/// `s` and every constant steering in `steering`. Plain interval Taylor
/// arithmetic, hence inclusion isotone.
inline StateBox flow_enclosure(const StateBox& s, const Interval& steering, double duration, const DynamicsParams& p,
                               const FlowOptions& opt = {}) {
  using namespace flow_detail;
  check_options(opt, duration);
  const Interval kappa = kappa_range(steering, p);
  const double h = duration / opt.substeps;
  StateBox cur = s;
  for (int step = 0; step < opt.substeps; ++step) {
    const StateBox apriori = a_priori_box(cur, kappa, h, p);
    const auto rem = remainder_coeffs(apriori, kappa, p, opt.order);
    auto ts = taylor_series<Interval>(cur.x, cur.y, cur.v, cur.theta, kappa, p, opt.order, nullptr);
    const Interval t(h);
    StateBox next{poly_range(ts.x, opt.order, t, rem[0]), poly_range(ts.y, opt.order, t, rem[1]),
                  poly_range(ts.v, opt.order, t, rem[2]), poly_range(ts.theta, opt.order, t, rem[3])};
    next.x = intersect(next.x, apriori.x);
    next.y = intersect(next.y, apriori.y);
    next.v = intersect(next.v, apriori.v);
    next.theta = intersect(next.theta, apriori.theta);
    cur = next;
  }
  return cur;
}

struct AffineFlow {
  AffineState end;
  StateBox swept;                // every state visited during the period
  std::vector<StateBox> slices;  // the same states, split by time slice
};

/// First-order version: the end state keeps its dependence on the initial
/// symbols; the Lagrange remainder goes to the independent remainder.
inline AffineFlow flow_enclosure(const AffineState& s, const AffineForm& steering, double duration,
                                 const DynamicsParams& p, const FlowOptions& opt, NoiseContext& ctx) {
  using namespace flow_detail;
  check_options(opt, duration);
  const Interval kappa_box = kappa_range(steering.range(), p);
  const AffineForm kappa = Interval(1.0) / Interval(p.wheelbase()) * tan(steering, ctx);
  const double h = duration / opt.substeps;
  AffineFlow out{s, StateBox::point({}), {}};
  bool first = true;
  for (int step = 0; step < opt.substeps; ++step) {
    const AffineState& cur = out.end;
    const StateBox apriori = a_priori_box(cur.box(), kappa_box, h, p);
    const auto rem = remainder_coeffs(apriori, kappa_box, p, opt.order);
    auto ts = taylor_series<AffineForm>(cur.x, cur.y, cur.v, cur.theta, kappa, p, opt.order, &ctx);

    for (int j = 0; j < opt.tube_slices; ++j) {
      const Interval t{round_down(h * j / opt.tube_slices), j + 1 == opt.tube_slices ? h : round_up(h * (j + 1) / opt.tube_slices)};
      StateBox slice{poly_range(ts.x, opt.order, t, rem[0]), poly_range(ts.y, opt.order, t, rem[1]),
                     poly_range(ts.v, opt.order, t, rem[2]), poly_range(ts.theta, opt.order, t, rem[3])};
      slice.x = intersect(slice.x, apriori.x);
      slice.y = intersect(slice.y, apriori.y);
      slice.v = intersect(slice.v, apriori.v);
      slice.theta = intersect(slice.theta, apriori.theta);
      out.swept = first ? slice : hull(out.swept, slice);
      out.slices.push_back(slice);
      first = false;
    }

    auto horner = [&](const std::vector<AffineForm>& c, const Interval& r) {
      AffineForm acc = c[opt.order];
      for (int n = opt.order - 1; n >= 0; --n) acc = AffineForm::combine(h, acc, 1.0, c[n]);
      acc += r * pow(Interval(h), opt.order + 1);
      return acc;
    };
    AffineState next{horner(ts.x, rem[0]), horner(ts.y, rem[1]), horner(ts.v, rem[2]), horner(ts.theta, rem[3])};
    out.end = std::move(next);
  }
  return out;
}

}  // namespace hallreach
