#pragma once

// First-order (affine) enclosures.
//
// An AffineForm represents the set
//     { c + sum_i a_i * e_i + r * n  :  e_i in [-1, 1], n in [-1, 1] }
// where the e_i are noise symbols shared between forms (so correlations
// survive through a computation) and r >= 0 is an independent remainder that
// absorbs floating-point rounding errors. Symbols below kFirstFreshSymbol are
// reserved for initial-set parameters; nonlinear operations allocate fresh
// symbols from a NoiseContext.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "hallreach/interval.hpp"

namespace hallreach {

using SymbolId = std::uint32_t;

inline constexpr SymbolId kNumInitialSymbols = 4;
inline constexpr SymbolId kFirstFreshSymbol = 16;

class NoiseContext {
 public:
  explicit NoiseContext(SymbolId first = kFirstFreshSymbol) : next_(first) {}
  SymbolId fresh() { return next_++; }
  SymbolId next() const { return next_; }

 private:
  SymbolId next_;
};

namespace affine_detail {

inline constexpr double kUnit = 0x1p-53;
// Absolute slack per operation covering underflow in products.
inline constexpr double kTiny = 1e-300;

// Inflate a nonnegative bound accumulated from about n terms so that the
// floating-point summation error of the bound itself is covered.
inline double finish_bound(double e, std::size_t n = 16) {
  return e == 0.0 ? 0.0 : round_up(e * (1.0 + static_cast<double>(n + 2) * 2 * kUnit) + kTiny);
}

}  // namespace affine_detail

class AffineForm {
 public:
  struct Term {
    SymbolId id;
    double coeff;
  };

  AffineForm() = default;
  AffineForm(double c) : center_(c) {}  // NOLINT: exact constant promotion

  /// Constant enclosing an interval (no symbol; width goes to the remainder).
  static AffineForm from_interval(const Interval& x) {
    AffineForm f(x.mid());
    f.err_ = x.rad();
    return f;
  }

  /// Form ranging over x driven by a single symbol.
  static AffineForm from_interval(const Interval& x, SymbolId id) {
    AffineForm f(x.mid());
    const double r = x.rad();
    if (r > 0.0) f.terms_.push_back({id, r});
    // rad() is rounded up, so the symbol range already covers x.
    return f;
  }

  double center() const { return center_; }
  double err() const { return err_; }
  std::span<const Term> terms() const { return terms_; }
  std::size_t num_terms() const { return terms_.size(); }

  double coeff(SymbolId id) const {
    auto it = std::lower_bound(terms_.begin(), terms_.end(), id,
                               [](const Term& t, SymbolId v) { return t.id < v; });
    return (it != terms_.end() && it->id == id) ? it->coeff : 0.0;
  }

  /// Sum of |a_i| over symbols plus the remainder, rounded up.
  double radius() const {
    double r = err_;
    for (const auto& t : terms_) r += std::fabs(t.coeff);
    return affine_detail::finish_bound(r, terms_.size() + 1);
  }

  Interval range() const {
    const double r = radius();
    return {round_down(center_ - r), round_up(center_ + r)};
  }

  bool is_constant() const { return terms_.empty() && err_ == 0.0; }

  void add_err(double e) {
    if (e > 0.0) err_ = round_up(err_ + e);
  }

  /// Add an exactly-known interval constant.
  AffineForm& operator+=(const Interval& x) {
    const double m = x.mid();
    const double c = center_ + m;
    add_err(std::fabs(c) * affine_detail::kUnit + x.rad() + affine_detail::kTiny);
    center_ = c;
    return *this;
  }

  /// Replace symbol id by shift + scale * id (re-parametrises a sub-range of
  /// the symbol's domain [-1, 1]).
  void substitute(SymbolId id, double shift, double scale) {
    auto it = std::lower_bound(terms_.begin(), terms_.end(), id,
                               [](const Term& t, SymbolId v) { return t.id < v; });
    if (it == terms_.end() || it->id != id) return;
    const double a = it->coeff;
    const double ds = a * shift;
    const double c = center_ + ds;
    const double na = a * scale;
    add_err(affine_detail::finish_bound((std::fabs(ds) + std::fabs(c) + std::fabs(na)) * affine_detail::kUnit +
                                        affine_detail::kTiny));
    center_ = c;
    if (na == 0.0) {
      terms_.erase(it);
    } else {
      it->coeff = na;
    }
  }

  /// Moves the independent remainder onto a new symbol so later operations
  /// can track its dependence.
  void symbolize_remainder(NoiseContext& ctx) {
    if (err_ == 0.0) return;
    terms_.push_back({ctx.fresh(), err_});
    err_ = 0.0;
  }

  // Raw access for the few algorithms that build forms directly.
  void set_terms_unchecked(std::vector<Term> terms) { terms_ = std::move(terms); }
  void set_center_unchecked(double c) { center_ = c; }
  void set_err_unchecked(double e) { err_ = e; }

  /// a*x + b*y + c with rounding errors accounted in the remainder.
  static AffineForm combine(double a, const AffineForm& x, double b, const AffineForm& y, double c = 0.0) {
    using affine_detail::kUnit;
    AffineForm z;
    double rounding = 0.0;
    const double ax0 = a * x.center_;
    const double by0 = b * y.center_;
    z.center_ = ax0 + by0 + c;
    rounding += (std::fabs(ax0) + std::fabs(by0) + std::fabs(c) + std::fabs(z.center_)) * 2 * kUnit;
    z.terms_.reserve(x.terms_.size() + y.terms_.size());
    auto ix = x.terms_.begin();
    auto iy = y.terms_.begin();
    while (ix != x.terms_.end() || iy != y.terms_.end()) {
      if (iy == y.terms_.end() || (ix != x.terms_.end() && ix->id < iy->id)) {
        const double v = a * ix->coeff;
        rounding += std::fabs(v) * kUnit;
        if (v != 0.0) z.terms_.push_back({ix->id, v});
        ++ix;
      } else if (ix == x.terms_.end() || iy->id < ix->id) {
        const double v = b * iy->coeff;
        rounding += std::fabs(v) * kUnit;
        if (v != 0.0) z.terms_.push_back({iy->id, v});
        ++iy;
      } else {
        const double p = a * ix->coeff;
        const double q = b * iy->coeff;
        const double v = p + q;
        rounding += (std::fabs(p) + std::fabs(q) + std::fabs(v)) * 2 * kUnit;
        if (v != 0.0) z.terms_.push_back({ix->id, v});
        ++ix;
        ++iy;
      }
    }
    rounding += std::fabs(a) * x.err_ * (1 + 4 * kUnit) + std::fabs(b) * y.err_ * (1 + 4 * kUnit);
    z.err_ = affine_detail::finish_bound(rounding + affine_detail::kTiny, x.terms_.size() + y.terms_.size() + 4);
    return z;
  }

  friend AffineForm operator+(const AffineForm& x, const AffineForm& y) { return combine(1.0, x, 1.0, y); }
  friend AffineForm operator-(const AffineForm& x, const AffineForm& y) { return combine(1.0, x, -1.0, y); }
  friend AffineForm operator-(const AffineForm& x) { return combine(-1.0, x, 0.0, AffineForm{}); }
  friend AffineForm operator*(double a, const AffineForm& x) { return combine(a, x, 0.0, AffineForm{}); }
  friend AffineForm operator*(const AffineForm& x, double a) { return combine(a, x, 0.0, AffineForm{}); }
  friend AffineForm operator+(const AffineForm& x, const Interval& c) {
    AffineForm z = x;
    z += c;
    return z;
  }
  friend AffineForm operator+(const Interval& c, const AffineForm& x) { return x + c; }
  friend AffineForm operator-(const AffineForm& x, const Interval& c) { return x + (-c); }
  friend AffineForm operator-(const Interval& c, const AffineForm& x) { return (-x) + c; }
  friend AffineForm operator+(const AffineForm& x, double c) { return combine(1.0, x, 0.0, AffineForm{}, c); }
  friend AffineForm operator+(double c, const AffineForm& x) { return combine(1.0, x, 0.0, AffineForm{}, c); }
  friend AffineForm operator-(const AffineForm& x, double c) { return combine(1.0, x, 0.0, AffineForm{}, -c); }
  friend AffineForm operator-(double c, const AffineForm& x) { return combine(-1.0, x, 0.0, AffineForm{}, c); }

  /// Multiplication by an interval-valued constant.
  friend AffineForm operator*(const Interval& a, const AffineForm& x) {
    if (a.is_point()) return a.lo() * x;
    const double m = a.mid();
    AffineForm z = m * x;
    // (a - m) * x is bounded by rad(a) * |x|.
    z.add_err(affine_detail::finish_bound(a.rad() * x.range().mag()));
    return z;
  }

 private:
  double center_ = 0.0;
  std::vector<Term> terms_;
  double err_ = 0.0;
};

/// Product of two affine forms; the quadratic part becomes a fresh symbol.
inline AffineForm mul(const AffineForm& x, const AffineForm& y, NoiseContext& ctx) {
  using affine_detail::kUnit;
  if (x.num_terms() == 0 && x.err() == 0.0) return x.center() * y;
  if (y.num_terms() == 0 && y.err() == 0.0) return y.center() * x;
  // x0*y + y0*x - x0*y0; combine() already charges |y0|*ex + |x0|*ey.
  const double x0y0 = x.center() * y.center();
  AffineForm z = AffineForm::combine(y.center(), x, x.center(), y, -x0y0);
  const double c = z.center();
  double rounding = std::fabs(x0y0) * kUnit;

  double rx = 0.0, ry = 0.0, diag_abs = 0.0, diag = 0.0;
  for (const auto& t : x.terms()) rx += std::fabs(t.coeff);
  for (const auto& t : y.terms()) ry += std::fabs(t.coeff);
  {
    auto ix = x.terms().begin();
    auto iy = y.terms().begin();
    while (ix != x.terms().end() && iy != y.terms().end()) {
      if (ix->id < iy->id) {
        ++ix;
      } else if (iy->id < ix->id) {
        ++iy;
      } else {
        const double p = ix->coeff * iy->coeff;
        diag += p;
        diag_abs += std::fabs(p);
        ++ix;
        ++iy;
      }
    }
  }
  // sum_i x_i y_i e_i^2 lies in 0.5*diag +- 0.5*diag_abs.
  const double shift = 0.5 * diag;
  const double cc = c + shift;
  rounding += (std::fabs(shift) + std::fabs(cc)) * 2 * kUnit;
  double quad = rx * ry - 0.5 * diag_abs;
  quad = std::max(quad, 0.0) + 1e-13 * rx * ry;
  const double cross = x.err() * ry + y.err() * rx + x.err() * y.err();
  z.set_center_unchecked(cc);
  z.add_err(affine_detail::finish_bound(rounding + cross + affine_detail::kTiny, x.num_terms() + y.num_terms() + 4));
  if (quad > 0.0) {
    std::vector<AffineForm::Term> terms(z.terms().begin(), z.terms().end());
    terms.push_back({ctx.fresh(), affine_detail::finish_bound(quad, x.num_terms() + y.num_terms() + 4)});
    z.set_terms_unchecked(std::move(terms));
  }
  return z;
}

/// Result of linearising a scalar function over a range: f(x) is contained in
/// alpha * x + zeta + [-delta, delta].
struct Linearization {
  double alpha = 0.0;
  Interval zeta;
  double delta = 0.0;
};

/// Apply a linearisation, allocating one fresh symbol for delta.
inline AffineForm apply_linearization(const AffineForm& x, const Linearization& lin, NoiseContext& ctx) {
  AffineForm z = lin.alpha * x;
  z += lin.zeta;
  double d = lin.delta;
  if (d > 0.0) {
    std::vector<AffineForm::Term> terms(z.terms().begin(), z.terms().end());
    terms.push_back({ctx.fresh(), d});
    z.set_terms_unchecked(std::move(terms));
  }
  return z;
}

namespace affine_detail {

// Interval-only fallback: alpha = 0.
inline Linearization flat(const Interval& fx) {
  Linearization lin;
  lin.zeta = Interval(fx.mid());
  lin.delta = fx.rad();
  return lin;
}

inline double total_radius(const Linearization& lin, double rx) {
  return std::fabs(lin.alpha) * rx + lin.delta + lin.zeta.rad();
}

// Min-range linearisation of a nondecreasing f whose derivative is at least
// alpha on the range: g = f - alpha*x is nondecreasing, so its range is
// [g(a), g(b)].
template <class F>
Linearization min_range_increasing(const Interval& r, double alpha, F&& f) {
  const Interval ga = f(Interval(r.lo())) - Interval(alpha) * Interval(r.lo());
  const Interval gb = f(Interval(r.hi())) - Interval(alpha) * Interval(r.hi());
  const Interval g{std::min(ga.lo(), gb.lo()), std::max(ga.hi(), gb.hi())};
  Linearization lin;
  lin.alpha = alpha;
  lin.zeta = Interval(g.mid());
  lin.delta = g.rad();
  return lin;
}

// A linearisation keeps the dependence on existing symbols, so it is kept
// unless it is more than kFlatFactor times wider than the flat enclosure.
inline constexpr double kFlatFactor = 2.0;

inline Linearization pick(const Linearization& lin, const Linearization& flat, double rx) {
  return total_radius(lin, rx) <= kFlatFactor * total_radius(flat, rx) ? lin : flat;
}

}  // namespace affine_detail

inline AffineForm tanh(const AffineForm& x, NoiseContext& ctx) {
  const Interval r = x.range();
  if (r.is_point()) return AffineForm::from_interval(tanh(r));
  const double big = r.mag();
  const double alpha = sech2(Interval(big)).lo() * (1.0 - 1e-9);
  auto lin = affine_detail::min_range_increasing(r, alpha, [](const Interval& v) { return tanh(v); });
  lin = affine_detail::pick(lin, affine_detail::flat(tanh(r)), r.rad());
  return apply_linearization(x, lin, ctx);
}

inline AffineForm atan(const AffineForm& x, NoiseContext& ctx) {
  const Interval r = x.range();
  if (r.is_point()) return AffineForm::from_interval(atan(r));
  const double big = r.mag();
  const double alpha = (Interval(1.0) / (Interval(1.0) + sqr(Interval(big)))).lo() * (1.0 - 1e-9);
  auto lin = affine_detail::min_range_increasing(r, alpha, [](const Interval& v) { return atan(v); });
  lin = affine_detail::pick(lin, affine_detail::flat(atan(r)), r.rad());
  return apply_linearization(x, lin, ctx);
}

/// tan on a range inside (-pi/2, pi/2).
inline AffineForm tan(const AffineForm& x, NoiseContext& ctx) {
  const Interval r = x.range();
  if (r.is_point()) return AffineForm::from_interval(tan(r));
  const double small = r.mig();
  const double alpha = (Interval(1.0) + sqr(tan(Interval(small)))).lo() * (1.0 - 1e-9);
  auto lin = affine_detail::min_range_increasing(r, alpha, [](const Interval& v) { return tan(v); });
  lin = affine_detail::pick(lin, affine_detail::flat(tan(r)), r.rad());
  return apply_linearization(x, lin, ctx);
}

/// 1/x for a range not containing zero.
inline AffineForm reciprocal(const AffineForm& x, NoiseContext& ctx) {
  const Interval r = x.range();
  if (r.contains_zero()) throw DomainError("affine reciprocal of a range containing zero");
  if (r.is_point()) return AffineForm::from_interval(Interval(1.0) / r);
  const bool neg = r.hi() < 0.0;
  const Interval p = neg ? -r : r;
  // g(x) = 1/x + |alpha| x with |alpha| <= 1/b^2 is nonincreasing on [a, b].
  const double mag_alpha = (Interval(1.0) / sqr(Interval(p.hi()))).lo() * (1.0 - 1e-9);
  const Interval ga = Interval(1.0) / Interval(p.lo()) + Interval(mag_alpha) * Interval(p.lo());
  const Interval gb = Interval(1.0) / Interval(p.hi()) + Interval(mag_alpha) * Interval(p.hi());
  const Interval g{std::min(ga.lo(), gb.lo()), std::max(ga.hi(), gb.hi())};
  Linearization lin;
  // For x < 0: 1/x = -(1/(-x)) = -(g(-x) - |alpha|(-x)) = -g(-x) - |alpha| x.
  lin.alpha = -mag_alpha;
  lin.zeta = neg ? Interval(-g.mid()) : Interval(g.mid());
  lin.delta = g.rad();
  lin = affine_detail::pick(lin, affine_detail::flat(Interval(1.0) / r), r.rad());
  return apply_linearization(x, lin, ctx);
}

namespace affine_detail {

// Second-order Taylor linearisation about the centre for f with |f''| bounded
// by d2 on the range.
inline Linearization taylor2(double x0, double rx, const Interval& f0, double f1, const Interval& d2) {
  Linearization lin;
  lin.alpha = f1;
  // alpha is used as an exact slope: shift the constant to f(x0) - alpha*x0.
  lin.zeta = f0 - Interval(f1) * Interval(x0);
  lin.delta = finish_bound(0.5 * d2.mag() * rx * rx + 1e-15 * std::fabs(f1) * rx);
  return lin;
}

}  // namespace affine_detail

inline AffineForm sin(const AffineForm& x, NoiseContext& ctx) {
  const Interval r = x.range();
  if (r.is_point()) return AffineForm::from_interval(sin(r));
  const double x0 = x.center();
  const double rx = std::max(x0 - r.lo(), r.hi() - x0);
  auto lin = affine_detail::taylor2(x0, rx, sin(Interval(x0)), std::cos(x0), sin(r));
  lin = affine_detail::pick(lin, affine_detail::flat(sin(r)), rx);
  return apply_linearization(x, lin, ctx);
}

inline AffineForm cos(const AffineForm& x, NoiseContext& ctx) {
  const Interval r = x.range();
  if (r.is_point()) return AffineForm::from_interval(cos(r));
  const double x0 = x.center();
  const double rx = std::max(x0 - r.lo(), r.hi() - x0);
  auto lin = affine_detail::taylor2(x0, rx, cos(Interval(x0)), -std::sin(x0), cos(r));
  lin = affine_detail::pick(lin, affine_detail::flat(cos(r)), rx);
  return apply_linearization(x, lin, ctx);
}

/// Replace the range [lo, hi] of x by a fresh-symbol form on the intersection
/// with [floor, ceiling]; returns x unchanged when already inside.
inline AffineForm clamp(const AffineForm& x, double floor, double ceiling, NoiseContext& ctx) {
  const Interval r = x.range();
  if (r.lo() >= floor && r.hi() <= ceiling) return x;
  if (r.lo() >= ceiling) return AffineForm(ceiling);
  if (r.hi() <= floor) return AffineForm(floor);
  const Interval c{std::max(r.lo(), floor), std::min(r.hi(), ceiling)};
  // clamp(v) = v + k with k in [-(hi - ceiling)+, (floor - lo)+].
  const double up = std::max(0.0, round_up(floor - r.lo()));
  const double down = std::max(0.0, round_up(r.hi() - ceiling));
  if (round_up(r.rad() + 0.5 * (up + down)) <= affine_detail::kFlatFactor * c.rad()) {
    AffineForm z = x + Interval(-down, up);
    return z;
  }
  return AffineForm::from_interval(c, ctx.fresh());
}

/// Order reduction: keep the `keep` fresh symbols with the largest total
/// weight across `forms`, fold the rest into one new symbol per form.
inline void reduce_symbols(std::span<AffineForm* const> forms, std::size_t keep, NoiseContext& ctx) {
  std::vector<std::pair<SymbolId, double>> weight;
  for (const AffineForm* f : forms) {
    for (const auto& t : f->terms()) {
      if (t.id < kFirstFreshSymbol) continue;
      auto it = std::find_if(weight.begin(), weight.end(), [&](const auto& w) { return w.first == t.id; });
      if (it == weight.end()) {
        weight.emplace_back(t.id, std::fabs(t.coeff));
      } else {
        it->second += std::fabs(t.coeff);
      }
    }
  }
  if (weight.size() <= keep) return;
  std::sort(weight.begin(), weight.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<SymbolId> kept;
  for (std::size_t i = 0; i < keep; ++i) kept.push_back(weight[i].first);
  std::sort(kept.begin(), kept.end());
  for (AffineForm* f : forms) {
    std::vector<AffineForm::Term> terms;
    double folded = 0.0;
    for (const auto& t : f->terms()) {
      if (t.id < kFirstFreshSymbol || std::binary_search(kept.begin(), kept.end(), t.id)) {
        terms.push_back(t);
      } else {
        folded += std::fabs(t.coeff);
      }
    }
    if (folded > 0.0) terms.push_back({ctx.fresh(), affine_detail::finish_bound(folded, f->num_terms())});
    f->set_terms_unchecked(std::move(terms));
  }
}

}  // namespace hallreach
