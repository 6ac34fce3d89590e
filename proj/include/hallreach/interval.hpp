#pragma once

// Closed real intervals with outward rounding.
//
// Rounding policy: the basic operations (+ - * / sqrt) are correctly rounded
// in IEEE-754 double, so every computed bound is widened by one ulp
// (nextafter) away from the interval. Library transcendentals (sin, cos, tan,
// tanh, atan, exp, cosh) are not guaranteed correctly rounded; their results
// are widened by kTranscendentalUlps ulps.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "hallreach/errors.hpp"

namespace hallreach {

inline constexpr int kTranscendentalUlps = 4;

inline double round_down(double x, int ulps = 1) {
  for (int i = 0; i < ulps; ++i) x = std::nextafter(x, -std::numeric_limits<double>::infinity());
  return x;
}

inline double round_up(double x, int ulps = 1) {
  for (int i = 0; i < ulps; ++i) x = std::nextafter(x, std::numeric_limits<double>::infinity());
  return x;
}

class Interval {
 public:
  constexpr Interval() = default;
  constexpr Interval(double v) : lo_(v), hi_(v) {}  // NOLINT: implicit point promotion
  Interval(double lo, double hi) : lo_(lo), hi_(hi) {
    if (!(lo <= hi)) throw DomainError("interval with lo > hi or NaN bound");
  }

  static Interval entire() {
    return {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  }
  /// Interval mid +- rad, rounded outward.
  static Interval around(double mid, double rad) {
    return {round_down(mid - rad), round_up(mid + rad)};
  }

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double mid() const { return 0.5 * lo_ + 0.5 * hi_; }
  double width() const { return hi_ - lo_; }
  /// Radius about mid(), rounded up so that [mid - rad, mid + rad] contains *this.
  double rad() const {
    const double m = mid();
    return round_up(std::max(m - lo_, hi_ - m));
  }
  double mag() const { return std::max(std::fabs(lo_), std::fabs(hi_)); }
  double mig() const {
    if (lo_ <= 0.0 && hi_ >= 0.0) return 0.0;
    return std::min(std::fabs(lo_), std::fabs(hi_));
  }

  bool contains(double v) const { return lo_ <= v && v <= hi_; }
  bool contains(const Interval& o) const { return lo_ <= o.lo_ && o.hi_ <= hi_; }
  bool contains_zero() const { return lo_ <= 0.0 && hi_ >= 0.0; }
  bool is_point() const { return lo_ == hi_; }
  bool overlaps(const Interval& o) const { return lo_ <= o.hi_ && o.lo_ <= hi_; }

  Interval& operator+=(const Interval& o);
  Interval& operator-=(const Interval& o);
  Interval& operator*=(const Interval& o);
  Interval& operator/=(const Interval& o);

  friend bool operator==(const Interval&, const Interval&) = default;

 private:
  double lo_ = 0.0;
  double hi_ = 0.0;
};

inline Interval hull(const Interval& a, const Interval& b) {
  return {std::min(a.lo(), b.lo()), std::max(a.hi(), b.hi())};
}

/// Intersection; throws DomainError when the intervals are disjoint.
inline Interval intersect(const Interval& a, const Interval& b) {
  const double lo = std::max(a.lo(), b.lo());
  const double hi = std::min(a.hi(), b.hi());
  if (lo > hi) throw DomainError("empty interval intersection");
  return {lo, hi};
}

inline Interval operator-(const Interval& a) { return {-a.hi(), -a.lo()}; }

inline Interval operator+(const Interval& a, const Interval& b) {
  return {round_down(a.lo() + b.lo()), round_up(a.hi() + b.hi())};
}

inline Interval operator-(const Interval& a, const Interval& b) {
  return {round_down(a.lo() - b.hi()), round_up(a.hi() - b.lo())};
}

inline Interval operator*(const Interval& a, const Interval& b) {
  if (a.is_point() && a.lo() == 0.0) return Interval(0.0);
  if (b.is_point() && b.lo() == 0.0) return Interval(0.0);
  const double p1 = a.lo() * b.lo();
  const double p2 = a.lo() * b.hi();
  const double p3 = a.hi() * b.lo();
  const double p4 = a.hi() * b.hi();
  return {round_down(std::min({p1, p2, p3, p4})), round_up(std::max({p1, p2, p3, p4}))};
}

inline Interval operator/(const Interval& a, const Interval& b) {
  if (b.contains_zero()) throw DomainError("interval division by an interval containing zero");
  const double q1 = a.lo() / b.lo();
  const double q2 = a.lo() / b.hi();
  const double q3 = a.hi() / b.lo();
  const double q4 = a.hi() / b.hi();
  return {round_down(std::min({q1, q2, q3, q4})), round_up(std::max({q1, q2, q3, q4}))};
}

inline Interval& Interval::operator+=(const Interval& o) { return *this = *this + o; }
inline Interval& Interval::operator-=(const Interval& o) { return *this = *this - o; }
inline Interval& Interval::operator*=(const Interval& o) { return *this = *this * o; }
inline Interval& Interval::operator/=(const Interval& o) { return *this = *this / o; }

inline std::ostream& operator<<(std::ostream& os, const Interval& x) {
  return os << '[' << x.lo() << ", " << x.hi() << ']';
}

inline Interval sqr(const Interval& x) {
  const double a = x.mig();
  const double b = x.mag();
  return {x.contains_zero() ? 0.0 : round_down(a * a), round_up(b * b)};
}

inline Interval pow(const Interval& x, int n) {
  Interval r(1.0);
  for (int i = 0; i < n; ++i) r *= x;
  return r;
}

inline Interval sqrt(const Interval& x) {
  if (x.lo() < 0.0) throw DomainError("sqrt of negative interval");
  return {std::max(0.0, round_down(std::sqrt(x.lo()))), round_up(std::sqrt(x.hi()))};
}

inline Interval abs(const Interval& x) {
  if (x.lo() >= 0.0) return x;
  if (x.hi() <= 0.0) return -x;
  return {0.0, x.mag()};
}

namespace interval_detail {

inline Interval monotone_up(double flo, double fhi) {
  return {round_down(flo, kTranscendentalUlps), round_up(fhi, kTranscendentalUlps)};
}

// Does [lo, hi] contain a point of the form offset + k * period (with a small
// slack, so borderline cases include the extremum)?
inline bool contains_periodic(const Interval& x, double offset, double period) {
  const double slack = 1e-12 * std::max(1.0, x.mag());
  const double k = std::ceil((x.lo() - slack - offset) / period);
  return offset + k * period <= x.hi() + slack;
}

}  // namespace interval_detail

// A few ulps above pi for conservative periodicity tests.
inline const Interval kPi{round_down(std::numbers::pi), round_up(std::numbers::pi)};
inline const Interval kHalfPi{round_down(std::numbers::pi / 2), round_up(std::numbers::pi / 2)};
inline const Interval kTwoPi{round_down(2 * std::numbers::pi), round_up(2 * std::numbers::pi)};

inline Interval cos(const Interval& x) {
  constexpr double two_pi = 2 * std::numbers::pi;
  if (x.width() >= two_pi) return {-1.0, 1.0};
  const double a = std::cos(x.lo());
  const double b = std::cos(x.hi());
  double lo = std::min(a, b);
  double hi = std::max(a, b);
  Interval r = interval_detail::monotone_up(lo, hi);
  lo = r.lo();
  hi = r.hi();
  if (interval_detail::contains_periodic(x, 0.0, two_pi)) hi = 1.0;
  if (interval_detail::contains_periodic(x, std::numbers::pi, two_pi)) lo = -1.0;
  return {std::max(lo, -1.0), std::min(hi, 1.0)};
}

inline Interval sin(const Interval& x) {
  constexpr double two_pi = 2 * std::numbers::pi;
  if (x.width() >= two_pi) return {-1.0, 1.0};
  const double a = std::sin(x.lo());
  const double b = std::sin(x.hi());
  Interval r = interval_detail::monotone_up(std::min(a, b), std::max(a, b));
  double lo = r.lo();
  double hi = r.hi();
  if (interval_detail::contains_periodic(x, std::numbers::pi / 2, two_pi)) hi = 1.0;
  if (interval_detail::contains_periodic(x, -std::numbers::pi / 2, two_pi)) lo = -1.0;
  return {std::max(lo, -1.0), std::min(hi, 1.0)};
}

/// tan on a sub-interval of (-pi/2, pi/2).
inline Interval tan(const Interval& x) {
  const double limit = std::numbers::pi / 2 - 1e-12;
  if (x.lo() <= -limit || x.hi() >= limit) throw DomainError("tan outside (-pi/2, pi/2)");
  return interval_detail::monotone_up(std::tan(x.lo()), std::tan(x.hi()));
}

inline Interval tanh(const Interval& x) {
  Interval r = interval_detail::monotone_up(std::tanh(x.lo()), std::tanh(x.hi()));
  return {std::max(r.lo(), -1.0), std::min(r.hi(), 1.0)};
}

inline Interval atan(const Interval& x) {
  return interval_detail::monotone_up(std::atan(x.lo()), std::atan(x.hi()));
}

inline Interval exp(const Interval& x) {
  Interval r = interval_detail::monotone_up(std::exp(x.lo()), std::exp(x.hi()));
  return {std::max(0.0, r.lo()), r.hi()};
}

/// 1 / cosh(x)^2, the derivative of tanh.
inline Interval sech2(const Interval& x) {
  const double big = x.mag();
  const double small = x.mig();
  const double cb = std::cosh(big);
  const double cs = std::cosh(small);
  const double lo = std::isfinite(cb) ? 1.0 / (cb * cb) : 0.0;
  const double hi = 1.0 / (cs * cs);
  return {std::max(0.0, round_down(lo, kTranscendentalUlps + 2)),
          std::min(1.0, round_up(hi, kTranscendentalUlps + 2))};
}

}  // namespace hallreach
