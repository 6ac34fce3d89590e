#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "hallreach/affine.hpp"
#include "hallreach/interval.hpp"

using namespace hallreach;

namespace {

Interval random_interval(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  double a = u(rng);
  double b = u(rng);
  if (a > b) std::swap(a, b);
  return {a, b};
}

double sample(std::mt19937_64& rng, const Interval& x) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return x.lo() + u(rng) * (x.hi() - x.lo());
}

// Form over initial symbols 0..2 plus a little remainder.
AffineForm random_form(std::mt19937_64& rng, double center_span, double coeff_span) {
  std::uniform_real_distribution<double> c(-center_span, center_span);
  std::uniform_real_distribution<double> a(-coeff_span, coeff_span);
  AffineForm f(c(rng));
  for (SymbolId id = 0; id < 3; ++id) f = f + a(rng) * AffineForm::from_interval(Interval(-1.0, 1.0), id);
  return f;
}

// Value of f with initial symbols fixed; other symbols and the remainder
// contribute their full radius.
Interval evaluate_at(const AffineForm& f, const std::vector<double>& eps) {
  double c = f.center();
  double r = f.err();
  for (const auto& t : f.terms()) {
    if (t.id < eps.size()) {
      c += t.coeff * eps[t.id];
    } else {
      r += std::fabs(t.coeff);
    }
  }
  const double slack = 1e-13 * (std::fabs(c) + r + 1.0);
  return {c - r - slack, c + r + slack};
}

}  // namespace

TEST(Interval, BasicOperationsContainSampledResults) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 2000; ++trial) {
    const Interval a = random_interval(rng, -5, 5);
    const Interval b = random_interval(rng, -5, 5);
    const double x = sample(rng, a);
    const double y = sample(rng, b);
    EXPECT_TRUE((a + b).contains(x + y));
    EXPECT_TRUE((a - b).contains(x - y));
    EXPECT_TRUE((a * b).contains(x * y));
    if (!b.contains_zero()) {
      EXPECT_TRUE((a / b).contains(x / y));
    }
    EXPECT_TRUE(sqr(a).contains(x * x));
    EXPECT_TRUE(cos(a).contains(std::cos(x)));
    EXPECT_TRUE(sin(a).contains(std::sin(x)));
    EXPECT_TRUE(tanh(a).contains(std::tanh(x)));
    EXPECT_TRUE(atan(a).contains(std::atan(x)));
    EXPECT_TRUE(sech2(a).contains(1.0 / (std::cosh(x) * std::cosh(x))));
    const Interval t = random_interval(rng, -1.5, 1.5);
    EXPECT_TRUE(tan(t).contains(std::tan(sample(rng, t))));
  }
}

TEST(Interval, PointOperationsAreOutwardRounded) {
  const Interval third = Interval(1.0) / Interval(3.0);
  EXPECT_LT(third.lo(), third.hi());
  EXPECT_TRUE(third.contains(1.0 / 3.0));
  EXPECT_TRUE((Interval(0.1) + Interval(0.2)).contains(0.1 + 0.2));
}

TEST(Interval, TrigonometricExtremaAreIncluded) {
  EXPECT_EQ(cos(Interval(-0.1, 0.1)).hi(), 1.0);
  EXPECT_EQ(sin(Interval(1.5, 1.7)).hi(), 1.0);
  EXPECT_EQ(cos(Interval(3.0, 3.2)).lo(), -1.0);
  EXPECT_EQ(sin(Interval(0.0, 7.0)), Interval(-1.0, 1.0));
}

TEST(Interval, DivisionByZeroIntervalThrows) {
  EXPECT_THROW(Interval(1.0) / Interval(-1.0, 1.0), DomainError);
  EXPECT_THROW(Interval(2.0, 1.0), DomainError);
  EXPECT_THROW(intersect(Interval(0.0, 1.0), Interval(2.0, 3.0)), DomainError);
}

TEST(AffineForm, LinearCombinationCancelsSharedSymbols) {
  const AffineForm x = AffineForm::from_interval(Interval(1.0, 3.0), 0);
  const AffineForm d = x - x;
  EXPECT_LE(d.range().width(), 1e-14);
  const AffineForm y = 2.0 * x - x;
  EXPECT_NEAR(y.range().lo(), 1.0, 1e-14);
  EXPECT_NEAR(y.range().hi(), 3.0, 1e-14);
}

TEST(AffineForm, FromIntervalEnclosesInterval) {
  const Interval x(0.1, 0.30000000000000004);
  EXPECT_TRUE(AffineForm::from_interval(x, 0).range().contains(x));
  EXPECT_TRUE(AffineForm::from_interval(x).range().contains(x));
}

using UnaryAffine = std::function<AffineForm(const AffineForm&, NoiseContext&)>;
using UnaryReal = std::function<double(double)>;

void check_unary(const UnaryAffine& fa, const UnaryReal& fr, double center_span, double coeff_span,
                 const std::function<bool(const Interval&)>& admissible) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> e(-1.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const AffineForm x = random_form(rng, center_span, coeff_span);
    if (!admissible(x.range())) continue;
    NoiseContext ctx;
    const AffineForm y = fa(x, ctx);
    for (int s = 0; s < 50; ++s) {
      const std::vector<double> eps{e(rng), e(rng), e(rng)};
      const double xv = evaluate_at(x, eps).mid();
      const Interval yv = evaluate_at(y, eps);
      ASSERT_TRUE(yv.contains(fr(xv))) << "x=" << xv << " y=" << yv;
    }
  }
}

TEST(AffineForm, NonlinearFunctionsPreserveInitialSymbolDependence) {
  auto any = [](const Interval&) { return true; };
  check_unary([](const AffineForm& x, NoiseContext& c) { return tanh(x, c); },
              [](double v) { return std::tanh(v); }, 3.0, 1.0, any);
  check_unary([](const AffineForm& x, NoiseContext& c) { return atan(x, c); },
              [](double v) { return std::atan(v); }, 3.0, 1.0, any);
  check_unary([](const AffineForm& x, NoiseContext& c) { return sin(x, c); },
              [](double v) { return std::sin(v); }, 4.0, 0.5, any);
  check_unary([](const AffineForm& x, NoiseContext& c) { return cos(x, c); },
              [](double v) { return std::cos(v); }, 4.0, 0.5, any);
  check_unary([](const AffineForm& x, NoiseContext& c) { return tan(x, c); },
              [](double v) { return std::tan(v); }, 1.0, 0.15,
              [](const Interval& r) { return r.mag() < 1.5; });
  check_unary([](const AffineForm& x, NoiseContext& c) { return reciprocal(x, c); },
              [](double v) { return 1.0 / v; }, 4.0, 0.5, [](const Interval& r) { return !r.contains_zero(); });
  check_unary([](const AffineForm& x, NoiseContext& c) { return clamp(x, -0.5, 0.7, c); },
              [](double v) { return std::clamp(v, -0.5, 0.7); }, 1.0, 0.5, any);
}

TEST(AffineForm, MultiplicationIsSound) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> e(-1.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const AffineForm x = random_form(rng, 3.0, 1.0);
    const AffineForm y = random_form(rng, 3.0, 1.0);
    NoiseContext ctx;
    const AffineForm z = mul(x, y, ctx);
    const AffineForm sq = mul(x, x, ctx);
    for (int s = 0; s < 50; ++s) {
      const std::vector<double> eps{e(rng), e(rng), e(rng)};
      const double xv = evaluate_at(x, eps).mid();
      const double yv = evaluate_at(y, eps).mid();
      ASSERT_TRUE(evaluate_at(z, eps).contains(xv * yv));
      ASSERT_TRUE(evaluate_at(sq, eps).contains(xv * xv));
    }
  }
}

TEST(AffineForm, SubstitutionRestrictsSymbolRange) {
  AffineForm x = AffineForm::from_interval(Interval(0.0, 2.0), 0);
  x.substitute(0, 0.5, 0.5);  // symbol now covers [0, 1] of the old one
  EXPECT_NEAR(x.range().lo(), 1.0, 1e-14);
  EXPECT_NEAR(x.range().hi(), 2.0, 1e-14);
}

TEST(AffineForm, SymbolReductionKeepsEnclosure) {
  std::mt19937_64 rng(3);
  NoiseContext ctx;
  AffineForm a = random_form(rng, 1.0, 1.0);
  AffineForm b = random_form(rng, 1.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    a = tanh(a, ctx);
    b = mul(a, b, ctx);
  }
  const Interval ra = a.range();
  const Interval rb = b.range();
  std::vector<AffineForm*> forms{&a, &b};
  reduce_symbols(forms, 4, ctx);
  std::size_t fresh = 0;
  for (const auto& t : a.terms()) fresh += t.id >= kFirstFreshSymbol;
  EXPECT_LE(fresh, 5u);
  // Equal up to the summation order of the radius.
  EXPECT_LE(a.range().lo(), ra.lo() + 1e-13 * ra.mag());
  EXPECT_GE(a.range().hi(), ra.hi() - 1e-13 * ra.mag());
  EXPECT_LE(b.range().lo(), rb.lo() + 1e-13 * rb.mag());
  EXPECT_GE(b.range().hi(), rb.hi() - 1e-13 * rb.mag());
}
