#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "eigbound/interval.hpp"

namespace eigbound {

// Exact rational arithmetic on 128-bit integers. Used to build the reference
// element tables (entries of which are exact rationals) and as an independent
// oracle in the test suite. Magnitudes are asserted to stay below 2^62 after
// normalization so that cross products never overflow the 128-bit range.
struct Rat {
  __int128 num = 0;
  __int128 den = 1;

  Rat() = default;
  Rat(__int128 n) : num(n), den(1) {}
  Rat(__int128 n, __int128 d) : num(n), den(d) { normalize(); }

  static __int128 gcd128(__int128 a, __int128 b) {
    if (a < 0) a = -a;
    if (b < 0) b = -b;
    while (b != 0) {
      __int128 t = a % b;
      a = b;
      b = t;
    }
    return a;
  }

  void normalize() {
    if (den == 0) throw std::domain_error("rational with zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    if (num == 0) {
      den = 1;
      return;
    }
    __int128 g = gcd128(num, den);
    num /= g;
    den /= g;
    const __int128 limit = (__int128)1 << 62;
    if (num >= limit || num <= -limit || den >= limit) {
      throw std::overflow_error("rational magnitude exceeds the 2^62 guard");
    }
  }

  bool is_zero() const { return num == 0; }

  // Exact conversion of a finite double (doubles are dyadic rationals).
  // Throws overflow_error when the scale cannot satisfy the 2^62 guard.
  static Rat from_double(double x) {
    if (!std::isfinite(x)) throw std::domain_error("from_double on non-finite value");
    if (x == 0.0) return Rat();
    int e = 0;
    double m = std::frexp(x, &e);  // x = m * 2^e, |m| in [0.5, 1)
    __int128 mant = (__int128)std::llrint(std::ldexp(m, 53));
    e -= 53;  // x = mant * 2^e exactly
    while (mant != 0 && (mant & 1) == 0) {
      mant >>= 1;
      ++e;
    }
    if (e > 62 || e < -61) throw std::overflow_error("dyadic scale exceeds the 2^62 guard");
    Rat r;
    if (e >= 0) {
      r.num = mant << e;
      r.den = 1;
    } else {
      r.num = mant;
      r.den = (__int128)1 << -e;
    }
    r.normalize();
    return r;
  }

  friend Rat operator+(const Rat& a, const Rat& b) {
    return Rat(a.num * b.den + b.num * a.den, a.den * b.den);
  }
  friend Rat operator-(const Rat& a, const Rat& b) {
    return Rat(a.num * b.den - b.num * a.den, a.den * b.den);
  }
  friend Rat operator*(const Rat& a, const Rat& b) {
    return Rat(a.num * b.num, a.den * b.den);
  }
  friend Rat operator/(const Rat& a, const Rat& b) {
    if (b.num == 0) throw std::domain_error("rational division by zero");
    return Rat(a.num * b.den, a.den * b.num);
  }
  Rat operator-() const {
    Rat r;
    r.num = -num;
    r.den = den;
    return r;
  }
  Rat& operator+=(const Rat& b) { return *this = *this + b; }
  Rat& operator-=(const Rat& b) { return *this = *this - b; }
  Rat& operator*=(const Rat& b) { return *this = *this * b; }

  friend bool operator==(const Rat& a, const Rat& b) {
    return a.num == b.num && a.den == b.den;
  }
  friend bool operator!=(const Rat& a, const Rat& b) { return !(a == b); }
  // Exact comparison via cross multiplication (magnitudes < 2^62 by guard).
  friend bool operator<(const Rat& a, const Rat& b) {
    return a.num * b.den < b.num * a.den;
  }

  double to_double() const {
    // Not required to round correctly; used only for diagnostics and as the
    // midpoint candidate of to_interval().
    return static_cast<double>((long double)num / (long double)den);
  }

  // Compares the exact rational against a double, exactly. The double is
  // decomposed as m * 2^e with a 53-bit integer mantissa; cross products are
  // bounded by the 2^62 guard times 2^64 and stay inside 128 bits.
  // Returns -1 / 0 / +1 for num/den <,==,> x.
  int compare(double x) const {
    if (std::isnan(x)) throw std::domain_error("comparison with NaN");
    if (std::isinf(x)) return x > 0 ? -1 : 1;
    int e = 0;
    double m = std::frexp(x, &e);  // x = m * 2^e, |m| in [0.5, 1)
    __int128 mant = (__int128)std::llrint(std::ldexp(m, 53));
    e -= 53;  // x = mant * 2^e exactly
    // Compare num/den with mant*2^e  <=>  num*2^{-e} ? mant*den (e<0 typical)
    __int128 lhs = num, rhs = mant * den;
    int shift = -e;
    if (shift >= 0) {
      while (shift > 0) {
        int s = shift > 60 ? 60 : shift;
        // Scale the smaller side; bail to long-double compare on overflow risk.
        const __int128 limit = (__int128)1 << 126 >> s;
        if (lhs > limit || lhs < -limit) {
          long double a = (long double)num / (long double)den;
          long double b = x;
          return a < b ? -1 : (a > b ? 1 : 0);
        }
        lhs <<= s;
        shift -= s;
      }
    } else {
      int sh = -shift;
      while (sh > 0) {
        int s = sh > 60 ? 60 : sh;
        const __int128 limit = (__int128)1 << 126 >> s;
        if (rhs > limit || rhs < -limit) {
          long double a = (long double)num / (long double)den;
          long double b = x;
          return a < b ? -1 : (a > b ? 1 : 0);
        }
        rhs <<= s;
        sh -= s;
      }
    }
    if (lhs < rhs) return -1;
    if (lhs > rhs) return 1;
    return 0;
  }

  bool fits_double_exactly() const {
    double d = to_double();
    return compare(d) == 0;
  }

  // Tight enclosure of the exact rational by a double interval.
  Interval to_interval() const {
    double d = to_double();
    int c = compare(d);
    if (c == 0) return Interval(d);
    double lo = d, hi = d;
    if (c < 0) {
      // true value below d
      lo = detail::next_down(d);
      while (compare(lo) < 0) lo = detail::next_down(lo);
    } else {
      hi = detail::next_up(d);
      while (compare(hi) > 0) hi = detail::next_up(hi);
    }
    return Interval(lo, hi);
  }
};

// Dense bivariate polynomial with rational coefficients in graded
// lexicographic layout: index(a,b) enumerates monomials x^a y^b with
// a+b = 0,1,2,... and within a block by ascending b.
class Poly2 {
 public:
  Poly2() = default;
  explicit Poly2(int degree) : deg_(degree), c_(size_of(degree)) {}

  static int size_of(int d) { return (d + 1) * (d + 2) / 2; }
  static int index(int a, int b) {
    int d = a + b;
    return d * (d + 1) / 2 + b;
  }

  int degree() const { return deg_; }
  const Rat& coeff(int a, int b) const {
    static const Rat zero;
    if (a < 0 || b < 0 || a + b > deg_) return zero;
    return c_[index(a, b)];
  }
  Rat& at(int a, int b) {
    assert(a >= 0 && b >= 0 && a + b <= deg_);
    return c_[index(a, b)];
  }

  static Poly2 constant(const Rat& r) {
    Poly2 p(0);
    p.at(0, 0) = r;
    return p;
  }
  static Poly2 var_x() {
    Poly2 p(1);
    p.at(1, 0) = Rat(1);
    return p;
  }
  static Poly2 var_y() {
    Poly2 p(1);
    p.at(0, 1) = Rat(1);
    return p;
  }

  friend Poly2 operator+(const Poly2& f, const Poly2& g) {
    Poly2 r(std::max(f.deg_, g.deg_));
    for (int a = 0; a <= r.deg_; ++a)
      for (int b = 0; a + b <= r.deg_; ++b)
        r.at(a, b) = f.coeff(a, b) + g.coeff(a, b);
    return r;
  }
  friend Poly2 operator-(const Poly2& f, const Poly2& g) {
    Poly2 r(std::max(f.deg_, g.deg_));
    for (int a = 0; a <= r.deg_; ++a)
      for (int b = 0; a + b <= r.deg_; ++b)
        r.at(a, b) = f.coeff(a, b) - g.coeff(a, b);
    return r;
  }
  friend Poly2 operator*(const Poly2& f, const Poly2& g) {
    Poly2 r(f.deg_ + g.deg_);
    for (int a1 = 0; a1 <= f.deg_; ++a1)
      for (int b1 = 0; a1 + b1 <= f.deg_; ++b1) {
        if (f.coeff(a1, b1).is_zero()) continue;
        for (int a2 = 0; a2 <= g.deg_; ++a2)
          for (int b2 = 0; a2 + b2 <= g.deg_; ++b2) {
            if (g.coeff(a2, b2).is_zero()) continue;
            r.at(a1 + a2, b1 + b2) += f.coeff(a1, b1) * g.coeff(a2, b2);
          }
      }
    return r;
  }
  friend Poly2 operator*(const Rat& s, const Poly2& f) {
    Poly2 r = f;
    for (auto& c : r.c_) c *= s;
    return r;
  }
  Poly2 operator-() const { return Rat(-1) * *this; }

  Poly2 dx() const {
    if (deg_ == 0) return Poly2(0);
    Poly2 r(deg_ - 1);
    for (int a = 1; a <= deg_; ++a)
      for (int b = 0; a + b <= deg_; ++b)
        r.at(a - 1, b) = Rat(a) * coeff(a, b);
    return r;
  }
  Poly2 dy() const {
    if (deg_ == 0) return Poly2(0);
    Poly2 r(deg_ - 1);
    for (int a = 0; a <= deg_; ++a)
      for (int b = 1; a + b <= deg_; ++b)
        r.at(a, b - 1) = Rat(b) * coeff(a, b);
    return r;
  }

  Rat eval(const Rat& x, const Rat& y) const {
    Rat s;
    Rat xp(1);
    for (int a = 0; a <= deg_; ++a) {
      Rat yp(1);
      for (int b = 0; a + b <= deg_; ++b) {
        if (!coeff(a, b).is_zero()) s += coeff(a, b) * xp * yp;
        yp *= y;
      }
      xp *= x;
    }
    return s;
  }

  // Exact integral over the unit reference triangle {x,y >= 0, x+y <= 1},
  // using the monomial formula  integral x^a y^b = a! b! / (a+b+2)!.
  Rat integral_ref_triangle() const {
    Rat s;
    for (int a = 0; a <= deg_; ++a)
      for (int b = 0; a + b <= deg_; ++b) {
        if (coeff(a, b).is_zero()) continue;
        s += coeff(a, b) * monomial_integral(a, b);
      }
    return s;
  }

  static Rat monomial_integral(int a, int b) {
    // a! b! / (a+b+2)!  computed as a product of small factors to stay tiny.
    Rat r(1);
    // 1 / ((a+1)(a+2)...(a+b+2)) * b! ... build directly:
    for (int k = 1; k <= b; ++k) r *= Rat(k);
    for (int k = a + 1; k <= a + b + 2; ++k) r = r / Rat(k);
    return r;
  }

  bool is_zero() const {
    for (const auto& c : c_)
      if (!c.is_zero()) return false;
    return true;
  }

 private:
  int deg_ = 0;
  std::vector<Rat> c_;
};

// Univariate rational polynomial, used for edge traces parametrised by
// t in [0, 1].
class Poly1 {
 public:
  Poly1() : c_(1) {}
  explicit Poly1(int degree) : c_(degree + 1) {}

  static Poly1 constant(const Rat& r) {
    Poly1 p;
    p.c_[0] = r;
    return p;
  }
  static Poly1 var() {
    Poly1 p(1);
    p.c_[1] = Rat(1);
    return p;
  }

  int degree() const { return (int)c_.size() - 1; }
  const Rat& coeff(int k) const {
    static const Rat zero;
    return k < (int)c_.size() ? c_[k] : zero;
  }
  Rat& at(int k) {
    assert(k < (int)c_.size());
    return c_[k];
  }

  friend Poly1 operator+(const Poly1& f, const Poly1& g) {
    Poly1 r(std::max(f.degree(), g.degree()));
    for (int k = 0; k <= r.degree(); ++k) r.at(k) = f.coeff(k) + g.coeff(k);
    return r;
  }
  friend Poly1 operator-(const Poly1& f, const Poly1& g) {
    Poly1 r(std::max(f.degree(), g.degree()));
    for (int k = 0; k <= r.degree(); ++k) r.at(k) = f.coeff(k) - g.coeff(k);
    return r;
  }
  friend Poly1 operator*(const Poly1& f, const Poly1& g) {
    Poly1 r(f.degree() + g.degree());
    for (int i = 0; i <= f.degree(); ++i)
      for (int j = 0; j <= g.degree(); ++j)
        r.at(i + j) += f.coeff(i) * g.coeff(j);
    return r;
  }
  friend Poly1 operator*(const Rat& s, const Poly1& f) {
    Poly1 r = f;
    for (auto& c : r.c_) c *= s;
    return r;
  }

  Rat eval(const Rat& t) const {
    Rat s;
    for (int k = degree(); k >= 0; --k) s = s * t + c_[k];
    return s;
  }

  // Exact integral over [0, 1].
  Rat integral_unit() const {
    Rat s;
    for (int k = 0; k <= degree(); ++k) s += c_[k] / Rat(k + 1);
    return s;
  }

  bool is_zero() const {
    for (const auto& c : c_)
      if (!c.is_zero()) return false;
    return true;
  }

 private:
  std::vector<Rat> c_;
};

}  // namespace eigbound
