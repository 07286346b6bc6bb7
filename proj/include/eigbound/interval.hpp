#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace eigbound {

// Closed interval [lo, hi] of doubles with outward-rounded arithmetic.
//
// Every operation returns an interval that is guaranteed to contain the exact
// real result for all points of the operands. Directed rounding is realized by
// nudging the nearest-rounded endpoint outward by one ulp (IEEE 754 basic
// operations and sqrt are correctly rounded, so the exact result can never lie
// beyond the nudged endpoint). This keeps the arithmetic free of any
// floating-point environment state: no rounding mode is ever switched, so
// concurrent callers and surrounding code are unaffected by construction.
// Endpoint widths are therefore minimal up to one ulp per endpoint.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  Interval() = default;
  explicit Interval(double point) : lo(point), hi(point) {}
  Interval(double l, double h) : lo(l), hi(h) {
    if (!(lo <= hi)) throw std::invalid_argument("interval endpoints out of order");
  }

  static Interval point(double x) { return Interval(x); }

  // Smallest representable interval around a value that is itself the result
  // of rounding (for example a decimal literal): one ulp outward on each side.
  static Interval around(double x);

  static Interval hull(const Interval& a, const Interval& b) {
    return Interval(std::min(a.lo, b.lo), std::max(a.hi, b.hi));
  }

  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  double mag() const { return std::max(std::fabs(lo), std::fabs(hi)); }

  bool contains(double x) const { return lo <= x && x <= hi; }
  bool contains(const Interval& other) const {
    return lo <= other.lo && other.hi <= hi;
  }
  bool strictly_contains(const Interval& other) const {
    return lo < other.lo && other.hi < hi;
  }
  bool intersects(const Interval& other) const {
    return lo <= other.hi && other.lo <= hi;
  }
  bool is_valid() const { return lo <= hi && !std::isnan(lo) && !std::isnan(hi); }

  // Sign certificates.
  bool certainly_positive() const { return lo > 0.0; }
  bool certainly_negative() const { return hi < 0.0; }
  bool possibly_zero() const { return lo <= 0.0 && 0.0 <= hi; }

  Interval operator-() const { return Interval(-hi, -lo); }
};

namespace detail {

// Next representable double toward +infinity / -infinity.
inline double next_up(double x) {
  if (std::isinf(x) && x > 0.0) return x;
  if (x == 0.0) return std::numeric_limits<double>::denorm_min();
  auto bits = std::bit_cast<std::uint64_t>(x);
  bits = (x > 0.0) ? bits + 1 : bits - 1;
  return std::bit_cast<double>(bits);
}

inline double next_down(double x) {
  if (std::isinf(x) && x < 0.0) return x;
  if (x == 0.0) return -std::numeric_limits<double>::denorm_min();
  auto bits = std::bit_cast<std::uint64_t>(x);
  bits = (x > 0.0) ? bits - 1 : bits + 1;
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline Interval Interval::around(double x) {
  return Interval(detail::next_down(x), detail::next_up(x));
}

inline Interval operator+(const Interval& a, const Interval& b) {
  return Interval(detail::next_down(a.lo + b.lo), detail::next_up(a.hi + b.hi));
}

inline Interval operator-(const Interval& a, const Interval& b) {
  return Interval(detail::next_down(a.lo - b.hi), detail::next_up(a.hi - b.lo));
}

inline Interval operator*(const Interval& a, const Interval& b) {
  const double p1 = a.lo * b.lo;
  const double p2 = a.lo * b.hi;
  const double p3 = a.hi * b.lo;
  const double p4 = a.hi * b.hi;
  return Interval(detail::next_down(std::min(std::min(p1, p2), std::min(p3, p4))),
                  detail::next_up(std::max(std::max(p1, p2), std::max(p3, p4))));
}

inline Interval operator/(const Interval& a, const Interval& b) {
  if (b.lo <= 0.0 && 0.0 <= b.hi) {
    throw std::domain_error("interval division by an interval containing zero");
  }
  const double q1 = a.lo / b.lo;
  const double q2 = a.lo / b.hi;
  const double q3 = a.hi / b.lo;
  const double q4 = a.hi / b.hi;
  return Interval(detail::next_down(std::min(std::min(q1, q2), std::min(q3, q4))),
                  detail::next_up(std::max(std::max(q1, q2), std::max(q3, q4))));
}

inline Interval operator+(const Interval& a, double b) { return a + Interval(b); }
inline Interval operator+(double a, const Interval& b) { return Interval(a) + b; }
inline Interval operator-(const Interval& a, double b) { return a - Interval(b); }
inline Interval operator-(double a, const Interval& b) { return Interval(a) - b; }
inline Interval operator*(const Interval& a, double b) { return a * Interval(b); }
inline Interval operator*(double a, const Interval& b) { return Interval(a) * b; }
inline Interval operator/(const Interval& a, double b) { return a / Interval(b); }
inline Interval operator/(double a, const Interval& b) { return Interval(a) / b; }

inline Interval& operator+=(Interval& a, const Interval& b) { return a = a + b; }
inline Interval& operator-=(Interval& a, const Interval& b) { return a = a - b; }
inline Interval& operator*=(Interval& a, const Interval& b) { return a = a * b; }

// Square root. Requires hi >= 0; a slightly negative lower endpoint produced
// by outward rounding of a mathematically nonnegative quantity is clamped,
// which is sound exactly when the true operand is known to be nonnegative
// (edge lengths, squared norms), the only way this library uses it.
inline Interval isqrt(const Interval& a) {
  if (a.hi < 0.0) throw std::domain_error("interval sqrt of a negative interval");
  const double l = a.lo > 0.0 ? a.lo : 0.0;
  return Interval(std::max(0.0, detail::next_down(std::sqrt(l))),
                  detail::next_up(std::sqrt(a.hi)));
}

inline Interval isqr(const Interval& a) {
  if (a.lo >= 0.0)
    return Interval(detail::next_down(a.lo * a.lo), detail::next_up(a.hi * a.hi));
  if (a.hi <= 0.0)
    return Interval(detail::next_down(a.hi * a.hi), detail::next_up(a.lo * a.lo));
  const double m = std::max(-a.lo, a.hi);
  return Interval(0.0, detail::next_up(m * m));
}

inline Interval iabs(const Interval& a) {
  if (a.lo >= 0.0) return a;
  if (a.hi <= 0.0) return -a;
  return Interval(0.0, std::max(-a.lo, a.hi));
}

inline Interval imin(const Interval& a, const Interval& b) {
  return Interval(std::min(a.lo, b.lo), std::min(a.hi, b.hi));
}

inline Interval imax(const Interval& a, const Interval& b) {
  return Interval(std::max(a.lo, b.lo), std::max(a.hi, b.hi));
}

inline Interval intersect(const Interval& a, const Interval& b) {
  Interval r(std::max(a.lo, b.lo), std::min(a.hi, b.hi));
  if (r.lo > r.hi) throw std::domain_error("empty interval intersection");
  return r;
}

}  // namespace eigbound
