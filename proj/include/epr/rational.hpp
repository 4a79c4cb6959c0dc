#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace epr {

/// Exact rational arithmetic on 64-bit integers.
///
/// Intermediates go through __int128 and results are reduced by gcd; anything
/// that still does not fit into int64 throws std::overflow_error so callers
/// can fall back to double arithmetic. Denominator is always positive, zero
/// is canonically 0/1.
class Rational {
 public:
  constexpr Rational() = default;
  Rational(std::int64_t value) : num_(value) {}  // NOLINT: implicit by design
  Rational(std::int64_t num, std::int64_t den) {
    if (den == 0) throw std::domain_error("Rational: zero denominator");
    reduce_from(num, den);
  }

  /// Exact conversion of a (dyadic) double. Throws std::overflow_error when
  /// the exact value does not fit, std::domain_error for non-finite input.
  static Rational from_double(double value) {
    if (!std::isfinite(value)) throw std::domain_error("Rational: non-finite value");
    if (value == 0.0) return Rational(0);
    int exp = 0;
    double mant = std::frexp(value, &exp);  // value = mant * 2^exp, |mant| in [0.5, 1)
    std::int64_t m = static_cast<std::int64_t>(std::ldexp(mant, 53));
    exp -= 53;
    while (m != 0 && (m & 1) == 0 && exp < 0) {
      m >>= 1;
      ++exp;
    }
    if (exp >= 0) {
      if (exp > 62) throw std::overflow_error("Rational: double too large");
      __int128 n = static_cast<__int128>(m) << exp;
      return make_checked(n, 1);
    }
    if (-exp > 62) throw std::overflow_error("Rational: double too fine-grained");
    return Rational(m, std::int64_t(1) << -exp);
  }

  /// Parses "p/q" or a plain integer.
  static Rational parse(std::string_view text) {
    auto slash = text.find('/');
    if (slash == std::string_view::npos) return Rational(parse_int(text));
    return Rational(parse_int(text.substr(0, slash)), parse_int(text.substr(slash + 1)));
  }

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  std::string str() const {
    return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
  }

  friend Rational operator+(const Rational& a, const Rational& b) {
    return make_checked(i128(a.num_) * b.den_ + i128(b.num_) * a.den_, i128(a.den_) * b.den_);
  }
  friend Rational operator-(const Rational& a, const Rational& b) {
    return make_checked(i128(a.num_) * b.den_ - i128(b.num_) * a.den_, i128(a.den_) * b.den_);
  }
  friend Rational operator*(const Rational& a, const Rational& b) {
    return make_checked(i128(a.num_) * b.num_, i128(a.den_) * b.den_);
  }
  friend Rational operator/(const Rational& a, const Rational& b) {
    if (b.num_ == 0) throw std::domain_error("Rational: division by zero");
    return make_checked(i128(a.num_) * b.den_, i128(a.den_) * b.num_);
  }
  friend Rational operator-(const Rational& a) { return Rational(-a.num_, a.den_); }

  Rational& operator+=(const Rational& o) { return *this = *this + o; }
  Rational& operator-=(const Rational& o) { return *this = *this - o; }
  Rational& operator*=(const Rational& o) { return *this = *this * o; }
  Rational& operator/=(const Rational& o) { return *this = *this / o; }

  friend bool operator==(const Rational& a, const Rational& b) {
    return a.num_ == b.num_ && a.den_ == b.den_;
  }
  friend bool operator!=(const Rational& a, const Rational& b) { return !(a == b); }
  friend bool operator<(const Rational& a, const Rational& b) {
    return i128(a.num_) * b.den_ < i128(b.num_) * a.den_;
  }
  friend bool operator>(const Rational& a, const Rational& b) { return b < a; }
  friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
  friend bool operator>=(const Rational& a, const Rational& b) { return !(a < b); }

  friend Rational abs(const Rational& a) { return a.num_ < 0 ? -a : a; }

 private:
  using i128 = __int128;

  static std::int64_t parse_int(std::string_view text) {
    std::size_t pos = 0;
    std::int64_t v = 0;
    try {
      v = std::stoll(std::string(text), &pos);
    } catch (const std::exception&) {
      throw std::invalid_argument("Rational: cannot parse '" + std::string(text) + "'");
    }
    if (pos != text.size()) throw std::invalid_argument("Rational: cannot parse '" + std::string(text) + "'");
    return v;
  }

  static Rational make_checked(i128 num, i128 den) {
    Rational r;
    if (den == 0) throw std::domain_error("Rational: zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    i128 g = gcd128(num < 0 ? -num : num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
    constexpr i128 kMax = std::numeric_limits<std::int64_t>::max();
    constexpr i128 kMin = std::numeric_limits<std::int64_t>::min();
    if (num > kMax || num < kMin || den > kMax) throw std::overflow_error("Rational: overflow");
    r.num_ = static_cast<std::int64_t>(num);
    r.den_ = static_cast<std::int64_t>(den);
    return r;
  }

  static i128 gcd128(i128 a, i128 b) {
    while (b != 0) {
      i128 t = a % b;
      a = b;
      b = t;
    }
    return a == 0 ? 1 : a;
  }

  void reduce_from(std::int64_t num, std::int64_t den) {
    *this = make_checked(num, den);
  }

  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

}  // namespace epr

namespace Eigen {

template <>
struct NumTraits<epr::Rational> : GenericNumTraits<epr::Rational> {
  using Real = epr::Rational;
  using NonInteger = epr::Rational;
  using Nested = epr::Rational;
  using Literal = std::int64_t;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 1,
    AddCost = 8,
    MulCost = 8,
  };
  static inline Real epsilon() { return epr::Rational(0); }
  static inline Real dummy_precision() { return epr::Rational(0); }
  static inline int digits10() { return 18; }
};

}  // namespace Eigen
