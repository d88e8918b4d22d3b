#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace blowlab {

/// Exact rational number in lowest terms with a positive denominator.
class Rational {
 public:
  constexpr Rational() = default;
  constexpr Rational(std::int64_t num) : num_(num), den_(1) {}  // NOLINT
  Rational(std::int64_t num, std::int64_t den) : num_(num), den_(den) {
    if (den_ == 0) throw std::domain_error("Rational: zero denominator");
    normalize();
  }

  /// Parses "3/2", "-7", "1.25" or "1e-2" exactly (decimal strings only).
  static Rational parse(const std::string& text) {
    auto slash = text.find('/');
    if (slash != std::string::npos) {
      return Rational(std::stoll(text.substr(0, slash)), std::stoll(text.substr(slash + 1)));
    }
    std::string mantissa = text;
    int exponent10 = 0;
    auto e = text.find_first_of("eE");
    if (e != std::string::npos) {
      mantissa = text.substr(0, e);
      exponent10 = std::stoi(text.substr(e + 1));
    }
    bool negative = false;
    std::size_t pos = 0;
    if (pos < mantissa.size() && (mantissa[pos] == '-' || mantissa[pos] == '+')) {
      negative = mantissa[pos] == '-';
      ++pos;
    }
    std::int64_t num = 0;
    bool seen_digit = false;
    for (; pos < mantissa.size(); ++pos) {
      char c = mantissa[pos];
      if (c == '.') continue;
      if (c < '0' || c > '9') throw std::invalid_argument("Rational::parse: bad number '" + text + "'");
      seen_digit = true;
      num = num * 10 + (c - '0');
    }
    if (!seen_digit) throw std::invalid_argument("Rational::parse: bad number '" + text + "'");
    auto dot = mantissa.find('.');
    if (dot != std::string::npos) exponent10 -= static_cast<int>(mantissa.size() - dot - 1);
    Rational r(negative ? -num : num);
    for (; exponent10 > 0; --exponent10) r = r * Rational(10);
    for (; exponent10 < 0; ++exponent10) r = r / Rational(10);
    return r;
  }

  /// Best rational approximation with denominator <= max_den; throws if the
  /// result does not reproduce `x` to 1e-12 relative.
  static Rational from_double(double x, std::int64_t max_den = 1000000) {
    if (!std::isfinite(x)) throw std::domain_error("Rational::from_double: non-finite");
    std::int64_t h0 = 0, h1 = 1, k0 = 1, k1 = 0;
    double v = x;
    for (int iter = 0; iter < 64; ++iter) {
      double a = std::floor(v);
      auto ai = static_cast<std::int64_t>(a);
      std::int64_t h2 = ai * h1 + h0;
      std::int64_t k2 = ai * k1 + k0;
      if (k2 > max_den) break;
      h0 = h1; h1 = h2; k0 = k1; k1 = k2;
      double frac = v - a;
      if (std::abs(static_cast<double>(h1) / static_cast<double>(k1) - x) <= 1e-15 * std::max(1.0, std::abs(x))) break;
      if (frac < 1e-15) break;
      v = 1.0 / frac;
    }
    Rational r(h1, k1);
    if (std::abs(r.to_double() - x) > 1e-12 * std::max(1.0, std::abs(x))) {
      throw std::domain_error("Rational::from_double: no small-denominator representation");
    }
    return r;
  }

  constexpr std::int64_t num() const { return num_; }
  constexpr std::int64_t den() const { return den_; }
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

  std::string str() const {
    return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
  }

  friend Rational operator+(Rational a, Rational b) {
    std::int64_t g = std::gcd(a.den_, b.den_);
    return Rational(a.num_ * (b.den_ / g) + b.num_ * (a.den_ / g), a.den_ / g * b.den_);
  }
  friend Rational operator-(Rational a) { return Rational(-a.num_, a.den_); }
  friend Rational operator-(Rational a, Rational b) { return a + (-b); }
  friend Rational operator*(Rational a, Rational b) {
    std::int64_t g1 = std::gcd(a.num_, b.den_);
    std::int64_t g2 = std::gcd(b.num_, a.den_);
    if (g1 == 0) g1 = 1;
    if (g2 == 0) g2 = 1;
    return Rational((a.num_ / g1) * (b.num_ / g2), (a.den_ / g2) * (b.den_ / g1));
  }
  friend Rational operator/(Rational a, Rational b) {
    if (b.num_ == 0) throw std::domain_error("Rational: division by zero");
    return a * Rational(b.den_, b.num_);
  }
  friend bool operator==(const Rational&, const Rational&) = default;
  friend std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
    // 128-bit cross multiplication avoids overflow for moderate values.
    __int128 lhs = static_cast<__int128>(a.num_) * b.den_;
    __int128 rhs = static_cast<__int128>(b.num_) * a.den_;
    if (lhs < rhs) return std::strong_ordering::less;
    if (lhs > rhs) return std::strong_ordering::greater;
    return std::strong_ordering::equal;
  }
  friend std::ostream& operator<<(std::ostream& os, const Rational& r) { return os << r.str(); }

 private:
  void normalize() {
    if (den_ < 0) {
      num_ = -num_;
      den_ = -den_;
    }
    std::int64_t g = std::gcd(num_, den_);
    if (g > 1) {
      num_ /= g;
      den_ /= g;
    }
  }

  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

}  // namespace blowlab
