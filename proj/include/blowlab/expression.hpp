#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace blowlab {

/// Exponents of one product term: x_i^pow[i] * sin(x_i)^sin_pow[i] * cos(x_i)^cos_pow[i].
/// In canonical form cos_pow[i] is 0 or 1 (cos^2 is rewritten as 1 - sin^2).
struct TermKey {
  std::vector<int> pow;
  std::vector<int> sin_pow;
  std::vector<int> cos_pow;

  explicit TermKey(std::size_t n = 0) : pow(n, 0), sin_pow(n, 0), cos_pow(n, 0) {}
  std::size_t dim() const { return pow.size(); }
  bool has_monomial() const {
    for (int a : pow)
      if (a != 0) return true;
    return false;
  }
  friend auto operator<=>(const TermKey&, const TermKey&) = default;
};

/// Finite sums of constant * monomial * trig-power products in n variables.
/// Closed under +, *, and partial differentiation; kept in canonical form
/// (sorted terms, like terms merged, exact zeros dropped).
class CoefficientExpr {
 public:
  CoefficientExpr() = default;
  explicit CoefficientExpr(std::size_t n) : n_(n) {}

  static CoefficientExpr constant(std::size_t n, double c) {
    CoefficientExpr e(n);
    e.add_term(c, TermKey(n));
    return e;
  }
  /// c * x_1^a_1 ... x_n^a_n
  static CoefficientExpr monomial(double c, const std::vector<int>& pow) {
    CoefficientExpr e(pow.size());
    TermKey k(pow.size());
    k.pow = pow;
    e.add_term(c, k);
    return e;
  }
  static CoefficientExpr variable(std::size_t n, std::size_t i, int power = 1) {
    std::vector<int> pow(n, 0);
    pow.at(i) = power;
    return monomial(1.0, pow);
  }
  static CoefficientExpr sin_of(std::size_t n, std::size_t i, double c = 1.0) {
    CoefficientExpr e(n);
    TermKey k(n);
    k.sin_pow.at(i) = 1;
    e.add_term(c, k);
    return e;
  }
  static CoefficientExpr cos_of(std::size_t n, std::size_t i, double c = 1.0) {
    CoefficientExpr e(n);
    TermKey k(n);
    k.cos_pow.at(i) = 1;
    e.add_term(c, k);
    return e;
  }

  std::size_t dim() const { return n_; }
  const std::map<TermKey, double>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }

  /// Adds c * term, reducing cos powers >= 2 through cos^2 = 1 - sin^2.
  void add_term(double c, TermKey key) {
    if (key.dim() != n_) throw std::invalid_argument("CoefficientExpr: term dimension mismatch");
    if (c == 0.0) return;
    for (std::size_t i = 0; i < n_; ++i) {
      if (key.pow[i] < 0 || key.sin_pow[i] < 0 || key.cos_pow[i] < 0) {
        throw std::invalid_argument("CoefficientExpr: negative exponent");
      }
      if (key.cos_pow[i] >= 2) {
        TermKey a = key;
        a.cos_pow[i] -= 2;
        TermKey b = a;
        b.sin_pow[i] += 2;
        add_term(c, std::move(a));
        add_term(-c, std::move(b));
        return;
      }
    }
    auto [it, inserted] = terms_.try_emplace(std::move(key), c);
    if (!inserted) {
      it->second += c;
      if (it->second == 0.0) terms_.erase(it);
    }
  }

  /// True iff no term carries a polynomial factor (pure trig or constant).
  bool bounded() const {
    for (const auto& [k, c] : terms_)
      if (k.has_monomial()) return false;
    return true;
  }
  bool is_constant() const {
    for (const auto& [k, c] : terms_) {
      for (std::size_t i = 0; i < n_; ++i)
        if (k.pow[i] || k.sin_pow[i] || k.cos_pow[i]) return false;
    }
    return true;
  }
  /// Value of the constant term (0 if absent).
  double constant_value() const {
    auto it = terms_.find(TermKey(n_));
    return it == terms_.end() ? 0.0 : it->second;
  }
  bool has_trig() const {
    for (const auto& [k, c] : terms_)
      for (std::size_t i = 0; i < n_; ++i)
        if (k.sin_pow[i] || k.cos_pow[i]) return true;
    return false;
  }
  /// Largest polynomial degree in variable i.
  int degree_in(std::size_t i) const {
    int d = 0;
    for (const auto& [k, c] : terms_) d = std::max(d, k.pow.at(i));
    return d;
  }
  bool depends_on(std::size_t i) const {
    for (const auto& [k, c] : terms_)
      if (k.pow.at(i) || k.sin_pow.at(i) || k.cos_pow.at(i)) return true;
    return false;
  }

  double evaluate(std::span<const double> x) const {
    if (x.size() != n_) throw std::invalid_argument("CoefficientExpr::evaluate: dimension mismatch");
    double sum = 0.0;
    for (const auto& [k, c] : terms_) {
      double v = c;
      for (std::size_t i = 0; i < n_; ++i) {
        if (k.pow[i]) v *= ipow(x[i], k.pow[i]);
        if (k.sin_pow[i]) v *= ipow(std::sin(x[i]), k.sin_pow[i]);
        if (k.cos_pow[i]) v *= ipow(std::cos(x[i]), k.cos_pow[i]);
      }
      sum += v;
    }
    return sum;
  }
  double operator()(std::span<const double> x) const { return evaluate(x); }

  CoefficientExpr derivative(std::size_t j) const {
    if (j >= n_) throw std::invalid_argument("CoefficientExpr::derivative: bad variable index");
    CoefficientExpr out(n_);
    for (const auto& [k, c] : terms_) {
      if (k.pow[j] > 0) {
        TermKey d = k;
        d.pow[j] -= 1;
        out.add_term(c * k.pow[j], std::move(d));
      }
      // d/dx sin^a cos^b = a sin^(a-1) cos^(b+1) - b sin^(a+1) cos^(b-1)
      if (k.sin_pow[j] > 0) {
        TermKey d = k;
        d.sin_pow[j] -= 1;
        d.cos_pow[j] += 1;
        out.add_term(c * k.sin_pow[j], std::move(d));
      }
      if (k.cos_pow[j] > 0) {
        TermKey d = k;
        d.cos_pow[j] -= 1;
        d.sin_pow[j] += 1;
        out.add_term(-c * k.cos_pow[j], std::move(d));
      }
    }
    return out;
  }

  CoefficientExpr& operator+=(const CoefficientExpr& o) {
    adopt_dim(o);
    for (const auto& [k, c] : o.terms_) add_term(c, k);
    return *this;
  }
  CoefficientExpr& operator-=(const CoefficientExpr& o) {
    adopt_dim(o);
    for (const auto& [k, c] : o.terms_) add_term(-c, k);
    return *this;
  }
  CoefficientExpr& operator*=(double s) {
    if (s == 0.0) {
      terms_.clear();
      return *this;
    }
    for (auto& [k, c] : terms_) c *= s;
    return *this;
  }
  friend CoefficientExpr operator+(CoefficientExpr a, const CoefficientExpr& b) { return a += b; }
  friend CoefficientExpr operator-(CoefficientExpr a, const CoefficientExpr& b) { return a -= b; }
  friend CoefficientExpr operator-(CoefficientExpr a) { return a *= -1.0; }
  friend CoefficientExpr operator*(CoefficientExpr a, double s) { return a *= s; }
  friend CoefficientExpr operator*(double s, CoefficientExpr a) { return a *= s; }
  friend CoefficientExpr operator*(const CoefficientExpr& a, const CoefficientExpr& b) {
    if (a.n_ != b.n_ && !a.terms_.empty() && !b.terms_.empty()) {
      throw std::invalid_argument("CoefficientExpr: dimension mismatch in product");
    }
    CoefficientExpr out(std::max(a.n_, b.n_));
    for (const auto& [ka, ca] : a.terms_) {
      for (const auto& [kb, cb] : b.terms_) {
        TermKey k(out.n_);
        for (std::size_t i = 0; i < out.n_; ++i) {
          k.pow[i] = ka.pow[i] + kb.pow[i];
          k.sin_pow[i] = ka.sin_pow[i] + kb.sin_pow[i];
          k.cos_pow[i] = ka.cos_pow[i] + kb.cos_pow[i];
        }
        out.add_term(ca * cb, std::move(k));
      }
    }
    return out;
  }
  friend bool operator==(const CoefficientExpr& a, const CoefficientExpr& b) {
    if (a.terms_.empty() && b.terms_.empty()) return true;
    return a.n_ == b.n_ && a.terms_ == b.terms_;
  }

  std::string to_string() const {
    if (terms_.empty()) return "0";
    std::ostringstream os;
    os.precision(17);
    bool first = true;
    for (const auto& [k, c] : terms_) {
      if (!first) os << (c < 0 ? " - " : " + ");
      else if (c < 0) os << "-";
      first = false;
      os << std::abs(c);
      for (std::size_t i = 0; i < n_; ++i) {
        if (k.pow[i]) os << "*x" << i + 1 << (k.pow[i] > 1 ? "^" + std::to_string(k.pow[i]) : "");
        if (k.sin_pow[i]) os << "*sin(x" << i + 1 << ")" << (k.sin_pow[i] > 1 ? "^" + std::to_string(k.sin_pow[i]) : "");
        if (k.cos_pow[i]) os << "*cos(x" << i + 1 << ")";
      }
    }
    return os.str();
  }

 private:
  static double ipow(double x, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= x;
    return r;
  }
  void adopt_dim(const CoefficientExpr& o) {
    if (n_ == o.n_) return;
    if (terms_.empty()) {
      n_ = o.n_;
      return;
    }
    if (o.terms_.empty()) return;
    throw std::invalid_argument("CoefficientExpr: dimension mismatch");
  }

  std::size_t n_ = 0;
  std::map<TermKey, double> terms_;
};

/// Flattened copy of an expression for hot evaluation loops.
class CompiledExpr {
 public:
  CompiledExpr() = default;
  explicit CompiledExpr(const CoefficientExpr& e) : n_(e.dim()) {
    if (n_ > kMaxDim) throw std::invalid_argument("CompiledExpr: dimension above 16");
    for (const auto& [k, c] : e.terms()) {
      Term t;
      t.coef = c;
      for (std::size_t i = 0; i < k.dim(); ++i) {
        if (k.pow[i]) t.factors.push_back({static_cast<int>(i), 0, k.pow[i]});
        if (k.sin_pow[i]) t.factors.push_back({static_cast<int>(i), 1, k.sin_pow[i]});
        if (k.cos_pow[i]) t.factors.push_back({static_cast<int>(i), 2, k.cos_pow[i]});
      }
      if (t.factors.empty()) constant_ += c;
      else terms_.push_back(std::move(t));
    }
    for (const auto& t : terms_)
      for (const auto& f : t.factors)
        if (f.kind != 0) trig_ = true;
  }

  bool is_zero() const { return constant_ == 0.0 && terms_.empty(); }
  double operator()(const double* x) const {
    double sum = constant_;
    if (terms_.empty()) return sum;
    // sin/cos are evaluated once per coordinate when any term needs them
    double s[kMaxDim], c[kMaxDim];
    if (trig_) {
      for (std::size_t i = 0; i < n_ && i < kMaxDim; ++i) {
        s[i] = std::sin(x[i]);
        c[i] = std::cos(x[i]);
      }
    }
    for (const auto& t : terms_) {
      double v = t.coef;
      for (const auto& f : t.factors) {
        double b = f.kind == 0 ? x[f.var] : (f.kind == 1 ? s[f.var] : c[f.var]);
        double r = b;
        for (int q = 1; q < f.power; ++q) r *= b;
        v *= r;
      }
      sum += v;
    }
    return sum;
  }

 private:
  static constexpr std::size_t kMaxDim = 16;
  struct Factor {
    int var;
    int kind;  // 0 monomial, 1 sin, 2 cos
    int power;
  };
  struct Term {
    double coef = 0.0;
    std::vector<Factor> factors;
  };
  std::size_t n_ = 0;
  double constant_ = 0.0;
  bool trig_ = false;
  std::vector<Term> terms_;
};

}  // namespace blowlab
