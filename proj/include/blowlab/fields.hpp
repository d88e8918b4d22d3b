#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "expression.hpp"

namespace blowlab {

enum class SystemTag { euclidean, constant, trig_bounded, grushin, engel, custom };

inline std::string to_string(SystemTag tag) {
  switch (tag) {
    case SystemTag::euclidean: return "euclidean";
    case SystemTag::constant: return "constant";
    case SystemTag::trig_bounded: return "trig-bounded";
    case SystemTag::grushin: return "grushin";
    case SystemTag::engel: return "engel";
    case SystemTag::custom: return "custom";
  }
  return "?";
}

inline SystemTag parse_system_tag(const std::string& s) {
  if (s == "euclidean") return SystemTag::euclidean;
  if (s == "constant") return SystemTag::constant;
  if (s == "trig-bounded" || s == "trig_bounded" || s == "trig") return SystemTag::trig_bounded;
  if (s == "grushin") return SystemTag::grushin;
  if (s == "engel") return SystemTag::engel;
  if (s == "custom") return SystemTag::custom;
  throw std::invalid_argument("unknown system tag '" + s + "'");
}

/// X = sum_i a_i(x) d/dx_i
struct VectorField {
  std::vector<CoefficientExpr> coeffs;

  VectorField() = default;
  explicit VectorField(std::vector<CoefficientExpr> c) : coeffs(std::move(c)) {}
  std::size_t dim() const { return coeffs.size(); }
};

inline CoefficientExpr divergence(const VectorField& field) {
  CoefficientExpr div(field.dim());
  for (std::size_t i = 0; i < field.dim(); ++i) div += field.coeffs[i].derivative(i);
  return div;
}

inline CoefficientExpr apply_field(const VectorField& field, const CoefficientExpr& u) {
  if (!u.is_zero() && u.dim() != field.dim()) {
    throw std::invalid_argument("apply_field: dimension mismatch");
  }
  CoefficientExpr out(field.dim());
  for (std::size_t i = 0; i < field.dim(); ++i) {
    if (field.coeffs[i].is_zero()) continue;
    out += field.coeffs[i] * u.derivative(i);
  }
  return out;
}

/// Non-divergence expansion of the operator:
/// sum_{ij} B_ij d_i d_j + sum_j b_j d_j  with B symmetric.
struct OperatorCoefficients {
  std::vector<std::vector<CoefficientExpr>> second;  // B_ij
  std::vector<CoefficientExpr> first;                // b_j
};

class VectorFieldSystem {
 public:
  VectorFieldSystem() = default;
  VectorFieldSystem(std::size_t n, std::vector<VectorField> fields, SystemTag tag, int k = 0)
      : n_(n), fields_(std::move(fields)), tag_(tag), k_(k) {
    if (n_ == 0) throw std::invalid_argument("VectorFieldSystem: dimension must be >= 1");
    if (fields_.empty()) throw std::invalid_argument("VectorFieldSystem: no fields");
    coeffs_bounded_ = derivs_bounded_ = all_constant_ = true;
    for (auto& f : fields_) {
      if (f.dim() != n_) throw std::invalid_argument("VectorFieldSystem: field dimension mismatch");
      for (auto& a : f.coeffs) {
        if (a.is_zero()) a = CoefficientExpr(n_);
        if (!a.bounded()) coeffs_bounded_ = false;
        if (!a.is_constant()) all_constant_ = false;
        for (std::size_t i = 0; i < n_; ++i)
          if (!a.derivative(i).bounded()) derivs_bounded_ = false;
      }
      divs_.push_back(divergence(f));
    }
  }

  std::size_t dim() const { return n_; }
  std::size_t size() const { return fields_.size(); }
  const std::vector<VectorField>& fields() const { return fields_; }
  const VectorField& field(std::size_t k) const { return fields_.at(k); }
  const CoefficientExpr& div(std::size_t k) const { return divs_.at(k); }
  SystemTag tag() const { return tag_; }
  int order() const { return k_; }
  bool coefficients_bounded() const { return coeffs_bounded_; }
  bool derivatives_bounded() const { return derivs_bounded_; }
  bool all_constant() const { return all_constant_; }
  bool has_trig() const {
    for (const auto& f : fields_)
      for (const auto& a : f.coeffs)
        if (a.has_trig()) return true;
    return false;
  }

  OperatorCoefficients expanded() const {
    OperatorCoefficients oc;
    oc.second.assign(n_, std::vector<CoefficientExpr>(n_, CoefficientExpr(n_)));
    oc.first.assign(n_, CoefficientExpr(n_));
    for (std::size_t k = 0; k < fields_.size(); ++k) {
      const auto& a = fields_[k].coeffs;
      for (std::size_t i = 0; i < n_; ++i) {
        if (a[i].is_zero()) continue;
        for (std::size_t j = 0; j < n_; ++j) {
          if (a[j].is_zero()) continue;
          oc.second[i][j] += a[i] * a[j];
          oc.first[j] += a[i] * a[j].derivative(i);
        }
      }
      for (std::size_t j = 0; j < n_; ++j) oc.first[j] += divs_[k] * a[j];
    }
    return oc;
  }

 private:
  std::size_t n_ = 0;
  std::vector<VectorField> fields_;
  std::vector<CoefficientExpr> divs_;
  SystemTag tag_ = SystemTag::custom;
  int k_ = 0;
  bool coeffs_bounded_ = true;
  bool derivs_bounded_ = true;
  bool all_constant_ = true;
};

/// Default matrix for the constant tag: X_k = c_k d/dx_k with c = 1, 2, 1, 2, ...
inline std::vector<std::vector<double>> default_constant_matrix(std::size_t n) {
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) m[i][i] = (i % 2 == 0) ? 1.0 : 2.0;
  return m;
}

inline VectorFieldSystem constant_system(const std::vector<std::vector<double>>& matrix) {
  if (matrix.empty()) throw std::invalid_argument("constant system: empty matrix");
  std::size_t n = matrix.front().size();
  std::vector<VectorField> fields;
  for (const auto& row : matrix) {
    if (row.size() != n) throw std::invalid_argument("constant system: ragged matrix");
    std::vector<CoefficientExpr> c;
    for (double v : row) c.push_back(CoefficientExpr::constant(n, v));
    fields.emplace_back(std::move(c));
  }
  return VectorFieldSystem(n, std::move(fields), SystemTag::constant);
}

/// Named systems. `matrix` is used only by the constant tag (rows are fields);
/// empty means default_constant_matrix(n).
inline VectorFieldSystem builtin_system(SystemTag tag, std::size_t n, int k = 1,
                                        const std::vector<std::vector<double>>& matrix = {}) {
  if (n < 1) throw std::invalid_argument("builtin_system: n must be >= 1");
  auto zero = [n] { return CoefficientExpr(n); };
  auto one = [n] { return CoefficientExpr::constant(n, 1.0); };
  std::vector<VectorField> fields;
  switch (tag) {
    case SystemTag::euclidean:
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<CoefficientExpr> c(n, zero());
        c[i] = one();
        fields.emplace_back(std::move(c));
      }
      return VectorFieldSystem(n, std::move(fields), tag);
    case SystemTag::constant: {
      auto m = matrix.empty() ? default_constant_matrix(n) : matrix;
      if (m.front().size() != n) throw std::invalid_argument("builtin_system: constant matrix dimension mismatch");
      return constant_system(m);
    }
    case SystemTag::trig_bounded: {
      if (n == 1) {
        fields.emplace_back(std::vector<CoefficientExpr>{CoefficientExpr::sin_of(1, 0)});
        return VectorFieldSystem(n, std::move(fields), tag);
      }
      std::vector<CoefficientExpr> c1(n, zero()), c2(n, zero());
      c1[0] = CoefficientExpr::sin_of(n, 1);
      c2[1] = CoefficientExpr::cos_of(n, 0);
      fields.emplace_back(std::move(c1));
      fields.emplace_back(std::move(c2));
      for (std::size_t i = 2; i < n; ++i) {
        std::vector<CoefficientExpr> c(n, zero());
        c[i] = one();
        fields.emplace_back(std::move(c));
      }
      return VectorFieldSystem(n, std::move(fields), tag);
    }
    case SystemTag::grushin: {
      if (n != 2) throw std::invalid_argument("builtin_system: grushin requires n = 2");
      if (k < 1) throw std::invalid_argument("builtin_system: grushin requires k >= 1");
      std::vector<CoefficientExpr> c1(n, zero()), c2(n, zero());
      c1[0] = one();
      c2[1] = CoefficientExpr::variable(n, 0, k);
      fields.emplace_back(std::move(c1));
      fields.emplace_back(std::move(c2));
      return VectorFieldSystem(n, std::move(fields), tag, k);
    }
    case SystemTag::engel: {
      if (n < 2) throw std::invalid_argument("builtin_system: engel requires n >= 2");
      std::vector<CoefficientExpr> c1(n, zero()), c2(n, zero());
      c1[0] = one();
      for (std::size_t i = 1; i < n; ++i) c2[i] = CoefficientExpr::variable(n, 0, static_cast<int>(i));
      fields.emplace_back(std::move(c1));
      fields.emplace_back(std::move(c2));
      return VectorFieldSystem(n, std::move(fields), tag);
    }
    case SystemTag::custom:
      break;
  }
  throw std::invalid_argument("builtin_system: tag '" + to_string(tag) + "' has no builtin definition");
}

/// sum_k (X_k^2 u + div X_k * X_k u)
inline CoefficientExpr delta_x_symbolic(const VectorFieldSystem& system, const CoefficientExpr& u) {
  if (!u.is_zero() && u.dim() != system.dim()) {
    throw std::invalid_argument("delta_x_symbolic: dimension mismatch");
  }
  CoefficientExpr out(system.dim());
  for (std::size_t k = 0; k < system.size(); ++k) {
    CoefficientExpr xu = apply_field(system.field(k), u);
    out += apply_field(system.field(k), xu);
    out += system.div(k) * xu;
  }
  return out;
}

}  // namespace blowlab
