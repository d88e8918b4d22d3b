#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "expression.hpp"

namespace blowlab {

struct Axis {
  double half_width = 1.0;
  int points = 3;  // interior points
};

/// Tensor grid of interior nodes of the box prod [-L_i, L_i]. Node j on axis i sits at
/// -L_i + (j+1) h_i with h_i = 2 L_i / (N_i + 1). Flat index is row-major: the last
/// axis varies fastest.
class Grid {
 public:
  Grid() = default;
  explicit Grid(std::vector<Axis> axes) : axes_(std::move(axes)) {
    if (axes_.empty()) throw std::invalid_argument("Grid: need at least one axis");
    size_ = 1;
    for (const auto& a : axes_) {
      if (a.points < 3) throw std::invalid_argument("Grid: each axis needs >= 3 interior points");
      if (!(a.half_width > 0.0)) throw std::invalid_argument("Grid: half width must be positive");
      size_ *= static_cast<std::size_t>(a.points);
    }
    strides_.assign(axes_.size(), 1);
    for (std::size_t i = axes_.size() - 1; i > 0; --i) {
      strides_[i - 1] = strides_[i] * static_cast<std::size_t>(axes_[i].points);
    }
  }
  /// Same half width and point count on every axis.
  static Grid uniform(std::size_t n, double half_width, int points) {
    return Grid(std::vector<Axis>(n, Axis{half_width, points}));
  }

  std::size_t dim() const { return axes_.size(); }
  std::size_t size() const { return size_; }
  const std::vector<Axis>& axes() const { return axes_; }
  const Axis& axis(std::size_t i) const { return axes_.at(i); }
  int points(std::size_t i) const { return axes_[i].points; }
  double spacing(std::size_t i) const { return 2.0 * axes_[i].half_width / (axes_[i].points + 1); }
  double coordinate(std::size_t i, int j) const { return -axes_[i].half_width + (j + 1) * spacing(i); }
  std::size_t stride(std::size_t i) const { return strides_[i]; }
  /// Quadrature weight prod h_i.
  double cell_volume() const {
    double w = 1.0;
    for (std::size_t i = 0; i < dim(); ++i) w *= spacing(i);
    return w;
  }

  std::vector<int> multi_index(std::size_t flat) const {
    std::vector<int> idx(dim());
    for (std::size_t i = 0; i < dim(); ++i) {
      idx[i] = static_cast<int>(flat / strides_[i]);
      flat %= strides_[i];
    }
    return idx;
  }
  std::size_t flat_index(std::span<const int> idx) const {
    std::size_t f = 0;
    for (std::size_t i = 0; i < dim(); ++i) f += static_cast<std::size_t>(idx[i]) * strides_[i];
    return f;
  }
  void node(std::size_t flat, std::span<double> x) const {
    for (std::size_t i = 0; i < dim(); ++i) {
      int j = static_cast<int>(flat / strides_[i]);
      flat %= strides_[i];
      x[i] = coordinate(i, j);
    }
  }
  std::vector<double> node(std::size_t flat) const {
    std::vector<double> x(dim());
    node(flat, x);
    return x;
  }
  /// Node closest to the point x (clamped to the grid).
  std::size_t nearest(std::span<const double> x) const {
    std::vector<int> idx(dim());
    for (std::size_t i = 0; i < dim(); ++i) {
      double j = std::round((x[i] + axes_[i].half_width) / spacing(i) - 1.0);
      idx[i] = static_cast<int>(std::clamp(j, 0.0, static_cast<double>(axes_[i].points - 1)));
    }
    return flat_index(idx);
  }
  /// True if every axis index lies in [margin, N_i - 1 - margin].
  bool interior(std::size_t flat, int margin = 1) const {
    for (std::size_t i = 0; i < dim(); ++i) {
      int j = static_cast<int>(flat / strides_[i]);
      flat %= strides_[i];
      if (j < margin || j > axes_[i].points - 1 - margin) return false;
    }
    return true;
  }
  friend bool operator==(const Grid& a, const Grid& b) {
    if (a.dim() != b.dim()) return false;
    for (std::size_t i = 0; i < a.dim(); ++i) {
      if (a.axes_[i].points != b.axes_[i].points || a.axes_[i].half_width != b.axes_[i].half_width) return false;
    }
    return true;
  }

 private:
  std::vector<Axis> axes_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
};

/// One value per interior node of a grid.
struct GridFunction {
  Grid grid;
  Eigen::VectorXd values;

  GridFunction() = default;
  explicit GridFunction(Grid g) : grid(std::move(g)), values(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()))) {}
  GridFunction(Grid g, Eigen::VectorXd v) : grid(std::move(g)), values(std::move(v)) {
    if (static_cast<std::size_t>(values.size()) != grid.size()) {
      throw std::invalid_argument("GridFunction: value count does not match grid");
    }
  }

  double sup_norm() const { return values.size() ? values.cwiseAbs().maxCoeff() : 0.0; }
  double lq_norm(double q) const {
    if (!(q >= 1.0)) throw std::invalid_argument("lq_norm: q must be >= 1");
    return std::pow(values.cwiseAbs().array().pow(q).sum() * grid.cell_volume(), 1.0 / q);
  }
  /// Largest |u| over nodes adjacent to the Dirichlet boundary.
  double boundary_value() const { return boundary_sup(grid, values); }

  static double boundary_sup(const Grid& grid, const Eigen::VectorXd& v) {
    double m = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      if (!grid.interior(k, 1)) m = std::max(m, std::abs(v[static_cast<Eigen::Index>(k)]));
    }
    return m;
  }
};

inline GridFunction sample(const std::function<double(std::span<const double>)>& fn, const Grid& grid) {
  GridFunction out(grid);
  std::vector<double> x(grid.dim());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    grid.node(k, x);
    out.values[static_cast<Eigen::Index>(k)] = fn(x);
  }
  return out;
}

inline GridFunction sample(const CoefficientExpr& expr, const Grid& grid) {
  if (!expr.is_zero() && expr.dim() != grid.dim()) throw std::invalid_argument("sample: dimension mismatch");
  if (expr.is_zero()) return GridFunction(grid);
  return sample([&](std::span<const double> x) { return expr.evaluate(x); }, grid);
}

}  // namespace blowlab
