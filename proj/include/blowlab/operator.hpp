#pragma once

#include <Eigen/Sparse>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "fields.hpp"
#include "grid.hpp"

namespace blowlab {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

inline std::uint64_t next_operator_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

/// Discrete operator on the interior nodes of a grid (Dirichlet exterior).
class SparseOperator {
 public:
  SparseOperator(Grid grid, SparseMatrix matrix) : grid_(std::move(grid)), matrix_(std::move(matrix)), id_(next_operator_id()) {
    if (static_cast<std::size_t>(matrix_.rows()) != grid_.size() || matrix_.rows() != matrix_.cols()) {
      throw std::invalid_argument("SparseOperator: matrix shape does not match grid");
    }
    matrix_.makeCompressed();
    double amax = 0.0;
    for (int k = 0; k < matrix_.outerSize(); ++k) {
      double row = 0.0;
      for (SparseMatrix::InnerIterator it(matrix_, k); it; ++it) {
        amax = std::max(amax, std::abs(it.value()));
        row += std::abs(it.value());
      }
      spectral_bound_ = std::max(spectral_bound_, row);
    }
    max_abs_ = amax;
    SparseMatrix diff = matrix_ - SparseMatrix(matrix_.transpose());
    double dmax = 0.0;
    for (int k = 0; k < diff.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(diff, k); it; ++it) dmax = std::max(dmax, std::abs(it.value()));
    asymmetry_ = dmax;
    symmetric_ = dmax <= 1e-12 * amax;
  }

  const Grid& grid() const { return grid_; }
  const SparseMatrix& matrix() const { return matrix_; }
  std::size_t size() const { return grid_.size(); }
  bool symmetric() const { return symmetric_; }
  /// max |A_ij - A_ji|
  double asymmetry() const { return asymmetry_; }
  double max_abs() const { return max_abs_; }
  /// Gershgorin bound on the largest eigenvalue magnitude (max absolute row sum).
  double spectral_bound() const { return spectral_bound_; }
  std::uint64_t id() const { return id_; }

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const { return matrix_ * v; }
  GridFunction apply(const GridFunction& v) const {
    if (!(v.grid == grid_)) throw std::invalid_argument("SparseOperator::apply: grid mismatch");
    return GridFunction(grid_, matrix_ * v.values);
  }

  /// Coordinate-list dump: "row col value" per line, 17 significant digits.
  void export_coo(std::ostream& os) const {
    auto old = os.precision(17);
    for (int k = 0; k < matrix_.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(matrix_, k); it; ++it)
        os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
    os.precision(old);
  }

 private:
  Grid grid_;
  SparseMatrix matrix_;
  std::uint64_t id_;
  bool symmetric_ = false;
  double asymmetry_ = 0.0;
  double max_abs_ = 0.0;
  double spectral_bound_ = 0.0;
};

/// Central-difference discretization of sum_ij B_ij d_i d_j + sum_j b_j d_j with
/// coefficients frozen at the stencil center. Mixed derivatives use the 4-point
/// cross stencil; neighbours outside the grid are dropped (zero exterior values).
inline std::shared_ptr<const SparseOperator> assemble_operator(const VectorFieldSystem& system, const Grid& grid) {
  if (system.dim() != grid.dim()) throw std::invalid_argument("assemble_operator: dimension mismatch");
  const std::size_t n = grid.dim();
  OperatorCoefficients oc = system.expanded();
  std::vector<std::vector<CompiledExpr>> B(n, std::vector<CompiledExpr>(n));
  std::vector<CompiledExpr> b(n);
  for (std::size_t i = 0; i < n; ++i) {
    b[i] = CompiledExpr(oc.first[i]);
    for (std::size_t j = 0; j < n; ++j) B[i][j] = CompiledExpr(oc.second[i][j]);
  }
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i) h[i] = grid.spacing(i);

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(grid.size() * (1 + 2 * n + 2 * n * (n - 1)));
  std::vector<double> x(n);
  std::vector<int> idx(n);
  for (std::size_t row = 0; row < grid.size(); ++row) {
    grid.node(row, x);
    idx = grid.multi_index(row);
    auto add = [&](std::vector<int> offs, double v) {
      if (v == 0.0) return;
      std::size_t col = row;
      for (std::size_t a = 0; a < n; ++a) {
        if (offs[a] == 0) continue;
        int j = idx[a] + offs[a];
        if (j < 0 || j >= grid.points(a)) return;
        col = col + static_cast<std::size_t>(static_cast<long>(offs[a]) * static_cast<long>(grid.stride(a)));
      }
      trip.emplace_back(static_cast<int>(row), static_cast<int>(col), v);
    };
    for (std::size_t i = 0; i < n; ++i) {
      double bii = B[i][i].is_zero() ? 0.0 : B[i][i](x.data());
      double bi = b[i].is_zero() ? 0.0 : b[i](x.data());
      std::vector<int> off(n, 0);
      add(off, -2.0 * bii / (h[i] * h[i]));
      off[i] = 1;
      add(off, bii / (h[i] * h[i]) + bi / (2.0 * h[i]));
      off[i] = -1;
      add(off, bii / (h[i] * h[i]) - bi / (2.0 * h[i]));
      for (std::size_t j = i + 1; j < n; ++j) {
        double bij = B[i][j].is_zero() ? 0.0 : B[i][j](x.data());
        if (bij == 0.0) continue;
        // B_ij d_i d_j + B_ji d_j d_i = 2 B_ij d_ij
        double c = 2.0 * bij / (4.0 * h[i] * h[j]);
        std::vector<int> o(n, 0);
        o[i] = 1; o[j] = 1;
        add(o, c);
        o[i] = -1; o[j] = -1;
        add(o, c);
        o[i] = 1; o[j] = -1;
        add(o, -c);
        o[i] = -1; o[j] = 1;
        add(o, -c);
      }
    }
  }
  auto nn = static_cast<Eigen::Index>(grid.size());
  SparseMatrix A(nn, nn);
  A.setFromTriplets(trip.begin(), trip.end());
  A.prune(0.0);
  return std::make_shared<const SparseOperator>(grid, std::move(A));
}

struct ConvergenceReport {
  double order = 0.0;
  std::vector<double> spacings;
  std::vector<double> errors;
  bool indeterminate = false;  // errors at roundoff level on every grid
  bool non_monotone = false;   // errors did not decrease under refinement
};

/// Least-squares slope of y against x.
inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double m = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i]; sy += y[i]; sxx += x[i] * x[i]; sxy += x[i] * y[i];
  }
  double den = m * sxx - sx * sx;
  if (den == 0.0) throw std::invalid_argument("ls_slope: degenerate abscissae");
  return (m * sxy - sx * sy) / den;
}

/// Max-norm error of the discrete operator against the symbolic one over nodes
/// whose full stencil is interior. A non-empty `extent` further restricts the
/// comparison to |x_i| <= extent[i].
inline double consistency_error(const VectorFieldSystem& system, const CoefficientExpr& u, const Grid& grid,
                                const std::vector<double>& extent = {}) {
  auto op = assemble_operator(system, grid);
  GridFunction uh = sample(u, grid);
  GridFunction exact = sample(delta_x_symbolic(system, u), grid);
  Eigen::VectorXd au = op->apply(uh.values);
  double err = 0.0;
  std::vector<double> pt(grid.dim());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!grid.interior(k, 1)) continue;
    if (!extent.empty()) {
      grid.node(k, pt);
      bool inside = true;
      for (std::size_t i = 0; i < grid.dim(); ++i)
        if (std::abs(pt[i]) > extent[i]) inside = false;
      if (!inside) continue;
    }
    auto kk = static_cast<Eigen::Index>(k);
    err = std::max(err, std::abs(au[kk] - exact.values[kk]));
  }
  return err;
}

/// Observed truncation order over a sequence of grids with decreasing spacing
/// (slope of log error against log h on the first axis spacing). Errors are
/// measured on the region covered by the fully interior nodes of the coarsest
/// grid, so every grid is compared on the same set.
inline ConvergenceReport convergence_order(const VectorFieldSystem& system, const CoefficientExpr& u,
                                           const std::vector<Grid>& grids) {
  if (grids.size() < 3) throw std::invalid_argument("convergence_order: need at least 3 grids");
  ConvergenceReport rep;
  double scale = 0.0;
  std::vector<double> extent(grids.front().dim());
  for (std::size_t i = 0; i < extent.size(); ++i) {
    extent[i] = grids.front().axis(i).half_width - 2.0 * grids.front().spacing(i) + 1e-12;
  }
  for (const auto& g : grids) {
    rep.spacings.push_back(g.spacing(0));
    rep.errors.push_back(consistency_error(system, u, g, extent));
    GridFunction ex = sample(delta_x_symbolic(system, u), g);
    scale = std::max(scale, ex.sup_norm());
  }
  const double floor = 1e-9 * std::max(scale, 1.0);
  rep.indeterminate = true;
  for (double e : rep.errors)
    if (e > floor) rep.indeterminate = false;
  for (std::size_t i = 1; i < rep.errors.size(); ++i)
    if (!(rep.errors[i] < rep.errors[i - 1])) rep.non_monotone = true;
  if (rep.indeterminate) {
    rep.order = std::nan("");
    return rep;
  }
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < grids.size(); ++i) {
    lx.push_back(std::log(rep.spacings[i]));
    ly.push_back(std::log(std::max(rep.errors[i], 1e-300)));
  }
  rep.order = ls_slope(lx, ly);
  return rep;
}

}  // namespace blowlab
