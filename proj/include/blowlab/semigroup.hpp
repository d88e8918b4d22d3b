#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <tuple>

#include "errors.hpp"
#include "operator.hpp"

namespace blowlab {

enum class ExpMethod { automatic, dense, krylov };

inline std::string to_string(ExpMethod m) {
  switch (m) {
    case ExpMethod::automatic: return "auto";
    case ExpMethod::dense: return "dense";
    case ExpMethod::krylov: return "krylov";
  }
  return "?";
}

inline ExpMethod parse_exp_method(const std::string& s) {
  if (s == "auto") return ExpMethod::automatic;
  if (s == "dense") return ExpMethod::dense;
  if (s == "krylov") return ExpMethod::krylov;
  throw std::invalid_argument("unknown exponential method '" + s + "'");
}

/// Largest node count handled by the dense exponential under ExpMethod::automatic.
inline constexpr std::size_t kDenseNodeLimit = 4096;

struct KrylovStats {
  int steps = 0;
  int rejections = 0;
  double error_estimate = 0.0;
};

/// w = exp(t A) v by restarted Arnoldi with local error control (the expv scheme
/// of Sidje's Expokit). The small Hessenberg exponential is a dense Pade
/// evaluation. `tol` bounds the accumulated error relative to |v|.
template <class Mat>
Eigen::VectorXd krylov_expv(const Mat& A, const Eigen::VectorXd& v, double t, double tol, double anorm,
                            int m = 30, KrylovStats* stats = nullptr) {
  const Eigen::Index n = v.size();
  if (t == 0.0) return v;
  const double vnorm = v.norm();
  if (vnorm == 0.0) return Eigen::VectorXd::Zero(n);
  m = static_cast<int>(std::min<Eigen::Index>(m, n));
  if (m < 2) m = static_cast<int>(std::min<Eigen::Index>(2, n));
  anorm = std::max(anorm, 1e-300);

  const double delta = 1.2, gamma = 0.9;
  const int mxrej = 10, mxstep = 100000;
  const double btol = 1e-12 * anorm;
  const double t_out = std::abs(t), sgn = t < 0 ? -1.0 : 1.0;
  const double abs_tol = tol * vnorm;

  auto round_step = [](double dt) {
    double s = std::pow(10.0, std::floor(std::log10(dt)) - 1.0);
    return std::ceil(dt / s) * s;
  };

  double xm = 1.0 / m;
  const double mp1 = m + 1.0;
  // initial step from the a-priori bound on the truncated Taylor remainder
  double fact = std::pow(mp1 / std::numbers::e, mp1) * std::sqrt(2.0 * std::numbers::pi * mp1);
  double t_new = (1.0 / anorm) * std::pow((fact * tol) / (4.0 * anorm), xm);
  t_new = round_step(std::min(t_new, t_out));

  Eigen::VectorXd w = v;
  double beta = vnorm, t_now = 0.0, err_acc = 0.0;
  int nstep = 0, nrej = 0;
  Eigen::MatrixXd V(n, m + 1), H(m + 2, m + 2), F;
  while (t_now < t_out) {
    if (++nstep > mxstep) throw NonConvergence("krylov_expv: step limit reached", err_acc);
    double t_step = std::min(t_out - t_now, t_new);
    V.setZero();
    H.setZero();
    V.col(0) = w / beta;
    int k1 = 2, mb = m;
    for (int j = 0; j < m; ++j) {
      Eigen::VectorXd p = A * V.col(j);
      for (int i = 0; i <= j; ++i) {
        H(i, j) = V.col(i).dot(p);
        p -= H(i, j) * V.col(i);
      }
      double s = p.norm();
      if (s < btol) {
        // happy breakdown: the Krylov space is invariant, one step finishes the job
        k1 = 0;
        mb = j + 1;
        t_step = t_out - t_now;
        break;
      }
      H(j + 1, j) = s;
      V.col(j + 1) = p / s;
    }
    double avnorm = 0.0;
    if (k1 != 0) {
      H(m + 1, m) = 1.0;
      avnorm = (A * V.col(m)).norm();
    }
    double err_loc = 0.0;
    for (int irej = 0;; ++irej) {
      const int mx = mb + k1;
      F = (sgn * t_step * H.topLeftCorner(mx, mx)).exp();
      if (k1 == 0) {
        err_loc = btol;
        break;
      }
      double phi1 = std::abs(beta * F(m, 0));
      double phi2 = std::abs(beta * F(m + 1, 0) * avnorm);
      if (phi1 > 10.0 * phi2) {
        err_loc = phi2;
        xm = 1.0 / m;
      } else if (phi1 > phi2) {
        err_loc = (phi1 * phi2) / (phi1 - phi2);
        xm = 1.0 / m;
      } else {
        err_loc = phi1;
        xm = 1.0 / (m - 1);
      }
      if (err_loc <= delta * (t_step / t_out) * abs_tol) break;
      if (irej == mxrej) {
        throw NonConvergence("krylov_expv: step size rejected too often", err_loc / vnorm);
      }
      ++nrej;
      t_step = round_step(gamma * t_step * std::pow(t_step * abs_tol / (t_out * err_loc), xm));
    }
    const int mx = mb + std::max(0, k1 - 1);
    w = V.leftCols(mx) * (beta * F.col(0).head(mx));
    beta = w.norm();
    t_now += t_step;
    if (err_loc > 0.0) {
      t_new = round_step(gamma * t_step * std::pow(t_step * abs_tol / (t_out * err_loc), xm));
    } else {
      t_new = t_out;
    }
    err_acc += std::max(err_loc, 1e-16 * beta);
    if (beta == 0.0) {
      w.setZero();
      break;
    }
  }
  if (stats) {
    stats->steps = nstep;
    stats->rejections = nrej;
    stats->error_estimate = err_acc / vnorm;
  }
  return w;
}

/// Kernel values h_t(x,.) relative to the grid quadrature: (S(t)w)(x) = sum_y h_t(x,y) w(y) * weight.
struct KernelSlice {
  std::size_t source = 0;
  double t = 0.0;
  GridFunction values;
  double weight = 0.0;

  double mass() const { return values.values.sum() * weight; }
  double min_value() const { return values.values.minCoeff(); }
  /// Fraction of entries below -1e-12 * max|h| (roundoff-sized negatives are not counted).
  double negative_fraction() const {
    double cut = -1e-12 * values.values.cwiseAbs().maxCoeff();
    Eigen::Index neg = (values.values.array() < cut).count();
    return static_cast<double>(neg) / static_cast<double>(values.values.size());
  }
};

/// The semigroup exp(tA) for an assembled operator A. Dense propagators are
/// cached per (operator id, step, step count); the cache is guarded by a mutex
/// and entries are deterministic, so concurrent inserts are harmless.
class SemigroupAction {
 public:
  explicit SemigroupAction(std::shared_ptr<const SparseOperator> op, ExpMethod method = ExpMethod::automatic,
                           double tol = 1e-10)
      : op_(std::move(op)), tol_(tol) {
    if (!op_) throw std::invalid_argument("SemigroupAction: null operator");
    if (!(tol_ > 0.0)) throw std::invalid_argument("SemigroupAction: tolerance must be positive");
    method_ = method == ExpMethod::automatic ? (op_->size() <= kDenseNodeLimit ? ExpMethod::dense : ExpMethod::krylov)
                                             : method;
  }

  const SparseOperator& op() const { return *op_; }
  std::shared_ptr<const SparseOperator> op_ptr() const { return op_; }
  const Grid& grid() const { return op_->grid(); }
  ExpMethod method() const { return method_; }
  double tolerance() const { return tol_; }

  Eigen::VectorXd evolve(const Eigen::VectorXd& v, double t) const {
    if (t < 0.0) throw std::invalid_argument("evolve: negative time");
    if (v.size() != static_cast<Eigen::Index>(op_->size())) throw std::invalid_argument("evolve: size mismatch");
    if (t == 0.0) return v;
    if (method_ == ExpMethod::dense) return *propagator(t, 1) * v;
    return krylov_expv(op_->matrix(), v, t, tol_, op_->spectral_bound());
  }
  GridFunction evolve(const GridFunction& v, double t) const {
    if (!(v.grid == grid())) throw std::invalid_argument("evolve: grid mismatch");
    return GridFunction(grid(), evolve(v.values, t));
  }

  /// exp(steps * dt * A) applied to v; the dense route reuses the cached propagator.
  Eigen::VectorXd evolve_steps(const Eigen::VectorXd& v, double dt, int steps) const {
    if (steps == 0 || dt == 0.0) return v;
    if (method_ == ExpMethod::dense) return *propagator(dt, steps) * v;
    return krylov_expv(op_->matrix(), v, dt * steps, tol_, op_->spectral_bound());
  }

  /// Dense exp(steps * dt * A), computed once and cached.
  std::shared_ptr<const Eigen::MatrixXd> propagator(double dt, int steps) const {
    Key key{op_->id(), std::bit_cast<std::uint64_t>(dt), steps};
    {
      std::lock_guard<std::mutex> lock(mutex_);
      auto it = cache_.find(key);
      if (it != cache_.end()) return it->second;
    }
    Eigen::MatrixXd a = Eigen::MatrixXd(op_->matrix()) * (dt * steps);
    auto p = std::make_shared<const Eigen::MatrixXd>(a.exp());
    std::lock_guard<std::mutex> lock(mutex_);
    cache_[key] = p;
    return p;
  }
  std::size_t cache_size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return cache_.size();
  }

  /// Row `source` of exp(tA) divided by the cell volume.
  KernelSlice kernel_slice(std::size_t source, double t) const {
    if (!(t > 0.0)) throw std::invalid_argument("kernel_slice: t must be positive");
    if (source >= op_->size()) throw std::out_of_range("kernel_slice: source node out of range");
    const double w = grid().cell_volume();
    Eigen::VectorXd row;
    if (method_ == ExpMethod::dense) {
      row = propagator(t, 1)->row(static_cast<Eigen::Index>(source)).transpose();
    } else {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(op_->size()));
      e[static_cast<Eigen::Index>(source)] = 1.0;
      SparseMatrix at = op_->matrix().transpose();
      row = krylov_expv(at, e, t, tol_, op_->spectral_bound());
    }
    return KernelSlice{source, t, GridFunction(grid(), row / w), w};
  }

 private:
  using Key = std::tuple<std::uint64_t, std::uint64_t, int>;
  std::shared_ptr<const SparseOperator> op_;
  ExpMethod method_;
  double tol_;
  mutable std::mutex mutex_;
  mutable std::map<Key, std::shared_ptr<const Eigen::MatrixXd>> cache_;
};

/// int h_t(x,y) dy on the grid, i.e. (exp(tA) 1)(x).
inline double kernel_mass(const SemigroupAction& s, std::size_t source, double t) {
  if (!(t > 0.0)) throw std::invalid_argument("kernel_mass: t must be positive");
  if (source >= s.op().size()) throw std::out_of_range("kernel_mass: source node out of range");
  Eigen::VectorXd one = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(s.op().size()));
  return s.evolve(one, t)[static_cast<Eigen::Index>(source)];
}

/// |S(t)S(s)v - S(t+s)v|_sup / |v|_sup
inline double semigroup_defect(const SemigroupAction& sg, double t, double s, const Eigen::VectorXd& v) {
  if (t < 0.0 || s < 0.0) throw std::invalid_argument("semigroup_defect: negative time");
  double vn = v.cwiseAbs().maxCoeff();
  if (vn == 0.0 || s == 0.0 || t == 0.0) return 0.0;
  Eigen::VectorXd a = sg.evolve(sg.evolve(v, s), t);
  Eigen::VectorXd b = sg.evolve(v, t + s);
  return (a - b).cwiseAbs().maxCoeff() / vn;
}

/// Free-space heat kernel (4 pi t)^(-n/2) exp(-|x-y|^2 / 4t).
inline double gaussian_kernel(std::size_t n, double t, double dist2) {
  return std::pow(4.0 * std::numbers::pi * t, -0.5 * static_cast<double>(n)) * std::exp(-dist2 / (4.0 * t));
}

}  // namespace blowlab
