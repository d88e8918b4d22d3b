#pragma once

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "errors.hpp"
#include "mild.hpp"
#include "operator.hpp"

namespace blowlab {

struct IMEXConfig {
  double dt0 = 1e-3;
  double dt_min = 1e-10;
  double grow_reject = 0.10;  // step rejected and dt halved above this relative growth
  double grow_relax = 0.01;   // dt doubled below this relative growth
  double blowup_threshold = 1e8;
  double horizon = 100.0;     // used by blowup_time
  bool zero_diffusion = false;  // A := 0, the pure reaction ODE at every node
  bool reaction = true;         // false drops |u|^p
  double solver_tolerance = 1e-10;
  /// Snapshot times (sorted); steps are shortened to land on them exactly.
  std::vector<double> output_times;

  void validate() const {
    if (!(dt_min > 0.0 && dt_min < dt0)) throw std::invalid_argument("IMEXConfig: need 0 < dt_min < dt0");
    if (!(blowup_threshold > 0.0)) throw std::invalid_argument("IMEXConfig: threshold must be positive");
  }
};

enum class RunEnd { horizon, threshold, dt_collapse };

inline std::string to_string(RunEnd r) {
  switch (r) {
    case RunEnd::horizon: return "horizon";
    case RunEnd::threshold: return "threshold";
    case RunEnd::dt_collapse: return "dt-collapse";
  }
  return "?";
}

struct RunResult {
  std::vector<double> times;
  std::vector<GridFunction> snapshots;
  bool blow_up = false;
  double t_blow = std::numeric_limits<double>::infinity();
  RunEnd end = RunEnd::horizon;
  double final_time = 0.0;
  double boundary_value = 0.0;
  int steps = 0;
  int rejections = 0;
  /// sup-norm after every accepted step (time, value)
  std::vector<std::pair<double, double>> sup_history;
};

/// Linear-implicit Euler solver for (I - dt A) x = b with a cached system matrix.
class ImplicitSolver {
 public:
  ImplicitSolver(std::shared_ptr<const SparseOperator> op, double tol) : op_(std::move(op)), tol_(tol) {}

  Eigen::VectorXd solve(const Eigen::VectorXd& b, double dt, const Eigen::VectorXd& guess) {
    if (dt != dt_) {
      SparseMatrix I(op_->matrix().rows(), op_->matrix().cols());
      I.setIdentity();
      M_ = I - dt * op_->matrix();
      M_.makeCompressed();
      solver_.setTolerance(tol_);
      solver_.compute(M_);
      dt_ = dt;
    }
    Eigen::VectorXd x = solver_.solveWithGuess(b, guess);
    if (solver_.info() != Eigen::Success) {
      throw NonConvergence("imex_step: linear solve did not converge", solver_.error());
    }
    return x;
  }

 private:
  std::shared_ptr<const SparseOperator> op_;
  double tol_;
  double dt_ = std::numeric_limits<double>::quiet_NaN();
  SparseMatrix M_;
  Eigen::BiCGSTAB<SparseMatrix, Eigen::DiagonalPreconditioner<double>> solver_;
};

inline Eigen::VectorXd reaction_term(const Eigen::VectorXd& u, double p, const Eigen::VectorXd& f, bool reaction = true) {
  if (!reaction) return f;
  return u.cwiseAbs().array().pow(p).matrix() + f;
}

/// One step: (I - dt A) u' = u + dt (|u|^p + f). A null operator means A = 0.
inline Eigen::VectorXd imex_step(const Eigen::VectorXd& u, double dt, const SparseOperator* A, double p,
                                 const Eigen::VectorXd& f, bool reaction = true, double tol = 1e-10) {
  if (!(dt > 0.0)) throw std::invalid_argument("imex_step: dt must be positive");
  Eigen::VectorXd rhs = u + dt * reaction_term(u, p, f, reaction);
  if (!A) return rhs;
  SparseMatrix I(A->matrix().rows(), A->matrix().cols());
  I.setIdentity();
  SparseMatrix M = I - dt * A->matrix();
  Eigen::BiCGSTAB<SparseMatrix, Eigen::DiagonalPreconditioner<double>> solver;
  solver.setTolerance(tol);
  solver.compute(M);
  Eigen::VectorXd x = solver.solveWithGuess(rhs, u);
  if (solver.info() != Eigen::Success) throw NonConvergence("imex_step: linear solve did not converge", solver.error());
  return x;
}

/// Adaptive IMEX integration up to `horizon` or blow-up.
inline RunResult run(const ProblemSpec& spec, double horizon, const IMEXConfig& cfg,
                     std::shared_ptr<const SparseOperator> op = nullptr) {
  cfg.validate();
  if (!(horizon > 0.0)) throw std::invalid_argument("run: horizon must be positive");
  if (!cfg.zero_diffusion && !op) op = assemble_operator(spec.system, spec.grid);
  std::unique_ptr<ImplicitSolver> solver;
  if (!cfg.zero_diffusion) solver = std::make_unique<ImplicitSolver>(op, cfg.solver_tolerance);

  RunResult res;
  Eigen::VectorXd u = spec.u0.values;
  double t = 0.0, dt = cfg.dt0;
  std::size_t next_out = 0;
  while (next_out < cfg.output_times.size() && cfg.output_times[next_out] <= 0.0) ++next_out;
  res.times.push_back(0.0);
  res.snapshots.emplace_back(spec.grid, u);
  double s_old = u.cwiseAbs().maxCoeff();
  res.sup_history.emplace_back(0.0, s_old);

  while (t < horizon) {
    double target = horizon;
    if (next_out < cfg.output_times.size()) target = std::min(target, cfg.output_times[next_out]);
    double h = std::min(dt, target - t);
    bool lands = h == target - t;
    Eigen::VectorXd rhs = u + h * reaction_term(u, spec.p, spec.f.values, cfg.reaction);
    Eigen::VectorXd un = solver ? solver->solve(rhs, h, u) : rhs;
    double s_new = un.cwiseAbs().maxCoeff();
    double growth = (s_new - s_old) / std::max(s_old, 1.0);
    if (!std::isfinite(s_new) || growth > cfg.grow_reject) {
      if (h <= cfg.dt_min) {
        res.blow_up = true;
        res.end = RunEnd::dt_collapse;
        res.t_blow = t;
        break;
      }
      dt = std::max(0.5 * h, cfg.dt_min);
      ++res.rejections;
      continue;
    }
    t = lands ? target : t + h;
    u = std::move(un);
    s_old = s_new;
    ++res.steps;
    res.sup_history.emplace_back(t, s_new);
    if (next_out < cfg.output_times.size() && lands && target == cfg.output_times[next_out]) {
      res.times.push_back(t);
      res.snapshots.emplace_back(spec.grid, u);
      ++next_out;
    }
    if (s_new >= cfg.blowup_threshold) {
      res.blow_up = true;
      res.end = RunEnd::threshold;
      res.t_blow = t;
      break;
    }
    if (growth < cfg.grow_relax) dt = std::min(2.0 * dt, cfg.dt0);
  }
  res.final_time = t;
  if (res.times.back() != t) {
    res.times.push_back(t);
    res.snapshots.emplace_back(spec.grid, u);
  }
  res.boundary_value = GridFunction::boundary_sup(spec.grid, u);
  return res;
}

struct BlowupEstimate {
  double t_blow = 0.0;
  double uncertainty = 0.0;
  bool accepted = false;
  double coarse = 0.0;  // T_blow of the first run
  RunEnd end = RunEnd::threshold;
};

/// Blow-up time from a run and a confirmation run with dt0/2 and 10*B; the
/// refined value is returned and the difference is the uncertainty.
inline BlowupEstimate blowup_time(const ProblemSpec& spec, const IMEXConfig& cfg,
                                  std::shared_ptr<const SparseOperator> op = nullptr) {
  if (!cfg.zero_diffusion && !op) op = assemble_operator(spec.system, spec.grid);
  IMEXConfig c1 = cfg;
  c1.output_times.clear();
  RunResult r1 = run(spec, cfg.horizon, c1, op);
  if (!r1.blow_up) throw NoBlowUp("no blow-up observed before t = " + std::to_string(r1.final_time));
  IMEXConfig c2 = c1;
  c2.dt0 = 0.5 * cfg.dt0;
  c2.dt_min = std::min(cfg.dt_min, 0.5 * c2.dt0);
  c2.blowup_threshold = 10.0 * cfg.blowup_threshold;
  RunResult r2 = run(spec, cfg.horizon, c2, op);
  if (!r2.blow_up) throw NoBlowUp("confirmation run did not blow up");
  BlowupEstimate e;
  e.coarse = r1.t_blow;
  e.t_blow = r2.t_blow;
  e.uncertainty = std::abs(r2.t_blow - r1.t_blow);
  e.accepted = e.uncertainty <= 0.05 * e.t_blow;
  e.end = r2.end;
  return e;
}

}  // namespace blowlab
