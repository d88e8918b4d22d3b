#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "errors.hpp"
#include "semigroup.hpp"

namespace blowlab {

/// u_t - Delta_X u = |u|^p + f on a grid, with initial value u0.
struct ProblemSpec {
  VectorFieldSystem system;
  Grid grid;
  double p = 2.0;
  GridFunction f;
  GridFunction u0;

  ProblemSpec(VectorFieldSystem sys, Grid g, double p_, GridFunction f_, GridFunction u0_)
      : system(std::move(sys)), grid(std::move(g)), p(p_), f(std::move(f_)), u0(std::move(u0_)) {
    validate();
  }
  void validate() const {
    if (!(p > 1.0)) throw std::invalid_argument("ProblemSpec: p must exceed 1");
    if (!(f.grid == grid) || !(u0.grid == grid)) throw std::invalid_argument("ProblemSpec: f and u0 must live on the grid");
    if (!f.values.allFinite() || !u0.values.allFinite()) throw std::invalid_argument("ProblemSpec: non-finite data");
    if (system.dim() != grid.dim()) throw std::invalid_argument("ProblemSpec: system and grid dimensions differ");
  }
  /// Same problem restarted from another initial value.
  ProblemSpec with_initial(Eigen::VectorXd u) const {
    return ProblemSpec(system, grid, p, f, GridFunction(grid, std::move(u)));
  }
};

/// Uniform nodes start + j*T/J, j = 0..J.
struct TimeMesh {
  double start = 0.0;
  double horizon = 1.0;
  int J = 64;

  TimeMesh() = default;
  TimeMesh(double T, int J_, double t0 = 0.0) : start(t0), horizon(T), J(J_) {
    if (J < 2) throw std::invalid_argument("TimeMesh: J must be >= 2");
    if (!(T > 0.0)) throw std::invalid_argument("TimeMesh: horizon must be positive");
  }
  double step() const { return horizon / J; }
  double node(int j) const { return start + horizon * j / J; }
};

struct Trajectory {
  TimeMesh mesh;
  Grid grid;
  std::vector<Eigen::VectorXd> states;  // J+1 entries

  Trajectory() = default;
  Trajectory(TimeMesh m, Grid g, std::vector<Eigen::VectorXd> s) : mesh(m), grid(std::move(g)), states(std::move(s)) {
    if (states.size() != static_cast<std::size_t>(mesh.J) + 1) throw std::invalid_argument("Trajectory: need J+1 states");
  }
  /// Constant-in-time trajectory.
  static Trajectory constant(TimeMesh m, Grid g, const Eigen::VectorXd& u) {
    return Trajectory(m, std::move(g), std::vector<Eigen::VectorXd>(static_cast<std::size_t>(m.J) + 1, u));
  }

  /// max_j |u(t_j)|_sup
  double norm() const {
    double m = 0.0;
    for (const auto& s : states) m = std::max(m, s.cwiseAbs().maxCoeff());
    return m;
  }
  GridFunction at(int j) const { return GridFunction(grid, states.at(static_cast<std::size_t>(j))); }
  const Eigen::VectorXd& back() const { return states.back(); }
  std::vector<double> lq_norms(double q) const {
    std::vector<double> out;
    for (int j = 0; j <= mesh.J; ++j) out.push_back(at(j).lq_norm(q));
    return out;
  }
};

inline double distance(const Trajectory& a, const Trajectory& b) {
  if (a.states.size() != b.states.size()) throw std::invalid_argument("distance: trajectories on different meshes");
  double m = 0.0;
  for (std::size_t j = 0; j < a.states.size(); ++j) m = std::max(m, (a.states[j] - b.states[j]).cwiseAbs().maxCoeff());
  return m;
}

struct PicardConfig {
  int max_iterations = 100;
  double tolerance = 1e-10;
  double q_star = 0.5;
  double blowup_threshold = 1e8;
  int J = 64;
  /// horizon used when delta = 0
  double default_horizon = 1.0;
  int max_segments = 100000;

  void validate() const {
    if (!(q_star > 0.0 && q_star < 1.0)) throw std::invalid_argument("PicardConfig: q* must lie in (0,1)");
    if (max_iterations < 1 || J < 2) throw std::invalid_argument("PicardConfig: bad iteration count or J");
    if (!(tolerance > 0.0)) throw std::invalid_argument("PicardConfig: tolerance must be positive");
  }
  /// Lipschitz constant of s -> |s|^p on bounded sets, taken as p.
  static double lipschitz(double p) { return p; }
};

inline double delta_bound(const GridFunction& u0, const GridFunction& f) { return std::max(u0.sup_norm(), f.sup_norm()); }

/// Largest T keeping the Duhamel map in the 2*delta ball and contracting with factor q*.
inline double local_time_horizon(double delta, double p, const PicardConfig& cfg = {}) {
  if (delta < 0.0) throw std::invalid_argument("local_time_horizon: negative delta");
  if (!(p > 1.0)) throw std::invalid_argument("local_time_horizon: p must exceed 1");
  if (delta == 0.0) return cfg.default_horizon;
  const double dp = std::pow(delta, p - 1.0), two_p = std::pow(2.0, p);
  double ball = 1.0 / (two_p * dp + 1.0);
  double contraction = cfg.q_star / (PicardConfig::lipschitz(p) * two_p * dp);
  return std::min(ball, contraction);
}

/// Duhamel map on the mesh with the trapezoidal rule in s. Uses
/// sum_i w_i S(t_j - t_i) g_i = S(dt)(previous partial sum + dt w_{j-1} g_{j-1}) + dt/2 g_j,
/// so a sweep costs J applications of S(dt).
inline Trajectory picard_map(const Trajectory& v, const ProblemSpec& spec, const SemigroupAction& sg) {
  const int J = v.mesh.J;
  const double dt = v.mesh.step();
  if ((v.states.front() - spec.u0.values).cwiseAbs().maxCoeff() != 0.0) {
    throw std::invalid_argument("picard_map: iterate must start at u0");
  }
  auto g = [&](int j) -> Eigen::VectorXd {
    return v.states[static_cast<std::size_t>(j)].cwiseAbs().array().pow(spec.p).matrix() + spec.f.values;
  };
  std::vector<Eigen::VectorXd> out(static_cast<std::size_t>(J) + 1);
  out[0] = spec.u0.values;
  Eigen::VectorXd acc = spec.u0.values;
  Eigen::VectorXd g_prev = g(0);
  for (int j = 1; j <= J; ++j) {
    double w = j == 1 ? 0.5 : 1.0;
    acc = sg.evolve_steps(acc + dt * w * g_prev, dt, 1);
    Eigen::VectorXd gj = g(j);
    out[static_cast<std::size_t>(j)] = acc + 0.5 * dt * gj;
    g_prev = std::move(gj);
  }
  return Trajectory(v.mesh, v.grid, std::move(out));
}

/// |u - Phi(u)| in the trajectory norm.
inline double duhamel_residual(const Trajectory& u, const ProblemSpec& spec, const SemigroupAction& sg) {
  return distance(u, picard_map(u, spec, sg));
}

struct PicardResult {
  Trajectory trajectory;
  std::vector<double> history;  // |Phi(v_k) - v_k| per iteration
  int iterations = 0;
  double contraction_rate = 0.0;
  double delta = 0.0;
};

/// Geometric mean of successive ratios of the difference history.
inline double contraction_rate(const std::vector<double>& h) {
  if (h.size() < 2 || h.front() == 0.0) return 0.0;
  if (h.back() == 0.0) return 0.0;
  return std::pow(h.back() / h.front(), 1.0 / static_cast<double>(h.size() - 1));
}

/// Banach iteration of the Duhamel map on [0, T] starting from `initial`
/// (constant-in-time u0 when absent).
inline PicardResult picard_solve(const ProblemSpec& spec, double T, const PicardConfig& cfg, const SemigroupAction& sg,
                                 std::optional<Trajectory> initial = std::nullopt) {
  cfg.validate();
  if (!(sg.grid() == spec.grid)) throw std::invalid_argument("picard_solve: semigroup grid differs from problem grid");
  TimeMesh mesh(T, cfg.J);
  PicardResult res;
  res.delta = delta_bound(spec.u0, spec.f);
  const double radius = 2.0 * res.delta * (1.0 + 1e-9);
  Trajectory v = initial ? *initial : Trajectory::constant(mesh, spec.grid, spec.u0.values);
  if (v.mesh.J != mesh.J || v.mesh.horizon != T) throw std::invalid_argument("picard_solve: initial iterate on a different mesh");
  if (v.norm() > radius) throw BallViolation("picard_solve: initial iterate outside the 2*delta ball", v.norm(), radius);
  for (int k = 1; k <= cfg.max_iterations; ++k) {
    Trajectory w = picard_map(v, spec, sg);
    double d = distance(w, v);
    res.history.push_back(d);
    double wn = w.norm();
    if (!(wn <= radius)) throw BallViolation("picard_solve: iterate left the 2*delta ball", wn, radius);
    v = std::move(w);
    if (d <= cfg.tolerance) {
      res.iterations = k;
      res.trajectory = std::move(v);
      res.contraction_rate = contraction_rate(res.history);
      return res;
    }
  }
  throw NonConvergence("picard_solve: iteration limit reached", res.history.back());
}

enum class Termination { horizon_reached, blow_up, contraction_failure };

inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::horizon_reached: return "horizon";
    case Termination::blow_up: return "blow-up";
    case Termination::contraction_failure: return "contraction-failure";
  }
  return "?";
}

struct Segment {
  double start = 0.0;
  double end = 0.0;
  Trajectory trajectory;
  int iterations = 0;
};

struct ContinuationState {
  std::vector<Segment> segments;
  double t_max = 0.0;
  Termination reason = Termination::horizon_reached;
  double final_sup = 0.0;
  /// sup over boundary-adjacent nodes of the last state
  double boundary_value = 0.0;
  /// boundary value reached 1e-3 * B, so growth may be a truncation artifact
  bool boundary_suspect = false;
  std::string failure;
};

/// Restarts the local solve from each segment end until the horizon H, the
/// blow-up threshold, or a failed segment.
inline ContinuationState continue_to_Tmax(const ProblemSpec& spec, const PicardConfig& cfg, const SemigroupAction& sg, double H,
                                          bool keep_trajectories = true) {
  if (!(H > 0.0)) throw std::invalid_argument("continue_to_Tmax: horizon must be positive");
  ContinuationState st;
  Eigen::VectorXd u = spec.u0.values;
  double t = 0.0;
  for (int seg = 0;; ++seg) {
    if (t >= H * (1.0 - 1e-14)) {
      st.reason = Termination::horizon_reached;
      break;
    }
    if (seg >= cfg.max_segments) {
      st.reason = Termination::contraction_failure;
      st.failure = "segment limit reached";
      break;
    }
    ProblemSpec local = spec.with_initial(u);
    double T = std::min(local_time_horizon(delta_bound(local.u0, local.f), spec.p, cfg), H - t);
    PicardResult r;
    try {
      r = picard_solve(local, T, cfg, sg);
    } catch (const Error& e) {
      st.reason = Termination::contraction_failure;
      st.failure = e.what();
      break;
    }
    u = r.trajectory.back();
    r.trajectory.mesh.start = t;
    Segment s{t, t + T, keep_trajectories ? std::move(r.trajectory) : Trajectory{}, r.iterations};
    st.segments.push_back(std::move(s));
    t += T;
    if (u.cwiseAbs().maxCoeff() >= cfg.blowup_threshold) {
      st.reason = Termination::blow_up;
      break;
    }
  }
  st.t_max = t;
  st.final_sup = u.cwiseAbs().maxCoeff();
  st.boundary_value = GridFunction::boundary_sup(spec.grid, u);
  st.boundary_suspect = st.boundary_value >= 1e-3 * cfg.blowup_threshold;
  return st;
}

}  // namespace blowlab
