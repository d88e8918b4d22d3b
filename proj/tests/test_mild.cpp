#include <gtest/gtest.h>

#include "blowlab/lines.hpp"
#include "blowlab/mild.hpp"

using namespace blowlab;

namespace {

struct Setup {
  Grid grid;
  std::shared_ptr<const SparseOperator> op;
  SemigroupAction sg;
};

Setup heat_1d(double L, int N) {
  Grid g = Grid::uniform(1, L, N);
  auto op = assemble_operator(builtin_system(SystemTag::euclidean, 1), g);
  return Setup{g, op, SemigroupAction(op)};
}

GridFunction gaussian(const Grid& g, double amp, double width = 1.0) {
  return sample([&](std::span<const double> x) { return amp * std::exp(-x[0] * x[0] / (width * width)); }, g);
}

ProblemSpec spec_1d(const Grid& g, double p, const GridFunction& u0, const GridFunction& f) {
  return ProblemSpec(builtin_system(SystemTag::euclidean, 1), g, p, f, u0);
}

}  // namespace

TEST(Mild, DeltaBoundExamples) {
  Grid g = Grid::uniform(1, 1.0, 3);
  EXPECT_EQ(delta_bound(GridFunction(g, Eigen::Vector3d(0, -3, 1)), GridFunction(g, Eigen::Vector3d(1, 0, 0))), 3.0);
  EXPECT_EQ(delta_bound(GridFunction(g), GridFunction(g)), 0.0);
  EXPECT_EQ(delta_bound(GridFunction(g), GridFunction(g, Eigen::Vector3d(0, 2, 0))), 2.0);
}

TEST(Mild, LocalTimeHorizonExamples) {
  EXPECT_DOUBLE_EQ(local_time_horizon(1.0, 2.0), 0.0625);
  EXPECT_NEAR(local_time_horizon(1.0, 1.5), 0.5 / (1.5 * std::pow(2.0, 1.5)), 1e-15);
  EXPECT_NEAR(local_time_horizon(1.0, 1.5), 0.1179, 1e-4);
  EXPECT_NEAR(local_time_horizon(1e-14, 2.0), 1.0, 1e-12);
  PicardConfig cfg;
  cfg.default_horizon = 3.0;
  EXPECT_EQ(local_time_horizon(0.0, 2.0, cfg), 3.0);
  // ball preservation delta + T((2 delta)^p + delta) <= 2 delta at the returned T
  for (double d : {0.01, 0.5, 1.0, 7.0})
    for (double p : {1.2, 1.5, 2.0, 3.0}) {
      double T = local_time_horizon(d, p);
      EXPECT_LE(d + T * (std::pow(2 * d, p) + d), 2 * d * (1 + 1e-12));
      EXPECT_LE(p * std::pow(2.0, p) * std::pow(d, p - 1) * T, 0.5 * (1 + 1e-12));
    }
}

TEST(Mild, PicardMapExamples) {
  auto s = heat_1d(4.0, 41);
  TimeMesh mesh(0.5, 8);
  GridFunction zero(s.grid);
  auto z = spec_1d(s.grid, 2.0, zero, zero);
  EXPECT_EQ(picard_map(Trajectory::constant(mesh, s.grid, zero.values), z, s.sg).norm(), 0.0);

  // Phi(v)(0) = u0 exactly
  GridFunction u0 = gaussian(s.grid, 0.7);
  auto spec = spec_1d(s.grid, 2.0, u0, zero);
  auto phi = picard_map(Trajectory::constant(mesh, s.grid, u0.values), spec, s.sg);
  EXPECT_EQ(phi.states[0], u0.values);

  // v(0) = u0 and v(t_j) = 0 afterwards: only the t = 0 node feeds the integral,
  // so Phi(v)(t_j) = S(t_j)(u0 + dt/2 |u0|^2)
  Trajectory v = Trajectory::constant(mesh, s.grid, zero.values);
  v.states[0] = u0.values;
  auto out = picard_map(v, spec, s.sg);
  Eigen::VectorXd g0 = u0.values.cwiseAbs2();
  for (int j = 1; j <= mesh.J; ++j) {
    Eigen::VectorXd expect = s.sg.evolve(u0.values + 0.5 * mesh.step() * g0, mesh.node(j));
    EXPECT_LE((out.states[static_cast<std::size_t>(j)] - expect).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Mild, PicardMapMatchesDirectTrapezoid) {
  // O(J) recursion against the O(J^2) sum with S(t_j - t_i) evaluated afresh
  auto s = heat_1d(3.0, 31);
  TimeMesh mesh(0.3, 6);
  GridFunction u0 = gaussian(s.grid, 0.8), f = gaussian(s.grid, 0.3, 2.0);
  auto spec = spec_1d(s.grid, 1.5, u0, f);
  Trajectory v = Trajectory::constant(mesh, s.grid, u0.values);
  for (int j = 1; j <= mesh.J; ++j) v.states[static_cast<std::size_t>(j)] = u0.values * (1.0 + 0.1 * j);
  auto phi = picard_map(v, spec, s.sg);
  const double dt = mesh.step();
  for (int j = 0; j <= mesh.J; ++j) {
    Eigen::VectorXd ref = s.sg.evolve(u0.values, mesh.node(j));
    for (int i = 0; i <= j; ++i) {
      double w = (i == 0 || i == j) ? 0.5 : 1.0;
      if (j == 0) w = 0.0;
      Eigen::VectorXd g = v.states[static_cast<std::size_t>(i)].cwiseAbs().array().pow(1.5).matrix() + f.values;
      ref += dt * w * s.sg.evolve(g, mesh.node(j) - mesh.node(i));
    }
    EXPECT_LE((phi.states[static_cast<std::size_t>(j)] - ref).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Mild, PicardSolveZeroData) {
  auto s = heat_1d(2.0, 21);
  GridFunction zero(s.grid);
  auto r = picard_solve(spec_1d(s.grid, 2.0, zero, zero), 1.0, PicardConfig{}, s.sg);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_EQ(r.trajectory.norm(), 0.0);
}

TEST(Mild, ContractionAndResidualAtLocalHorizon) {
  auto s = heat_1d(5.0, 51);
  GridFunction u0 = gaussian(s.grid, 0.3), f = gaussian(s.grid, 0.1);
  auto spec = spec_1d(s.grid, 2.0, u0, f);
  PicardConfig cfg;
  double T = local_time_horizon(delta_bound(u0, f), 2.0, cfg);
  auto r = picard_solve(spec, T, cfg, s.sg);
  EXPECT_LE(r.contraction_rate, cfg.q_star + 0.1);
  EXPECT_LE(duhamel_residual(r.trajectory, spec, s.sg), 10 * cfg.tolerance);
  EXPECT_LE(r.trajectory.norm(), 2 * r.delta);
}

TEST(Mild, ResidualOfLinearPartIsPositive) {
  auto s = heat_1d(3.0, 31);
  GridFunction u0 = gaussian(s.grid, 0.5), zero(s.grid);
  auto spec = spec_1d(s.grid, 2.0, u0, zero);
  TimeMesh mesh(0.2, 8);
  std::vector<Eigen::VectorXd> st;
  for (int j = 0; j <= mesh.J; ++j) st.push_back(s.sg.evolve(u0.values, mesh.node(j)));
  EXPECT_GT(duhamel_residual(Trajectory(mesh, s.grid, st), spec, s.sg), 0.0);
  GridFunction z(s.grid);
  EXPECT_EQ(duhamel_residual(Trajectory::constant(mesh, s.grid, z.values), spec_1d(s.grid, 2.0, z, z), s.sg), 0.0);
}

TEST(Mild, BallViolationWhenHorizonTooLong) {
  auto s = heat_1d(3.0, 31);
  GridFunction u0 = gaussian(s.grid, 2.0), zero(s.grid);
  PicardConfig cfg;
  cfg.J = 16;
  EXPECT_THROW(picard_solve(spec_1d(s.grid, 2.0, u0, zero), 2.0, cfg, s.sg), BallViolation);
}

TEST(MildProperty, UniquenessFromDistinctInitialIterates) {
  auto s = heat_1d(5.0, 51);
  GridFunction u0 = gaussian(s.grid, 0.4), f = gaussian(s.grid, 0.2, 0.5);
  auto spec = spec_1d(s.grid, 1.5, u0, f);
  PicardConfig cfg;
  double T = local_time_horizon(delta_bound(u0, f), spec.p, cfg);
  TimeMesh mesh(T, cfg.J);
  auto a = picard_solve(spec, T, cfg, s.sg);
  Trajectory other = Trajectory::constant(mesh, s.grid, -1.2 * u0.values);
  other.states[0] = u0.values;
  auto b = picard_solve(spec, T, cfg, s.sg, other);
  EXPECT_LE(distance(a.trajectory, b.trajectory), 10 * cfg.tolerance);
}

TEST(MildProperty, TrapezoidSecondOrderInJ) {
  auto s = heat_1d(4.0, 41);
  GridFunction u0 = gaussian(s.grid, 0.5), f = gaussian(s.grid, 0.2);
  auto spec = spec_1d(s.grid, 2.0, u0, f);
  // the trajectory norm here is attained at t = 0, so compare the end states
  std::vector<Eigen::VectorXd> ends;
  for (int J : {8, 16, 32, 64}) {
    PicardConfig cfg;
    cfg.J = J;
    ends.push_back(picard_solve(spec, 0.1, cfg, s.sg).trajectory.back());
  }
  auto d = [&](int a, int b) { return (ends[static_cast<std::size_t>(a)] - ends[static_cast<std::size_t>(b)]).cwiseAbs().maxCoeff(); };
  double r1 = d(0, 1) / d(1, 2);
  double r2 = d(1, 2) / d(2, 3);
  EXPECT_NEAR(r1, 4.0, 0.6);
  EXPECT_NEAR(r2, 4.0, 0.6);
}

TEST(Continuation, ZeroDataReachesHorizon) {
  auto s = heat_1d(2.0, 21);
  GridFunction zero(s.grid);
  auto st = continue_to_Tmax(spec_1d(s.grid, 2.0, zero, zero), PicardConfig{}, s.sg, 10.0);
  EXPECT_EQ(st.reason, Termination::horizon_reached);
  EXPECT_NEAR(st.t_max, 10.0, 1e-12);
  EXPECT_EQ(st.final_sup, 0.0);
  for (std::size_t k = 1; k < st.segments.size(); ++k) EXPECT_EQ(st.segments[k].start, st.segments[k - 1].end);
}

TEST(Continuation, TallGaussianBlowsUpLikeMethodOfLines) {
  auto s = heat_1d(5.0, 51);
  GridFunction u0 = gaussian(s.grid, 5.0), zero(s.grid);
  auto spec = spec_1d(s.grid, 2.0, u0, zero);
  PicardConfig cfg;
  cfg.J = 16;
  auto st = continue_to_Tmax(spec, cfg, s.sg, 10.0, false);
  ASSERT_EQ(st.reason, Termination::blow_up) << st.failure;
  EXPECT_FALSE(st.boundary_suspect);
  IMEXConfig ic;
  ic.dt0 = 1e-4;
  auto mol = blowup_time(spec, ic, s.op);
  EXPECT_NEAR(st.t_max / mol.t_blow, 1.0, 0.2);
  // segments shrink as the solution grows
  EXPECT_LT(st.segments.back().end - st.segments.back().start, 1e-3 * (st.segments.front().end - st.segments.front().start));
  for (std::size_t k = 1; k < st.segments.size(); ++k) EXPECT_EQ(st.segments[k].start, st.segments[k - 1].end);
}

TEST(ContinuationProperty, LargerDataBlowsUpNoLater) {
  auto s = heat_1d(5.0, 41);
  GridFunction zero(s.grid);
  PicardConfig cfg;
  cfg.J = 8;
  double prev = std::numeric_limits<double>::infinity();
  for (double a : {4.0, 6.0, 9.0}) {
    auto st = continue_to_Tmax(spec_1d(s.grid, 2.0, gaussian(s.grid, a), zero), cfg, s.sg, 10.0, false);
    ASSERT_EQ(st.reason, Termination::blow_up);
    EXPECT_LE(st.t_max, prev);
    prev = st.t_max;
  }
}
