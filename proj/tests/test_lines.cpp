#include <gtest/gtest.h>

#include "blowlab/lines.hpp"

using namespace blowlab;

namespace {

GridFunction constant_fn(const Grid& g, double c) {
  return GridFunction(g, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(g.size()), c));
}

GridFunction bump(const Grid& g, double amp, double width = 1.0) {
  return sample(
      [&](std::span<const double> x) {
        double r2 = 0.0;
        for (double v : x) r2 += v * v;
        return amp * std::exp(-r2 / (width * width));
      },
      g);
}

ProblemSpec euclid(const Grid& g, double p, const GridFunction& u0, const GridFunction& f) {
  return ProblemSpec(builtin_system(SystemTag::euclidean, g.dim()), g, p, f, u0);
}

}  // namespace

TEST(Imex, StepExamples) {
  Grid g = Grid::uniform(1, 2.0, 11);
  auto op = assemble_operator(builtin_system(SystemTag::euclidean, 1), g);
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(11);
  EXPECT_EQ(imex_step(zero, 0.1, op.get(), 2.0, zero), zero);
  Eigen::VectorXd one = Eigen::VectorXd::Ones(11);
  Eigen::VectorXd u1 = imex_step(one, 0.1, nullptr, 2.0, zero);
  for (double v : u1) EXPECT_DOUBLE_EQ(v, 1.1);
  EXPECT_THROW(imex_step(one, 0.0, nullptr, 2.0, zero), std::invalid_argument);
}

TEST(Imex, LinearStepIsFirstOrderAgainstSemigroup) {
  Grid g = Grid::uniform(1, 5.0, 51);
  auto op = assemble_operator(builtin_system(SystemTag::euclidean, 1), g);
  SemigroupAction sg(op);
  Eigen::VectorXd u = bump(g, 1.0).values, zero = Eigen::VectorXd::Zero(51);
  std::vector<double> err;
  for (double dt : {0.02, 0.01, 0.005}) {
    Eigen::VectorXd a = imex_step(u, dt, op.get(), 2.0, zero, false, 1e-13);
    err.push_back((a - sg.evolve(u, dt)).cwiseAbs().maxCoeff());
  }
  // local error O(dt^2): halving dt divides it by ~4
  EXPECT_NEAR(err[0] / err[1], 4.0, 0.5);
  EXPECT_NEAR(err[1] / err[2], 4.0, 0.5);
}

TEST(Imex, ZeroDiffusionOdeBlowUp) {
  Grid g = Grid::uniform(1, 1.0, 3);
  for (double u0 : {1.0, 2.0}) {
    IMEXConfig cfg;
    cfg.zero_diffusion = true;
    auto spec = euclid(g, 2.0, constant_fn(g, u0), constant_fn(g, 0.0));
    auto r = run(spec, 10.0, cfg);
    ASSERT_TRUE(r.blow_up);
    double exact = std::pow(u0, -1.0) / (2.0 - 1.0);
    EXPECT_NEAR(r.t_blow / exact, 1.0, 0.02);
    auto b = blowup_time(spec, cfg);
    EXPECT_NEAR(b.t_blow / exact, 1.0, 0.02);
    EXPECT_LE(b.uncertainty, 0.02);
    EXPECT_TRUE(b.accepted);
  }
}

TEST(Imex, ThresholdInsensitivity) {
  Grid g = Grid::uniform(1, 1.0, 3);
  IMEXConfig cfg;
  cfg.zero_diffusion = true;
  auto spec = euclid(g, 3.0, constant_fn(g, 1.0), constant_fn(g, 0.0));
  double a = run(spec, 10.0, cfg).t_blow;
  cfg.blowup_threshold *= 10.0;
  double b = run(spec, 10.0, cfg).t_blow;
  EXPECT_LT(std::abs(a - b) / a, 0.01);
}

TEST(Imex, SmallDataDecays) {
  Grid g = Grid::uniform(1, 6.0, 61);
  IMEXConfig cfg;
  cfg.dt0 = 1e-2;
  auto r = run(euclid(g, 2.0, bump(g, 0.1), constant_fn(g, 0.0)), 5.0, cfg);
  EXPECT_FALSE(r.blow_up);
  EXPECT_EQ(r.end, RunEnd::horizon);
  EXPECT_DOUBLE_EQ(r.final_time, 5.0);
  for (std::size_t k = 1; k < r.sup_history.size(); ++k) EXPECT_LE(r.sup_history[k].second, r.sup_history[k - 1].second);
  EXPECT_THROW(blowup_time(euclid(g, 2.0, bump(g, 0.1), constant_fn(g, 0.0)), [] {
                 IMEXConfig c;
                 c.horizon = 1.0;
                 return c;
               }()),
               NoBlowUp);
}

TEST(Imex, OutputTimesAreHitExactly) {
  Grid g = Grid::uniform(1, 3.0, 21);
  IMEXConfig cfg;
  cfg.dt0 = 0.03;
  cfg.output_times = {0.1, 0.25, 0.5};
  auto r = run(euclid(g, 2.0, bump(g, 0.3), constant_fn(g, 0.0)), 0.5, cfg);
  ASSERT_EQ(r.times.size(), 4u);
  EXPECT_EQ(r.times[1], 0.1);
  EXPECT_EQ(r.times[2], 0.25);
  EXPECT_EQ(r.times[3], 0.5);
}

TEST(Imex, DtCollapseIsReportedAsBlowUp) {
  Grid g = Grid::uniform(1, 1.0, 3);
  IMEXConfig cfg;
  cfg.zero_diffusion = true;
  cfg.dt_min = 1e-3;
  cfg.dt0 = 1e-2;
  auto r = run(euclid(g, 2.0, constant_fn(g, 1.0), constant_fn(g, 0.0)), 10.0, cfg);
  ASSERT_TRUE(r.blow_up);
  EXPECT_EQ(r.end, RunEnd::dt_collapse);
  EXPECT_LT(r.t_blow, 1.1);
}

TEST(ImexProperty, BlowupTimeMonotoneInForcingAndData) {
  Grid g = Grid::uniform(1, 4.0, 41);
  auto op = assemble_operator(builtin_system(SystemTag::euclidean, 1), g);
  IMEXConfig cfg;
  cfg.dt0 = 1e-2;
  cfg.horizon = 50.0;
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {0.5, 1.0, 2.0}) {
    auto b = blowup_time(euclid(g, 2.0, constant_fn(g, 0.0), bump(g, eps)), cfg, op);
    EXPECT_LT(b.t_blow, prev);
    prev = b.t_blow;
  }
  prev = std::numeric_limits<double>::infinity();
  for (double a : {3.0, 4.5, 6.0}) {
    auto b = blowup_time(euclid(g, 2.0, bump(g, a), constant_fn(g, 0.0)), cfg, op);
    EXPECT_LE(b.t_blow, prev);
    prev = b.t_blow;
  }
}
