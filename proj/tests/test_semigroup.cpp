#include <gtest/gtest.h>

#include <random>

#include "blowlab/semigroup.hpp"

using namespace blowlab;

namespace {

SemigroupAction heat_1d(double L, int N, ExpMethod m = ExpMethod::automatic) {
  Grid g = Grid::uniform(1, L, N);
  return SemigroupAction(assemble_operator(builtin_system(SystemTag::euclidean, 1), g), m);
}

Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937& rng, bool nonneg = false) {
  std::uniform_real_distribution<double> U(nonneg ? 0.0 : -1.0, 1.0);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = U(rng);
  return v;
}

}  // namespace

TEST(Semigroup, ZeroTimeIsIdentity) {
  auto s = heat_1d(2.0, 21);
  std::mt19937 rng(1);
  Eigen::VectorXd v = random_vector(21, rng);
  EXPECT_EQ(s.evolve(v, 0.0), v);
  auto k = heat_1d(2.0, 21, ExpMethod::krylov);
  EXPECT_EQ(k.evolve(v, 0.0), v);
  EXPECT_THROW(s.evolve(v, -1.0), std::invalid_argument);
}

TEST(Semigroup, MethodChoiceFollowsNodeCount) {
  EXPECT_EQ(heat_1d(1.0, 101).method(), ExpMethod::dense);
  EXPECT_EQ(heat_1d(1.0, 5000).method(), ExpMethod::krylov);
  EXPECT_EQ(heat_1d(1.0, 101, ExpMethod::krylov).method(), ExpMethod::krylov);
}

TEST(Semigroup, PointMassMatchesGaussianPeak) {
  auto s = heat_1d(10.0, 401);
  const Grid& g = s.grid();
  std::vector<double> origin{0.0};
  std::size_t c = g.nearest(origin);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(401);
  v[static_cast<Eigen::Index>(c)] = 1.0 / g.cell_volume();
  Eigen::VectorXd u = s.evolve(v, 0.5);
  const double peak = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  EXPECT_NEAR(u[static_cast<Eigen::Index>(c)] / peak, 1.0, 1e-2);
  // away from the peak as well
  for (int off : {10, 20, 40}) {
    double x = g.coordinate(0, static_cast<int>(c) + off);
    EXPECT_NEAR(u[static_cast<Eigen::Index>(c) + off], gaussian_kernel(1, 0.5, x * x), 1e-2 * peak);
  }
}

TEST(Semigroup, KrylovAgreesWithDense) {
  std::mt19937 rng(5);
  for (auto tag : {SystemTag::euclidean, SystemTag::grushin, SystemTag::trig_bounded}) {
    Grid g = Grid::uniform(2, 2.0, 13);
    auto op = assemble_operator(builtin_system(tag, 2, 1), g);
    SemigroupAction d(op, ExpMethod::dense), k(op, ExpMethod::krylov);
    Eigen::VectorXd v = random_vector(static_cast<Eigen::Index>(g.size()), rng);
    for (double t : {0.01, 0.3, 2.0}) {
      EXPECT_LE((d.evolve(v, t) - k.evolve(v, t)).cwiseAbs().maxCoeff(), 1e-8 * v.cwiseAbs().maxCoeff());
    }
  }
}

TEST(Semigroup, KrylovReportsNonConvergence) {
  Grid g = Grid::uniform(1, 5.0, 60);
  auto op = assemble_operator(builtin_system(SystemTag::euclidean, 1), g);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(60);
  try {
    krylov_expv(op->matrix(), v, 1.0, 1e-300, op->spectral_bound(), 5);
    FAIL() << "expected NonConvergence";
  } catch (const NonConvergence& e) {
    EXPECT_GT(e.residual(), 0.0);
  }
}

TEST(Semigroup, SupNormContraction) {
  std::mt19937 rng(3);
  for (auto tag : {SystemTag::euclidean, SystemTag::constant}) {
    Grid g = Grid::uniform(2, 3.0, 15);
    SemigroupAction s(assemble_operator(builtin_system(tag, 2), g));
    for (int r = 0; r < 5; ++r) {
      Eigen::VectorXd v = random_vector(static_cast<Eigen::Index>(g.size()), rng, true);
      double vn = v.maxCoeff();
      for (double t : {0.05, 0.5, 3.0}) EXPECT_LE(s.evolve(v, t).cwiseAbs().maxCoeff(), vn * (1 + 1e-8));
    }
  }
}

TEST(Semigroup, KernelMassExamples) {
  auto s = heat_1d(10.0, 201);
  std::vector<double> origin{0.0};
  std::size_t c = s.grid().nearest(origin);
  EXPECT_NEAR(kernel_mass(s, c, 0.1), 1.0, 1e-3);
  EXPECT_LT(kernel_mass(s, c, 20.0), 1.0);
  EXPECT_NEAR(kernel_mass(s, c, 1e-9), 1.0, 1e-6);
  EXPECT_THROW(kernel_mass(s, c, 0.0), std::invalid_argument);
  // the slice integrates to the same mass
  auto ks = s.kernel_slice(c, 0.1);
  EXPECT_NEAR(ks.mass(), kernel_mass(s, c, 0.1), 1e-12);
  EXPECT_EQ(ks.negative_fraction(), 0.0);
}

TEST(Semigroup, KernelSliceReproducesAction) {
  // (S(t)w)(x) = sum_y h_t(x,y) w(y) * weight, also for a non-symmetric operator
  VectorFieldSystem skew(2, {VectorField({CoefficientExpr::sin_of(2, 0), CoefficientExpr(2)}),
                             VectorField({CoefficientExpr(2), CoefficientExpr::constant(2, 1.0)})},
                         SystemTag::custom);
  Grid g = Grid::uniform(2, 2.0, 9);
  auto op = assemble_operator(skew, g);
  ASSERT_FALSE(op->symmetric());
  std::mt19937 rng(9);
  Eigen::VectorXd w = random_vector(static_cast<Eigen::Index>(g.size()), rng);
  for (auto m : {ExpMethod::dense, ExpMethod::krylov}) {
    SemigroupAction s(op, m);
    Eigen::VectorXd sw = s.evolve(w, 0.2);
    for (std::size_t x : {0ul, 17ul, 40ul}) {
      auto ks = s.kernel_slice(x, 0.2);
      EXPECT_NEAR(ks.values.values.dot(w) * ks.weight, sw[static_cast<Eigen::Index>(x)], 1e-9);
    }
  }
}

TEST(Semigroup, DefectExamples) {
  std::mt19937 rng(4);
  auto d = heat_1d(3.0, 41);
  Eigen::VectorXd v = random_vector(41, rng);
  EXPECT_LE(semigroup_defect(d, 0.3, 0.7, v), 1e-10);
  EXPECT_EQ(semigroup_defect(d, 0.3, 0.0, v), 0.0);
  Grid g = Grid::uniform(2, 2.0, 21);
  SemigroupAction k(assemble_operator(builtin_system(SystemTag::euclidean, 2), g), ExpMethod::krylov);
  EXPECT_LE(semigroup_defect(k, 0.1, 0.1, random_vector(static_cast<Eigen::Index>(g.size()), rng)), 1e-8);
}

TEST(Semigroup, PropagatorCache) {
  auto s = heat_1d(2.0, 31);
  auto a = s.propagator(0.1, 3);
  auto b = s.propagator(0.1, 3);
  EXPECT_EQ(a.get(), b.get());
  EXPECT_EQ(s.cache_size(), 1u);
  s.propagator(0.1, 4);
  EXPECT_EQ(s.cache_size(), 2u);
  Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(31, -1.0, 1.0);
  EXPECT_LE((s.evolve_steps(v, 0.1, 3) - s.evolve(v, 0.3)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SemigroupProperty, SemigroupLawAllBuiltins) {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> U(1e-3, 1.0);
  struct Case {
    SystemTag tag;
    std::size_t n;
    int pts;
  };
  for (auto c : {Case{SystemTag::euclidean, 2, 11}, Case{SystemTag::constant, 2, 11}, Case{SystemTag::trig_bounded, 2, 11},
                 Case{SystemTag::grushin, 2, 11}, Case{SystemTag::engel, 3, 7}}) {
    Grid g = Grid::uniform(c.n, 2.0, c.pts);
    SemigroupAction s(assemble_operator(builtin_system(c.tag, c.n, 1), g));
    for (int r = 0; r < 20; ++r) {
      Eigen::VectorXd v = random_vector(static_cast<Eigen::Index>(g.size()), rng);
      EXPECT_LE(semigroup_defect(s, U(rng), U(rng), v), 1e-8) << to_string(c.tag);
    }
  }
}

TEST(SemigroupProperty, SubMarkovMass) {
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> U(1e-3, 2.0);
  for (auto tag : {SystemTag::euclidean, SystemTag::constant, SystemTag::engel}) {
    std::size_t n = tag == SystemTag::engel ? 3 : 2;
    Grid g = Grid::uniform(n, 2.0, n == 3 ? 7 : 13);
    SemigroupAction s(assemble_operator(builtin_system(tag, n), g));
    const double tol = tag == SystemTag::engel ? 1e-4 : 1e-8;
    Eigen::VectorXd one = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(g.size()));
    for (int r = 0; r < 10; ++r) {
      Eigen::VectorXd mass = s.evolve(one, U(rng));
      EXPECT_LE(mass.maxCoeff(), 1.0 + tol) << to_string(tag);
    }
  }
}

TEST(SemigroupProperty, EuclideanKernelIsNonnegative) {
  auto s = heat_1d(4.0, 81);
  for (std::size_t x : {0ul, 10ul, 40ul, 80ul})
    for (double t : {0.01, 0.5, 5.0}) EXPECT_EQ(s.kernel_slice(x, t).negative_fraction(), 0.0);
}
