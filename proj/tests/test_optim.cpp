/*
 Copyright 2026 The lifted-dyn Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "lifted_dyn/errors.hpp"
#include "lifted_dyn/optim.hpp"
#include "oracles.hpp"

namespace lifted_dyn {
namespace {

TEST(LeastSquares, IdentityRows) {
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(4, 4);
  const auto sol = solve_least_squares({eye, eye});
  EXPECT_LT((sol.coefficients - eye).norm(), 1e-15);
  EXPECT_FALSE(sol.rank_deficient);
}

TEST(LeastSquares, ExactLine) {
  Eigen::MatrixXd x(3, 1), y(3, 1);
  x << 1, 2, 3;
  y << 2, 4, 6;
  const auto sol = solve_least_squares({x, y});
  EXPECT_NEAR(sol.coefficients(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(sol.residual_sum_squares, 0.0, 1e-28);
}

TEST(LeastSquares, MatchesNormalEquations) {
  std::mt19937_64 gen(20);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd x = oracle::random_matrix(20, 5, gen);
    const Eigen::MatrixXd y = oracle::random_matrix(20, 3, gen);
    const auto sol = solve_least_squares({x, y});
    EXPECT_LT((sol.coefficients - oracle::normal_equations(x, y)).lpNorm<Eigen::Infinity>(), 1e-10);
  }
}

TEST(LeastSquares, RidgeMatchesRegularizedNormalEquations) {
  std::mt19937_64 gen(21);
  const Eigen::MatrixXd x = oracle::random_matrix(30, 6, gen);
  const Eigen::MatrixXd y = oracle::random_matrix(30, 2, gen);
  for (double ridge : {1e-6, 0.1, 10.0}) {
    const auto sol = solve_least_squares({x, y, ridge});
    EXPECT_LT((sol.coefficients - oracle::normal_equations(x, y, ridge)).lpNorm<Eigen::Infinity>(), 1e-10);
  }
}

TEST(LeastSquares, ResidualOrthogonalToRegressors) {
  std::mt19937_64 gen(22);
  const Eigen::MatrixXd x = oracle::random_matrix(200, 8, gen);
  const Eigen::MatrixXd y = oracle::random_matrix(200, 4, gen);
  const auto sol = solve_least_squares({x, y});
  const Eigen::MatrixXd r = y - x * sol.coefficients;
  EXPECT_LT((x.transpose() * r).norm(), 1e-8 * x.norm() * y.norm());
}

TEST(LeastSquares, DuplicatedRowsGiveSameSolution) {
  std::mt19937_64 gen(23);
  const Eigen::MatrixXd x = oracle::random_matrix(15, 4, gen);
  const Eigen::MatrixXd y = oracle::random_matrix(15, 2, gen);
  Eigen::MatrixXd x2(30, 4), y2(30, 2);
  x2 << x, x;
  y2 << y, y;
  const auto a = solve_least_squares({x, y});
  const auto b = solve_least_squares({x2, y2});
  EXPECT_LT((a.coefficients - b.coefficients).norm(), 1e-12);
}

TEST(LeastSquares, RankDeficientGivesMinimumNorm) {
  std::mt19937_64 gen(24);
  Eigen::MatrixXd x = oracle::random_matrix(12, 3, gen);
  x.col(2) = x.col(0) + x.col(1);
  const Eigen::MatrixXd y = oracle::random_matrix(12, 1, gen);
  const auto sol = solve_least_squares({x, y});
  EXPECT_TRUE(sol.rank_deficient);
  EXPECT_EQ(sol.rank, 2);
  const Eigen::MatrixXd pinv = x.completeOrthogonalDecomposition().pseudoInverse();
  EXPECT_LT((sol.coefficients - pinv * y).norm(), 1e-10);
  // Adding a null-space direction keeps the fit but grows the norm.
  const Eigen::Vector3d null(1, 1, -1);
  EXPECT_LT(sol.coefficients.norm(), (sol.coefficients + 0.1 * null).norm());
}

TEST(LeastSquares, RejectsBadInput) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 1);
  Eigen::MatrixXd y = Eigen::MatrixXd::Ones(2, 1);
  EXPECT_THROW(solve_least_squares({x, y}), ConfigurationError);
  EXPECT_THROW(solve_least_squares({x, x, -1.0}), ConfigurationError);
  x(0, 0) = NAN;
  EXPECT_THROW(solve_least_squares({x, x}), ConfigurationError);
}

TEST(ConditionNumber, MatchesSingularValues) {
  std::mt19937_64 gen(25);
  const Eigen::MatrixXd x = oracle::random_matrix(40, 6, gen) * oracle::random_matrix(6, 6, gen);
  const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(x).singularValues();
  EXPECT_NEAR(condition_number(x) / (s(0) / s(5)), 1.0, 1e-8);
  EXPECT_EQ(condition_number(Eigen::MatrixXd::Ones(2, 3)),
            std::numeric_limits<double>::infinity());
}

TEST(ProjectSimplex, Examples) {
  EXPECT_LT((project_simplex(Eigen::Vector2d(0.5, 0.5)) - Eigen::Vector2d(0.5, 0.5)).norm(), 1e-15);
  EXPECT_LT((project_simplex(Eigen::Vector2d(2, 0)) - Eigen::Vector2d(1, 0)).norm(), 1e-15);
  EXPECT_LT((project_simplex(Eigen::Vector2d(1, 1)) - Eigen::Vector2d(0.5, 0.5)).norm(), 1e-15);
}

TEST(ProjectSimplex, NoRandomFeasiblePointIsCloser) {
  std::mt19937_64 gen(26);
  std::normal_distribution<double> n(0.0, 2.0);
  std::exponential_distribution<double> e(1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd v(6);
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = n(gen);
    const Eigen::VectorXd w = project_simplex(v);
    ASSERT_GE(w.minCoeff(), 0.0);
    ASSERT_NEAR(w.sum(), 1.0, 1e-12);
    const double best = (w - v).norm();
    for (int k = 0; k < 1000; ++k) {
      Eigen::VectorXd f(6);
      for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = e(gen);
      f /= f.sum();
      ASSERT_LE(best, (f - v).norm() + 1e-12);
    }
  }
}

TEST(ProjectSimplex, Columns) {
  Eigen::MatrixXd m(2, 2);
  m << 2, 1, 0, 1;
  project_simplex_columns(m);
  EXPECT_EQ(m.col(0), Eigen::Vector2d(1, 0));
  EXPECT_EQ(m.col(1), Eigen::Vector2d(0.5, 0.5));
}

QuadraticObjective distance_to(const Eigen::VectorXd& c) {
  QuadraticObjective obj;
  obj.curvature = [](const Eigen::MatrixXd& w) -> Eigen::MatrixXd { return w; };
  obj.linear = c;
  obj.constant = c.squaredNorm();
  return obj;
}

const Projection simplex = [](Eigen::MatrixXd& w) { project_simplex_columns(w); };

TEST(MinimizeProjected, ProjectionOfPoint) {
  const auto res = minimize_projected(distance_to(Eigen::Vector2d(2, 0)), simplex,
                                      Eigen::MatrixXd::Constant(2, 1, 0.5));
  EXPECT_TRUE(res.converged);
  EXPECT_LT((res.minimizer.col(0) - Eigen::Vector2d(1, 0)).norm(), 1e-8);
}

TEST(MinimizeProjected, FeasibleTarget) {
  const Eigen::Vector3d c(0.2, 0.3, 0.5);
  const auto res = minimize_projected(distance_to(c), simplex, Eigen::MatrixXd::Constant(3, 1, 1.0 / 3));
  EXPECT_LT((res.minimizer.col(0) - c).norm(), 1e-10);
}

TEST(MinimizeProjected, BoxQpMatchesActiveSetEnumeration) {
  std::mt19937_64 gen(27);
  const Projection box = [](Eigen::MatrixXd& w) { w = w.cwiseMax(-1.0).cwiseMin(1.0); };
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd m = oracle::random_matrix(5, 5, gen);
    const Eigen::MatrixXd h = m * m.transpose() + 0.1 * Eigen::MatrixXd::Identity(5, 5);
    const Eigen::VectorXd b = 3.0 * oracle::random_matrix(5, 1, gen);
    QuadraticObjective obj;
    obj.curvature = [&h](const Eigen::MatrixXd& w) -> Eigen::MatrixXd { return h * w; };
    obj.linear = b;
    ProjectedGradientConfig cfg;
    cfg.tolerance = 1e-15;
    cfg.gradient_tolerance = 1e-13;
    cfg.max_iters = 200000;
    const auto res = minimize_projected(obj, box, Eigen::VectorXd::Zero(5), cfg);
    EXPECT_LT((res.minimizer.col(0) - oracle::box_qp(h, b)).lpNorm<Eigen::Infinity>(), 1e-6)
        << "trial " << trial;
    EXPECT_LE(res.minimizer.cwiseAbs().maxCoeff(), 1.0);
  }
}

TEST(MinimizeProjected, AcceptedObjectivesNeverIncrease) {
  std::mt19937_64 gen(28);
  const Eigen::MatrixXd m = oracle::random_matrix(8, 8, gen);
  const Eigen::MatrixXd h = m * m.transpose();
  QuadraticObjective obj;
  obj.curvature = [&h](const Eigen::MatrixXd& w) -> Eigen::MatrixXd { return h * w; };
  obj.linear = oracle::random_matrix(8, 3, gen);
  ProjectedGradientConfig cfg;
  cfg.record_history = true;
  const auto res = minimize_projected(obj, simplex, Eigen::MatrixXd::Constant(8, 3, 0.125), cfg);
  ASSERT_GE(res.history.size(), 2u);
  for (std::size_t k = 1; k < res.history.size(); ++k) {
    EXPECT_LE(res.history[k], res.history[k - 1]);
  }
  for (Eigen::Index j = 0; j < 3; ++j) {
    EXPECT_NEAR(res.minimizer.col(j).sum(), 1.0, 1e-12);
    EXPECT_GE(res.minimizer.col(j).minCoeff(), 0.0);
  }
  EXPECT_LE(res.objective, res.initial_objective);
}

TEST(MinimizeProjected, NonFiniteObjectiveThrows) {
  QuadraticObjective obj;
  obj.curvature = [](const Eigen::MatrixXd& w) -> Eigen::MatrixXd {
    return Eigen::MatrixXd::Constant(w.rows(), w.cols(), NAN);
  };
  obj.linear = Eigen::VectorXd::Zero(2);
  EXPECT_THROW(minimize_projected(obj, simplex, Eigen::Vector2d(0.5, 0.5)), SolverDivergedError);
}

TEST(MinimizeProjected, RejectsBadConfig) {
  ProjectedGradientConfig cfg;
  cfg.max_iters = 0;
  EXPECT_THROW(minimize_projected(distance_to(Eigen::Vector2d(1, 0)), simplex,
                                  Eigen::Vector2d(0.5, 0.5), cfg),
               ConfigurationError);
}

}  // namespace
}  // namespace lifted_dyn
