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
#ifndef LIFTED_DYN_OPTIM_HPP
#define LIFTED_DYN_OPTIM_HPP

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace lifted_dyn {

/// Non-owning view of  min_M sum_k ||targets_k - M^T regressors_k||^2 + ridge ||M||_F^2.
struct LeastSquaresProblem {
  Eigen::Ref<const Eigen::MatrixXd> regressors;  // K x p
  Eigen::Ref<const Eigen::MatrixXd> targets;     // K x q
  double ridge = 0.0;
  /// Skips the extra factorization for `condition_number` when ridge > 0.
  bool skip_condition_estimate = false;
};

struct LeastSquaresSolution {
  Eigen::MatrixXd coefficients;  // p x q
  Eigen::Index rank = 0;
  bool rank_deficient = false;
  /// sigma_max / sigma_min of the regressor matrix (infinity when singular).
  double condition_number = 0.0;
  double residual_sum_squares = 0.0;
};

/**
 * @brief Dense least squares.
 *
 * ridge == 0 uses Householder QR when the regressors are clearly full rank
 * and a complete orthogonal decomposition otherwise, which yields the
 * minimum-norm minimizer and sets `rank_deficient`. ridge > 0 solves the
 * equivalent stacked problem [X; sqrt(ridge) I] by QR.
 */
LeastSquaresSolution solve_least_squares(const LeastSquaresProblem& problem);

/// sigma_max / sigma_min of a K x p matrix (infinity if K < p or singular).
double condition_number(const Eigen::Ref<const Eigen::MatrixXd>& regressors);

/// Euclidean projection onto the probability simplex (sort and threshold).
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v);
/// Projects every column of `m` onto the simplex in place.
void project_simplex_columns(Eigen::MatrixXd& m);

/**
 * @brief f(W) = <W, H(W)> - 2 <B, W> + c with H a symmetric positive
 * semidefinite linear map and Frobenius inner products.
 */
struct QuadraticObjective {
  std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)> curvature;  // W -> H(W)
  Eigen::MatrixXd linear;                                          // B
  double constant = 0.0;

  double value(const Eigen::MatrixXd& w) const;
  Eigen::MatrixXd gradient(const Eigen::MatrixXd& w) const;
  /// Value given a precomputed H(W).
  double value(const Eigen::MatrixXd& w, const Eigen::MatrixXd& hw) const;
};

struct ProjectedGradientConfig {
  int max_iters = 50000;
  /// Stop when (f_prev - f) <= tolerance * |f_prev|.
  double tolerance = 1e-9;
  /// Stop when the gradient-mapping norm falls below this times max(1, ||B||).
  double gradient_tolerance = 1e-12;
  /// Power iterations used for the initial curvature estimate.
  int power_iterations = 30;
  /// Multiplier applied to the Lipschitz estimate when the sufficient
  /// decrease test fails.
  double backtrack_factor = 2.0;
  bool record_history = false;
};

struct ProjectedGradientResult {
  Eigen::MatrixXd minimizer;
  int iterations = 0;
  double objective = 0.0;
  double initial_objective = 0.0;
  bool converged = false;
  int restarts = 0;
  double lipschitz = 0.0;
  std::vector<double> history;  // accepted objective values when recorded
};

/// In-place projection onto the feasible set.
using Projection = std::function<void(Eigen::MatrixXd&)>;

/**
 * @brief Accelerated projected gradient (FISTA) with backtracking on the
 * curvature estimate and momentum restart whenever the objective would
 * increase. Accepted iterates never increase the objective, and the returned
 * point is always the output of `project`.
 *
 * Throws SolverDivergedError on non-finite objective or gradient.
 */
ProjectedGradientResult minimize_projected(const QuadraticObjective& objective,
                                           const Projection& project,
                                           const Eigen::MatrixXd& init,
                                           const ProjectedGradientConfig& cfg = {});

/// Largest eigenvalue estimate of the curvature map by power iteration.
double estimate_curvature(const QuadraticObjective& objective, Eigen::Index rows,
                          Eigen::Index cols, int iterations);

}  // namespace lifted_dyn

#endif  // LIFTED_DYN_OPTIM_HPP
