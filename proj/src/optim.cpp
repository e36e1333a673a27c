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
#include "lifted_dyn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "lifted_dyn/errors.hpp"

namespace lifted_dyn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Above this condition number the QR route hands over to the rank-revealing
// decomposition.
constexpr double kQrConditionLimit = 1e12;

}  // namespace

double condition_number(const Eigen::Ref<const Eigen::MatrixXd>& regressors) {
  const Eigen::Index p = regressors.cols();
  if (regressors.rows() < p || p == 0) return kInf;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(regressors);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(r).singularValues();
  return s(p - 1) > 0.0 ? s(0) / s(p - 1) : kInf;
}

LeastSquaresSolution solve_least_squares(const LeastSquaresProblem& problem) {
  const auto& x = problem.regressors;
  const auto& y = problem.targets;
  if (x.rows() < 1) throw ConfigurationError("least squares: need K >= 1 rows");
  if (y.rows() != x.rows()) throw ConfigurationError("least squares: row count mismatch");
  if (!(problem.ridge >= 0.0)) throw ConfigurationError("least squares: ridge must be >= 0");
  if (!x.allFinite() || !y.allFinite()) {
    throw ConfigurationError("least squares: non-finite data");
  }
  const Eigen::Index p = x.cols();
  LeastSquaresSolution sol;

  if (problem.ridge > 0.0) {
    sol.condition_number = problem.skip_condition_estimate ? 0.0 : condition_number(x);
    // Stacked [X; sqrt(ridge) I] keeps the regularized solve on the QR route.
    Eigen::MatrixXd xa(x.rows() + p, p);
    xa.topRows(x.rows()) = x;
    xa.bottomRows(p) = std::sqrt(problem.ridge) * Eigen::MatrixXd::Identity(p, p);
    Eigen::MatrixXd ya = Eigen::MatrixXd::Zero(x.rows() + p, y.cols());
    ya.topRows(y.rows()) = y;
    sol.coefficients = xa.householderQr().solve(ya);
    sol.rank = p;
    sol.rank_deficient = sol.condition_number > kQrConditionLimit;
  } else {
    bool done = false;
    if (x.rows() >= p) {
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
      const Eigen::MatrixXd r =
          qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(r);
      const auto& s = svd.singularValues();
      const double smin = s(p - 1);
      sol.condition_number = smin > 0.0 ? s(0) / smin : kInf;
      if (sol.condition_number < kQrConditionLimit) {
        sol.coefficients = qr.solve(Eigen::MatrixXd(y));
        sol.rank = p;
        done = true;
      }
    } else {
      sol.condition_number = kInf;
    }
    if (!done) {
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(x);
      sol.coefficients = cod.solve(Eigen::MatrixXd(y));
      sol.rank = cod.rank();
    }
    sol.rank_deficient = sol.rank < p;
  }
  sol.residual_sum_squares = (y - x * sol.coefficients).squaredNorm();
  return sol;
}

Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  if (n == 0) return v;
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    cumulative += u[static_cast<std::size_t>(j)];
    const double candidate = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - candidate > 0.0) theta = candidate;
  }
  return (v.array() - theta).max(0.0);
}

void project_simplex_columns(Eigen::MatrixXd& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    m.col(j) = project_simplex(m.col(j));
  }
}

double QuadraticObjective::value(const Eigen::MatrixXd& w, const Eigen::MatrixXd& hw) const {
  return (w.array() * hw.array()).sum() - 2.0 * (linear.array() * w.array()).sum() + constant;
}

double QuadraticObjective::value(const Eigen::MatrixXd& w) const {
  return value(w, curvature(w));
}

Eigen::MatrixXd QuadraticObjective::gradient(const Eigen::MatrixXd& w) const {
  return 2.0 * (curvature(w) - linear);
}

double estimate_curvature(const QuadraticObjective& objective, Eigen::Index rows,
                          Eigen::Index cols, int iterations) {
  // Deterministic, non-symmetric start so no eigenvector is trivially missed.
  Eigen::MatrixXd v(rows, cols);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v.data()[i] = 1.0 + 0.5 * std::sin(1.0 + 0.7 * static_cast<double>(i));
  }
  v /= v.norm();
  double lambda = 0.0;
  for (int it = 0; it < std::max(1, iterations); ++it) {
    Eigen::MatrixXd hv = objective.curvature(v);
    const double norm = hv.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) break;
    lambda = (v.array() * hv.array()).sum();
    v = hv / norm;
  }
  return std::max(lambda, 0.0);
}

ProjectedGradientResult minimize_projected(const QuadraticObjective& objective,
                                           const Projection& project,
                                           const Eigen::MatrixXd& init,
                                           const ProjectedGradientConfig& cfg) {
  if (cfg.max_iters < 1) throw ConfigurationError("projected gradient: max_iters must be >= 1");
  if (!(cfg.tolerance > 0.0)) throw ConfigurationError("projected gradient: tolerance must be > 0");
  if (!(cfg.backtrack_factor > 1.0)) {
    throw ConfigurationError("projected gradient: backtrack factor must exceed 1");
  }
  if (objective.linear.rows() != init.rows() || objective.linear.cols() != init.cols()) {
    throw ConfigurationError("projected gradient: init shape does not match objective");
  }

  auto diverged = [](const char* what, int it, const Eigen::MatrixXd& w) {
    std::ostringstream msg;
    msg << "projected gradient diverged (" << what << ") at iteration " << it
        << "; iterate norm " << w.norm();
    return SolverDivergedError(msg.str());
  };

  ProjectedGradientResult result;
  Eigen::MatrixXd x = init;
  project(x);
  Eigen::MatrixXd hx = objective.curvature(x);
  double fx = objective.value(x, hx);
  if (!std::isfinite(fx)) throw diverged("objective", 0, x);
  result.initial_objective = fx;
  if (cfg.record_history) result.history.push_back(fx);

  // H is 2x the Hessian of f, so the gradient Lipschitz constant is 2 lambda_max.
  double lipschitz = 2.0 * estimate_curvature(objective, x.rows(), x.cols(), cfg.power_iterations);
  if (!(lipschitz > 0.0)) lipschitz = 1e-12;
  const double grad_scale = std::max(1.0, objective.linear.norm());

  Eigen::MatrixXd y = x;
  Eigen::MatrixXd hy = hx;
  double t = 1.0;
  bool just_restarted = true;
  int it = 0;
  for (; it < cfg.max_iters; ++it) {
    const Eigen::MatrixXd grad = 2.0 * (hy - objective.linear);
    if (!grad.allFinite()) throw diverged("gradient", it, y);

    Eigen::MatrixXd xn;
    Eigen::MatrixXd hxn;
    double step_norm = 0.0;
    for (;;) {
      xn = y - grad / lipschitz;
      project(xn);
      hxn = objective.curvature(xn);
      const Eigen::MatrixXd d = xn - y;
      const double dd = d.squaredNorm();
      const double dhd = (d.array() * (hxn - hy).array()).sum();
      step_norm = std::sqrt(dd);
      // f(xn) <= f(y) + <g, d> + (L/2)||d||^2  <=>  <d, H d> <= (L/2) ||d||^2.
      if (dhd <= 0.5 * lipschitz * dd * (1.0 + 1e-10) + 1e-300) break;
      lipschitz *= cfg.backtrack_factor;
      if (!std::isfinite(lipschitz)) throw diverged("step size", it, y);
    }
    const double fxn = objective.value(xn, hxn);
    if (!std::isfinite(fxn)) throw diverged("objective", it, xn);

    if (fxn > fx) {
      if (just_restarted) {
        // A plain projected step cannot increase f except through rounding.
        result.converged = true;
        break;
      }
      y = x;
      hy = hx;
      t = 1.0;
      ++result.restarts;
      just_restarted = true;
      continue;
    }

    const double decrease = fx - fxn;
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / tn;
    y = xn + beta * (xn - x);
    hy = hxn + beta * (hxn - hx);
    x = std::move(xn);
    hx = std::move(hxn);
    const double fprev = fx;
    fx = fxn;
    t = tn;
    if (cfg.record_history) result.history.push_back(fx);

    const bool small_decrease = decrease <= cfg.tolerance * std::abs(fprev);
    const bool small_step = lipschitz * step_norm <= cfg.gradient_tolerance * grad_scale;
    if ((small_decrease && !just_restarted) || small_step) {
      result.converged = true;
      ++it;
      break;
    }
    just_restarted = false;
  }

  result.minimizer = std::move(x);
  result.iterations = it;
  result.objective = fx;
  result.lipschitz = lipschitz;
  return result;
}

}  // namespace lifted_dyn
