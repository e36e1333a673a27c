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
#include "lifted_dyn/control.hpp"

#include <cmath>
#include <limits>
#include <vector>
#include <memory>
#include <sstream>

#include "lifted_dyn/errors.hpp"

namespace lifted_dyn {

namespace {

constexpr double kSymmetryTolerance = 1e-12;

void check_symmetric(const Eigen::MatrixXd& m, const char* name) {
  if (m.rows() != m.cols()) throw ConfigurationError(std::string(name) + " must be square");
  if (!m.allFinite()) throw ConfigurationError(std::string(name) + " must be finite");
  if (m.size() > 0 && (m - m.transpose()).cwiseAbs().maxCoeff() >
                          kSymmetryTolerance * std::max(1.0, m.cwiseAbs().maxCoeff())) {
    throw ConfigurationError(std::string(name) + " must be symmetric");
  }
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly)
      .eigenvalues()
      .minCoeff();
}

Eigen::MatrixXd block_diagonal(const Eigen::MatrixXd& block, int copies) {
  const Eigen::Index r = block.rows();
  const Eigen::Index c = block.cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(r * copies, c * copies);
  for (int t = 0; t < copies; ++t) out.block(t * r, t * c, r, c) = block;
  return out;
}

std::string format_state(const Eigen::VectorXd& x) {
  std::ostringstream out;
  out << "(";
  for (Eigen::Index i = 0; i < x.size(); ++i) out << (i ? ", " : "") << x(i);
  out << ")";
  return out.str();
}

}  // namespace

void StageCost::validate(bool require_definite_r) const {
  check_symmetric(Q, "Q");
  check_symmetric(R, "R");
  if (min_eigenvalue(Q) < -kSymmetryTolerance) {
    throw ConfigurationError("Q must be positive semidefinite");
  }
  const double r_min = min_eigenvalue(R);
  if (require_definite_r ? !(r_min > 0.0) : r_min < -kSymmetryTolerance) {
    throw ConfigurationError(require_definite_r ? "R must be positive definite"
                                                : "R must be positive semidefinite");
  }
}

double StageCost::operator()(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  return x.dot(Q * x) + u.dot(R * u);
}

Eigen::MatrixXd build_cost_table(const StageCost& cost, const Eigen::MatrixXd& state_centers,
                                 const Eigen::MatrixXd& action_centers) {
  if (cost.Q.rows() != state_centers.cols() || cost.R.rows() != action_centers.cols()) {
    throw ConfigurationError("cost table: weight dimensions do not match the centers");
  }
  Eigen::MatrixXd table(state_centers.rows(), action_centers.rows());
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    const Eigen::VectorXd x = state_centers.row(i).transpose();
    const double state_cost = x.dot(cost.Q * x);
    for (Eigen::Index l = 0; l < table.cols(); ++l) {
      const Eigen::VectorXd u = action_centers.row(l).transpose();
      table(i, l) = state_cost + u.dot(cost.R * u);
    }
  }
  return table;
}

Eigen::MatrixXd bellman_q(const ControlledMarkovModel& model, const Eigen::MatrixXd& cost_table,
                          double discount, const Eigen::VectorXd& values) {
  const Eigen::Index n = model.size();
  const Eigen::VectorXd expected = model.transition.transpose() * values;  // index l N + j
  return cost_table + discount * Eigen::Map<const Eigen::MatrixXd>(expected.data(), n, model.actions);
}

TabularPolicy value_iteration(const ControlledMarkovModel& model,
                              const Eigen::MatrixXd& cost_table,
                              const ValueIterationConfig& cfg) {
  const Eigen::Index n = model.size();
  if (!(cfg.discount > 0.0 && cfg.discount < 1.0)) {
    throw ConfigurationError("value iteration: discount must lie in (0, 1)");
  }
  if (!(cfg.tolerance > 0.0) || cfg.max_iters < 1) {
    throw ConfigurationError("value iteration: tolerance must be > 0 and max_iters >= 1");
  }
  if (cost_table.rows() != n || cost_table.cols() != model.actions ||
      model.transition.cols() != n * model.actions) {
    throw ConfigurationError("value iteration: cost table does not match the model");
  }
  if (!cost_table.allFinite()) throw ConfigurationError("value iteration: non-finite cost table");

  TabularPolicy policy;
  policy.discount = cfg.discount;
  policy.cost_table = cost_table;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  double previous = -1.0;
  for (int it = 1; it <= cfg.max_iters; ++it) {
    const Eigen::VectorXd next = bellman_q(model, cost_table, cfg.discount, v).rowwise().minCoeff();
    const double diff = (next - v).cwiseAbs().maxCoeff();
    if (previous > 0.0) {
      // Rounding in the sweep can break the exact bound by a few ulps of |V|.
      const double slack = 64.0 * std::numeric_limits<double>::epsilon() *
                           std::max(1.0, next.cwiseAbs().maxCoeff());
      policy.max_contraction_ratio =
          std::max(policy.max_contraction_ratio, std::max(0.0, diff - slack) / previous);
      if (diff > cfg.discount * previous + slack) ++policy.contraction_violations;
    }
    v = next;
    previous = diff;
    policy.iterations = it;
    policy.residual = diff;
    if (diff < cfg.tolerance) {
      policy.converged = true;
      break;
    }
  }
  policy.values = v;
  const Eigen::MatrixXd q = bellman_q(model, cost_table, cfg.discount, v);
  policy.actions.resize(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index l = 1; l < q.cols(); ++l) {
      if (q(j, l) < q(j, best)) best = l;
    }
    policy.actions[static_cast<std::size_t>(j)] = best;
  }
  return policy;
}

Eigen::VectorXd policy_action_weights(const TabularPolicy& policy, const Embedding& state_emb,
                                      const Eigen::VectorXd& x) {
  const Eigen::VectorXd pi = encode(state_emb, x);
  if (pi.size() != static_cast<Eigen::Index>(policy.actions.size())) {
    throw ConfigurationError("policy: state embedding size does not match the policy");
  }
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(policy.cost_table.cols());
  for (Eigen::Index j = 0; j < pi.size(); ++j) {
    gamma(policy.actions[static_cast<std::size_t>(j)]) += pi(j);
  }
  return gamma;
}

Controller decode_policy(const TabularPolicy& policy, const Embedding& state_emb,
                         const ExpectationDecoder& action_dec) {
  if (action_dec.size() != policy.cost_table.cols()) {
    throw ConfigurationError("policy: action decoder size does not match the policy");
  }
  auto shared = std::make_shared<const TabularPolicy>(policy);
  return [shared, state_emb, action_dec](double, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return action_dec.decode(policy_action_weights(*shared, state_emb, x));
  };
}

void MpcConfig::validate(Eigen::Index state_dim, Eigen::Index input_dim) const {
  if (horizon < 1) throw ConfigurationError("MPC horizon must be >= 1");
  if (cost.Q.rows() != state_dim || cost.R.rows() != input_dim) {
    throw ConfigurationError("MPC cost weights do not match the state/input dimensions");
  }
  cost.validate();
  if (input_bounds) {
    if (input_bounds->lo.size() != input_dim || input_bounds->hi.size() != input_dim) {
      throw ConfigurationError("MPC input bounds have the wrong dimension");
    }
    if (!(input_bounds->lo.array() < input_bounds->hi.array()).all()) {
      throw ConfigurationError("MPC input bounds need lo < hi");
    }
  }
}

LiftedMpc::LiftedMpc(LiftedModel model, Embedding embedding, ExpectationDecoder decoder,
                     MpcConfig cfg)
    : model_(std::move(model)),
      embedding_(std::move(embedding)),
      decoder_(std::move(decoder)),
      cfg_(std::move(cfg)) {
  if (std::holds_alternative<KoopmanAutonomous>(model_)) {
    throw ConfigurationError("MPC needs a controlled (linear or bilinear) lifted model");
  }
  n_ = lifted_dim(model_);
  m_ = model_input_dim(model_);
  d_ = decoder_.output_dim();
  if (decoder_.size() != n_ || embedding_size(embedding_) != n_) {
    throw ConfigurationError("MPC: embedding/decoder size does not match the lifted model");
  }
  if (decoder_.renormalize()) {
    throw ConfigurationError("MPC needs a linear decoder (renormalize = false)");
  }
  cfg_.validate(d_, m_);

  const Eigen::MatrixXd& a = std::visit([](const auto& mdl) -> const Eigen::MatrixXd& { return mdl.A; },
                                        model_);
  const int horizon = cfg_.horizon;
  cak_.resize(static_cast<std::size_t>(horizon) + 1);
  cak_[0] = decoder_.matrix();
  for (int k = 0; k < horizon; ++k) cak_[k + 1] = cak_[k] * a;
  free_map_.resize(horizon * d_, n_);
  for (int t = 0; t < horizon; ++t) free_map_.middleRows(t * d_, d_) = cak_[t + 1];
  qbar_ = block_diagonal(cfg_.cost.Q, horizon);
  rbar_ = block_diagonal(cfg_.cost.R, horizon);

  if (const auto* lin = std::get_if<KoopmanLinear>(&model_)) {
    gamma_ = gamma_for(lin->B);
    hessian_ = gamma_.transpose() * qbar_ * gamma_ + rbar_;
    hessian_llt_.compute(hessian_);
    if (hessian_llt_.info() != Eigen::Success) {
      throw ConfigurationError("MPC: condensed Hessian is not positive definite");
    }
    gain_ = hessian_llt_.solve(gamma_.transpose() * qbar_ * free_map_);
  }
}

Eigen::MatrixXd LiftedMpc::gamma_for(const Eigen::MatrixXd& b) const {
  const int horizon = cfg_.horizon;
  std::vector<Eigen::MatrixXd> cakb(static_cast<std::size_t>(horizon));
  for (int k = 0; k < horizon; ++k) cakb[k] = cak_[k] * b;
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(horizon * d_, horizon * m_);
  for (int t = 0; t < horizon; ++t) {
    for (int s = 0; s <= t; ++s) gamma.block(t * d_, s * m_, d_, m_) = cakb[t - s];
  }
  return gamma;
}

LiftedMpc::Condensed LiftedMpc::condense(const Eigen::VectorXd& z0) const {
  if (z0.size() != n_) throw ConfigurationError("MPC: lifted state dimension mismatch");
  Condensed c;
  c.free = free_map_ * z0;
  const int horizon = cfg_.horizon;
  Eigen::VectorXd qfree(c.free.size());
  for (int t = 0; t < horizon; ++t) {
    qfree.segment(t * d_, d_).noalias() = cfg_.cost.Q * c.free.segment(t * d_, d_);
  }
  if (const auto* bil = std::get_if<KoopmanBilinear>(&model_)) {
    c.gamma = gamma_for(bil->effective_input_matrix(z0));
    // Gamma is block Toeplitz with blocks g_k = C A^k B_eff, so
    // H(s, s') = H(s + 1, s' + 1) + g_(T-1-s)^T Q g_(T-1-s').
    std::vector<Eigen::MatrixXd> qg(static_cast<std::size_t>(horizon));
    for (int k = 0; k < horizon; ++k) {
      qg[k] = cfg_.cost.Q * c.gamma.block(k * d_, 0, d_, m_);
    }
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(horizon * m_, horizon * m_);
    for (int s = horizon - 1; s >= 0; --s) {
      for (int s2 = s; s2 < horizon; ++s2) {
        auto blk = g.block(s * m_, s2 * m_, m_, m_);
        blk.noalias() =
            c.gamma.block((horizon - 1 - s) * d_, 0, d_, m_).transpose() * qg[horizon - 1 - s2];
        if (s2 + 1 < horizon) blk += g.block((s + 1) * m_, (s2 + 1) * m_, m_, m_);
        if (s2 != s) g.block(s2 * m_, s * m_, m_, m_) = blk.transpose();
      }
    }
    c.hessian = g + rbar_;
  } else {
    c.gamma = gamma_;
    c.hessian = hessian_;
  }
  c.linear = c.gamma.transpose() * qfree;
  c.constant = c.free.dot(qfree);
  return c;
}

MpcSolution LiftedMpc::finish(const Eigen::VectorXd& z0, const Condensed& c, Eigen::VectorXd u,
                              int iterations, bool converged) const {
  MpcSolution sol;
  const Eigen::VectorXd hu = c.hessian * u;
  sol.objective = u.dot(hu) + 2.0 * c.linear.dot(u) + c.constant;
  sol.relative_gradient =
      (2.0 * (hu + c.linear)).norm() / std::max(1.0, 2.0 * c.linear.norm());
  const int horizon = cfg_.horizon;
  sol.predicted_states.resize(horizon + 1, d_);
  sol.predicted_states.row(0) = (cak_[0] * z0).transpose();
  const Eigen::VectorXd y = c.free + c.gamma * u;
  for (int t = 0; t < horizon; ++t) {
    sol.predicted_states.row(t + 1) = y.segment(t * d_, d_).transpose();
  }
  sol.u0 = u.head(m_);
  sol.inputs = Eigen::Map<const Eigen::MatrixXd>(u.data(), m_, horizon).transpose();
  sol.iterations = iterations;
  sol.converged = converged;
  return sol;
}

MpcSolution LiftedMpc::solve_lifted(const Eigen::VectorXd& z0) const {
  const Condensed c = condense(z0);
  Eigen::VectorXd u;
  if (bilinear()) {
    Eigen::LLT<Eigen::MatrixXd> llt(c.hessian);
    if (llt.info() != Eigen::Success) {
      throw SolverDivergedError("MPC: condensed Hessian is not positive definite");
    }
    u = -llt.solve(c.linear);
  } else {
    u = -gain_ * z0;
  }
  if (!cfg_.input_bounds) return finish(z0, c, std::move(u), 0, true);

  const int horizon = cfg_.horizon;
  const Eigen::VectorXd lo = cfg_.input_bounds->lo.replicate(horizon, 1);
  const Eigen::VectorXd hi = cfg_.input_bounds->hi.replicate(horizon, 1);
  Projection box = [&lo, &hi](Eigen::MatrixXd& w) {
    w = w.cwiseMax(lo).cwiseMin(hi);
  };
  QuadraticObjective objective;
  objective.curvature = [&c](const Eigen::MatrixXd& w) -> Eigen::MatrixXd { return c.hessian * w; };
  objective.linear = -c.linear;
  objective.constant = c.constant;
  const auto result = minimize_projected(objective, box, u, cfg_.solver);
  return finish(z0, c, result.minimizer.col(0), result.iterations, result.converged);
}

MpcSolution LiftedMpc::solve(const Eigen::VectorXd& x_now) const {
  try {
    return solve_lifted(encode(embedding_, x_now));
  } catch (const SolverDivergedError& e) {
    throw SolverDivergedError(std::string(e.what()) + " at x = " + format_state(x_now));
  }
}

Controller LiftedMpc::controller() const {
  auto shared = std::make_shared<const LiftedMpc>(*this);
  return [shared](double, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return shared->solve(x).u0;
  };
}

MpcSolution mpc_step(const LiftedModel& model, const Embedding& embedding,
                     const ExpectationDecoder& decoder, const MpcConfig& cfg,
                     const Eigen::VectorXd& x_now) {
  return LiftedMpc(model, embedding, decoder, cfg).solve(x_now);
}

NonlinearMpc::NonlinearMpc(ContinuousSystem sys, MpcConfig cfg, double dt, NmpcOptions options)
    : sys_(std::move(sys)), cfg_(std::move(cfg)), dt_(dt), options_(options) {
  if (!(dt_ > 0.0)) throw ConfigurationError("NMPC: dt must be > 0");
  if (options_.max_sweeps < 1 || !(options_.update_tolerance > 0.0)) {
    throw ConfigurationError("NMPC: need max_sweeps >= 1 and update_tolerance > 0");
  }
  cfg_.validate(sys_.state_dim, sys_.input_dim);
}

void NonlinearMpc::linearize(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                             Eigen::MatrixXd& fx, Eigen::MatrixXd& fu) const {
  const Eigen::Index n = x.size();
  const Eigen::Index m = u.size();
  if (sys_.jacobian) {
    sys_.jacobian(x, u, fx, fu);
  } else {
    fx.resize(n, n);
    fu.resize(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(x(i)));
      Eigen::VectorXd xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      fx.col(i) = (sys_(xp, u) - sys_(xm, u)) / (2.0 * h);
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(u(i)));
      Eigen::VectorXd up = u, um = u;
      up(i) += h;
      um(i) -= h;
      fu.col(i) = (sys_(x, up) - sys_(x, um)) / (2.0 * h);
    }
  }
  // Forward-Euler transition Jacobians.
  fx = Eigen::MatrixXd::Identity(n, n) + dt_ * fx;
  fu *= dt_;
}

Eigen::VectorXd NonlinearMpc::clamp(Eigen::VectorXd u) const {
  if (cfg_.input_bounds) u = u.cwiseMax(cfg_.input_bounds->lo).cwiseMin(cfg_.input_bounds->hi);
  return u;
}

Eigen::MatrixXd NonlinearMpc::rollout(const Eigen::VectorXd& x0,
                                      const Eigen::MatrixXd& inputs) const {
  Eigen::MatrixXd states(inputs.rows() + 1, x0.size());
  states.row(0) = x0.transpose();
  Eigen::VectorXd x = x0;
  for (Eigen::Index t = 0; t < inputs.rows(); ++t) {
    x += dt_ * sys_(x, inputs.row(t).transpose());
    states.row(t + 1) = x.transpose();
  }
  return states;
}

double NonlinearMpc::trajectory_cost(const Eigen::MatrixXd& states,
                                     const Eigen::MatrixXd& inputs) const {
  double cost = 0.0;
  for (Eigen::Index t = 0; t < inputs.rows(); ++t) {
    cost += cfg_.cost(states.row(t + 1).transpose(), inputs.row(t).transpose());
  }
  return std::isfinite(cost) ? cost : std::numeric_limits<double>::infinity();
}

NmpcSolution NonlinearMpc::solve(const Eigen::VectorXd& x_now) {
  const int horizon = cfg_.horizon;
  const Eigen::Index n = sys_.state_dim;
  const Eigen::Index m = sys_.input_dim;
  if (x_now.size() != n) throw ConfigurationError("NMPC: state dimension mismatch");

  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(horizon, m);
  if (warm_ && warm_->rows() == horizon) {
    u.topRows(horizon - 1) = warm_->bottomRows(horizon - 1);
    u.row(horizon - 1) = warm_->row(horizon - 1);
  }
  for (int t = 0; t < horizon; ++t) u.row(t) = clamp(u.row(t).transpose()).transpose();
  Eigen::MatrixXd x = rollout(x_now, u);
  double cost = trajectory_cost(x, u);
  if (!std::isfinite(cost)) {
    u.setZero();
    x = rollout(x_now, u);
    cost = trajectory_cost(x, u);
  }

  const Eigen::MatrixXd& q = cfg_.cost.Q;
  const Eigen::MatrixXd& r = cfg_.cost.R;
  std::vector<Eigen::VectorXd> k_ff(static_cast<std::size_t>(horizon));
  std::vector<Eigen::MatrixXd> k_fb(static_cast<std::size_t>(horizon));
  Eigen::MatrixXd fx, fu;

  NmpcSolution sol;
  for (int sweep = 1; sweep <= options_.max_sweeps; ++sweep) {
    sol.sweeps = sweep;
    // Gauss-Newton backward pass; x_(t+1) carries the state cost of stage t.
    Eigen::VectorXd vx = 2.0 * q * x.row(horizon).transpose();
    Eigen::MatrixXd vxx = 2.0 * q;
    bool backward_ok = true;
    for (int t = horizon - 1; t >= 0; --t) {
      const Eigen::VectorXd xt = x.row(t).transpose();
      const Eigen::VectorXd ut = u.row(t).transpose();
      linearize(xt, ut, fx, fu);
      const Eigen::VectorXd qx = fx.transpose() * vx;
      const Eigen::VectorXd qu = 2.0 * r * ut + fu.transpose() * vx;
      const Eigen::MatrixXd vfx = vxx * fx;
      const Eigen::MatrixXd qxx = fx.transpose() * vfx;
      const Eigen::MatrixXd qux = fu.transpose() * vfx;
      const Eigen::MatrixXd quu = 2.0 * r + fu.transpose() * vxx * fu;
      Eigen::LLT<Eigen::MatrixXd> llt(quu);
      if (llt.info() != Eigen::Success) {
        backward_ok = false;
        break;
      }
      k_ff[t] = -llt.solve(qu);
      k_fb[t] = -llt.solve(qux);
      vx = qx + k_fb[t].transpose() * (quu * k_ff[t] + qu) + qux.transpose() * k_ff[t];
      vxx = qxx + k_fb[t].transpose() * quu * k_fb[t] + k_fb[t].transpose() * qux +
            qux.transpose() * k_fb[t];
      vxx = 0.5 * (vxx + vxx.transpose()).eval();
      if (t >= 1) {
        vx += 2.0 * q * xt;
        vxx += 2.0 * q;
      }
    }
    if (!backward_ok) break;

    bool accepted = false;
    double alpha = 1.0;
    Eigen::MatrixXd u_new(horizon, m);
    Eigen::MatrixXd x_new(horizon + 1, n);
    for (int ls = 0; ls < options_.max_line_search; ++ls, alpha *= 0.5) {
      Eigen::VectorXd xi = x_now;
      x_new.row(0) = xi.transpose();
      for (int t = 0; t < horizon; ++t) {
        const Eigen::VectorXd dx = xi - x.row(t).transpose();
        const Eigen::VectorXd ut =
            clamp(u.row(t).transpose() + alpha * k_ff[t] + k_fb[t] * dx);
        u_new.row(t) = ut.transpose();
        xi += dt_ * sys_(xi, ut);
        x_new.row(t + 1) = xi.transpose();
      }
      const double new_cost = trajectory_cost(x_new, u_new);
      if (new_cost <= cost) {
        accepted = true;
        cost = new_cost;
        break;
      }
    }
    if (!accepted) break;
    sol.last_update = (u_new - u).norm();
    u = u_new;
    x = x_new;
    if (sol.last_update < options_.update_tolerance) {
      sol.converged = true;
      break;
    }
  }

  warm_ = u;
  sol.u0 = u.row(0).transpose();
  sol.inputs = u;
  sol.states = x;
  sol.cost = cost;
  return sol;
}

Controller NonlinearMpc::controller() {
  return [this](double, const Eigen::VectorXd& x) -> Eigen::VectorXd { return solve(x).u0; };
}

NmpcSolution nonlinear_mpc_step(const ContinuousSystem& sys, const MpcConfig& cfg, double dt,
                                const Eigen::VectorXd& x_now, const NmpcOptions& options) {
  NonlinearMpc mpc(sys, cfg, dt, options);
  return mpc.solve(x_now);
}

}  // namespace lifted_dyn
