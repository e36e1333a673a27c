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
#ifndef LIFTED_DYN_CONTROL_HPP
#define LIFTED_DYN_CONTROL_HPP

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "lifted_dyn/dynamics.hpp"
#include "lifted_dyn/embedding.hpp"
#include "lifted_dyn/koopman_model.hpp"
#include "lifted_dyn/markov_model.hpp"
#include "lifted_dyn/optim.hpp"

namespace lifted_dyn {

/// c(x, u) = x^T Q x + u^T R u
struct StageCost {
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;

  /// Symmetry, Q >= 0 and R > 0; `require_definite_r` relaxes the last to R >= 0.
  void validate(bool require_definite_r = true) const;
  double operator()(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
};

/// Entry (i, l) = c(state_centers.row(i), action_centers.row(l)).
Eigen::MatrixXd build_cost_table(const StageCost& cost, const Eigen::MatrixXd& state_centers,
                                 const Eigen::MatrixXd& action_centers);

struct ValueIterationConfig {
  double discount = 0.999;
  double tolerance = 1e-8;  // on ||V_(k+1) - V_k||_inf
  int max_iters = 100000;
};

struct TabularPolicy {
  Eigen::VectorXd values;
  std::vector<Eigen::Index> actions;  // 0-based action index per Markov state
  double discount = 0.0;
  Eigen::MatrixXd cost_table;  // N x M

  int iterations = 0;
  bool converged = false;
  double residual = 0.0;  // last sup-norm update
  /// Largest ||V_(k+1) - V_k|| / ||V_k - V_(k-1)|| seen over the sweeps, with
  /// the numerator reduced by a rounding allowance of 64 eps max(1, |V|).
  double max_contraction_ratio = 0.0;
  /// Sweeps whose ratio exceeded the discount beyond floating-point slack.
  int contraction_violations = 0;
};

/// One Bellman sweep: Q(j, l) = c(j, l) + discount * sum_i P_ijl V_i.
Eigen::MatrixXd bellman_q(const ControlledMarkovModel& model, const Eigen::MatrixXd& cost_table,
                          double discount, const Eigen::VectorXd& values);

/// Iterates the Bellman optimality operator from V = 0; ties in the greedy
/// policy go to the lowest action index.
TabularPolicy value_iteration(const ControlledMarkovModel& model,
                              const Eigen::MatrixXd& cost_table,
                              const ValueIterationConfig& cfg = {});

/// gamma_l = sum of encode(x)_j over the states j with policy action l.
Eigen::VectorXd policy_action_weights(const TabularPolicy& policy, const Embedding& state_emb,
                                      const Eigen::VectorXd& x);

/// u(x) = sum_l gamma_l(x) u_l with u_l the action decoder centers.
Controller decode_policy(const TabularPolicy& policy, const Embedding& state_emb,
                         const ExpectationDecoder& action_dec);

struct InputBounds {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
};

struct MpcConfig {
  int horizon = 50;
  StageCost cost;
  std::optional<InputBounds> input_bounds;
  ProjectedGradientConfig solver;

  void validate(Eigen::Index state_dim, Eigen::Index input_dim) const;
};

struct MpcSolution {
  Eigen::VectorXd u0;
  Eigen::MatrixXd inputs;            // T x m
  Eigen::MatrixXd predicted_states;  // (T + 1) x d, decoded; row 0 decodes z0
  double objective = 0.0;
  int iterations = 0;  // 0 for the closed-form unconstrained solve
  bool converged = true;
  /// ||grad J(U)|| / max(1, ||grad J(0)||) at the returned input sequence.
  double relative_gradient = 0.0;
};

/**
 * @brief Condensed MPC on a lifted linear or bilinear model with stage cost
 * (C z_(t+1))^T Q (C z_(t+1)) + u_t^T R u_t over T steps, C the decoder matrix.
 *
 * For the linear model the prediction matrices, the Hessian factorization and
 * the unconstrained feedback gain are computed once. The bilinear model is
 * frozen at the current z0 (B_eff = B + [H_l z0]) and the condensed problem is
 * rebuilt at every call.
 */
class LiftedMpc {
 public:
  LiftedMpc(LiftedModel model, Embedding embedding, ExpectationDecoder decoder, MpcConfig cfg);

  MpcSolution solve(const Eigen::VectorXd& x_now) const;
  MpcSolution solve_lifted(const Eigen::VectorXd& z0) const;
  Controller controller() const;

  const MpcConfig& config() const { return cfg_; }
  bool bilinear() const { return std::holds_alternative<KoopmanBilinear>(model_); }

  /// Condensed data for a given z0: Y = free + gamma U, J = Y^T Qbar Y + U^T Rbar U.
  struct Condensed {
    Eigen::VectorXd free;      // T d
    Eigen::MatrixXd gamma;     // T d x T m
    Eigen::MatrixXd hessian;   // gamma^T Qbar gamma + Rbar
    Eigen::VectorXd linear;    // gamma^T Qbar free
    double constant = 0.0;     // free^T Qbar free
  };
  Condensed condense(const Eigen::VectorXd& z0) const;

 private:
  Eigen::MatrixXd gamma_for(const Eigen::MatrixXd& b) const;
  MpcSolution finish(const Eigen::VectorXd& z0, const Condensed& c, Eigen::VectorXd u,
                     int iterations, bool converged) const;

  LiftedModel model_;
  Embedding embedding_;
  ExpectationDecoder decoder_;
  MpcConfig cfg_;
  Eigen::Index n_ = 0;  // lifted dimension
  Eigen::Index m_ = 0;
  Eigen::Index d_ = 0;  // decoded dimension
  std::vector<Eigen::MatrixXd> cak_;  // C A^k, k = 0..T
  Eigen::MatrixXd free_map_;          // rows C A^(t+1), stacked (T d x N)
  Eigen::MatrixXd qbar_;              // T d x T d
  Eigen::MatrixXd rbar_;              // T m x T m
  // Linear model only.
  Eigen::MatrixXd gamma_;
  Eigen::MatrixXd hessian_;
  Eigen::LLT<Eigen::MatrixXd> hessian_llt_;
  Eigen::MatrixXd gain_;  // U* = -gain z0
};

/// Single receding-horizon solve; equivalent to LiftedMpc(...).solve(x_now).
MpcSolution mpc_step(const LiftedModel& model, const Embedding& embedding,
                     const ExpectationDecoder& decoder, const MpcConfig& cfg,
                     const Eigen::VectorXd& x_now);

struct NmpcSolution {
  Eigen::VectorXd u0;
  Eigen::MatrixXd inputs;  // T x m
  Eigen::MatrixXd states;  // (T + 1) x n, forward-Euler prediction
  double cost = 0.0;
  int sweeps = 0;
  bool converged = false;
  double last_update = 0.0;
};

struct NmpcOptions {
  double update_tolerance = 1e-6;
  int max_sweeps = 100;
  int max_line_search = 30;
};

/**
 * @brief Nonlinear MPC on x+ = x + dt f(x, u) solved by iterative LQR with a
 * backtracking line search. Consecutive calls are warm-started from the
 * previous input sequence shifted by one step. Input bounds, when present, are
 * enforced by clamping in the forward pass.
 */
class NonlinearMpc {
 public:
  NonlinearMpc(ContinuousSystem sys, MpcConfig cfg, double dt, NmpcOptions options = {});

  NmpcSolution solve(const Eigen::VectorXd& x_now);
  void reset() { warm_.reset(); }
  /// Shares the warm-start buffer with the returned controller.
  Controller controller();

  double trajectory_cost(const Eigen::MatrixXd& states, const Eigen::MatrixXd& inputs) const;
  Eigen::MatrixXd rollout(const Eigen::VectorXd& x0, const Eigen::MatrixXd& inputs) const;

 private:
  void linearize(const Eigen::VectorXd& x, const Eigen::VectorXd& u, Eigen::MatrixXd& fx,
                 Eigen::MatrixXd& fu) const;
  Eigen::VectorXd clamp(Eigen::VectorXd u) const;

  ContinuousSystem sys_;
  MpcConfig cfg_;
  double dt_;
  NmpcOptions options_;
  std::optional<Eigen::MatrixXd> warm_;
};

/// Cold-started single solve.
NmpcSolution nonlinear_mpc_step(const ContinuousSystem& sys, const MpcConfig& cfg, double dt,
                                const Eigen::VectorXd& x_now, const NmpcOptions& options = {});

}  // namespace lifted_dyn

#endif  // LIFTED_DYN_CONTROL_HPP
