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
#ifndef LIFTED_DYN_MARKOV_MODEL_HPP
#define LIFTED_DYN_MARKOV_MODEL_HPP

#include <Eigen/Dense>
#include <string>

#include "lifted_dyn/dynamics.hpp"
#include "lifted_dyn/embedding.hpp"
#include "lifted_dyn/model_common.hpp"
#include "lifted_dyn/optim.hpp"

namespace lifted_dyn {

/// pi+ = P pi with P column-stochastic (P_ij = probability of j -> i).
struct MarkovChainModel {
  Eigen::MatrixXd transition;
  std::string embedding_ref;
  FitDiagnostics diagnostics;

  Eigen::Index size() const { return transition.rows(); }
};

/**
 * @brief Controlled chain pi+ = sum_j sum_l P_(.)jl pi_j gamma_l.
 *
 * The tensor is stored flattened as N x (N M): action slice l occupies
 * columns [l N, (l + 1) N), so column l N + j is the distribution of the
 * next Markov state from state j under action l.
 */
struct ControlledMarkovModel {
  Eigen::MatrixXd transition;
  Eigen::Index actions = 0;
  std::string state_embedding_ref;
  std::string action_embedding_ref;
  FitDiagnostics diagnostics;

  Eigen::Index size() const { return transition.rows(); }
  auto slice(Eigen::Index l) const {
    return transition.middleCols(l * size(), size());
  }
  double at(Eigen::Index i, Eigen::Index j, Eigen::Index l) const {
    return transition(i, l * size() + j);
  }
};

/// Frequency count P_ij = S_ij / S_0j over encoded pairs; empty columns
/// become self-loops and are listed in the diagnostics.
MarkovChainModel fit_frequency(const SnapshotDataset& data, const Embedding& emb);

/// Least-squares fit over column-stochastic matrices, started from the
/// frequency-count solution.
MarkovChainModel fit_constrained(const SnapshotDataset& data, const Embedding& emb,
                                 const ProjectedGradientConfig& cfg = {});

/// sum_k ||pi_k+ - P pi_k||^2 on the given data.
double markov_loss(const MarkovChainModel& model, const SnapshotDataset& data,
                   const Embedding& emb);

Eigen::VectorXd predict_distribution(const MarkovChainModel& model, const Eigen::VectorXd& pi,
                                     int steps = 1);

/// Propagates the distribution from encode(x0) and decodes every step for
/// reporting; decoded states are never re-encoded.
Prediction rollout_decoded(const MarkovChainModel& model, const Embedding& emb,
                           const ExpectationDecoder& dec, const Eigen::VectorXd& x0, int steps,
                           double dt);

/// Controlled frequency count: S_ijl = sum_k gamma_l g_j(x) g_i(x+),
/// normalized per (j, l).
ControlledMarkovModel fit_controlled_frequency(const SnapshotDataset& data,
                                               const Embedding& state_emb,
                                               const Embedding& action_emb);

/// Least-squares fit over stochastic tensors, started from the controlled
/// frequency count.
ControlledMarkovModel fit_controlled(const SnapshotDataset& data, const Embedding& state_emb,
                                    const Embedding& action_emb,
                                    const ProjectedGradientConfig& cfg = {});

double controlled_loss(const ControlledMarkovModel& model, const SnapshotDataset& data,
                       const Embedding& state_emb, const Embedding& action_emb);

Eigen::VectorXd predict_controlled(const ControlledMarkovModel& model, const Eigen::VectorXd& pi,
                                   const Eigen::VectorXd& gamma);

/// Open-loop controlled prediction with gamma_t = encode(u(t)).
Prediction rollout_decoded(const ControlledMarkovModel& model, const Embedding& state_emb,
                           const Embedding& action_emb, const ExpectationDecoder& dec,
                           const Eigen::VectorXd& x0, const InputSignal& signal, int steps,
                           double dt);

/// Largest violation of the per-column sum-to-one and non-negativity
/// constraints.
double stochasticity_violation(const Eigen::MatrixXd& columns);

}  // namespace lifted_dyn

#endif  // LIFTED_DYN_MARKOV_MODEL_HPP
