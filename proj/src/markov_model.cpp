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
#include "lifted_dyn/markov_model.hpp"

#include <algorithm>
#include <cmath>

#include "lifted_dyn/errors.hpp"
#include "lifted_dyn/serialization.hpp"

namespace lifted_dyn {

namespace {

constexpr Eigen::Index kChunkRows = 4096;

void require_autonomous(const SnapshotDataset& data, const Embedding& emb) {
  data.validate();
  if (data.has_inputs()) {
    throw ConfigurationError("autonomous Markov fit given a dataset with inputs");
  }
  if (embedding_input_dim(emb) != data.state_dim()) {
    throw ConfigurationError("embedding dimension does not match dataset state dimension");
  }
}

void require_controlled(const SnapshotDataset& data, const Embedding& state_emb,
                        const Embedding& action_emb) {
  data.validate();
  if (!data.has_inputs()) throw ConfigurationError("controlled fit needs a dataset with inputs");
  if (embedding_input_dim(state_emb) != data.state_dim()) {
    throw ConfigurationError("state embedding dimension does not match dataset");
  }
  if (embedding_input_dim(action_emb) != data.input_dim()) {
    throw ConfigurationError("action embedding dimension does not match dataset inputs");
  }
}

// Divides each column by its mass; zero-mass columns become e_(col mod n).
std::vector<Eigen::Index> normalize_columns(Eigen::MatrixXd& s) {
  const Eigen::Index n = s.rows();
  std::vector<Eigen::Index> empty;
  for (Eigen::Index c = 0; c < s.cols(); ++c) {
    const double mass = s.col(c).sum();
    if (mass > 0.0) {
      s.col(c) /= mass;
    } else {
      s.col(c).setZero();
      s(c % n, c) = 1.0;
      empty.push_back(c);
    }
  }
  return empty;
}

// Kronecker regressor rows: phi_(l N + j) = gamma_l pi_j.
Eigen::MatrixXd action_state_rows(const Eigen::MatrixXd& pi, const Eigen::MatrixXd& gamma) {
  const Eigen::Index n = pi.cols();
  Eigen::MatrixXd phi(pi.rows(), n * gamma.cols());
  for (Eigen::Index l = 0; l < gamma.cols(); ++l) {
    phi.middleCols(l * n, n) = pi.array().colwise() * gamma.col(l).array();
  }
  return phi;
}

struct ControlledMoments {
  Eigen::MatrixXd gram;   // NM x NM
  Eigen::MatrixXd cross;  // N x NM
  double target_energy = 0.0;
};

ControlledMoments controlled_moments(const SnapshotDataset& data, const Embedding& state_emb,
                                     const Embedding& action_emb) {
  const Eigen::Index n = embedding_size(state_emb);
  const Eigen::Index m = embedding_size(action_emb);
  ControlledMoments mom;
  mom.gram = Eigen::MatrixXd::Zero(n * m, n * m);
  mom.cross = Eigen::MatrixXd::Zero(n, n * m);
  for (Eigen::Index start = 0; start < data.size(); start += kChunkRows) {
    const Eigen::Index rows = std::min(kChunkRows, data.size() - start);
    const Eigen::MatrixXd pi = encode_rows(state_emb, data.states.middleRows(start, rows));
    const Eigen::MatrixXd pi_next =
        encode_rows(state_emb, data.next_states.middleRows(start, rows));
    const Eigen::MatrixXd gamma = encode_rows(action_emb, data.inputs->middleRows(start, rows));
    const Eigen::MatrixXd phi = action_state_rows(pi, gamma);
    mom.gram.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose());
    mom.cross.noalias() += pi_next.transpose() * phi;
    mom.target_energy += pi_next.squaredNorm();
  }
  mom.gram = mom.gram.selfadjointView<Eigen::Lower>();
  return mom;
}

void check_distribution(const Eigen::VectorXd& v, Eigen::Index size, const char* what) {
  if (v.size() != size) {
    throw ConfigurationError(std::string(what) + ": dimension mismatch");
  }
}

}  // namespace

double stochasticity_violation(const Eigen::MatrixXd& columns) {
  if (columns.size() == 0) return 0.0;
  const double sums = (columns.colwise().sum().array() - 1.0).abs().maxCoeff();
  const double negative = std::max(0.0, -columns.minCoeff());
  return std::max(sums, negative);
}

MarkovChainModel fit_frequency(const SnapshotDataset& data, const Embedding& emb) {
  require_autonomous(data, emb);
  const Eigen::MatrixXd pi = encode_rows(emb, data.states);
  const Eigen::MatrixXd pi_next = encode_rows(emb, data.next_states);
  MarkovChainModel model;
  model.transition = pi_next.transpose() * pi;
  model.diagnostics.unobserved_columns = normalize_columns(model.transition);
  model.diagnostics.method = "frequency";
  model.embedding_ref = embedding_fingerprint(emb);
  model.diagnostics.loss = (pi_next - pi * model.transition.transpose()).squaredNorm();
  model.diagnostics.initial_loss = model.diagnostics.loss;
  if (!model.diagnostics.unobserved_columns.empty()) {
    model.diagnostics.warnings.push_back(
        std::to_string(model.diagnostics.unobserved_columns.size()) +
        " unobserved columns set to self-loops");
  }
  return model;
}

MarkovChainModel fit_constrained(const SnapshotDataset& data, const Embedding& emb,
                                 const ProjectedGradientConfig& cfg) {
  MarkovChainModel model = fit_frequency(data, emb);
  const Eigen::MatrixXd pi = encode_rows(emb, data.states);
  const Eigen::MatrixXd pi_next = encode_rows(emb, data.next_states);
  const Eigen::Index n = pi.cols();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(pi.transpose());
  gram = gram.selfadjointView<Eigen::Lower>();

  QuadraticObjective objective;
  objective.curvature = [&gram](const Eigen::MatrixXd& p) -> Eigen::MatrixXd {
    return p * gram;
  };
  objective.linear = pi_next.transpose() * pi;
  objective.constant = pi_next.squaredNorm();

  const auto result =
      minimize_projected(objective, project_simplex_columns, model.transition, cfg);
  model.transition = result.minimizer;
  model.diagnostics.method = "constrained";
  model.diagnostics.iterations = result.iterations;
  model.diagnostics.converged = result.converged;
  model.diagnostics.solver_tolerance = cfg.tolerance;
  model.diagnostics.initial_loss = model.diagnostics.loss;
  model.diagnostics.loss = (pi_next - pi * model.transition.transpose()).squaredNorm();
  if (!result.converged) model.diagnostics.warnings.push_back("solver hit max_iters");
  return model;
}

double markov_loss(const MarkovChainModel& model, const SnapshotDataset& data,
                   const Embedding& emb) {
  require_autonomous(data, emb);
  const Eigen::MatrixXd pi = encode_rows(emb, data.states);
  const Eigen::MatrixXd pi_next = encode_rows(emb, data.next_states);
  return (pi_next - pi * model.transition.transpose()).squaredNorm();
}

Eigen::VectorXd predict_distribution(const MarkovChainModel& model, const Eigen::VectorXd& pi,
                                     int steps) {
  check_distribution(pi, model.size(), "predict_distribution");
  if (steps < 0) throw ConfigurationError("predict_distribution: steps must be >= 0");
  Eigen::VectorXd out = pi;
  for (int s = 0; s < steps; ++s) out = model.transition * out;
  return out;
}

Prediction rollout_decoded(const MarkovChainModel& model, const Embedding& emb,
                           const ExpectationDecoder& dec, const Eigen::VectorXd& x0, int steps,
                           double dt) {
  if (steps < 0) throw ConfigurationError("rollout: steps must be >= 0");
  Prediction pred;
  pred.times = Eigen::VectorXd::LinSpaced(steps + 1, 0.0, steps * dt);
  pred.states.resize(steps + 1, dec.output_dim());
  Eigen::VectorXd pi = encode(emb, x0);
  check_distribution(pi, model.size(), "rollout");
  pred.states.row(0) = dec.decode(pi).transpose();
  for (int t = 1; t <= steps; ++t) {
    pi = model.transition * pi;
    pred.states.row(t) = dec.decode(pi).transpose();
  }
  return pred;
}

ControlledMarkovModel fit_controlled_frequency(const SnapshotDataset& data,
                                               const Embedding& state_emb,
                                               const Embedding& action_emb) {
  require_controlled(data, state_emb, action_emb);
  const ControlledMoments mom = controlled_moments(data, state_emb, action_emb);
  ControlledMarkovModel model;
  model.actions = embedding_size(action_emb);
  model.transition = mom.cross;
  model.diagnostics.unobserved_columns = normalize_columns(model.transition);
  model.diagnostics.method = "frequency";
  model.state_embedding_ref = embedding_fingerprint(state_emb);
  model.action_embedding_ref = embedding_fingerprint(action_emb);
  model.diagnostics.loss = controlled_loss(model, data, state_emb, action_emb);
  model.diagnostics.initial_loss = model.diagnostics.loss;
  return model;
}

ControlledMarkovModel fit_controlled(const SnapshotDataset& data, const Embedding& state_emb,
                                    const Embedding& action_emb,
                                    const ProjectedGradientConfig& cfg) {
  require_controlled(data, state_emb, action_emb);
  const ControlledMoments mom = controlled_moments(data, state_emb, action_emb);
  ControlledMarkovModel model;
  model.actions = embedding_size(action_emb);
  model.state_embedding_ref = embedding_fingerprint(state_emb);
  model.action_embedding_ref = embedding_fingerprint(action_emb);
  Eigen::MatrixXd init = mom.cross;
  model.diagnostics.unobserved_columns = normalize_columns(init);

  QuadraticObjective objective;
  objective.curvature = [&mom](const Eigen::MatrixXd& p) -> Eigen::MatrixXd {
    return p * mom.gram;
  };
  objective.linear = mom.cross;
  objective.constant = mom.target_energy;

  const auto result = minimize_projected(objective, project_simplex_columns, init, cfg);
  model.transition = result.minimizer;
  model.diagnostics.method = "constrained";
  model.diagnostics.iterations = result.iterations;
  model.diagnostics.converged = result.converged;
  model.diagnostics.solver_tolerance = cfg.tolerance;
  model.diagnostics.initial_loss = std::max(0.0, result.initial_objective);
  model.diagnostics.loss = controlled_loss(model, data, state_emb, action_emb);
  if (!result.converged) model.diagnostics.warnings.push_back("solver hit max_iters");
  return model;
}

double controlled_loss(const ControlledMarkovModel& model, const SnapshotDataset& data,
                       const Embedding& state_emb, const Embedding& action_emb) {
  require_controlled(data, state_emb, action_emb);
  double loss = 0.0;
  for (Eigen::Index start = 0; start < data.size(); start += kChunkRows) {
    const Eigen::Index rows = std::min(kChunkRows, data.size() - start);
    const Eigen::MatrixXd pi = encode_rows(state_emb, data.states.middleRows(start, rows));
    const Eigen::MatrixXd pi_next =
        encode_rows(state_emb, data.next_states.middleRows(start, rows));
    const Eigen::MatrixXd gamma = encode_rows(action_emb, data.inputs->middleRows(start, rows));
    loss += (pi_next - action_state_rows(pi, gamma) * model.transition.transpose()).squaredNorm();
  }
  return loss;
}

Eigen::VectorXd predict_controlled(const ControlledMarkovModel& model, const Eigen::VectorXd& pi,
                                   const Eigen::VectorXd& gamma) {
  check_distribution(pi, model.size(), "predict_controlled");
  check_distribution(gamma, model.actions, "predict_controlled (action)");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(model.size());
  for (Eigen::Index l = 0; l < model.actions; ++l) {
    if (gamma(l) != 0.0) out.noalias() += gamma(l) * (model.slice(l) * pi);
  }
  return out;
}

Prediction rollout_decoded(const ControlledMarkovModel& model, const Embedding& state_emb,
                           const Embedding& action_emb, const ExpectationDecoder& dec,
                           const Eigen::VectorXd& x0, const InputSignal& signal, int steps,
                           double dt) {
  if (steps < 0) throw ConfigurationError("rollout: steps must be >= 0");
  Prediction pred;
  pred.times = Eigen::VectorXd::LinSpaced(steps + 1, 0.0, steps * dt);
  pred.states.resize(steps + 1, dec.output_dim());
  Eigen::VectorXd pi = encode(state_emb, x0);
  pred.states.row(0) = dec.decode(pi).transpose();
  for (int t = 0; t < steps; ++t) {
    pi = predict_controlled(model, pi, encode(action_emb, signal(t * dt)));
    pred.states.row(t + 1) = dec.decode(pi).transpose();
  }
  return pred;
}

}  // namespace lifted_dyn
