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
#include "lifted_dyn/koopman_model.hpp"

#include <sstream>

#include "lifted_dyn/errors.hpp"
#include "lifted_dyn/optim.hpp"
#include "lifted_dyn/serialization.hpp"

namespace lifted_dyn {

namespace {

enum class Structure { kAutonomous, kLinear, kBilinear };

void require_data(const SnapshotDataset& data, const Embedding& emb, bool needs_inputs) {
  data.validate();
  if (needs_inputs && !data.has_inputs()) {
    throw ConfigurationError("controlled Koopman fit needs a dataset with inputs");
  }
  if (embedding_input_dim(emb) != data.state_dim()) {
    throw ConfigurationError("embedding dimension does not match dataset state dimension");
  }
}

// Rows [z, u, z u_1, ..., z u_m] truncated to the requested structure.
Eigen::MatrixXd regressor_rows(const Eigen::MatrixXd& z, const Eigen::MatrixXd* u,
                               Structure structure) {
  if (structure == Structure::kAutonomous) return z;
  const Eigen::Index n = z.cols();
  const Eigen::Index m = u->cols();
  const Eigen::Index p = structure == Structure::kLinear ? n + m : n + m + n * m;
  Eigen::MatrixXd x(z.rows(), p);
  x.leftCols(n) = z;
  x.middleCols(n, m) = *u;
  if (structure == Structure::kBilinear) {
    for (Eigen::Index l = 0; l < m; ++l) {
      x.middleCols(n + m + l * n, n) = z.array().colwise() * u->col(l).array();
    }
  }
  return x;
}

struct LiftedFit {
  Eigen::MatrixXd coefficients;  // (regressor length) x N
  FitDiagnostics diagnostics;
};

LiftedFit fit_structure(const SnapshotDataset& data, const Embedding& emb, Structure structure,
                        const KoopmanFitConfig& cfg) {
  const Eigen::Index n = embedding_size(emb);
  const Eigen::Index m = structure == Structure::kAutonomous ? 0 : data.input_dim();
  const Eigen::Index p =
      structure == Structure::kAutonomous ? n : (structure == Structure::kLinear ? n + m : n + m + n * m);
  if (p > cfg.max_regressor_dim) {
    std::ostringstream msg;
    msg << "regressor length " << p << " exceeds max_regressor_dim " << cfg.max_regressor_dim;
    throw ConfigurationError(msg.str());
  }
  const Eigen::MatrixXd z = encode_rows(emb, data.states);
  const Eigen::MatrixXd z_next = encode_rows(emb, data.next_states);
  const Eigen::MatrixXd x =
      regressor_rows(z, structure == Structure::kAutonomous ? nullptr : &*data.inputs, structure);

  LiftedFit fit;
  auto& diag = fit.diagnostics;
  diag.method = "least_squares";
  diag.condition_number = condition_number(x);
  double ridge = 0.0;
  if (!(diag.condition_number <= cfg.condition_limit)) {
    ridge = cfg.ridge_scale * x.squaredNorm() / static_cast<double>(p);
    std::ostringstream msg;
    msg << "regressor condition number " << diag.condition_number << " exceeds "
        << cfg.condition_limit << "; ridge " << ridge << " applied";
    diag.warnings.push_back(msg.str());
  }
  if (data.size() < p) diag.warnings.push_back("fewer samples than regressors");
  if (structure == Structure::kAutonomous && data.has_inputs()) {
    diag.warnings.push_back("dataset inputs ignored by the autonomous model");
  }
  const auto sol = solve_least_squares({x, z_next, ridge, true});
  fit.coefficients = sol.coefficients;
  diag.ridge = ridge;
  diag.rank_deficient = (ridge == 0.0 && sol.rank_deficient) || diag.condition_number > 1e12;
  diag.loss = sol.residual_sum_squares;
  diag.initial_loss = z_next.squaredNorm();
  diag.iterations = 1;
  return fit;
}

Eigen::VectorXd require_input(const std::optional<Eigen::VectorXd>& u, Eigen::Index m) {
  if (!u) throw UsageError("controlled Koopman model needs an input");
  if (u->size() != m) throw ConfigurationError("input dimension mismatch");
  return *u;
}

}  // namespace

Eigen::MatrixXd KoopmanBilinear::effective_input_matrix(const Eigen::VectorXd& z) const {
  if (z.size() != A.rows()) throw ConfigurationError("lifted state dimension mismatch");
  Eigen::MatrixXd b = B;
  for (std::size_t l = 0; l < H.size(); ++l) {
    b.col(static_cast<Eigen::Index>(l)).noalias() += H[l] * z;
  }
  return b;
}

KoopmanAutonomous fit_autonomous(const SnapshotDataset& data, const Embedding& emb,
                                 const KoopmanFitConfig& cfg) {
  require_data(data, emb, false);
  LiftedFit fit = fit_structure(data, emb, Structure::kAutonomous, cfg);
  KoopmanAutonomous model;
  model.A = fit.coefficients.transpose();
  model.embedding_ref = embedding_fingerprint(emb);
  model.diagnostics = std::move(fit.diagnostics);
  return model;
}

KoopmanLinear fit_linear(const SnapshotDataset& data, const Embedding& emb,
                         const KoopmanFitConfig& cfg) {
  require_data(data, emb, true);
  LiftedFit fit = fit_structure(data, emb, Structure::kLinear, cfg);
  const Eigen::Index n = embedding_size(emb);
  const Eigen::MatrixXd mt = fit.coefficients.transpose();
  KoopmanLinear model;
  model.A = mt.leftCols(n);
  model.B = mt.rightCols(data.input_dim());
  model.embedding_ref = embedding_fingerprint(emb);
  model.diagnostics = std::move(fit.diagnostics);
  return model;
}

KoopmanBilinear fit_bilinear(const SnapshotDataset& data, const Embedding& emb,
                             const KoopmanFitConfig& cfg) {
  require_data(data, emb, true);
  LiftedFit fit = fit_structure(data, emb, Structure::kBilinear, cfg);
  const Eigen::Index n = embedding_size(emb);
  const Eigen::Index m = data.input_dim();
  const Eigen::MatrixXd mt = fit.coefficients.transpose();
  KoopmanBilinear model;
  model.A = mt.leftCols(n);
  model.B = mt.middleCols(n, m);
  for (Eigen::Index l = 0; l < m; ++l) model.H.push_back(mt.middleCols(n + m + l * n, n));
  model.embedding_ref = embedding_fingerprint(emb);
  model.diagnostics = std::move(fit.diagnostics);
  return model;
}

Eigen::Index lifted_dim(const LiftedModel& model) {
  return std::visit([](const auto& mdl) { return mdl.A.rows(); }, model);
}

Eigen::Index model_input_dim(const LiftedModel& model) {
  if (const auto* lin = std::get_if<KoopmanLinear>(&model)) return lin->B.cols();
  if (const auto* bil = std::get_if<KoopmanBilinear>(&model)) return bil->B.cols();
  return 0;
}

Eigen::VectorXd predict_lifted(const LiftedModel& model, const Eigen::VectorXd& z,
                               const std::optional<Eigen::VectorXd>& u) {
  if (z.size() != lifted_dim(model)) throw ConfigurationError("lifted state dimension mismatch");
  if (const auto* aut = std::get_if<KoopmanAutonomous>(&model)) {
    if (u) throw UsageError("input supplied to an autonomous Koopman model");
    return aut->A * z;
  }
  if (const auto* lin = std::get_if<KoopmanLinear>(&model)) {
    return lin->A * z + lin->B * require_input(u, lin->B.cols());
  }
  const auto& bil = std::get<KoopmanBilinear>(model);
  const Eigen::VectorXd v = require_input(u, bil.B.cols());
  Eigen::VectorXd out = bil.A * z + bil.B * v;
  for (std::size_t l = 0; l < bil.H.size(); ++l) {
    out.noalias() += v(static_cast<Eigen::Index>(l)) * (bil.H[l] * z);
  }
  return out;
}

double lifted_loss(const LiftedModel& model, const SnapshotDataset& data, const Embedding& emb) {
  const bool controlled = !std::holds_alternative<KoopmanAutonomous>(model);
  require_data(data, emb, controlled);
  if (controlled && data.input_dim() != model_input_dim(model)) {
    throw ConfigurationError("dataset input dimension does not match model");
  }
  const Eigen::MatrixXd z = encode_rows(emb, data.states);
  const Eigen::MatrixXd z_next = encode_rows(emb, data.next_states);
  Eigen::MatrixXd pred;
  if (const auto* aut = std::get_if<KoopmanAutonomous>(&model)) {
    pred = z * aut->A.transpose();
  } else if (const auto* lin = std::get_if<KoopmanLinear>(&model)) {
    pred = z * lin->A.transpose() + *data.inputs * lin->B.transpose();
  } else {
    const auto& bil = std::get<KoopmanBilinear>(model);
    pred = z * bil.A.transpose() + *data.inputs * bil.B.transpose();
    for (std::size_t l = 0; l < bil.H.size(); ++l) {
      pred.array() += (z * bil.H[l].transpose()).array().colwise() *
                      data.inputs->col(static_cast<Eigen::Index>(l)).array();
    }
  }
  return (z_next - pred).squaredNorm();
}

Prediction rollout_decoded(const LiftedModel& model, const Embedding& emb,
                           const ExpectationDecoder& dec, const Eigen::VectorXd& x0,
                           const InputSignal& signal, int steps, double dt) {
  if (steps < 0) throw ConfigurationError("rollout: steps must be >= 0");
  const bool controlled = !std::holds_alternative<KoopmanAutonomous>(model);
  if (controlled && steps > 0 && !signal) {
    throw UsageError("controlled rollout needs an input signal");
  }
  if (!controlled && signal) throw UsageError("input signal supplied to an autonomous model");
  Prediction pred;
  pred.times = Eigen::VectorXd::LinSpaced(steps + 1, 0.0, steps * dt);
  pred.states.resize(steps + 1, dec.output_dim());
  Eigen::VectorXd z = encode(emb, x0);
  pred.states.row(0) = dec.decode(z).transpose();
  for (int t = 0; t < steps; ++t) {
    z = controlled ? predict_lifted(model, z, signal(t * dt)) : predict_lifted(model, z);
    pred.states.row(t + 1) = dec.decode(z).transpose();
  }
  return pred;
}

}  // namespace lifted_dyn
