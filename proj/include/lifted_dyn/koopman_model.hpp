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
#ifndef LIFTED_DYN_KOOPMAN_MODEL_HPP
#define LIFTED_DYN_KOOPMAN_MODEL_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "lifted_dyn/dynamics.hpp"
#include "lifted_dyn/embedding.hpp"
#include "lifted_dyn/model_common.hpp"

namespace lifted_dyn {

/// z+ = A z
struct KoopmanAutonomous {
  Eigen::MatrixXd A;
  std::string embedding_ref;
  FitDiagnostics diagnostics;
};

/// z+ = A z + B u
struct KoopmanLinear {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  std::string embedding_ref;
  FitDiagnostics diagnostics;
};

/// z+ = A z + B u + sum_l u_l H_l z, where H_l(:, j) = H_(.)jl.
struct KoopmanBilinear {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  std::vector<Eigen::MatrixXd> H;
  std::string embedding_ref;
  FitDiagnostics diagnostics;

  /// B + [H_1 z, ..., H_m z]: the input matrix with the bilinear terms frozen at z.
  Eigen::MatrixXd effective_input_matrix(const Eigen::VectorXd& z) const;
};

using LiftedModel = std::variant<KoopmanAutonomous, KoopmanLinear, KoopmanBilinear>;

struct KoopmanFitConfig {
  /// Above this regressor condition number a trace-scaled ridge is applied.
  double condition_limit = 1e8;
  double ridge_scale = 1e-10;
  /// Upper bound on the stacked regressor length N + m + N m.
  Eigen::Index max_regressor_dim = 4096;
};

KoopmanAutonomous fit_autonomous(const SnapshotDataset& data, const Embedding& emb,
                                 const KoopmanFitConfig& cfg = {});
KoopmanLinear fit_linear(const SnapshotDataset& data, const Embedding& emb,
                         const KoopmanFitConfig& cfg = {});
KoopmanBilinear fit_bilinear(const SnapshotDataset& data, const Embedding& emb,
                             const KoopmanFitConfig& cfg = {});

/// Training loss sum_k ||z_k+ - model(z_k, u_k)||^2 (inputs ignored by the
/// autonomous model).
double lifted_loss(const LiftedModel& model, const SnapshotDataset& data, const Embedding& emb);

/// One step of the model. Supplying an input to an autonomous model, or
/// omitting it for a controlled one, is a UsageError.
Eigen::VectorXd predict_lifted(const LiftedModel& model, const Eigen::VectorXd& z,
                               const std::optional<Eigen::VectorXd>& u = std::nullopt);

Eigen::Index lifted_dim(const LiftedModel& model);
Eigen::Index model_input_dim(const LiftedModel& model);

/// z_0 = encode(x0), propagated in the lifted space with u_t = signal(t dt)
/// and decoded each step without re-encoding. `signal` must be empty for an
/// autonomous model.
Prediction rollout_decoded(const LiftedModel& model, const Embedding& emb,
                           const ExpectationDecoder& dec, const Eigen::VectorXd& x0,
                           const InputSignal& signal, int steps, double dt);

}  // namespace lifted_dyn

#endif  // LIFTED_DYN_KOOPMAN_MODEL_HPP
