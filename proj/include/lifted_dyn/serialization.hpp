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
#ifndef LIFTED_DYN_SERIALIZATION_HPP
#define LIFTED_DYN_SERIALIZATION_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "json.hpp"
#include "lifted_dyn/control.hpp"
#include "lifted_dyn/dynamics.hpp"
#include "lifted_dyn/embedding.hpp"
#include "lifted_dyn/koopman_model.hpp"
#include "lifted_dyn/markov_model.hpp"

namespace lifted_dyn {

using Json = nlohmann::json;

/// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);
std::string file_fingerprint(const std::string& path);
/// Hash of the canonical JSON form; stored as embedding_ref on fitted models.
std::string embedding_fingerprint(const Embedding& emb);

/// Matrices are row-major nested arrays.
Json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const Json& j);
Json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const Json& j);

struct EmbeddingBundle {
  Embedding embedding;
  std::optional<ExpectationDecoder> decoder;
};

/// {mode: normalized|scaled, centers, covariance, scales?} or
/// {mode: partition, cell_edges} or {mode: identity, dim}, plus an optional
/// decoder {centers, renormalize}.
Json embedding_to_json(const Embedding& emb,
                       const std::optional<ExpectationDecoder>& decoder = std::nullopt);
EmbeddingBundle embedding_from_json(const Json& j);

Json diagnostics_to_json(const FitDiagnostics& d);
FitDiagnostics diagnostics_from_json(const Json& j);

using AnyModel = std::variant<MarkovChainModel, ControlledMarkovModel, KoopmanAutonomous,
                              KoopmanLinear, KoopmanBilinear>;

/// type mc | cmc | ko | ko_lin | ko_bil. Stochastic objects have entries in
/// [-1e-12, 0) clamped to zero (and the column renormalized) when written.
Json model_to_json(const AnyModel& model);
AnyModel model_from_json(const Json& j);
std::string model_type(const AnyModel& model);

Json policy_to_json(const TabularPolicy& policy,
                    const std::optional<StageCost>& cost = std::nullopt);
TabularPolicy policy_from_json(const Json& j);

struct DatasetMetadata {
  std::string system = "vdp";
  std::uint64_t seed = 0;
  BoxSampler sampler;
  int substeps = 10;
};

/// data.csv with header x1..xn[,u1..um],xp1..xpn and the sidecar data.json
/// {n, m, K, dt, seed, sampler, system, substeps}.
void write_dataset(const std::string& csv_path, const SnapshotDataset& data,
                   const DatasetMetadata& meta);
SnapshotDataset read_dataset(const std::string& csv_path);
DatasetMetadata read_dataset_metadata(const std::string& csv_path);
std::string dataset_sidecar_path(const std::string& csv_path);

Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

}  // namespace lifted_dyn

#endif  // LIFTED_DYN_SERIALIZATION_HPP
