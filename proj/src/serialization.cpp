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
#include "lifted_dyn/serialization.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "lifted_dyn/csv.hpp"
#include "lifted_dyn/errors.hpp"

namespace lifted_dyn {

namespace {

constexpr double kRoundoffClamp = 1e-12;

template <typename T>
T get_field(const Json& j, const char* key) {
  if (!j.contains(key)) throw IoError(std::string("json: missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("json: bad field '") + key + "': " + e.what());
  }
}

Eigen::MatrixXd clean_stochastic(Eigen::MatrixXd m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    bool clamped = false;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      if (m(r, c) < 0.0 && m(r, c) >= -kRoundoffClamp) {
        m(r, c) = 0.0;
        clamped = true;
      }
    }
    if (clamped) {
      const double sum = m.col(c).sum();
      if (sum > 0.0) m.col(c) /= sum;
    }
  }
  return m;
}

Json intervals_to_json(const std::vector<Interval>& box) {
  Json out = Json::array();
  for (const auto& iv : box) out.push_back({iv.lo, iv.hi});
  return out;
}

std::vector<Interval> intervals_from_json(const Json& j) {
  std::vector<Interval> box;
  for (const auto& iv : j) {
    if (!iv.is_array() || iv.size() != 2) throw IoError("json: interval must be [lo, hi]");
    box.push_back({iv[0].get<double>(), iv[1].get<double>()});
  }
  return box;
}

Json tensor_to_json(const Eigen::MatrixXd& flat, Eigen::Index n, Eigen::Index actions) {
  Json out = Json::array();
  for (Eigen::Index l = 0; l < actions; ++l) out.push_back(matrix_to_json(flat.middleCols(l * n, n)));
  return out;
}

std::string replace_extension(const std::string& path, const std::string& ext) {
  const auto slash = path.find_last_of('/');
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path + ext;
  return path.substr(0, dot) + ext;
}

}  // namespace

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t hash = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::string file_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return fnv1a_hex(buf.str());
}

std::string embedding_fingerprint(const Embedding& emb) {
  return fnv1a_hex(embedding_to_json(emb).dump());
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  if (!j.is_array()) throw IoError("json: matrix must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw IoError("json: ragged matrix");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

Json vector_to_json(const Eigen::VectorXd& v) {
  return Json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from_json(const Json& j) {
  if (!j.is_array()) throw IoError("json: vector must be an array");
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Json embedding_to_json(const Embedding& emb, const std::optional<ExpectationDecoder>& decoder) {
  Json out;
  if (const auto* k = std::get_if<KernelEmbedding>(&emb)) {
    out["mode"] = k->mode() == KernelMode::kNormalized ? "normalized" : "scaled";
    out["centers"] = matrix_to_json(k->centers());
    out["covariance"] = matrix_to_json(k->covariance());
    if (k->scales()) out["scales"] = vector_to_json(*k->scales());
  } else if (const auto* p = std::get_if<PartitionEmbedding>(&emb)) {
    out["mode"] = "partition";
    out["cell_edges"] = p->cell_edges();
  } else {
    out["mode"] = "identity";
    out["dim"] = std::get<IdentityLifting>(emb).size();
  }
  if (decoder) {
    out["decoder"] = {{"centers", matrix_to_json(decoder->centers())},
                      {"renormalize", decoder->renormalize()}};
  }
  return out;
}

EmbeddingBundle embedding_from_json(const Json& j) {
  const auto mode = get_field<std::string>(j, "mode");
  std::optional<ExpectationDecoder> decoder;
  if (j.contains("decoder")) {
    decoder.emplace(matrix_from_json(j.at("decoder").at("centers")),
                    j.at("decoder").value("renormalize", false));
  }
  if (mode == "normalized" || mode == "scaled") {
    std::optional<Eigen::VectorXd> scales;
    if (j.contains("scales")) scales = vector_from_json(j.at("scales"));
    KernelEmbedding k(matrix_from_json(j.at("centers")), matrix_from_json(j.at("covariance")),
                      mode == "normalized" ? KernelMode::kNormalized : KernelMode::kScaled, scales);
    if (!decoder) decoder.emplace(k.centers(), false);
    return {Embedding(std::move(k)), decoder};
  }
  if (mode == "partition") {
    return {Embedding(PartitionEmbedding(get_field<std::vector<std::vector<double>>>(j, "cell_edges"))),
            decoder};
  }
  if (mode == "identity") {
    return {Embedding(IdentityLifting(get_field<Eigen::Index>(j, "dim"))), decoder};
  }
  throw IoError("json: unknown embedding mode '" + mode + "'");
}

Json diagnostics_to_json(const FitDiagnostics& d) {
  Json out = {{"method", d.method},
              {"loss", d.loss},
              {"initial_loss", d.initial_loss},
              {"iters", d.iterations},
              {"converged", d.converged},
              {"solver_tolerance", d.solver_tolerance},
              {"unobserved_columns", d.unobserved_columns},
              {"ridge", d.ridge},
              {"rank_deficient", d.rank_deficient},
              {"warnings", d.warnings}};
  // JSON has no infinity; a singular regressor is stored as null.
  out["condition_number"] =
      std::isfinite(d.condition_number) ? Json(d.condition_number) : Json(nullptr);
  return out;
}

FitDiagnostics diagnostics_from_json(const Json& j) {
  FitDiagnostics d;
  d.method = j.value("method", "");
  d.loss = j.value("loss", 0.0);
  d.initial_loss = j.value("initial_loss", 0.0);
  d.iterations = j.value("iters", 0);
  d.converged = j.value("converged", true);
  d.solver_tolerance = j.value("solver_tolerance", 0.0);
  if (j.contains("unobserved_columns")) {
    d.unobserved_columns = j.at("unobserved_columns").get<std::vector<Eigen::Index>>();
  }
  const auto cond = j.find("condition_number");
  d.condition_number = (cond == j.end() || cond->is_null())
                           ? std::numeric_limits<double>::infinity()
                           : cond->get<double>();
  d.ridge = j.value("ridge", 0.0);
  d.rank_deficient = j.value("rank_deficient", false);
  if (j.contains("warnings")) d.warnings = j.at("warnings").get<std::vector<std::string>>();
  return d;
}

std::string model_type(const AnyModel& model) {
  static const char* names[] = {"mc", "cmc", "ko", "ko_lin", "ko_bil"};
  return names[model.index()];
}

Json model_to_json(const AnyModel& model) {
  Json out;
  out["type"] = model_type(model);
  if (const auto* mc = std::get_if<MarkovChainModel>(&model)) {
    out["dims"] = {{"n", mc->size()}};
    out["transition"] = matrix_to_json(clean_stochastic(mc->transition));
    out["embedding_ref"] = mc->embedding_ref;
    out["diagnostics"] = diagnostics_to_json(mc->diagnostics);
  } else if (const auto* cmc = std::get_if<ControlledMarkovModel>(&model)) {
    out["dims"] = {{"n", cmc->size()}, {"m", cmc->actions}};
    out["transition"] = tensor_to_json(clean_stochastic(cmc->transition), cmc->size(), cmc->actions);
    out["state_embedding_ref"] = cmc->state_embedding_ref;
    out["action_embedding_ref"] = cmc->action_embedding_ref;
    out["diagnostics"] = diagnostics_to_json(cmc->diagnostics);
  } else if (const auto* ko = std::get_if<KoopmanAutonomous>(&model)) {
    out["dims"] = {{"n", ko->A.rows()}};
    out["A"] = matrix_to_json(ko->A);
    out["embedding_ref"] = ko->embedding_ref;
    out["diagnostics"] = diagnostics_to_json(ko->diagnostics);
  } else if (const auto* lin = std::get_if<KoopmanLinear>(&model)) {
    out["dims"] = {{"n", lin->A.rows()}, {"m", lin->B.cols()}};
    out["A"] = matrix_to_json(lin->A);
    out["B"] = matrix_to_json(lin->B);
    out["embedding_ref"] = lin->embedding_ref;
    out["diagnostics"] = diagnostics_to_json(lin->diagnostics);
  } else {
    const auto& bil = std::get<KoopmanBilinear>(model);
    out["dims"] = {{"n", bil.A.rows()}, {"m", bil.B.cols()}};
    out["A"] = matrix_to_json(bil.A);
    out["B"] = matrix_to_json(bil.B);
    Json h = Json::array();
    for (const auto& hl : bil.H) h.push_back(matrix_to_json(hl));
    out["H"] = std::move(h);
    out["embedding_ref"] = bil.embedding_ref;
    out["diagnostics"] = diagnostics_to_json(bil.diagnostics);
  }
  return out;
}

AnyModel model_from_json(const Json& j) {
  const auto type = get_field<std::string>(j, "type");
  const FitDiagnostics diag =
      j.contains("diagnostics") ? diagnostics_from_json(j.at("diagnostics")) : FitDiagnostics{};
  if (type == "mc") {
    MarkovChainModel m;
    m.transition = matrix_from_json(j.at("transition"));
    m.embedding_ref = j.value("embedding_ref", "");
    m.diagnostics = diag;
    return m;
  }
  if (type == "cmc") {
    ControlledMarkovModel m;
    const auto& slices = j.at("transition");
    m.actions = static_cast<Eigen::Index>(slices.size());
    if (m.actions == 0) throw IoError("json: cmc model has no action slices");
    const Eigen::MatrixXd first = matrix_from_json(slices[0]);
    const Eigen::Index n = first.rows();
    m.transition.resize(n, n * m.actions);
    for (Eigen::Index l = 0; l < m.actions; ++l) {
      const Eigen::MatrixXd s = matrix_from_json(slices[static_cast<std::size_t>(l)]);
      if (s.rows() != n || s.cols() != n) throw IoError("json: cmc slice has the wrong shape");
      m.transition.middleCols(l * n, n) = s;
    }
    m.state_embedding_ref = j.value("state_embedding_ref", "");
    m.action_embedding_ref = j.value("action_embedding_ref", "");
    m.diagnostics = diag;
    return m;
  }
  if (type == "ko") {
    KoopmanAutonomous m;
    m.A = matrix_from_json(j.at("A"));
    m.embedding_ref = j.value("embedding_ref", "");
    m.diagnostics = diag;
    return m;
  }
  if (type == "ko_lin") {
    KoopmanLinear m;
    m.A = matrix_from_json(j.at("A"));
    m.B = matrix_from_json(j.at("B"));
    m.embedding_ref = j.value("embedding_ref", "");
    m.diagnostics = diag;
    return m;
  }
  if (type == "ko_bil") {
    KoopmanBilinear m;
    m.A = matrix_from_json(j.at("A"));
    m.B = matrix_from_json(j.at("B"));
    for (const auto& hl : j.at("H")) m.H.push_back(matrix_from_json(hl));
    if (static_cast<Eigen::Index>(m.H.size()) != m.B.cols()) {
      throw IoError("json: ko_bil needs one H matrix per input");
    }
    m.embedding_ref = j.value("embedding_ref", "");
    m.diagnostics = diag;
    return m;
  }
  throw IoError("json: unknown model type '" + type + "'");
}

Json policy_to_json(const TabularPolicy& policy, const std::optional<StageCost>& cost) {
  Json out = {{"V", vector_to_json(policy.values)},
              {"psi", policy.actions},
              {"lambda", policy.discount},
              {"cost_table", matrix_to_json(policy.cost_table)},
              {"iterations", policy.iterations},
              {"converged", policy.converged},
              {"residual", policy.residual}};
  if (cost) out["cost"] = {{"Q", matrix_to_json(cost->Q)}, {"R", matrix_to_json(cost->R)}};
  return out;
}

TabularPolicy policy_from_json(const Json& j) {
  TabularPolicy p;
  p.values = vector_from_json(j.at("V"));
  p.actions = get_field<std::vector<Eigen::Index>>(j, "psi");
  p.discount = get_field<double>(j, "lambda");
  p.cost_table = matrix_from_json(j.at("cost_table"));
  p.iterations = j.value("iterations", 0);
  p.converged = j.value("converged", false);
  p.residual = j.value("residual", 0.0);
  if (static_cast<Eigen::Index>(p.actions.size()) != p.values.size() ||
      p.cost_table.rows() != p.values.size()) {
    throw IoError("json: policy fields disagree in size");
  }
  for (const auto a : p.actions) {
    if (a < 0 || a >= p.cost_table.cols()) throw IoError("json: policy action out of range");
  }
  return p;
}

std::string dataset_sidecar_path(const std::string& csv_path) {
  return replace_extension(csv_path, ".json");
}

void write_dataset(const std::string& csv_path, const SnapshotDataset& data,
                   const DatasetMetadata& meta) {
  data.validate();
  const Eigen::Index n = data.state_dim();
  const Eigen::Index m = data.input_dim();
  CsvTable table;
  for (Eigen::Index i = 1; i <= n; ++i) table.header.push_back("x" + std::to_string(i));
  for (Eigen::Index i = 1; i <= m; ++i) table.header.push_back("u" + std::to_string(i));
  for (Eigen::Index i = 1; i <= n; ++i) table.header.push_back("xp" + std::to_string(i));
  table.rows.resize(data.size(), 2 * n + m);
  table.rows.leftCols(n) = data.states;
  if (m > 0) table.rows.middleCols(n, m) = *data.inputs;
  table.rows.rightCols(n) = data.next_states;
  write_csv(csv_path, table);

  Json side = {{"n", n},
               {"m", m},
               {"K", data.size()},
               {"dt", data.dt},
               {"seed", meta.seed},
               {"system", meta.system},
               {"substeps", meta.substeps},
               {"sampler",
                {{"kind", "uniform_box"},
                 {"state_box", intervals_to_json(meta.sampler.state_box)},
                 {"input_box", intervals_to_json(meta.sampler.input_box)}}}};
  write_json_file(dataset_sidecar_path(csv_path), side);
}

DatasetMetadata read_dataset_metadata(const std::string& csv_path) {
  const Json side = read_json_file(dataset_sidecar_path(csv_path));
  DatasetMetadata meta;
  meta.seed = side.value("seed", std::uint64_t{0});
  meta.system = side.value("system", "vdp");
  meta.substeps = side.value("substeps", 10);
  if (side.contains("sampler")) {
    meta.sampler.state_box = intervals_from_json(side.at("sampler").at("state_box"));
    meta.sampler.input_box = intervals_from_json(side.at("sampler").at("input_box"));
  }
  return meta;
}

SnapshotDataset read_dataset(const std::string& csv_path) {
  const Json side = read_json_file(dataset_sidecar_path(csv_path));
  const auto n = get_field<Eigen::Index>(side, "n");
  const auto m = get_field<Eigen::Index>(side, "m");
  const CsvTable table = read_csv(csv_path);
  if (table.rows.cols() != 2 * n + m) {
    throw IoError("dataset '" + csv_path + "' has " + std::to_string(table.rows.cols()) +
                  " columns, sidecar says " + std::to_string(2 * n + m));
  }
  if (table.header.empty() || table.header[0] != "x1") {
    throw IoError("dataset '" + csv_path + "' lacks the x1.. header");
  }
  SnapshotDataset data;
  data.states = table.rows.leftCols(n);
  if (m > 0) data.inputs = table.rows.middleCols(n, m);
  data.next_states = table.rows.rightCols(n);
  data.dt = get_field<double>(side, "dt");
  data.validate();
  return data;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("invalid JSON in '" + path + "': " + e.what());
  }
}

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace lifted_dyn
