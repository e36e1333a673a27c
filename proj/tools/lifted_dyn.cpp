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
// lifted-dyn: data generation, embeddings, model fitting, prediction,
// value iteration, MPC and the benchmark experiments from the command line.

#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "lifted_dyn/control.hpp"
#include "lifted_dyn/csv.hpp"
#include "lifted_dyn/dynamics.hpp"
#include "lifted_dyn/embedding.hpp"
#include "lifted_dyn/errors.hpp"
#include "lifted_dyn/harness.hpp"
#include "lifted_dyn/koopman_model.hpp"
#include "lifted_dyn/markov_model.hpp"
#include "lifted_dyn/serialization.hpp"

namespace ld = lifted_dyn;
namespace fs = std::filesystem;

namespace {

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw ld::UsageError(std::string(what) + ": cannot parse '" + cell + "'");
    }
  }
  if (out.empty()) throw ld::UsageError(std::string(what) + ": empty list");
  return out;
}

Eigen::VectorXd parse_vector(const std::string& text, const char* what) {
  const auto v = parse_list(text, what);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// "lo,hi" applied to every dimension, or "lo1,hi1,lo2,hi2,...".
std::vector<ld::Interval> parse_box(const std::string& text, std::size_t dims, const char* what) {
  const auto v = parse_list(text, what);
  std::vector<ld::Interval> box;
  if (v.size() == 2) {
    box.assign(dims, {v[0], v[1]});
  } else if (v.size() == 2 * dims) {
    for (std::size_t i = 0; i < dims; ++i) box.push_back({v[2 * i], v[2 * i + 1]});
  } else {
    throw ld::UsageError(std::string(what) + ": expected 2 or " + std::to_string(2 * dims) +
                         " numbers");
  }
  return box;
}

ld::EmbeddingBundle load_embedding(const std::string& path, const ld::Json& model_json,
                                   const char* inline_key) {
  if (!path.empty()) return ld::embedding_from_json(ld::read_json_file(path));
  if (model_json.contains(inline_key)) return ld::embedding_from_json(model_json.at(inline_key));
  throw ld::UsageError(std::string("no ") + inline_key +
                       " available: pass it explicitly or use a model written by `fit`");
}

ld::CsvTable trajectory_csv(const Eigen::VectorXd& times, const Eigen::MatrixXd& states,
                            const Eigen::MatrixXd* inputs) {
  ld::CsvTable t;
  t.header.push_back("t");
  for (Eigen::Index i = 1; i <= states.cols(); ++i) t.header.push_back("x" + std::to_string(i));
  const Eigen::Index m = inputs ? inputs->cols() : 0;
  for (Eigen::Index i = 1; i <= m; ++i) t.header.push_back("u" + std::to_string(i));
  t.rows.resize(states.rows(), 1 + states.cols() + m);
  t.rows.col(0) = times;
  t.rows.middleCols(1, states.cols()) = states;
  if (m > 0) {
    t.rows.rightCols(m).setConstant(std::nan(""));
    t.rows.rightCols(m).topRows(inputs->rows()) = *inputs;
  }
  return t;
}

ld::StageCost cost_from(const std::string& q_diag, double r, Eigen::Index n, Eigen::Index m) {
  ld::StageCost c;
  const Eigen::VectorXd q = parse_vector(q_diag, "--q-diag");
  if (q.size() != n) throw ld::UsageError("--q-diag needs " + std::to_string(n) + " entries");
  c.Q = q.asDiagonal();
  c.R = Eigen::MatrixXd::Identity(m, m) * r;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Markov chain and Koopman models of dynamical systems, with control"};
  app.require_subcommand(1);

  // generate-data
  auto* gen = app.add_subcommand("generate-data", "Sample snapshot pairs from a system");
  std::string gen_system = "vdp", gen_out = "data", gen_state = "-4.5,4.5", gen_input = "-3,3";
  long long gen_k = 100000;
  double gen_dt = 0.1;
  std::uint64_t gen_seed = 7;
  int gen_substeps = 10, gen_workers = 1;
  bool gen_autonomous = false;
  gen->add_option("--system", gen_system, "System name")->capture_default_str();
  gen->add_option("--k", gen_k, "Number of pairs")->capture_default_str();
  gen->add_option("--dt", gen_dt, "Sampling period [s]")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Random seed")->capture_default_str();
  gen->add_option("--substeps", gen_substeps, "RK4 steps per sample")->capture_default_str();
  gen->add_option("--workers", gen_workers, "Worker threads")->capture_default_str();
  gen->add_option("--state-range", gen_state, "lo,hi or per-dimension bounds")->capture_default_str();
  gen->add_option("--input-range", gen_input, "lo,hi or per-dimension bounds")->capture_default_str();
  gen->add_flag("--autonomous", gen_autonomous, "No inputs (u = 0)");
  gen->add_option("--out", gen_out, "Output directory")->capture_default_str();

  // embedding
  auto* embc = app.add_subcommand("embedding", "Write a grid kernel or partition embedding");
  std::string emb_range = "-4.5,4.5", emb_counts = "9,9", emb_mode = "normalized", emb_out;
  double emb_sigma = 0.75;
  bool emb_partition = false;
  embc->add_option("--range", emb_range, "lo,hi or per-dimension bounds")->capture_default_str();
  embc->add_option("--counts", emb_counts, "Kernels (or inner cells) per dimension")
      ->capture_default_str();
  embc->add_option("--sigma", emb_sigma, "Kernel standard deviation")->capture_default_str();
  embc->add_option("--mode", emb_mode, "normalized | scaled")->capture_default_str();
  embc->add_flag("--partition", emb_partition, "Indicator cells instead of kernels");
  embc->add_option("--out", emb_out, "Output JSON")->required();

  // fit
  auto* fit = app.add_subcommand("fit", "Calibrate a model on a dataset");
  std::string fit_data, fit_emb, fit_act, fit_type = "ko", fit_out;
  double fit_tol = 1e-9;
  int fit_iters = 50000;
  fit->add_option("--data", fit_data, "Dataset CSV (with sidecar JSON)")->required();
  fit->add_option("--embedding", fit_emb, "State embedding JSON")->required();
  fit->add_option("--action-embedding", fit_act, "Action embedding JSON (cmc)");
  fit->add_option("--model", fit_type, "mc | mc_freq | cmc | cmc_freq | ko | ko_lin | ko_bil")
      ->capture_default_str();
  fit->add_option("--tol", fit_tol, "Relative tolerance of the constrained solver")
      ->capture_default_str();
  fit->add_option("--max-iters", fit_iters, "Iteration cap of the constrained solver")
      ->capture_default_str();
  fit->add_option("--out", fit_out, "Output model JSON")->required();

  // predict
  auto* pred = app.add_subcommand("predict", "Open-loop decoded prediction from a model");
  std::string pred_model, pred_emb, pred_act, pred_x0 = "3,3", pred_out;
  int pred_steps = 100;
  double pred_dt = 0.1, pred_amp = 2.0, pred_omega = 1.0;
  pred->add_option("--model", pred_model, "Model JSON")->required();
  pred->add_option("--embedding", pred_emb, "State embedding JSON (default: stored in model)");
  pred->add_option("--action-embedding", pred_act, "Action embedding JSON (cmc)");
  pred->add_option("--x0", pred_x0, "Initial state")->capture_default_str();
  pred->add_option("--steps", pred_steps, "Prediction steps")->capture_default_str();
  pred->add_option("--dt", pred_dt, "Sampling period [s]")->capture_default_str();
  pred->add_option("--amplitude", pred_amp, "Input u(t) = A cos(w t)")->capture_default_str();
  pred->add_option("--omega", pred_omega, "Input frequency w")->capture_default_str();
  pred->add_option("--out", pred_out, "Output CSV")->required();

  // vi
  auto* vi = app.add_subcommand("vi", "Value iteration on a controlled Markov model");
  std::string vi_model, vi_emb, vi_act, vi_q = "1,1", vi_out;
  double vi_r = 0.5, vi_lambda = 0.999, vi_tol = 1e-8;
  int vi_iters = 100000;
  vi->add_option("--model", vi_model, "cmc model JSON")->required();
  vi->add_option("--embedding", vi_emb, "State embedding JSON (default: stored in model)");
  vi->add_option("--action-embedding", vi_act, "Action embedding JSON (default: stored in model)");
  vi->add_option("--q-diag", vi_q, "Diagonal of Q")->capture_default_str();
  vi->add_option("--r", vi_r, "Input weight R (times identity)")->capture_default_str();
  vi->add_option("--lambda", vi_lambda, "Discount factor")->capture_default_str();
  vi->add_option("--tol", vi_tol, "Sup-norm stopping tolerance")->capture_default_str();
  vi->add_option("--max-iters", vi_iters, "Sweep cap")->capture_default_str();
  vi->add_option("--out", vi_out, "Output policy JSON")->required();

  // mpc
  auto* mpc = app.add_subcommand("mpc", "Closed-loop MPC on the true system");
  std::string mpc_model, mpc_emb, mpc_x0 = "3,3", mpc_q = "1,1", mpc_bounds, mpc_out,
                                  mpc_system = "vdp";
  int mpc_horizon = 50, mpc_steps = 100;
  double mpc_r = 0.5, mpc_dt = 0.1;
  bool mpc_nonlinear = false;
  mpc->add_option("--model", mpc_model, "ko_lin or ko_bil model JSON");
  mpc->add_option("--embedding", mpc_emb, "State embedding JSON (default: stored in model)");
  mpc->add_flag("--nonlinear", mpc_nonlinear, "Use the nonlinear MPC oracle instead of a model");
  mpc->add_option("--system", mpc_system, "Plant")->capture_default_str();
  mpc->add_option("--horizon", mpc_horizon, "Horizon T")->capture_default_str();
  mpc->add_option("--x0", mpc_x0, "Initial state")->capture_default_str();
  mpc->add_option("--steps", mpc_steps, "Closed-loop steps")->capture_default_str();
  mpc->add_option("--dt", mpc_dt, "Sampling period [s]")->capture_default_str();
  mpc->add_option("--q-diag", mpc_q, "Diagonal of Q")->capture_default_str();
  mpc->add_option("--r", mpc_r, "Input weight R (times identity)")->capture_default_str();
  mpc->add_option("--u-bounds", mpc_bounds, "lo,hi input box (default: unbounded)");
  mpc->add_option("--out", mpc_out, "Output CSV")->required();

  // run
  auto* run = app.add_subcommand("run", "Run a benchmark experiment");
  std::string run_exp, run_cfg, run_profile = "paper", run_out;
  int run_workers = 0;
  run->add_option("--experiment", run_exp, "fig2 | fig3 | fig4 | fig5 | table1");
  run->add_option("--config", run_cfg, "Experiment config JSON (or a manifest)");
  run->add_option("--profile", run_profile, "quick | paper")->capture_default_str();
  run->add_option("--workers", run_workers, "Threads for data generation and fig5");
  run->add_option("--out", run_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const ld::ContinuousSystem sys = ld::system_by_name(gen_system);
      ld::BoxSampler sampler;
      sampler.state_box = parse_box(gen_state, static_cast<std::size_t>(sys.state_dim), "--state-range");
      if (!gen_autonomous && sys.input_dim > 0) {
        sampler.input_box = parse_box(gen_input, static_cast<std::size_t>(sys.input_dim), "--input-range");
      }
      const ld::SnapshotDataset data =
          ld::generate_dataset(sys, sampler, gen_k, gen_dt, gen_seed, gen_substeps, gen_workers);
      fs::create_directories(gen_out);
      const std::string csv = (fs::path(gen_out) / "data.csv").string();
      ld::write_dataset(csv, data, {gen_system, gen_seed, sampler, gen_substeps});
      std::cout << "wrote " << data.size() << " pairs to " << csv << "\n";
    } else if (*embc) {
      const auto counts_d = parse_list(emb_counts, "--counts");
      std::vector<int> counts;
      for (double c : counts_d) counts.push_back(static_cast<int>(c));
      const auto ranges = parse_box(emb_range, counts.size(), "--range");
      ld::Json j;
      if (emb_partition) {
        auto [part, dec] = ld::grid_partition(ranges, counts);
        j = ld::embedding_to_json(part, dec);
      } else {
        const ld::KernelMode mode =
            emb_mode == "scaled" ? ld::KernelMode::kScaled : ld::KernelMode::kNormalized;
        if (emb_mode != "scaled" && emb_mode != "normalized") {
          throw ld::UsageError("--mode must be normalized or scaled");
        }
        const ld::GridEmbedding g = ld::grid_embedding(ranges, counts, emb_sigma, mode);
        j = ld::embedding_to_json(g.embedding, g.decoder);
      }
      ld::write_json_file(emb_out, j);
      std::cout << "wrote embedding to " << emb_out << "\n";
    } else if (*fit) {
      const ld::SnapshotDataset data = ld::read_dataset(fit_data);
      const ld::Json emb_json = ld::read_json_file(fit_emb);
      const ld::EmbeddingBundle emb = ld::embedding_from_json(emb_json);
      ld::ProjectedGradientConfig solver;
      solver.tolerance = fit_tol;
      solver.max_iters = fit_iters;
      ld::AnyModel model;
      ld::Json act_json;
      if (fit_type == "mc") {
        model = ld::fit_constrained(data, emb.embedding, solver);
      } else if (fit_type == "mc_freq") {
        model = ld::fit_frequency(data, emb.embedding);
      } else if (fit_type == "cmc" || fit_type == "cmc_freq") {
        if (fit_act.empty()) throw ld::UsageError("cmc fits need --action-embedding");
        act_json = ld::read_json_file(fit_act);
        const ld::EmbeddingBundle act = ld::embedding_from_json(act_json);
        model = fit_type == "cmc" ? ld::fit_controlled(data, emb.embedding, act.embedding, solver)
                                  : ld::fit_controlled_frequency(data, emb.embedding, act.embedding);
      } else if (fit_type == "ko") {
        model = ld::fit_autonomous(data, emb.embedding);
      } else if (fit_type == "ko_lin") {
        model = ld::fit_linear(data, emb.embedding);
      } else if (fit_type == "ko_bil") {
        model = ld::fit_bilinear(data, emb.embedding);
      } else {
        throw ld::UsageError("unknown --model '" + fit_type + "'");
      }
      ld::Json out = ld::model_to_json(model);
      out["embedding"] = emb_json;
      if (!act_json.is_null()) out["action_embedding"] = act_json;
      ld::write_json_file(fit_out, out);
      const ld::Json& diag = out.at("diagnostics");
      std::cout << "fitted " << out.at("type").get<std::string>() << ": loss "
                << diag.at("loss").get<double>() << ", iterations " << diag.at("iters").get<int>()
                << "\n";
      for (const auto& w : diag.at("warnings")) std::cout << "warning: " << w.get<std::string>() << "\n";
    } else if (*pred) {
      const ld::Json mj = ld::read_json_file(pred_model);
      const ld::AnyModel model = ld::model_from_json(mj);
      const ld::EmbeddingBundle emb = load_embedding(pred_emb, mj, "embedding");
      if (!emb.decoder) throw ld::UsageError("state embedding has no decoder");
      const Eigen::VectorXd x0 = parse_vector(pred_x0, "--x0");
      const ld::InputSignal signal = ld::cosine_signal(pred_amp, pred_omega);
      ld::Prediction p;
      if (const auto* mc = std::get_if<ld::MarkovChainModel>(&model)) {
        p = ld::rollout_decoded(*mc, emb.embedding, *emb.decoder, x0, pred_steps, pred_dt);
      } else if (const auto* cmc = std::get_if<ld::ControlledMarkovModel>(&model)) {
        const ld::EmbeddingBundle act = load_embedding(pred_act, mj, "action_embedding");
        p = ld::rollout_decoded(*cmc, emb.embedding, act.embedding, *emb.decoder, x0, signal,
                                pred_steps, pred_dt);
      } else if (const auto* ko = std::get_if<ld::KoopmanAutonomous>(&model)) {
        p = ld::rollout_decoded(ld::LiftedModel(*ko), emb.embedding, *emb.decoder, x0,
                                ld::InputSignal(), pred_steps, pred_dt);
      } else {
        const ld::LiftedModel lifted = std::holds_alternative<ld::KoopmanLinear>(model)
                                           ? ld::LiftedModel(std::get<ld::KoopmanLinear>(model))
                                           : ld::LiftedModel(std::get<ld::KoopmanBilinear>(model));
        p = ld::rollout_decoded(lifted, emb.embedding, *emb.decoder, x0, signal, pred_steps, pred_dt);
      }
      ld::write_csv(pred_out, trajectory_csv(p.times, p.states, nullptr));
      std::cout << "wrote " << p.states.rows() << " predicted states to " << pred_out << "\n";
    } else if (*vi) {
      const ld::Json mj = ld::read_json_file(vi_model);
      const ld::AnyModel model = ld::model_from_json(mj);
      const auto* cmc = std::get_if<ld::ControlledMarkovModel>(&model);
      if (!cmc) throw ld::UsageError("vi needs a cmc model");
      const ld::EmbeddingBundle emb = load_embedding(vi_emb, mj, "embedding");
      const ld::EmbeddingBundle act = load_embedding(vi_act, mj, "action_embedding");
      if (!emb.decoder || !act.decoder) throw ld::UsageError("embeddings need decoders");
      const ld::StageCost cost =
          cost_from(vi_q, vi_r, emb.decoder->output_dim(), act.decoder->output_dim());
      const Eigen::MatrixXd table =
          ld::build_cost_table(cost, emb.decoder->centers(), act.decoder->centers());
      const ld::TabularPolicy policy = ld::value_iteration(*cmc, table, {vi_lambda, vi_tol, vi_iters});
      ld::write_json_file(vi_out, ld::policy_to_json(policy, cost));
      std::cout << "value iteration: " << policy.iterations << " sweeps, "
                << (policy.converged ? "converged" : "NOT converged") << ", residual "
                << policy.residual << "\n";
    } else if (*mpc) {
      const ld::ContinuousSystem sys = ld::system_by_name(mpc_system);
      ld::MpcConfig cfg;
      cfg.horizon = mpc_horizon;
      cfg.cost = cost_from(mpc_q, mpc_r, sys.state_dim, sys.input_dim);
      if (!mpc_bounds.empty()) {
        const auto b = parse_list(mpc_bounds, "--u-bounds");
        if (b.size() != 2) throw ld::UsageError("--u-bounds expects lo,hi");
        cfg.input_bounds = ld::InputBounds{Eigen::VectorXd::Constant(sys.input_dim, b[0]),
                                           Eigen::VectorXd::Constant(sys.input_dim, b[1])};
      }
      const Eigen::VectorXd x0 = parse_vector(mpc_x0, "--x0");
      ld::Trajectory traj;
      if (mpc_nonlinear) {
        ld::NonlinearMpc nmpc(sys, cfg, mpc_dt);
        traj = ld::simulate_closed_loop(sys, nmpc.controller(), x0, mpc_steps, mpc_dt);
      } else {
        if (mpc_model.empty()) throw ld::UsageError("mpc needs --model or --nonlinear");
        const ld::Json mj = ld::read_json_file(mpc_model);
        const ld::AnyModel model = ld::model_from_json(mj);
        const ld::EmbeddingBundle emb = load_embedding(mpc_emb, mj, "embedding");
        if (!emb.decoder) throw ld::UsageError("state embedding has no decoder");
        ld::LiftedModel lifted;
        if (const auto* lin = std::get_if<ld::KoopmanLinear>(&model)) {
          lifted = *lin;
        } else if (const auto* bil = std::get_if<ld::KoopmanBilinear>(&model)) {
          lifted = *bil;
        } else {
          throw ld::UsageError("mpc needs a ko_lin or ko_bil model");
        }
        const ld::LiftedMpc controller(lifted, emb.embedding, *emb.decoder, cfg);
        traj = ld::simulate_closed_loop(sys, controller.controller(), x0, mpc_steps, mpc_dt);
      }
      const Eigen::VectorXd times =
          Eigen::VectorXd::LinSpaced(mpc_steps + 1, 0.0, mpc_steps * mpc_dt);
      ld::write_csv(mpc_out, trajectory_csv(times, traj.states, &traj.inputs));
      std::cout << "final state norm " << traj.states.bottomRows(1).norm() << "; wrote "
                << mpc_out << "\n";
    } else if (*run) {
      ld::ExperimentConfig cfg = ld::profile_config(run_profile);
      if (!run_cfg.empty()) cfg = ld::config_from_json(ld::read_json_file(run_cfg), cfg);
      if (!run_exp.empty()) cfg.experiment = run_exp;
      if (run_workers > 0) cfg.workers = run_workers;
      cfg.out_dir = run_out;
      std::cout << ld::run_experiment(cfg) << "\n";
    }
  } catch (const ld::ConfigurationError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const ld::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ld::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
