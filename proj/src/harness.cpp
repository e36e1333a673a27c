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
#include "lifted_dyn/harness.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <numeric>
#include <sstream>
#include <thread>

#include "lifted_dyn/csv.hpp"
#include "lifted_dyn/errors.hpp"

namespace lifted_dyn {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

KernelMode kernel_mode(const std::string& name) {
  if (name == "normalized") return KernelMode::kNormalized;
  if (name == "scaled") return KernelMode::kScaled;
  throw ConfigurationError("unknown kernel mode '" + name + "'");
}

Json intervals_json(const std::vector<Interval>& box) {
  Json out = Json::array();
  for (const auto& iv : box) out.push_back({iv.lo, iv.hi});
  return out;
}

std::vector<Interval> intervals_from(const Json& j) {
  std::vector<Interval> out;
  for (const auto& iv : j) out.push_back({iv.at(0).get<double>(), iv.at(1).get<double>()});
  return out;
}

std::string dataset_hash(const SnapshotDataset& data) {
  std::string bytes;
  auto append = [&bytes](const Eigen::MatrixXd& m) {
    bytes.append(reinterpret_cast<const char*>(m.data()),
                 static_cast<std::size_t>(m.size()) * sizeof(double));
  };
  append(data.states);
  if (data.inputs) append(*data.inputs);
  append(data.next_states);
  return fnv1a_hex(bytes);
}

// Runs fn(i) for i in [0, count) on up to `workers` threads.
template <typename Fn>
void parallel_for(int count, int workers, Fn&& fn) {
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < count; i += workers) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Owns whatever state a controller needs for one closed-loop run.
struct ControllerInstance {
  std::unique_ptr<NonlinearMpc> nmpc;
  Controller control;
};

ControllerInstance make_controller(const std::string& name, const ControlSuite& suite,
                                   const ExperimentConfig& cfg,
                                   const std::shared_ptr<const LiftedMpc>& lin,
                                   const std::shared_ptr<const LiftedMpc>& bil) {
  ControllerInstance inst;
  if (name == "vi") {
    inst.control = decode_policy(suite.policy, suite.models.state.embedding,
                                 suite.models.action.decoder);
  } else if (name == "lin_mpc") {
    inst.control = [lin](double, const Eigen::VectorXd& x) { return lin->solve(x).u0; };
  } else if (name == "bil_mpc") {
    inst.control = [bil](double, const Eigen::VectorXd& x) { return bil->solve(x).u0; };
  } else if (name == "nmpc") {
    inst.nmpc = std::make_unique<NonlinearMpc>(system_by_name(cfg.system), cfg.mpc_config(), cfg.dt);
    inst.control = inst.nmpc->controller();
  } else {
    throw ConfigurationError("unknown controller '" + name + "'");
  }
  return inst;
}

ClosedLoopRun close_loop(const std::string& name, const ControlSuite& suite,
                         const ExperimentConfig& cfg, const Eigen::VectorXd& x0, int steps,
                         const std::shared_ptr<const LiftedMpc>& lin,
                         const std::shared_ptr<const LiftedMpc>& bil) {
  ClosedLoopRun run;
  run.controller = name;
  run.x0 = x0;
  ControllerInstance inst = make_controller(name, suite, cfg, lin, bil);
  std::vector<double>& ms = run.solve_ms;
  ms.reserve(static_cast<std::size_t>(steps));
  Controller timed = [&inst, &ms](double t, const Eigen::VectorXd& x) {
    const auto start = Clock::now();
    Eigen::VectorXd u = inst.control(t, x);
    ms.push_back(1e3 * seconds_since(start));
    return u;
  };
  try {
    run.trajectory = simulate_closed_loop(system_by_name(cfg.system), timed, x0, steps, cfg.dt,
                                          cfg.substeps);
    run.final_norm = run.trajectory.states.bottomRows(1).norm();
  } catch (const Error& e) {
    run.failed = true;
    run.error = e.what();
    run.final_norm = std::numeric_limits<double>::infinity();
  }
  return run;
}

std::pair<std::shared_ptr<const LiftedMpc>, std::shared_ptr<const LiftedMpc>> lifted_controllers(
    const ControlSuite& suite, const ExperimentConfig& cfg) {
  const auto& m = suite.models;
  auto lin = std::make_shared<const LiftedMpc>(m.linear, m.state.embedding, m.state.decoder,
                                               cfg.mpc_config());
  auto bil = std::make_shared<const LiftedMpc>(m.bilinear, m.state.embedding, m.state.decoder,
                                               cfg.mpc_config());
  return {lin, bil};
}

CsvTable trajectory_table(const ClosedLoopRun& run, double dt, std::optional<int> ic) {
  const auto& tr = run.trajectory;
  const Eigen::Index steps = tr.inputs.rows();
  const Eigen::Index n = tr.states.cols();
  const Eigen::Index m = tr.inputs.cols();
  CsvTable table;
  if (ic) table.header.push_back("ic");
  table.header.push_back("t");
  for (Eigen::Index i = 1; i <= n; ++i) table.header.push_back("x" + std::to_string(i));
  for (Eigen::Index i = 1; i <= m; ++i) table.header.push_back("u" + std::to_string(i));
  const Eigen::Index off = ic ? 1 : 0;
  table.rows.resize(tr.states.rows(), off + 1 + n + m);
  for (Eigen::Index t = 0; t < tr.states.rows(); ++t) {
    if (ic) table.rows(t, 0) = *ic;
    table.rows(t, off) = static_cast<double>(t) * dt;
    table.rows.block(t, off + 1, 1, n) = tr.states.row(t);
    if (t < steps) {
      table.rows.block(t, off + 1 + n, 1, m) = tr.inputs.row(t);
    } else {
      table.rows.block(t, off + 1 + n, 1, m).setConstant(std::nan(""));
    }
  }
  return table;
}

CsvTable stack_tables(const std::vector<CsvTable>& parts) {
  CsvTable out;
  out.header = parts.front().header;
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p.rows.rows();
  out.rows.resize(rows, static_cast<Eigen::Index>(out.header.size()));
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.rows.middleRows(at, p.rows.rows()) = p.rows;
    at += p.rows.rows();
  }
  return out;
}

}  // namespace

StageCost ExperimentConfig::stage_cost() const {
  StageCost c;
  c.Q = q_diag.asDiagonal();
  c.R = r_diag.asDiagonal();
  return c;
}

MpcConfig ExperimentConfig::mpc_config() const {
  MpcConfig m;
  m.horizon = horizon;
  m.cost = stage_cost();
  m.input_bounds = input_bounds;
  m.solver = solver;
  return m;
}

ValueIterationConfig ExperimentConfig::vi_config() const {
  return {discount, vi_tolerance, vi_max_iters};
}

int ExperimentConfig::steps(double duration) const {
  return static_cast<int>(std::lround(duration / dt));
}

ExperimentConfig profile_config(const std::string& profile) {
  ExperimentConfig cfg;
  cfg.profile = profile;
  if (profile == "quick") {
    cfg.k_autonomous = 10000;
    cfg.k_controlled = 10000;
    cfg.solver.tolerance = 1e-6;
  } else if (profile == "paper") {
    cfg.k_autonomous = 100000;
    cfg.k_controlled = 100000;
    cfg.solver.tolerance = 1e-9;
  } else {
    throw ConfigurationError("unknown profile '" + profile + "' (quick | paper)");
  }
  return cfg;
}

Json config_to_json(const ExperimentConfig& cfg) {
  Json j;
  j["experiment"] = cfg.experiment;
  j["profile"] = cfg.profile;
  j["system"] = cfg.system;
  j["dt"] = cfg.dt;
  j["substeps"] = cfg.substeps;
  j["seed"] = cfg.seed;
  j["workers"] = cfg.workers;
  j["k_autonomous"] = cfg.k_autonomous;
  j["k_controlled"] = cfg.k_controlled;
  j["state_box"] = intervals_json(cfg.state_box);
  j["input_box"] = intervals_json(cfg.input_box);
  j["grid_ranges"] = intervals_json(cfg.grid_ranges);
  j["grid_counts"] = cfg.grid_counts;
  j["sigma"] = cfg.sigma;
  j["kernel_mode"] = cfg.kernel_mode;
  j["action_ranges"] = intervals_json(cfg.action_ranges);
  j["action_counts"] = cfg.action_counts;
  j["action_sigma"] = cfg.action_sigma;
  j["solver"] = {{"max_iters", cfg.solver.max_iters},
                 {"tolerance", cfg.solver.tolerance},
                 {"gradient_tolerance", cfg.solver.gradient_tolerance}};
  j["koopman"] = {{"condition_limit", cfg.koopman.condition_limit},
                  {"ridge_scale", cfg.koopman.ridge_scale},
                  {"max_regressor_dim", cfg.koopman.max_regressor_dim}};
  j["q_diag"] = vector_to_json(cfg.q_diag);
  j["r_diag"] = vector_to_json(cfg.r_diag);
  j["lambda"] = cfg.discount;
  j["vi_tolerance"] = cfg.vi_tolerance;
  j["vi_max_iters"] = cfg.vi_max_iters;
  j["horizon"] = cfg.horizon;
  j["input_bounds"] = cfg.input_bounds ? Json{{"lo", vector_to_json(cfg.input_bounds->lo)},
                                              {"hi", vector_to_json(cfg.input_bounds->hi)}}
                                       : Json(nullptr);
  j["x0"] = vector_to_json(cfg.x0);
  j["fig2_duration"] = cfg.fig2_duration;
  j["fig3_duration"] = cfg.fig3_duration;
  j["closed_loop_duration"] = cfg.closed_loop_duration;
  j["input_amplitude"] = cfg.input_amplitude;
  j["input_omega"] = cfg.input_omega;
  j["fig5_count"] = cfg.fig5_count;
  j["fig5_radius"] = cfg.fig5_radius;
  j["table1_steps"] = cfg.table1_steps;
  return j;
}

ExperimentConfig config_from_json(const Json& in, ExperimentConfig cfg) {
  const Json& j = in.contains("config") ? in.at("config") : in;
  try {
    if (j.contains("profile")) {
      const std::string profile = j.at("profile").get<std::string>();
      if (profile != cfg.profile) {
        const std::string out = cfg.out_dir;
        const std::string experiment = cfg.experiment;
        cfg = profile_config(profile);
        cfg.out_dir = out;
        cfg.experiment = experiment;
      }
    }
    auto set = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    set("experiment", cfg.experiment);
    set("system", cfg.system);
    set("dt", cfg.dt);
    set("substeps", cfg.substeps);
    set("seed", cfg.seed);
    set("workers", cfg.workers);
    set("k_autonomous", cfg.k_autonomous);
    set("k_controlled", cfg.k_controlled);
    if (j.contains("state_box")) cfg.state_box = intervals_from(j.at("state_box"));
    if (j.contains("input_box")) cfg.input_box = intervals_from(j.at("input_box"));
    if (j.contains("grid_ranges")) cfg.grid_ranges = intervals_from(j.at("grid_ranges"));
    set("grid_counts", cfg.grid_counts);
    set("sigma", cfg.sigma);
    set("kernel_mode", cfg.kernel_mode);
    if (j.contains("action_ranges")) cfg.action_ranges = intervals_from(j.at("action_ranges"));
    set("action_counts", cfg.action_counts);
    set("action_sigma", cfg.action_sigma);
    if (j.contains("solver")) {
      const auto& s = j.at("solver");
      cfg.solver.max_iters = s.value("max_iters", cfg.solver.max_iters);
      cfg.solver.tolerance = s.value("tolerance", cfg.solver.tolerance);
      cfg.solver.gradient_tolerance = s.value("gradient_tolerance", cfg.solver.gradient_tolerance);
    }
    if (j.contains("koopman")) {
      const auto& k = j.at("koopman");
      cfg.koopman.condition_limit = k.value("condition_limit", cfg.koopman.condition_limit);
      cfg.koopman.ridge_scale = k.value("ridge_scale", cfg.koopman.ridge_scale);
      cfg.koopman.max_regressor_dim = k.value("max_regressor_dim", cfg.koopman.max_regressor_dim);
    }
    if (j.contains("q_diag")) cfg.q_diag = vector_from_json(j.at("q_diag"));
    if (j.contains("r_diag")) cfg.r_diag = vector_from_json(j.at("r_diag"));
    set("lambda", cfg.discount);
    set("vi_tolerance", cfg.vi_tolerance);
    set("vi_max_iters", cfg.vi_max_iters);
    set("horizon", cfg.horizon);
    if (j.contains("input_bounds")) {
      const auto& b = j.at("input_bounds");
      if (b.is_null()) {
        cfg.input_bounds.reset();
      } else {
        cfg.input_bounds = InputBounds{vector_from_json(b.at("lo")), vector_from_json(b.at("hi"))};
      }
    }
    if (j.contains("x0")) cfg.x0 = vector_from_json(j.at("x0"));
    set("fig2_duration", cfg.fig2_duration);
    set("fig3_duration", cfg.fig3_duration);
    set("closed_loop_duration", cfg.closed_loop_duration);
    set("input_amplitude", cfg.input_amplitude);
    set("input_omega", cfg.input_omega);
    set("fig5_count", cfg.fig5_count);
    set("fig5_radius", cfg.fig5_radius);
    set("table1_steps", cfg.table1_steps);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError(std::string("experiment config: ") + e.what());
  }
  return cfg;
}

GridEmbedding state_grid(const ExperimentConfig& cfg) {
  return grid_embedding(cfg.grid_ranges, cfg.grid_counts, cfg.sigma, kernel_mode(cfg.kernel_mode));
}

GridEmbedding action_grid(const ExperimentConfig& cfg) {
  return grid_embedding(cfg.action_ranges, cfg.action_counts, cfg.action_sigma,
                        KernelMode::kNormalized);
}

AutonomousSetup build_autonomous(const ExperimentConfig& cfg) {
  const auto start = Clock::now();
  const ContinuousSystem sys = system_by_name(cfg.system);
  AutonomousSetup s{generate_dataset(sys, BoxSampler{cfg.state_box, {}}, cfg.k_autonomous, cfg.dt,
                                     cfg.seed, cfg.substeps, cfg.workers),
                    state_grid(cfg), {}, {}, 0.0};
  s.markov = fit_constrained(s.data, s.state.embedding, cfg.solver);
  s.koopman = fit_autonomous(s.data, s.state.embedding, cfg.koopman);
  s.fit_seconds = seconds_since(start);
  return s;
}

ControlledSetup build_controlled(const ExperimentConfig& cfg) {
  const auto start = Clock::now();
  const ContinuousSystem sys = system_by_name(cfg.system);
  ControlledSetup s{generate_dataset(sys, BoxSampler{cfg.state_box, cfg.input_box},
                                     cfg.k_controlled, cfg.dt, cfg.seed + 1, cfg.substeps,
                                     cfg.workers),
                    state_grid(cfg), action_grid(cfg), {}, {}, {}, 0.0};
  s.markov = fit_controlled(s.data, s.state.embedding, s.action.embedding, cfg.solver);
  s.linear = fit_linear(s.data, s.state.embedding, cfg.koopman);
  s.bilinear = fit_bilinear(s.data, s.state.embedding, cfg.koopman);
  s.fit_seconds = seconds_since(start);
  return s;
}

ControlSuite build_control_suite(const ExperimentConfig& cfg, ControlledSetup models) {
  ControlSuite suite{std::move(models), cfg.stage_cost(), {}, 0.0};
  const auto start = Clock::now();
  const Eigen::MatrixXd table = build_cost_table(suite.cost, suite.models.state.decoder.centers(),
                                                 suite.models.action.decoder.centers());
  suite.policy = value_iteration(suite.models.markov, table, cfg.vi_config());
  suite.vi_total_ms = 1e3 * seconds_since(start);
  return suite;
}

ControlSuite build_control_suite(const ExperimentConfig& cfg) {
  return build_control_suite(cfg, build_controlled(cfg));
}

double trajectory_rmse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() == 0) {
    throw ConfigurationError("rmse: trajectories differ in shape");
  }
  return std::sqrt((a - b).rowwise().squaredNorm().mean());
}

Fig2Result run_fig2(const ExperimentConfig& cfg, const AutonomousSetup* setup) {
  std::optional<AutonomousSetup> owned;
  if (!setup) setup = &owned.emplace(build_autonomous(cfg));
  const int steps = cfg.steps(cfg.fig2_duration);
  const ContinuousSystem sys = system_by_name(cfg.system);
  Fig2Result r;
  const Trajectory truth =
      simulate_closed_loop(sys, zero_controller(sys.input_dim), cfg.x0, steps, cfg.dt, cfg.substeps);
  const Prediction mc =
      rollout_decoded(setup->markov, setup->state.embedding, setup->state.decoder, cfg.x0, steps, cfg.dt);
  const Prediction ko = rollout_decoded(LiftedModel(setup->koopman), setup->state.embedding,
                                        setup->state.decoder, cfg.x0, InputSignal(), steps, cfg.dt);
  r.times = mc.times;
  r.truth = truth.states;
  r.markov = mc.states;
  r.koopman = ko.states;
  r.rmse_markov = trajectory_rmse(r.markov, r.truth);
  r.rmse_koopman = trajectory_rmse(r.koopman, r.truth);
  r.final_norm_truth = r.truth.bottomRows(1).norm();
  r.final_norm_markov = r.markov.bottomRows(1).norm();
  return r;
}

Fig3Result run_fig3(const ExperimentConfig& cfg, const ControlledSetup* setup) {
  std::optional<ControlledSetup> owned;
  if (!setup) setup = &owned.emplace(build_controlled(cfg));
  const int steps = cfg.steps(cfg.fig3_duration);
  const ContinuousSystem sys = system_by_name(cfg.system);
  const InputSignal signal = cosine_signal(cfg.input_amplitude, cfg.input_omega);
  const Trajectory truth =
      simulate_closed_loop(sys, playback_controller(signal), cfg.x0, steps, cfg.dt, cfg.substeps);
  const auto& emb = setup->state.embedding;
  const auto& dec = setup->state.decoder;
  Fig3Result r;
  r.truth = truth.states;
  const Prediction mc = rollout_decoded(setup->markov, emb, setup->action.embedding, dec, cfg.x0,
                                        signal, steps, cfg.dt);
  r.markov = mc.states;
  r.linear = rollout_decoded(LiftedModel(setup->linear), emb, dec, cfg.x0, signal, steps, cfg.dt).states;
  r.bilinear =
      rollout_decoded(LiftedModel(setup->bilinear), emb, dec, cfg.x0, signal, steps, cfg.dt).states;
  r.times = mc.times;
  r.inputs.resize(steps + 1);
  for (int t = 0; t <= steps; ++t) r.inputs(t) = signal(std::min(t, steps - 1) * cfg.dt)(0);
  r.rmse_markov = trajectory_rmse(r.markov, r.truth);
  r.rmse_linear = trajectory_rmse(r.linear, r.truth);
  r.rmse_bilinear = trajectory_rmse(r.bilinear, r.truth);
  return r;
}

const ClosedLoopRun& Fig4Result::run(const std::string& controller) const {
  for (const auto& r : runs) {
    if (r.controller == controller) return r;
  }
  throw UsageError("no closed-loop run for controller '" + controller + "'");
}

Fig4Result run_fig4(const ExperimentConfig& cfg, const ControlSuite* suite) {
  std::optional<ControlSuite> owned;
  if (!suite) suite = &owned.emplace(build_control_suite(cfg));
  const auto [lin, bil] = lifted_controllers(*suite, cfg);
  const int steps = cfg.steps(cfg.closed_loop_duration);
  Fig4Result r;
  for (const auto& name : kControllerNames) {
    r.runs.push_back(close_loop(name, *suite, cfg, cfg.x0, steps, lin, bil));
  }
  return r;
}

PointClusters cluster_points(const Eigen::MatrixXd& points, double link_distance) {
  const auto n = static_cast<int>(points.rows());
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (int i = 0; i < n; ++i) {
    for (int k = i + 1; k < n; ++k) {
      if ((points.row(i) - points.row(k)).norm() <= link_distance) parent[find(i)] = find(k);
    }
  }
  PointClusters out;
  out.labels.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> root_label(static_cast<std::size_t>(n), -1);
  int clusters = 0;
  for (int i = 0; i < n; ++i) {
    const int root = find(i);
    if (root_label[root] < 0) root_label[root] = clusters++;
    out.labels[i] = root_label[root];
  }
  out.centers = Eigen::MatrixXd::Zero(clusters, points.cols());
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(clusters);
  for (int i = 0; i < n; ++i) {
    out.centers.row(out.labels[i]) += points.row(i);
    counts(out.labels[i]) += 1.0;
  }
  for (int c = 0; c < clusters; ++c) out.centers.row(c) /= counts(c);
  out.radii = Eigen::VectorXd::Zero(clusters);
  for (int i = 0; i < n; ++i) {
    const int c = out.labels[i];
    out.radii(c) = std::max(out.radii(c), (points.row(i) - out.centers.row(c)).norm());
  }
  return out;
}

namespace {
std::size_t controller_index(const std::string& name) {
  for (std::size_t i = 0; i < kControllerNames.size(); ++i) {
    if (kControllerNames[i] == name) return i;
  }
  throw UsageError("unknown controller '" + name + "'");
}
}  // namespace

Eigen::MatrixXd Fig5Result::finals(const std::string& controller) const {
  const auto& rs = runs.at(controller_index(controller));
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rs.size()), initial_states.cols());
  for (std::size_t k = 0; k < rs.size(); ++k) {
    const auto idx = static_cast<Eigen::Index>(k);
    if (rs[k].failed) {
      out.row(idx).setConstant(std::numeric_limits<double>::infinity());
    } else {
      out.row(idx) = rs[k].trajectory.states.bottomRows(1);
    }
  }
  return out;
}

int Fig5Result::count_within(const std::string& controller, double radius) const {
  const Eigen::MatrixXd f = finals(controller);
  int count = 0;
  for (Eigen::Index k = 0; k < f.rows(); ++k) count += f.row(k).norm() < radius ? 1 : 0;
  return count;
}

PointClusters Fig5Result::clusters(const std::string& controller, double link_distance) const {
  return cluster_points(finals(controller), link_distance);
}

double Fig5Result::antipodal_gap(const std::string& controller) const {
  const Eigen::MatrixXd f = finals(controller);
  const Eigen::Index half = f.rows() / 2;
  double gap = 0.0;
  for (Eigen::Index k = 0; k < half; ++k) gap = std::max(gap, (f.row(k) + f.row(k + half)).norm());
  return gap;
}

Fig5Result run_fig5(const ExperimentConfig& cfg, const ControlSuite* suite) {
  std::optional<ControlSuite> owned;
  if (!suite) suite = &owned.emplace(build_control_suite(cfg));
  if (cfg.fig5_count < 1) throw ConfigurationError("fig5 needs at least one initial condition");
  const auto [lin, bil] = lifted_controllers(*suite, cfg);
  const int steps = cfg.steps(cfg.closed_loop_duration);
  Fig5Result r;
  r.initial_states.resize(cfg.fig5_count, 2);
  for (int k = 0; k < cfg.fig5_count; ++k) {
    const double theta = 2.0 * M_PI * k / cfg.fig5_count;
    r.initial_states.row(k) << cfg.fig5_radius * std::cos(theta), cfg.fig5_radius * std::sin(theta);
  }
  const int ncontrollers = static_cast<int>(kControllerNames.size());
  r.runs.assign(kControllerNames.size(), std::vector<ClosedLoopRun>(cfg.fig5_count));
  parallel_for(ncontrollers * cfg.fig5_count, cfg.workers, [&, lin = lin, bil = bil](int job) {
    const int c = job / cfg.fig5_count;
    const int k = job % cfg.fig5_count;
    r.runs[c][k] = close_loop(kControllerNames[c], *suite, cfg, r.initial_states.row(k).transpose(),
                              steps, lin, bil);
  });
  return r;
}

StepStats step_stats(const std::vector<double>& samples_ms) {
  StepStats s;
  s.samples = static_cast<int>(samples_ms.size());
  if (samples_ms.empty()) return s;
  s.mean_ms = std::accumulate(samples_ms.begin(), samples_ms.end(), 0.0) / s.samples;
  double var = 0.0;
  for (double v : samples_ms) var += (v - s.mean_ms) * (v - s.mean_ms);
  s.stddev_ms = s.samples > 1 ? std::sqrt(var / (s.samples - 1)) : 0.0;
  return s;
}

std::string hardware_note() {
  std::string model = "unknown cpu";
  std::ifstream cpuinfo("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpuinfo, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) model = line.substr(colon + 2);
      break;
    }
  }
  std::ostringstream out;
  out << model << "; " << std::thread::hardware_concurrency() << " hardware threads; compiler "
      << __VERSION__ << "; single-threaded solves";
  return out.str();
}

TimingReport run_table1(const ExperimentConfig& cfg, const ControlSuite* suite) {
  std::optional<ControlSuite> owned;
  if (!suite) suite = &owned.emplace(build_control_suite(cfg));
  const auto [lin, bil] = lifted_controllers(*suite, cfg);
  const int steps = std::max(cfg.table1_steps, cfg.steps(cfg.closed_loop_duration));
  TimingReport report;
  report.vi_total_ms = suite->vi_total_ms;
  report.hardware = hardware_note();
  for (const auto& name : kControllerNames) {
    const ClosedLoopRun run = close_loop(name, *suite, cfg, cfg.x0, steps, lin, bil);
    if (run.failed) report.warnings.push_back(name + " closed loop failed: " + run.error);
    const StepStats stats = step_stats(run.solve_ms);
    if (name == "vi") report.vi_policy = stats;
    if (name == "lin_mpc") report.lin_mpc = stats;
    if (name == "bil_mpc") report.bil_mpc = stats;
    if (name == "nmpc") report.nmpc = stats;
  }
  using Period = Clock::period;
  const double resolution_ms = 1e3 * static_cast<double>(Period::num) / Period::den;
  if (resolution_ms > 0.1) report.warnings.push_back("timer resolution is coarser than 0.1 ms");
  return report;
}

Json timing_to_json(const TimingReport& report) {
  auto stats = [](const StepStats& s) {
    return Json{{"mean_ms", s.mean_ms}, {"stddev_ms", s.stddev_ms}, {"samples", s.samples}};
  };
  return Json{{"vi_total_ms", report.vi_total_ms},
              {"vi_policy_per_step", stats(report.vi_policy)},
              {"lin_mpc_per_step", stats(report.lin_mpc)},
              {"bil_mpc_per_step", stats(report.bil_mpc)},
              {"nmpc_per_step", stats(report.nmpc)},
              {"hardware", report.hardware},
              {"warnings", report.warnings}};
}

std::string format_timing_table(const TimingReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "method      time [ms]\n";
  out << "VI          " << r.vi_total_ms << " (total), policy evaluation " << r.vi_policy.mean_ms
      << " +- " << r.vi_policy.stddev_ms << " per step\n";
  out << "lin-MPC     " << r.lin_mpc.mean_ms << " +- " << r.lin_mpc.stddev_ms << " per step ("
      << r.lin_mpc.samples << " solves)\n";
  out << "bil-MPC     " << r.bil_mpc.mean_ms << " +- " << r.bil_mpc.stddev_ms << " per step ("
      << r.bil_mpc.samples << " solves)\n";
  out << "NMPC        " << r.nmpc.mean_ms << " +- " << r.nmpc.stddev_ms << " per step ("
      << r.nmpc.samples << " solves)\n";
  out << "hardware: " << r.hardware << "\n";
  for (const auto& w : r.warnings) out << "warning: " << w << "\n";
  return out.str();
}

std::string run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  if (cfg.out_dir.empty()) throw ConfigurationError("run: an output directory is required");
  fs::create_directories(cfg.out_dir);
  auto path = [&cfg](const std::string& name) { return (fs::path(cfg.out_dir) / name).string(); };

  Json manifest;
  manifest["library_version"] = kLibraryVersion;
  manifest["experiment"] = cfg.experiment;
  manifest["config"] = config_to_json(cfg);
  manifest["seeds"] = {{"autonomous", cfg.seed}, {"controlled", cfg.seed + 1}};
  Json inputs = Json::object();
  Json timing = Json::object();
  std::vector<std::string> outputs;
  std::ostringstream summary;
  summary << std::setprecision(6);
  const auto start = Clock::now();

  const std::string& e = cfg.experiment;
  if (e == "fig2") {
    const AutonomousSetup setup = build_autonomous(cfg);
    timing["build_seconds"] = setup.fit_seconds;
    inputs["autonomous_dataset"] = dataset_hash(setup.data);
    const Fig2Result r = run_fig2(cfg, &setup);
    CsvTable t;
    t.header = {"t", "x1_true", "x2_true", "x1_mc", "x2_mc", "x1_ko", "x2_ko"};
    t.rows.resize(r.times.size(), 7);
    t.rows << r.times, r.truth, r.markov, r.koopman;
    write_csv(path("fig2.csv"), t);
    outputs.push_back("fig2.csv");
    summary << "fig2: rmse markov " << r.rmse_markov << ", koopman " << r.rmse_koopman
            << "; final norm truth " << r.final_norm_truth << ", markov " << r.final_norm_markov;
  } else if (e == "fig3") {
    const ControlledSetup setup = build_controlled(cfg);
    timing["build_seconds"] = setup.fit_seconds;
    inputs["controlled_dataset"] = dataset_hash(setup.data);
    const Fig3Result r = run_fig3(cfg, &setup);
    CsvTable t;
    t.header = {"t", "u", "x1_true", "x2_true", "x1_cmc", "x2_cmc",
                "x1_lin", "x2_lin", "x1_bil", "x2_bil"};
    t.rows.resize(r.times.size(), 10);
    t.rows << r.times, r.inputs, r.truth, r.markov, r.linear, r.bilinear;
    write_csv(path("fig3.csv"), t);
    outputs.push_back("fig3.csv");
    summary << "fig3: rmse cmc " << r.rmse_markov << ", linear " << r.rmse_linear << ", bilinear "
            << r.rmse_bilinear;
  } else if (e == "fig4" || e == "fig5" || e == "table1") {
    const ControlSuite suite = build_control_suite(cfg);
    timing["build_seconds"] = suite.models.fit_seconds;
    timing["vi_total_ms"] = suite.vi_total_ms;
    inputs["controlled_dataset"] = dataset_hash(suite.models.data);
    write_json_file(path("policy.json"), policy_to_json(suite.policy, suite.cost));
    outputs.push_back("policy.json");
    if (e == "fig4") {
      const Fig4Result r = run_fig4(cfg, &suite);
      summary << "fig4 final norms:";
      for (const auto& run : r.runs) {
        const std::string name = "fig4_" + run.controller + ".csv";
        if (!run.failed) {
          write_csv(path(name), trajectory_table(run, cfg.dt, std::nullopt));
          outputs.push_back(name);
        }
        summary << " " << run.controller << " " << (run.failed ? "failed: " + run.error : "")
                << run.final_norm;
      }
    } else if (e == "fig5") {
      const Fig5Result r = run_fig5(cfg, &suite);
      CsvTable finals;
      finals.header = {"controller", "ic", "x0_1", "x0_2", "xf_1", "xf_2", "norm"};
      const Eigen::Index count = r.initial_states.rows();
      finals.rows.resize(static_cast<Eigen::Index>(kControllerNames.size()) * count, 7);
      summary << "fig5 finals within 0.1:";
      for (std::size_t c = 0; c < kControllerNames.size(); ++c) {
        std::vector<CsvTable> parts;
        for (Eigen::Index k = 0; k < count; ++k) {
          const auto& run = r.runs[c][static_cast<std::size_t>(k)];
          if (!run.failed) parts.push_back(trajectory_table(run, cfg.dt, static_cast<int>(k)));
        }
        const std::string name = "fig5_" + kControllerNames[c] + ".csv";
        if (!parts.empty()) {
          write_csv(path(name), stack_tables(parts));
          outputs.push_back(name);
        }
        const Eigen::MatrixXd f = r.finals(kControllerNames[c]);
        for (Eigen::Index k = 0; k < count; ++k) {
          finals.rows.row(static_cast<Eigen::Index>(c) * count + k)
              << static_cast<double>(c), static_cast<double>(k), r.initial_states(k, 0),
              r.initial_states(k, 1), f(k, 0), f(k, 1), f.row(k).norm();
        }
        summary << " " << kControllerNames[c] << " " << r.count_within(kControllerNames[c], 0.1)
                << "/" << count;
      }
      write_csv(path("fig5_finals.csv"), finals);
      outputs.push_back("fig5_finals.csv");
      manifest["controller_ids"] = kControllerNames;
    } else {
      const TimingReport report = run_table1(cfg, &suite);
      timing["table1"] = timing_to_json(report);
      std::ofstream(path("table1.txt")) << format_timing_table(report);
      summary << "table1: per-step ms lin " << report.lin_mpc.mean_ms << ", bil "
              << report.bil_mpc.mean_ms << ", nmpc " << report.nmpc.mean_ms << "; vi total "
              << report.vi_total_ms;
    }
  } else {
    throw ConfigurationError("unknown experiment '" + e + "' (fig2 | fig3 | fig4 | fig5 | table1)");
  }

  timing["total_seconds"] = seconds_since(start);
  write_json_file(path("timing.json"), timing);
  manifest["inputs"] = inputs;
  Json hashes = Json::object();
  for (const auto& name : outputs) hashes[name] = file_fingerprint(path(name));
  manifest["outputs"] = hashes;
  write_json_file(path("manifest.json"), manifest);
  return summary.str();
}

}  // namespace lifted_dyn
