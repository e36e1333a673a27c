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
#ifndef LIFTED_DYN_HARNESS_HPP
#define LIFTED_DYN_HARNESS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lifted_dyn/control.hpp"
#include "lifted_dyn/dynamics.hpp"
#include "lifted_dyn/embedding.hpp"
#include "lifted_dyn/koopman_model.hpp"
#include "lifted_dyn/markov_model.hpp"
#include "lifted_dyn/serialization.hpp"

namespace lifted_dyn {

inline constexpr const char* kLibraryVersion = "0.1.0";

struct ExperimentConfig {
  std::string experiment = "fig2";  // fig2 | fig3 | fig4 | fig5 | table1
  std::string profile = "paper";
  std::string system = "vdp";

  // Data. The controlled dataset uses seed + 1.
  double dt = 0.1;
  int substeps = 10;
  std::uint64_t seed = 7;
  int workers = 1;
  Eigen::Index k_autonomous = 100000;
  Eigen::Index k_controlled = 100000;
  std::vector<Interval> state_box{{-4.5, 4.5}, {-4.5, 4.5}};
  std::vector<Interval> input_box{{-3.0, 3.0}};

  // Embeddings.
  std::vector<Interval> grid_ranges{{-4.5, 4.5}, {-4.5, 4.5}};
  std::vector<int> grid_counts{9, 9};
  double sigma = 0.75;
  std::string kernel_mode = "normalized";
  std::vector<Interval> action_ranges{{-3.0, 3.0}};
  std::vector<int> action_counts{9};
  double action_sigma = 1.5;

  // Calibration.
  ProjectedGradientConfig solver;
  KoopmanFitConfig koopman;

  // Control.
  Eigen::VectorXd q_diag = Eigen::Vector2d(1.0, 1.0);
  Eigen::VectorXd r_diag = Eigen::VectorXd::Constant(1, 0.5);
  double discount = 0.999;
  double vi_tolerance = 1e-8;
  int vi_max_iters = 100000;
  int horizon = 50;
  std::optional<InputBounds> input_bounds;

  // Scenarios.
  Eigen::VectorXd x0 = Eigen::Vector2d(3.0, 3.0);
  double fig2_duration = 10.0;
  double fig3_duration = 5.0;
  double closed_loop_duration = 10.0;
  double input_amplitude = 2.0;
  double input_omega = 1.0;
  int fig5_count = 16;
  double fig5_radius = 4.242640687119285;  // 3 sqrt(2)
  int table1_steps = 100;

  std::string out_dir;

  StageCost stage_cost() const;
  MpcConfig mpc_config() const;
  ValueIterationConfig vi_config() const;
  int steps(double duration) const;
};

/// "quick": K = 1e4 and solver tolerance 1e-6; "paper": K = 1e5 and 1e-9.
ExperimentConfig profile_config(const std::string& profile);

Json config_to_json(const ExperimentConfig& cfg);
/// Fields absent from `j` keep their value in `base`. Accepts a manifest
/// (reads its "config" member).
ExperimentConfig config_from_json(const Json& j, ExperimentConfig base = {});

struct AutonomousSetup {
  SnapshotDataset data;
  GridEmbedding state;
  MarkovChainModel markov;
  KoopmanAutonomous koopman;
  double fit_seconds = 0.0;
};

struct ControlledSetup {
  SnapshotDataset data;
  GridEmbedding state;
  GridEmbedding action;
  ControlledMarkovModel markov;
  KoopmanLinear linear;
  KoopmanBilinear bilinear;
  double fit_seconds = 0.0;
};

struct ControlSuite {
  ControlledSetup models;
  StageCost cost;
  TabularPolicy policy;
  double vi_total_ms = 0.0;
};

GridEmbedding state_grid(const ExperimentConfig& cfg);
GridEmbedding action_grid(const ExperimentConfig& cfg);
AutonomousSetup build_autonomous(const ExperimentConfig& cfg);
ControlledSetup build_controlled(const ExperimentConfig& cfg);
ControlSuite build_control_suite(const ExperimentConfig& cfg);
ControlSuite build_control_suite(const ExperimentConfig& cfg, ControlledSetup models);

/// sqrt(mean_t ||a_t - b_t||^2) over matching rows.
double trajectory_rmse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct Fig2Result {
  Eigen::VectorXd times;
  Eigen::MatrixXd truth, markov, koopman;
  double rmse_markov = 0.0;
  double rmse_koopman = 0.0;
  double final_norm_truth = 0.0;
  double final_norm_markov = 0.0;
};

struct Fig3Result {
  Eigen::VectorXd times;
  Eigen::VectorXd inputs;  // ZOH input per step (last entry repeats)
  Eigen::MatrixXd truth, markov, linear, bilinear;
  double rmse_markov = 0.0;
  double rmse_linear = 0.0;
  double rmse_bilinear = 0.0;
};

inline const std::vector<std::string> kControllerNames{"vi", "lin_mpc", "bil_mpc", "nmpc"};

struct ClosedLoopRun {
  std::string controller;
  Eigen::VectorXd x0;
  Trajectory trajectory;
  double final_norm = 0.0;
  bool failed = false;
  std::string error;
  std::vector<double> solve_ms;  // wall time of each controller call
};

struct Fig4Result {
  std::vector<ClosedLoopRun> runs;  // one per controller, kControllerNames order
  const ClosedLoopRun& run(const std::string& controller) const;
};

struct PointClusters {
  Eigen::MatrixXd centers;  // one row per cluster
  Eigen::VectorXd radii;    // max distance of a member to its center
  std::vector<int> labels;
};

/// Single-linkage clustering with the given link distance.
PointClusters cluster_points(const Eigen::MatrixXd& points, double link_distance);

struct Fig5Result {
  Eigen::MatrixXd initial_states;           // count x n
  std::vector<std::vector<ClosedLoopRun>> runs;  // [controller][ic]
  Eigen::MatrixXd finals(const std::string& controller) const;
  int count_within(const std::string& controller, double radius) const;
  PointClusters clusters(const std::string& controller, double link_distance = 0.2) const;
  /// max_k ||x_f(k) + x_f(k + count/2)|| for the given controller.
  double antipodal_gap(const std::string& controller) const;
};

struct StepStats {
  double mean_ms = 0.0;
  double stddev_ms = 0.0;
  int samples = 0;
};

struct TimingReport {
  double vi_total_ms = 0.0;
  StepStats vi_policy;  // per-step evaluation of the decoded policy
  StepStats lin_mpc;
  StepStats bil_mpc;
  StepStats nmpc;
  std::string hardware;
  std::vector<std::string> warnings;
};

Fig2Result run_fig2(const ExperimentConfig& cfg, const AutonomousSetup* setup = nullptr);
Fig3Result run_fig3(const ExperimentConfig& cfg, const ControlledSetup* setup = nullptr);
Fig4Result run_fig4(const ExperimentConfig& cfg, const ControlSuite* suite = nullptr);
Fig5Result run_fig5(const ExperimentConfig& cfg, const ControlSuite* suite = nullptr);
TimingReport run_table1(const ExperimentConfig& cfg, const ControlSuite* suite = nullptr);

StepStats step_stats(const std::vector<double>& samples_ms);
Json timing_to_json(const TimingReport& report);
std::string format_timing_table(const TimingReport& report);
std::string hardware_note();

/// Runs cfg.experiment, writing its CSVs, manifest.json and timing.json into
/// cfg.out_dir. Returns a one-line summary.
std::string run_experiment(const ExperimentConfig& cfg);

}  // namespace lifted_dyn

#endif  // LIFTED_DYN_HARNESS_HPP
