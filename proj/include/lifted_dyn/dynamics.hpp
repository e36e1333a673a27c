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
#ifndef LIFTED_DYN_DYNAMICS_HPP
#define LIFTED_DYN_DYNAMICS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace lifted_dyn {

/**
 * @brief Continuous-time controlled system  x' = f(x, u).
 *
 * The optional Jacobian callback returns (df/dx, df/du); consumers fall back
 * to central differences when it is absent.
 */
struct ContinuousSystem {
  using VectorField =
      std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>;
  using Jacobian = std::function<void(const Eigen::VectorXd&, const Eigen::VectorXd&,
                                      Eigen::MatrixXd& fx, Eigen::MatrixXd& fu)>;

  std::string name;
  int state_dim = 0;
  int input_dim = 0;
  VectorField vector_field;
  Jacobian jacobian;

  Eigen::VectorXd operator()(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
};

/// Van der Pol oscillator:  x1' = x1 - x1^3/3 - x2,  x2' = x1 + u.
ContinuousSystem vanderpol();

/// Looks up a shipped system by name ("vdp").
ContinuousSystem system_by_name(const std::string& name);

/**
 * @brief Advances the state by dt with the input held constant (zero-order
 * hold), using `substeps` equal classical RK4 steps.
 *
 * Throws IntegrationDivergedError if the state becomes non-finite.
 */
Eigen::VectorXd step_zoh(const ContinuousSystem& sys, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& u, double dt, int substeps = 10);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Independent uniform draws over axis-aligned boxes. An empty input box
/// produces an autonomous dataset integrated with u = 0.
struct BoxSampler {
  std::vector<Interval> state_box;
  std::vector<Interval> input_box;
};

struct SnapshotDataset {
  Eigen::MatrixXd states;                 // K x n
  std::optional<Eigen::MatrixXd> inputs;  // K x m
  Eigen::MatrixXd next_states;            // K x n
  double dt = 0.0;

  Eigen::Index size() const { return states.rows(); }
  Eigen::Index state_dim() const { return states.cols(); }
  Eigen::Index input_dim() const { return inputs ? inputs->cols() : 0; }
  bool has_inputs() const { return inputs.has_value(); }

  /// Throws ConfigurationError when row counts disagree or K == 0.
  void validate() const;
};

/// Samples are generated in fixed-size blocks, each with its own generator
/// seeded from (seed, block start), so the result does not depend on the
/// number of workers.
inline constexpr Eigen::Index kDatasetBlockSize = 4096;

SnapshotDataset generate_dataset(const ContinuousSystem& sys, const BoxSampler& sampler,
                                 Eigen::Index count, double dt, std::uint64_t seed,
                                 int substeps = 10, int workers = 1);

/// State feedback with access to the current time.
using Controller = std::function<Eigen::VectorXd(double t, const Eigen::VectorXd& x)>;
using InputSignal = std::function<Eigen::VectorXd(double t)>;

Controller zero_controller(int input_dim);
/// Open-loop playback of a time signal, ignoring the state.
Controller playback_controller(InputSignal signal);
/// u(t) = amplitude * cos(omega * t) for a single-input system.
InputSignal cosine_signal(double amplitude, double omega = 1.0);

struct Trajectory {
  Eigen::MatrixXd states;  // (steps + 1) x n
  Eigen::MatrixXd inputs;  // steps x m
  double dt = 0.0;
};

/// Runs u_t = controller(t, x_t), x_{t+1} = step_zoh(x_t, u_t). Controller
/// exceptions are rethrown as ControllerError carrying the step index.
Trajectory simulate_closed_loop(const ContinuousSystem& sys, const Controller& controller,
                                const Eigen::VectorXd& x0, int steps, double dt,
                                int substeps = 10);

}  // namespace lifted_dyn

#endif  // LIFTED_DYN_DYNAMICS_HPP
