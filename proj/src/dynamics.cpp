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
#include "lifted_dyn/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include "lifted_dyn/errors.hpp"

namespace lifted_dyn {

Eigen::VectorXd ContinuousSystem::operator()(const Eigen::VectorXd& x,
                                             const Eigen::VectorXd& u) const {
  return vector_field(x, u);
}

ContinuousSystem vanderpol() {
  ContinuousSystem sys;
  sys.name = "vdp";
  sys.state_dim = 2;
  sys.input_dim = 1;
  sys.vector_field = [](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    Eigen::VectorXd dx(2);
    dx(0) = x(0) - x(0) * x(0) * x(0) / 3.0 - x(1);
    dx(1) = x(0) + u(0);
    return dx;
  };
  sys.jacobian = [](const Eigen::VectorXd& x, const Eigen::VectorXd&, Eigen::MatrixXd& fx,
                    Eigen::MatrixXd& fu) {
    fx.resize(2, 2);
    fx << 1.0 - x(0) * x(0), -1.0, 1.0, 0.0;
    fu.resize(2, 1);
    fu << 0.0, 1.0;
  };
  return sys;
}

ContinuousSystem system_by_name(const std::string& name) {
  if (name == "vdp" || name == "vanderpol") return vanderpol();
  throw ConfigurationError("unknown system '" + name + "'");
}

Eigen::VectorXd step_zoh(const ContinuousSystem& sys, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& u, double dt, int substeps) {
  if (!(dt > 0.0)) throw ConfigurationError("step_zoh: dt must be positive");
  if (substeps < 1) throw ConfigurationError("step_zoh: substeps must be >= 1");
  if (x.size() != sys.state_dim || u.size() != sys.input_dim) {
    throw ConfigurationError("step_zoh: state/input dimension mismatch for system " +
                             sys.name);
  }
  const double h = dt / substeps;
  Eigen::VectorXd state = x;
  for (int s = 0; s < substeps; ++s) {
    const Eigen::VectorXd k1 = sys.vector_field(state, u);
    const Eigen::VectorXd k2 = sys.vector_field(state + 0.5 * h * k1, u);
    const Eigen::VectorXd k3 = sys.vector_field(state + 0.5 * h * k2, u);
    const Eigen::VectorXd k4 = sys.vector_field(state + h * k3, u);
    state += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!state.allFinite()) {
      throw IntegrationDivergedError(
          "step_zoh: non-finite state at substep " + std::to_string(s), s);
    }
  }
  return state;
}

void SnapshotDataset::validate() const {
  if (states.rows() < 1) throw ConfigurationError("dataset: K must be >= 1");
  if (next_states.rows() != states.rows() || next_states.cols() != states.cols()) {
    throw ConfigurationError("dataset: states and next_states shapes differ");
  }
  if (inputs && inputs->rows() != states.rows()) {
    throw ConfigurationError("dataset: inputs must have K rows");
  }
}

namespace {

// 53-bit uniform in [0, 1); independent of the standard library's
// distribution implementations.
double unit_uniform(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

void check_box(const std::vector<Interval>& box, std::size_t dim, const char* what) {
  if (box.size() != dim) {
    throw ConfigurationError(std::string("sampler: ") + what + " box has " +
                             std::to_string(box.size()) + " intervals, expected " +
                             std::to_string(dim));
  }
  for (const auto& iv : box) {
    if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || iv.lo > iv.hi) {
      throw ConfigurationError(std::string("sampler: empty or invalid ") + what + " interval");
    }
  }
}

}  // namespace

SnapshotDataset generate_dataset(const ContinuousSystem& sys, const BoxSampler& sampler,
                                 Eigen::Index count, double dt, std::uint64_t seed,
                                 int substeps, int workers) {
  if (count < 1) throw ConfigurationError("generate_dataset: K must be >= 1");
  check_box(sampler.state_box, static_cast<std::size_t>(sys.state_dim), "state");
  const bool controlled = !sampler.input_box.empty();
  if (controlled) check_box(sampler.input_box, static_cast<std::size_t>(sys.input_dim), "input");

  const int n = sys.state_dim;
  const int m = sys.input_dim;
  SnapshotDataset data;
  data.dt = dt;
  data.states.resize(count, n);
  data.next_states.resize(count, n);
  if (controlled) data.inputs = Eigen::MatrixXd(count, m);

  const Eigen::Index blocks = (count + kDatasetBlockSize - 1) / kDatasetBlockSize;
  auto run_block = [&](Eigen::Index b) {
    const Eigen::Index start = b * kDatasetBlockSize;
    const Eigen::Index stop = std::min(count, start + kDatasetBlockSize);
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(start & 0xffffffff),
                      static_cast<std::uint32_t>(static_cast<std::uint64_t>(start) >> 32)};
    std::mt19937_64 gen(seq);
    Eigen::VectorXd x(n);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(m);
    for (Eigen::Index k = start; k < stop; ++k) {
      for (int i = 0; i < n; ++i) {
        const auto& iv = sampler.state_box[i];
        x(i) = iv.lo + (iv.hi - iv.lo) * unit_uniform(gen);
      }
      if (controlled) {
        for (int i = 0; i < m; ++i) {
          const auto& iv = sampler.input_box[i];
          u(i) = iv.lo + (iv.hi - iv.lo) * unit_uniform(gen);
        }
        data.inputs->row(k) = u.transpose();
      }
      data.states.row(k) = x.transpose();
      data.next_states.row(k) = step_zoh(sys, x, u, dt, substeps).transpose();
    }
  };

  const int threads = std::max(1, std::min<int>(workers, static_cast<int>(blocks)));
  if (threads == 1) {
    for (Eigen::Index b = 0; b < blocks; ++b) run_block(b);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> failures(threads);
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (Eigen::Index b = w; b < blocks; b += threads) run_block(b);
        } catch (...) {
          failures[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& f : failures) {
      if (f) std::rethrow_exception(f);
    }
  }
  return data;
}

Controller zero_controller(int input_dim) {
  return [input_dim](double, const Eigen::VectorXd&) {
    return Eigen::VectorXd::Zero(input_dim).eval();
  };
}

Controller playback_controller(InputSignal signal) {
  return [signal = std::move(signal)](double t, const Eigen::VectorXd&) { return signal(t); };
}

InputSignal cosine_signal(double amplitude, double omega) {
  return [amplitude, omega](double t) {
    Eigen::VectorXd u(1);
    u(0) = amplitude * std::cos(omega * t);
    return u;
  };
}

Trajectory simulate_closed_loop(const ContinuousSystem& sys, const Controller& controller,
                                const Eigen::VectorXd& x0, int steps, double dt,
                                int substeps) {
  if (steps < 1) throw ConfigurationError("simulate_closed_loop: steps must be >= 1");
  Trajectory traj;
  traj.dt = dt;
  traj.states.resize(steps + 1, sys.state_dim);
  traj.inputs.resize(steps, sys.input_dim);
  traj.states.row(0) = x0.transpose();
  Eigen::VectorXd x = x0;
  for (int t = 0; t < steps; ++t) {
    Eigen::VectorXd u;
    try {
      u = controller(t * dt, x);
    } catch (const std::exception& e) {
      throw ControllerError("controller failed at step " + std::to_string(t) + ": " + e.what(),
                            t);
    }
    if (u.size() != sys.input_dim) {
      throw ControllerError("controller returned wrong input dimension at step " +
                                std::to_string(t),
                            t);
    }
    traj.inputs.row(t) = u.transpose();
    x = step_zoh(sys, x, u, dt, substeps);
    traj.states.row(t + 1) = x.transpose();
  }
  return traj;
}

}  // namespace lifted_dyn
