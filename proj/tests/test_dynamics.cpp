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
#include <gtest/gtest.h>

#include <cmath>

#include "lifted_dyn/dynamics.hpp"
#include "lifted_dyn/errors.hpp"

namespace lifted_dyn {
namespace {

ContinuousSystem decay() {
  ContinuousSystem sys;
  sys.name = "decay";
  sys.state_dim = 1;
  sys.input_dim = 0;
  sys.vector_field = [](const Eigen::VectorXd& x, const Eigen::VectorXd&) -> Eigen::VectorXd {
    return -x;
  };
  return sys;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

TEST(VanDerPol, VectorField) {
  const auto sys = vanderpol();
  EXPECT_EQ(sys.state_dim, 2);
  EXPECT_EQ(sys.input_dim, 1);
  EXPECT_TRUE(sys(vec({3, 3}), vec({0})).isApprox(vec({-9, 3}), 1e-14));
  EXPECT_EQ(sys(vec({0, 0}), vec({0})), vec({0, 0}));
  EXPECT_EQ(sys(vec({0, 0}), vec({2})), vec({0, 2}));
}

TEST(VanDerPol, JacobianMatchesFiniteDifferences) {
  const auto sys = vanderpol();
  ASSERT_TRUE(static_cast<bool>(sys.jacobian));
  const Eigen::VectorXd x = vec({1.3, -0.7});
  const Eigen::VectorXd u = vec({0.4});
  Eigen::MatrixXd fx, fu;
  sys.jacobian(x, u, fx, fu);
  const double h = 1e-6;
  for (int i = 0; i < 2; ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    const Eigen::VectorXd col = (sys(xp, u) - sys(xm, u)) / (2 * h);
    EXPECT_LT((fx.col(i) - col).norm(), 1e-8);
  }
  const Eigen::VectorXd du = (sys(x, u + vec({h})) - sys(x, u - vec({h}))) / (2 * h);
  EXPECT_LT((fu.col(0) - du).norm(), 1e-8);
}

TEST(SystemLookup, UnknownName) {
  EXPECT_EQ(system_by_name("vdp").name, vanderpol().name);
  EXPECT_THROW(system_by_name("pendulum"), ConfigurationError);
}

TEST(StepZoh, ExponentialDecay) {
  const auto x = step_zoh(decay(), vec({1.0}), Eigen::VectorXd(0), 0.1, 1);
  EXPECT_NEAR(x(0), 0.90483742, 1e-7);
}

TEST(StepZoh, ChainedHalfStepsEqualDoubledSubsteps) {
  const auto sys = vanderpol();
  const Eigen::VectorXd x0 = vec({1.5, -2.0});
  const Eigen::VectorXd u = vec({0.8});
  const auto half = step_zoh(sys, step_zoh(sys, x0, u, 0.05, 3), u, 0.05, 3);
  const auto whole = step_zoh(sys, x0, u, 0.1, 6);
  EXPECT_LT((half - whole).norm(), 1e-14);
}

TEST(StepZoh, EquilibriumIsFixed) {
  const auto sys = vanderpol();
  for (double dt : {0.01, 0.1, 1.0}) {
    EXPECT_EQ(step_zoh(sys, vec({0, 0}), vec({0}), dt), vec({0, 0}));
  }
}

TEST(StepZoh, FourthOrderConvergence) {
  const auto sys = decay();
  const Eigen::VectorXd none(0);
  const double dt = 0.1;
  const double exact = std::exp(-dt);
  double prev = std::abs(step_zoh(sys, vec({1.0}), none, dt, 1)(0) - exact);
  for (int level = 1; level <= 3; ++level) {
    const int substeps = 1 << level;
    const double err = std::abs(step_zoh(sys, vec({1.0}), none, dt, substeps)(0) - exact);
    const double factor = prev / err;
    EXPECT_GE(factor, 14.0) << "substeps " << substeps;
    EXPECT_LE(factor, 18.0) << "substeps " << substeps;
    prev = err;
  }
}

TEST(StepZoh, RejectsBadArguments) {
  const auto sys = vanderpol();
  EXPECT_THROW(step_zoh(sys, vec({0, 0}), vec({0}), 0.0), ConfigurationError);
  EXPECT_THROW(step_zoh(sys, vec({0, 0}), vec({0}), 0.1, 0), ConfigurationError);
  EXPECT_THROW(step_zoh(sys, vec({0}), vec({0}), 0.1), ConfigurationError);
}

TEST(StepZoh, DivergenceNamesSubstep) {
  ContinuousSystem blowup;
  blowup.name = "blowup";
  blowup.state_dim = 1;
  blowup.vector_field = [](const Eigen::VectorXd& x, const Eigen::VectorXd&) -> Eigen::VectorXd {
    return x.array().square().matrix() * 1e200;
  };
  try {
    step_zoh(blowup, vec({1e100}), Eigen::VectorXd(0), 1.0, 4);
    FAIL() << "expected IntegrationDivergedError";
  } catch (const IntegrationDivergedError& e) {
    EXPECT_GE(e.substep(), 0);
    EXPECT_LT(e.substep(), 4);
  }
}

TEST(GenerateDataset, DegenerateSampler) {
  const auto sys = vanderpol();
  const BoxSampler sampler{{{3, 3}, {3, 3}}, {{0, 0}}};
  const auto data = generate_dataset(sys, sampler, 1, 0.1, 1);
  ASSERT_EQ(data.size(), 1);
  EXPECT_EQ(data.states.row(0).transpose(), vec({3, 3}));
  EXPECT_EQ(data.next_states.row(0).transpose(), step_zoh(sys, vec({3, 3}), vec({0}), 0.1));
}

TEST(GenerateDataset, SameSeedIsBitIdentical) {
  const auto sys = vanderpol();
  const BoxSampler sampler{{{-4.5, 4.5}, {-4.5, 4.5}}, {{-3, 3}}};
  const auto a = generate_dataset(sys, sampler, 5000, 0.1, 11);
  const auto b = generate_dataset(sys, sampler, 5000, 0.1, 11);
  const auto c = generate_dataset(sys, sampler, 5000, 0.1, 12);
  EXPECT_EQ(a.states, b.states);
  EXPECT_EQ(*a.inputs, *b.inputs);
  EXPECT_EQ(a.next_states, b.next_states);
  EXPECT_NE(a.states, c.states);
}

TEST(GenerateDataset, IndependentOfWorkerCount) {
  const auto sys = vanderpol();
  const BoxSampler sampler{{{-4.5, 4.5}, {-4.5, 4.5}}, {{-3, 3}}};
  const auto one = generate_dataset(sys, sampler, 10000, 0.1, 5, 10, 1);
  const auto four = generate_dataset(sys, sampler, 10000, 0.1, 5, 10, 4);
  EXPECT_EQ(one.states, four.states);
  EXPECT_EQ(*one.inputs, *four.inputs);
  EXPECT_EQ(one.next_states, four.next_states);
}

TEST(GenerateDataset, UniformSampleMean) {
  const BoxSampler sampler{{{-4.5, 4.5}, {-4.5, 4.5}}, {}};
  const auto data = generate_dataset(vanderpol(), sampler, 10000, 0.1, 3);
  EXPECT_FALSE(data.has_inputs());
  const Eigen::VectorXd mean = data.states.colwise().mean();
  EXPECT_LT(std::abs(mean(0)), 0.1);
  EXPECT_LT(std::abs(mean(1)), 0.1);
  EXPECT_LE(data.states.maxCoeff(), 4.5);
  EXPECT_GE(data.states.minCoeff(), -4.5);
}

TEST(GenerateDataset, RejectsEmptyRegion) {
  const auto sys = vanderpol();
  EXPECT_THROW(generate_dataset(sys, BoxSampler{{{1, 0}, {0, 1}}, {}}, 10, 0.1, 1),
               ConfigurationError);
  EXPECT_THROW(generate_dataset(sys, BoxSampler{{{0, 1}}, {}}, 10, 0.1, 1), ConfigurationError);
  EXPECT_THROW(generate_dataset(sys, BoxSampler{{{0, 1}, {0, 1}}, {}}, 0, 0.1, 1),
               ConfigurationError);
}

TEST(SimulateClosedLoop, ZeroControllerAtOrigin) {
  const auto traj = simulate_closed_loop(vanderpol(), zero_controller(1), vec({0, 0}), 20, 0.1);
  EXPECT_EQ(traj.states.rows(), 21);
  EXPECT_EQ(traj.inputs.rows(), 20);
  EXPECT_EQ(traj.states.norm(), 0.0);
}

TEST(SimulateClosedLoop, ZeroControllerMatchesOpenLoop) {
  const auto sys = vanderpol();
  const auto traj = simulate_closed_loop(sys, zero_controller(1), vec({3, 3}), 100, 0.1);
  Eigen::VectorXd x = vec({3, 3});
  for (int t = 0; t < 100; ++t) x = step_zoh(sys, x, vec({0}), 0.1);
  EXPECT_EQ(traj.states.row(100).transpose(), x);
}

TEST(SimulateClosedLoop, PlaybackFollowsSignal) {
  const auto sys = vanderpol();
  const auto signal = cosine_signal(2.0);
  const auto traj = simulate_closed_loop(sys, playback_controller(signal), vec({1, 0}), 50, 0.1);
  Eigen::VectorXd x = vec({1, 0});
  for (int t = 0; t < 50; ++t) {
    EXPECT_DOUBLE_EQ(traj.inputs(t, 0), 2.0 * std::cos(0.1 * t));
    x = step_zoh(sys, x, signal(0.1 * t), 0.1);
  }
  EXPECT_EQ(traj.states.row(50).transpose(), x);
}

TEST(SimulateClosedLoop, ControllerFailureCarriesStep) {
  Controller bad = [](double t, const Eigen::VectorXd&) -> Eigen::VectorXd {
    if (t > 0.25) throw std::runtime_error("boom");
    return Eigen::VectorXd::Zero(1);
  };
  try {
    simulate_closed_loop(vanderpol(), bad, vec({1, 1}), 10, 0.1);
    FAIL() << "expected ControllerError";
  } catch (const ControllerError& e) {
    EXPECT_EQ(e.step(), 3);
  }
}

}  // namespace
}  // namespace lifted_dyn
