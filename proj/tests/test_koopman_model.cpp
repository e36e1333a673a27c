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

#include <random>

#include "lifted_dyn/errors.hpp"
#include "lifted_dyn/koopman_model.hpp"
#include "oracles.hpp"

namespace lifted_dyn {
namespace {

struct Planted {
  Eigen::MatrixXd A, B;
  std::vector<Eigen::MatrixXd> H;
};

// x+ = A x + B u + sum_l u_l H_l x on random states and inputs.
SnapshotDataset synthesize(const Planted& p, Eigen::Index k, std::mt19937_64& gen) {
  SnapshotDataset data;
  data.dt = 0.1;
  data.states = oracle::random_matrix(k, p.A.rows(), gen);
  data.next_states = data.states * p.A.transpose();
  if (p.B.size() > 0) {
    data.inputs = oracle::random_matrix(k, p.B.cols(), gen);
    data.next_states += *data.inputs * p.B.transpose();
    for (std::size_t l = 0; l < p.H.size(); ++l) {
      data.next_states.array() += (data.states * p.H[l].transpose()).array().colwise() *
                                  data.inputs->col(static_cast<Eigen::Index>(l)).array();
    }
  }
  return data;
}

TEST(FitAutonomous, RecoversPlantedMap) {
  std::mt19937_64 gen(40);
  const Planted p{oracle::random_matrix(4, 4, gen, 0.5), {}, {}};
  const auto data = synthesize(p, 200, gen);
  const auto model = fit_autonomous(data, IdentityLifting(4));
  EXPECT_LT((model.A - p.A).lpNorm<Eigen::Infinity>(), 1e-8);
  EXPECT_EQ(model.diagnostics.ridge, 0.0);
  EXPECT_FALSE(model.diagnostics.rank_deficient);
}

TEST(FitAutonomous, FixedPointsGiveIdentity) {
  std::mt19937_64 gen(41);
  SnapshotDataset data;
  data.states = oracle::random_matrix(50, 3, gen);
  data.next_states = data.states;
  const auto model = fit_autonomous(data, IdentityLifting(3));
  EXPECT_LT((model.A - Eigen::MatrixXd::Identity(3, 3)).lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST(FitAutonomous, FlagsIgnoredInputs) {
  std::mt19937_64 gen(42);
  const Planted p{oracle::random_matrix(2, 2, gen), oracle::random_matrix(2, 1, gen), {}};
  const auto model = fit_autonomous(synthesize(p, 40, gen), IdentityLifting(2));
  EXPECT_FALSE(model.diagnostics.warnings.empty());
}

TEST(FitLinear, RecoversPlantedPair) {
  std::mt19937_64 gen(43);
  const Planted p{oracle::random_matrix(4, 4, gen, 0.5), oracle::random_matrix(4, 2, gen), {}};
  const auto model = fit_linear(synthesize(p, 300, gen), IdentityLifting(4));
  EXPECT_LT((model.A - p.A).lpNorm<Eigen::Infinity>(), 1e-8);
  EXPECT_LT((model.B - p.B).lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST(FitLinear, ZeroInputsMatchAutonomousAndAreFlagged) {
  std::mt19937_64 gen(44);
  const Planted p{oracle::random_matrix(3, 3, gen, 0.5), {}, {}};
  auto data = synthesize(p, 100, gen);
  const auto autonomous = fit_autonomous(data, IdentityLifting(3));
  data.inputs = Eigen::MatrixXd::Zero(100, 1);
  const auto linear = fit_linear(data, IdentityLifting(3));
  EXPECT_LT((linear.A - autonomous.A).lpNorm<Eigen::Infinity>(), 1e-6);
  EXPECT_TRUE(linear.diagnostics.rank_deficient);
  EXPECT_GT(linear.diagnostics.ridge, 0.0);
  EXPECT_FALSE(linear.diagnostics.warnings.empty());
}

TEST(FitLinear, ResidualOrthogonalToRegressors) {
  const auto grid = grid_embedding({{-3, 3}, {-3, 3}}, {4, 4}, 1.0);
  const auto data =
      generate_dataset(vanderpol(), BoxSampler{{{-3, 3}, {-3, 3}}, {{-2, 2}}}, 2000, 0.1, 45);
  const auto model = fit_linear(data, grid.embedding);
  const Eigen::MatrixXd z = grid.embedding.encode_rows(data.states);
  const Eigen::MatrixXd zp = grid.embedding.encode_rows(data.next_states);
  Eigen::MatrixXd x(z.rows(), z.cols() + 1);
  x << z, *data.inputs;
  const Eigen::MatrixXd r = zp - z * model.A.transpose() - *data.inputs * model.B.transpose();
  EXPECT_LT((x.transpose() * r).norm(), 1e-8 * x.norm() * zp.norm());
}

TEST(FitBilinear, RecoversPlantedTriple) {
  std::mt19937_64 gen(46);
  Planted p{oracle::random_matrix(3, 3, gen, 0.5), oracle::random_matrix(3, 2, gen), {}};
  p.H = {oracle::random_matrix(3, 3, gen, 0.3), oracle::random_matrix(3, 3, gen, 0.3)};
  const auto model = fit_bilinear(synthesize(p, 400, gen), IdentityLifting(3));
  EXPECT_LT((model.A - p.A).lpNorm<Eigen::Infinity>(), 1e-6);
  EXPECT_LT((model.B - p.B).lpNorm<Eigen::Infinity>(), 1e-6);
  ASSERT_EQ(model.H.size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_LT((model.H[l] - p.H[l]).lpNorm<Eigen::Infinity>(), 1e-6);
  }
}

TEST(FitBilinear, NoBilinearTermsMatchesLinear) {
  std::mt19937_64 gen(47);
  const Planted p{oracle::random_matrix(3, 3, gen, 0.5), oracle::random_matrix(3, 1, gen), {}};
  const auto data = synthesize(p, 300, gen);
  const auto bil = fit_bilinear(data, IdentityLifting(3));
  const auto lin = fit_linear(data, IdentityLifting(3));
  EXPECT_LT(bil.H[0].lpNorm<Eigen::Infinity>(), 1e-6);
  EXPECT_LT((bil.A - lin.A).lpNorm<Eigen::Infinity>(), 1e-6);
  EXPECT_LT((bil.B - lin.B).lpNorm<Eigen::Infinity>(), 1e-6);
}

TEST(FitBilinear, NestedModelLosses) {
  const auto grid = grid_embedding({{-4.5, 4.5}, {-4.5, 4.5}}, {5, 5}, 1.5);
  const auto data =
      generate_dataset(vanderpol(), BoxSampler{{{-4.5, 4.5}, {-4.5, 4.5}}, {{-3, 3}}}, 3000, 0.1, 48);
  const double bil = lifted_loss(fit_bilinear(data, grid.embedding), data, grid.embedding);
  const double lin = lifted_loss(fit_linear(data, grid.embedding), data, grid.embedding);
  const double aut = lifted_loss(fit_autonomous(data, grid.embedding), data, grid.embedding);
  EXPECT_LE(bil, lin * (1 + 1e-12));
  EXPECT_LE(lin, aut * (1 + 1e-12));
}

TEST(FitBilinear, GuardsRegressorLength) {
  const auto grid = grid_embedding({{-1, 1}, {-1, 1}}, {5, 5}, 1.0);
  const auto data = generate_dataset(vanderpol(), BoxSampler{{{-1, 1}, {-1, 1}}, {{-1, 1}}}, 100, 0.1, 49);
  KoopmanFitConfig cfg;
  cfg.max_regressor_dim = 40;
  EXPECT_THROW(fit_bilinear(data, grid.embedding, cfg), ConfigurationError);
  EXPECT_NO_THROW(fit_linear(data, grid.embedding, cfg));
}

TEST(LeastSquaresOptimality, RandomPerturbationsNeverHelp) {
  const auto grid = grid_embedding({{-3, 3}, {-3, 3}}, {3, 3}, 1.2);
  const auto data =
      generate_dataset(vanderpol(), BoxSampler{{{-3, 3}, {-3, 3}}, {{-2, 2}}}, 1500, 0.1, 50);
  const auto model = fit_bilinear(data, grid.embedding);
  const double base = lifted_loss(model, data, grid.embedding);
  std::mt19937_64 gen(51);
  std::bernoulli_distribution coin(0.5);
  auto sign_matrix = [&](Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = coin(gen) ? 1e-3 : -1e-3;
    return m;
  };
  for (int trial = 0; trial < 100; ++trial) {
    KoopmanBilinear moved = model;
    moved.A += sign_matrix(9, 9);
    moved.B += sign_matrix(9, 1);
    moved.H[0] += sign_matrix(9, 9);
    ASSERT_GE(lifted_loss(moved, data, grid.embedding), base);
  }
}

TEST(PredictLifted, Relations) {
  std::mt19937_64 gen(52);
  KoopmanLinear lin{oracle::random_matrix(4, 4, gen), oracle::random_matrix(4, 2, gen), "", {}};
  KoopmanBilinear bil{lin.A, lin.B, {Eigen::MatrixXd::Zero(4, 4), Eigen::MatrixXd::Zero(4, 4)}, "", {}};
  const Eigen::VectorXd z = oracle::random_matrix(4, 1, gen);
  const Eigen::VectorXd u = oracle::random_matrix(2, 1, gen);
  EXPECT_EQ(predict_lifted(bil, z, u), predict_lifted(lin, z, u));
  EXPECT_EQ(predict_lifted(lin, z, Eigen::VectorXd::Zero(2)), Eigen::VectorXd(lin.A * z));

  const Eigen::VectorXd z2 = oracle::random_matrix(4, 1, gen);
  const Eigen::VectorXd u2 = oracle::random_matrix(2, 1, gen);
  const Eigen::VectorXd sum = predict_lifted(lin, z + z2, u + u2);
  EXPECT_LT((sum - predict_lifted(lin, z, u) - predict_lifted(lin, z2, u2)).norm(), 1e-12);
}

TEST(PredictLifted, BilinearMatchesTripleLoop) {
  std::mt19937_64 gen(53);
  for (int trial = 0; trial < 20; ++trial) {
    KoopmanBilinear bil{oracle::random_matrix(5, 5, gen), oracle::random_matrix(5, 3, gen), {}, "", {}};
    for (int l = 0; l < 3; ++l) bil.H.push_back(oracle::random_matrix(5, 5, gen));
    const Eigen::VectorXd z = oracle::random_matrix(5, 1, gen);
    const Eigen::VectorXd u = oracle::random_matrix(3, 1, gen);
    Eigen::VectorXd naive = Eigen::VectorXd::Zero(5);
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) naive(i) += bil.A(i, j) * z(j);
      for (int l = 0; l < 3; ++l) {
        naive(i) += bil.B(i, l) * u(l);
        for (int j = 0; j < 5; ++j) naive(i) += bil.H[l](i, j) * z(j) * u(l);
      }
    }
    EXPECT_LT((predict_lifted(bil, z, u) - naive).lpNorm<Eigen::Infinity>(), 1e-12);
    const Eigen::MatrixXd beff = bil.effective_input_matrix(z);
    EXPECT_LT((bil.A * z + beff * u - naive).lpNorm<Eigen::Infinity>(), 1e-12);
  }
}

TEST(PredictLifted, UsageErrors) {
  KoopmanAutonomous aut{Eigen::MatrixXd::Identity(2, 2), "", {}};
  KoopmanLinear lin{Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Ones(2, 1), "", {}};
  EXPECT_THROW(predict_lifted(aut, Eigen::Vector2d(1, 1), Eigen::VectorXd::Ones(1)), UsageError);
  EXPECT_THROW(predict_lifted(lin, Eigen::Vector2d(1, 1)), UsageError);
  EXPECT_THROW(predict_lifted(lin, Eigen::Vector3d(1, 1, 1), Eigen::VectorXd::Ones(1)),
               ConfigurationError);
}

TEST(KoopmanRollout, ZeroStepsDecodesInitialEncoding) {
  const auto grid = grid_embedding({{-2, 2}, {-2, 2}}, {3, 3}, 1.0);
  KoopmanAutonomous aut{Eigen::MatrixXd::Identity(9, 9), "", {}};
  const Eigen::Vector2d x0(1.2, 0.3);
  const auto pred = rollout_decoded(aut, grid.embedding, grid.decoder, x0, {}, 0, 0.1);
  ASSERT_EQ(pred.states.rows(), 1);
  EXPECT_EQ(pred.states.row(0).transpose(), grid.decoder.decode(grid.embedding.encode(x0)));
  EXPECT_THROW(rollout_decoded(aut, grid.embedding, grid.decoder, x0, cosine_signal(1.0), 3, 0.1),
               UsageError);
}

TEST(KoopmanRollout, ExactLinearSystem) {
  std::mt19937_64 gen(54);
  KoopmanLinear lin{oracle::random_matrix(2, 2, gen, 0.4), oracle::random_matrix(2, 1, gen), "", {}};
  const Embedding emb = IdentityLifting(2);
  ExpectationDecoder dec(Eigen::MatrixXd::Identity(2, 2));
  const Eigen::Vector2d x0(1, -1);
  const auto signal = cosine_signal(2.0);
  const auto pred = rollout_decoded(lin, emb, dec, x0, signal, 20, 0.1);
  Eigen::VectorXd x = x0;
  for (int t = 0; t < 20; ++t) x = lin.A * x + lin.B * signal(0.1 * t);
  EXPECT_LT((pred.states.row(20).transpose() - x).norm(), 1e-12);
}

}  // namespace
}  // namespace lifted_dyn
