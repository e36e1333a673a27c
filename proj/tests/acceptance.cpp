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
// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Criteria 4 to 6 share one paper-profile control suite.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lifted_dyn/control.hpp"
#include "lifted_dyn/dynamics.hpp"
#include "lifted_dyn/embedding.hpp"
#include "lifted_dyn/harness.hpp"
#include "lifted_dyn/koopman_model.hpp"
#include "lifted_dyn/markov_model.hpp"
#include "lifted_dyn/optim.hpp"
#include "oracles.hpp"

using namespace lifted_dyn;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Collects failed checks for one criterion.
struct Check {
  std::vector<std::string> failures;
  std::ostringstream info;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

int g_failed = 0;

void report(int id, const std::string& title, const std::function<void(Check&)>& body) {
  Check c;
  const auto start = Clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.failures.push_back(std::string("exception: ") + e.what());
  }
  const bool ok = c.failures.empty();
  if (!ok) ++g_failed;
  std::printf("%s %d %s [%.1f s] %s", ok ? "PASS" : "FAIL", id, title.c_str(),
              seconds_since(start), c.info.str().c_str());
  for (const auto& f : c.failures) std::printf(" | %s", f.c_str());
  std::printf("\n");
  std::fflush(stdout);
}

double max_column_sum_error(const Eigen::MatrixXd& m) {
  return (m.colwise().sum().array() - 1.0).abs().maxCoeff();
}

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

// Cells (-inf, 1), [1, 2), ..., [n - 1, inf); point i + 0.5 lies in cell i.
Embedding line_cells(int n) {
  std::vector<double> edges;
  for (int i = 1; i < n; ++i) edges.push_back(i);
  return PartitionEmbedding({edges});
}

// Snapshot pairs whose one-hot counts reproduce the planted slices exactly.
SnapshotDataset planted_pairs(const std::vector<Eigen::MatrixXd>& slices, int multiplicity,
                              bool with_inputs) {
  std::vector<double> x, u, xp;
  for (std::size_t l = 0; l < slices.size(); ++l) {
    const auto& p = slices[l];
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const long count = std::lround(multiplicity * p(i, j));
        for (long c = 0; c < count; ++c) {
          x.push_back(j + 0.5);
          u.push_back(static_cast<double>(l) + 0.5);
          xp.push_back(i + 0.5);
        }
      }
    }
  }
  const Eigen::Index k = static_cast<Eigen::Index>(x.size());
  SnapshotDataset data;
  data.dt = 0.1;
  data.states = Eigen::Map<Eigen::MatrixXd>(x.data(), k, 1);
  data.next_states = Eigen::Map<Eigen::MatrixXd>(xp.data(), k, 1);
  if (with_inputs) data.inputs = Eigen::MatrixXd(Eigen::Map<Eigen::MatrixXd>(u.data(), k, 1));
  return data;
}

// Random stochastic matrix with entries in multiples of 1/q.
Eigen::MatrixXd quantized_stochastic(Eigen::Index n, int q, std::mt19937_64& gen) {
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (int c = 0; c < q; ++c) p(pick(gen), j) += 1.0 / q;
  }
  return p;
}

struct Planted {
  Eigen::MatrixXd A, B;
  std::vector<Eigen::MatrixXd> H;
};

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

double max_abs(const Eigen::MatrixXd& m) { return m.lpNorm<Eigen::Infinity>(); }

}  // namespace

int main() {
  const ExperimentConfig paper = profile_config("paper");
  std::optional<AutonomousSetup> autonomous;
  std::optional<ControlSuite> suite;

  report(1, "loss dominance (K=1e4, 9x9 kernels)", [](Check& c) {
    ExperimentConfig cfg = profile_config("quick");
    cfg.k_autonomous = 10000;
    const auto start = Clock::now();
    const auto setup = build_autonomous(cfg);
    const Embedding emb = setup.state.embedding;
    const double markov = markov_loss(setup.markov, setup.data, emb);
    const double koopman = lifted_loss(setup.koopman, setup.data, emb);
    const double elapsed = seconds_since(start);
    c.info << "markov " << markov << " koopman " << koopman << " margin " << markov - koopman;
    c.expect(markov - koopman >= -1e-6, "Markov loss below Koopman loss");
    c.expect(elapsed < 120.0, "runtime above 2 min");
  });

  report(2, "Fig. 2 open-loop prediction (K=1e5)", [&](Check& c) {
    const auto start = Clock::now();
    autonomous.emplace(build_autonomous(paper));
    const auto r = run_fig2(paper, &*autonomous);
    const double elapsed = seconds_since(start);
    c.info << "rmse koopman " << r.rmse_koopman << " markov " << r.rmse_markov
           << "; final norm markov " << r.final_norm_markov << " truth " << r.final_norm_truth;
    c.expect(r.rmse_koopman < r.rmse_markov, "Koopman RMSE not below Markov RMSE");
    c.expect(r.final_norm_markov < r.final_norm_truth, "Markov final point not nearer origin");
    c.expect(elapsed < 300.0, "runtime above 5 min");
  });

  report(3, "Fig. 3 forced prediction", [&](Check& c) {
    suite.emplace(build_control_suite(paper));
    const auto r = run_fig3(paper, &suite->models);
    c.info << "rmse bilinear " << r.rmse_bilinear << " linear " << r.rmse_linear << " markov "
           << r.rmse_markov;
    c.expect(r.rmse_bilinear < r.rmse_linear, "bilinear RMSE not below linear RMSE");
    c.expect(r.rmse_bilinear < r.rmse_markov, "bilinear RMSE not below Markov RMSE");
  });

  report(4, "Fig. 4 closed loop from (3, 3)", [&](Check& c) {
    if (!suite) suite.emplace(build_control_suite(paper));
    const auto r = run_fig4(paper, &*suite);
    for (const auto& name : kControllerNames) {
      const auto& run = r.run(name);
      c.info << name << " " << run.final_norm << " ";
      c.expect(!run.failed, name + " failed: " + run.error);
      if (name == "lin_mpc") {
        c.expect(run.final_norm >= 0.1, "lin_mpc reached the origin");
      } else {
        c.expect(run.final_norm < 0.1, name + " final norm >= 0.1");
      }
    }
  });

  report(5, "Fig. 5 closed loop from 16 initial states", [&](Check& c) {
    if (!suite) suite.emplace(build_control_suite(paper));
    const auto r = run_fig5(paper, &*suite);
    for (const std::string name : {"vi", "bil_mpc", "nmpc"}) {
      const int within = r.count_within(name, 0.1);
      c.info << name << " " << within << "/16 ";
      c.expect(within == 16, name + " has finals outside 0.1");
    }
    const auto clusters = r.clusters("lin_mpc");
    c.info << "lin_mpc clusters " << clusters.centers.rows();
    c.expect(clusters.centers.rows() == 2, "lin_mpc finals do not form exactly 2 clusters");
    for (Eigen::Index k = 0; k < clusters.centers.rows(); ++k) {
      const double radius = clusters.radii(k);
      const double dist = clusters.centers.row(k).norm();
      c.info << " (center norm " << dist << ", radius " << radius << ")";
      c.expect(radius < 0.2, "cluster radius >= 0.2");
      c.expect(dist > 0.1, "cluster center within 0.1 of origin");
    }
  });

  report(6, "Table 1 timing order", [&](Check& c) {
    if (!suite) suite.emplace(build_control_suite(paper));
    const auto r = run_table1(paper, &*suite);
    c.info << "vi total " << r.vi_total_ms << " ms, policy " << r.vi_policy.mean_ms
           << " ms; lin " << r.lin_mpc.mean_ms << " bil " << r.bil_mpc.mean_ms << " nmpc "
           << r.nmpc.mean_ms << " ms/step over " << r.lin_mpc.samples;
    c.expect(r.lin_mpc.samples >= 100 && r.bil_mpc.samples >= 100 && r.nmpc.samples >= 100,
             "fewer than 100 steps");
    c.expect(r.lin_mpc.mean_ms < r.bil_mpc.mean_ms, "lin-MPC not faster than bil-MPC");
    c.expect(r.bil_mpc.mean_ms < r.nmpc.mean_ms, "bil-MPC not faster than NMPC");
    c.expect(r.vi_policy.mean_ms < 0.1, "policy evaluation >= 0.1 ms");
  });

  report(7, "oracle equivalences", [](Check& c) {
    std::mt19937_64 gen(2024);

    double vi_err = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const auto mdp = oracle::random_mdp(4, 2, gen);
      const Eigen::MatrixXd cost = oracle::random_matrix(4, 2, gen).cwiseAbs();
      const double discount = 0.9;
      ValueIterationConfig vc;
      vc.discount = discount;
      vc.tolerance = 1e-12;
      const auto policy = value_iteration(mdp, cost, vc);
      const Eigen::VectorXd exact = oracle::enumerate_policies(mdp, cost, discount);
      vi_err = std::max(vi_err, max_abs(policy.values - exact));
    }
    c.info << "vi " << vi_err;
    c.expect(vi_err < 1e-6, "value iteration differs from enumeration");

    std::uniform_real_distribution<double> pos(0.3, 2.0);
    std::uniform_real_distribution<double> start(-3.0, 3.0);
    const Embedding emb = IdentityLifting(1);
    const ExpectationDecoder dec(Eigen::MatrixXd::Ones(1, 1));
    double mpc_err = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const double a = pos(gen), b = pos(gen), q = pos(gen), r = pos(gen), z0 = start(gen);
      const KoopmanLinear model{Eigen::MatrixXd::Constant(1, 1, a),
                                Eigen::MatrixXd::Constant(1, 1, b), "", {}};
      MpcConfig mc;
      mc.horizon = 2;
      mc.cost = {Eigen::MatrixXd::Constant(1, 1, q), Eigen::MatrixXd::Constant(1, 1, r)};
      const auto sol = mpc_step(model, emb, dec, mc, Eigen::VectorXd::Constant(1, z0));
      const Eigen::Vector2d ref = oracle::grid_refine({a, b, q, r, z0}, -20.0, 20.0);
      mpc_err = std::max(mpc_err, std::max(std::abs(sol.inputs(0, 0) - ref(0)),
                                           std::abs(sol.inputs(1, 0) - ref(1))));
    }
    c.info << ", mpc " << mpc_err;
    c.expect(mpc_err < 1e-4, "mpc_step differs from grid refinement");

    double ls_err = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      const Eigen::MatrixXd x = oracle::random_matrix(40, 6, gen);
      const Eigen::MatrixXd y = oracle::random_matrix(40, 3, gen);
      const auto sol = solve_least_squares({x, y});
      ls_err = std::max(ls_err, max_abs(sol.coefficients - oracle::normal_equations(x, y)));
    }
    c.info << ", lstsq " << ls_err;
    c.expect(ls_err < 1e-10, "least squares differs from normal equations");

    int simplex_bad = 0;
    std::uniform_int_distribution<int> dim(1, 12);
    for (int trial = 0; trial < 1000; ++trial) {
      const int n = dim(gen);
      const Eigen::VectorXd v = oracle::random_matrix(n, 1, gen, 2.0).col(0);
      const Eigen::VectorXd p = project_simplex(v);
      const Eigen::VectorXd y = oracle::random_stochastic(n, 1, gen).col(0);
      const bool feasible = p.minCoeff() >= 0.0 && std::abs(p.sum() - 1.0) <= 1e-12;
      const bool dominant = (p - v).norm() <= (y - v).norm() + 1e-12;
      if (!feasible || !dominant) ++simplex_bad;
    }
    c.info << ", simplex failures " << simplex_bad << "/1000";
    c.expect(simplex_bad == 0, "simplex projection beaten by a feasible point");
  });

  report(8, "numerical property suites", [&](Check& c) {
    const auto sys = decay();
    const Eigen::VectorXd none(0);
    const double dt = 0.1;
    const double exact = std::exp(-dt);
    double prev = std::abs(step_zoh(sys, Eigen::VectorXd::Ones(1), none, dt, 1)(0) - exact);
    c.info << "rk4 factors";
    for (int substeps = 2; substeps <= 8; substeps *= 2) {
      const double err =
          std::abs(step_zoh(sys, Eigen::VectorXd::Ones(1), none, dt, substeps)(0) - exact);
      const double factor = prev / err;
      c.info << " " << factor;
      c.expect(factor >= 14.0 && factor <= 18.0, "RK4 factor outside [14, 18]");
      prev = err;
    }

    if (!suite) suite.emplace(build_control_suite(paper));
    std::vector<TabularPolicy> policies{suite->policy};
    std::vector<double> discounts{paper.discount};
    std::mt19937_64 gen(2025);
    for (double discount : {0.5, 0.9, 0.99}) {
      for (int trial = 0; trial < 5; ++trial) {
        const auto mdp = oracle::random_mdp(12, 4, gen);
        ValueIterationConfig vc;
        vc.discount = discount;
        vc.tolerance = 1e-12;
        policies.push_back(
            value_iteration(mdp, oracle::random_matrix(12, 4, gen).cwiseAbs(), vc));
        discounts.push_back(discount);
      }
    }
    int violations = 0;
    double worst = -1.0;
    for (std::size_t i = 0; i < policies.size(); ++i) {
      violations += policies[i].contraction_violations;
      if (policies[i].max_contraction_ratio > discounts[i]) ++violations;
      worst = std::max(worst, policies[i].max_contraction_ratio - discounts[i]);
    }
    c.info << "; contraction violations " << violations << " (max ratio - discount " << worst
           << ")";
    c.expect(violations == 0, "contraction ratio above the discount");

    if (!autonomous) autonomous.emplace(build_autonomous(paper));
    const Embedding state = autonomous->state.embedding;
    const Embedding action = suite->models.action.embedding;
    const std::vector<std::pair<std::string, Eigen::MatrixXd>> stochastic{
        {"frequency", fit_frequency(autonomous->data, state).transition},
        {"constrained", autonomous->markov.transition},
        {"controlled frequency",
         fit_controlled_frequency(suite->models.data, suite->models.state.embedding, action)
             .transition},
        {"controlled", suite->models.markov.transition}};
    double sum_err = 0.0;
    double min_entry = 0.0;
    for (const auto& [name, m] : stochastic) {
      sum_err = std::max(sum_err, max_column_sum_error(m));
      min_entry = std::min(min_entry, m.minCoeff());
    }
    c.info << "; stochastic sum error " << sum_err;
    c.expect(sum_err <= 1e-8, "column sums differ from 1 by more than 1e-8");
    c.expect(min_entry >= 0.0, "negative transition probability");

    std::uniform_real_distribution<double> wide(-20.0, 20.0);
    double enc_err = 0.0;
    bool negative = false;
    for (int k = 0; k < 10000; ++k) {
      const Eigen::Vector2d x(wide(gen), wide(gen));
      const Eigen::VectorXd pi = encode(state, x);
      enc_err = std::max(enc_err, std::abs(pi.sum() - 1.0));
      negative = negative || pi.minCoeff() < 0.0 || !pi.allFinite();
    }
    c.info << "; encoding sum error " << enc_err;
    c.expect(enc_err <= 1e-12 && !negative, "encoding is not a probability vector");
  });

  report(9, "synthetic recovery", [](Check& c) {
    std::mt19937_64 gen(2026);

    const Eigen::MatrixXd p = quantized_stochastic(5, 8, gen);
    const auto chain = fit_constrained(planted_pairs({p}, 8, false), line_cells(5));
    const double chain_err = max_abs(chain.transition - p);

    const std::vector<Eigen::MatrixXd> slices{quantized_stochastic(4, 8, gen),
                                              quantized_stochastic(4, 8, gen),
                                              quantized_stochastic(4, 8, gen)};
    const auto tensor = fit_controlled(planted_pairs(slices, 8, true), line_cells(4), line_cells(3));
    double tensor_err = 0.0;
    for (int l = 0; l < 3; ++l) tensor_err = std::max(tensor_err, max_abs(tensor.slice(l) - slices[l]));
    c.info << "P " << chain_err << ", tensor " << tensor_err;
    c.expect(chain_err <= 1e-6, "planted chain not recovered");
    c.expect(tensor_err <= 1e-6, "planted tensor not recovered");

    const Eigen::Index n = 4, m = 2;
    const Planted aut{oracle::random_matrix(n, n, gen, 0.5), {}, {}};
    const auto fa = fit_autonomous(synthesize(aut, 200, gen), IdentityLifting(n));
    const double a_err = max_abs(fa.A - aut.A);

    const Planted lin{oracle::random_matrix(n, n, gen, 0.5), oracle::random_matrix(n, m, gen), {}};
    const auto fl = fit_linear(synthesize(lin, 300, gen), IdentityLifting(n));
    const double ab_err = std::max(max_abs(fl.A - lin.A), max_abs(fl.B - lin.B));

    Planted bil{oracle::random_matrix(n, n, gen, 0.5), oracle::random_matrix(n, m, gen), {}};
    for (Eigen::Index l = 0; l < m; ++l) bil.H.push_back(oracle::random_matrix(n, n, gen, 0.3));
    const auto fb = fit_bilinear(synthesize(bil, 400, gen), IdentityLifting(n));
    double abh_err = std::max(max_abs(fb.A - bil.A), max_abs(fb.B - bil.B));
    for (Eigen::Index l = 0; l < m; ++l) abh_err = std::max(abh_err, max_abs(fb.H[l] - bil.H[l]));

    c.info << ", A " << a_err << ", (A, B) " << ab_err << ", (A, B, H) " << abh_err;
    c.expect(a_err <= 1e-6, "A not recovered");
    c.expect(ab_err <= 1e-6, "(A, B) not recovered");
    c.expect(abh_err <= 1e-6, "(A, B, H) not recovered");
  });

  std::printf("summary: %d of 9 criteria failed\n", g_failed);
  return g_failed == 0 ? 0 : 1;
}
