#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "nsb/checkpoint.hpp"
#include "nsb/mcmc.hpp"
#include "test_support.hpp"

namespace nsb {
namespace {

const TimeGrid kGrid{10, 0.01};

ObservationConfig grid_obs(int m, double gamma) {
  ObservationConfig cfg;
  for (int n = 1; n <= 10; ++n) cfg.times.push_back(0.01 * n);
  cfg.modes_per_dim = m;
  cfg.gamma = gamma;
  return cfg;
}

/// Paper-style problem at small resolution with synthetic data from a truth draw.
ChainProblem small_problem(int m, double gamma, std::uint64_t truth_seed = 1) {
  const auto lat = build_lattice(m);
  ChainProblem p{make_paper_prior(lat, 0.1, 0.01), std::nullopt, SpectralField(lat), {}, 0.1, {}};
  Rng rng(truth_seed);
  const auto truth = sample_path(p.prior, rng);
  p.data = synthesize_data(solve_forward(p.u0, truth, p.viscosity), grid_obs(m, gamma), rng);
  return p;
}

TEST(Acceptance, WorkedValues) {
  EXPECT_EQ(acceptance_probability(1.0, 0.5), 1.0);
  EXPECT_EQ(acceptance_probability(1.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(acceptance_probability(1.0, 2.0), std::exp(-1.0));
  EXPECT_EQ(acceptance_probability(1.0, std::numeric_limits<double>::infinity()), 0.0);
  EXPECT_EQ(acceptance_probability(1.0, std::nan("")), 0.0);
}

TEST(Chain, BetaZeroNeverMoves) {
  const auto problem = small_problem(8, 1.0);
  auto state = initialize_chain(problem, 0.0, 11);
  const auto start = state.path;
  const double phi0 = state.phi;
  ChainSummary summary(problem.prior.lattice, kGrid, 0, 1);
  run_chain(problem, {.iterations = 50}, state, summary);
  EXPECT_EQ(summary.acceptance_rate(), 1.0);
  EXPECT_EQ(max_abs_diff(state.path.value(10), start.value(10)), 0.0);
  EXPECT_EQ(state.phi, phi0);
}

TEST(Chain, ZeroLikelihoodAcceptsEverything) {
  auto problem = small_problem(8, 1.0);
  problem.data = ObservationSet{grid_obs(8, 1.0), {}, std::nullopt};
  problem.data.config.times.clear();
  const auto summary = run_chain(problem, {.iterations = 200}, 0.3, 4);
  EXPECT_EQ(summary.acceptance_rate(), 1.0);
  EXPECT_EQ(summary.accepted(), 200u);
}

TEST(Chain, OneForwardSolvePerIteration) {
  const auto problem = small_problem(8, 1.0);
  auto state = initialize_chain(problem, 0.2, 3);
  EXPECT_EQ(state.forward_solves, 1u);
  ChainSummary summary(problem.prior.lattice, kGrid, 0, 1);
  run_chain(problem, {.iterations = 40}, state, summary);
  EXPECT_EQ(state.iteration, 40u);
  EXPECT_EQ(state.forward_solves, 41u);
}

TEST(Chain, CachedStateIsCoherent) {
  const auto problem = small_problem(8, 1.0);
  auto state = initialize_chain(problem, 0.2, 5);
  ChainSummary summary(problem.prior.lattice, kGrid, 0, 1);
  run_chain(problem, {.iterations = 60}, state, summary);
  ASSERT_GT(state.accepted, 0u);
  const auto ev = phi(state.path, state.u0, problem.data, problem.viscosity);
  EXPECT_NEAR(ev.phi, state.phi, 1e-10 * std::max(1.0, state.phi));
  for (std::size_t n = 0; n < kGrid.knots(); ++n) {
    EXPECT_LE(max_abs_diff(ev.trajectory.states[n], state.trajectory.states[n]), 1e-10);
  }
}

TEST(Chain, AcceptanceFallsWithStepSize) {
  const auto problem = small_problem(8, 3.2);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    double previous = 2.0;
    for (double beta : {0.05, 0.2, 0.8}) {
      const double rate = run_chain(problem, {.iterations = 300}, beta, seed).acceptance_rate();
      EXPECT_LT(rate, previous) << "beta=" << beta << " seed=" << seed;
      previous = rate;
    }
  }
}

TEST(Chain, BlowUpProposalIsRejected) {
  auto problem = small_problem(8, 1.0);
  problem.solver.blowup_cap = 1e-6;
  const auto lat = problem.prior.lattice;
  auto state = initialize_chain(problem, 0.5, Rng(1), WienerPath(lat, kGrid), SpectralField(lat));
  const double phi0 = state.phi;
  ChainSummary summary(lat, kGrid, 0, 1);
  run_chain(problem, {.iterations = 5}, state, summary);
  EXPECT_EQ(state.accepted, 0u);
  EXPECT_EQ(state.blowups, 5u);
  EXPECT_EQ(state.phi, phi0);
}

TEST(Chain, JointModeMovesTheInitialCondition) {
  auto problem = small_problem(8, 1.0);
  problem.initial_prior = make_power_ic_prior(problem.prior.lattice, 1.0, 1.0);
  auto state = initialize_chain(problem, 0.3, 2);
  const auto u0 = state.u0;
  EXPECT_GT(sobolev_norm(u0, 0), 0.0);
  ChainSummary summary(problem.prior.lattice, kGrid, 0, 1);
  run_chain(problem, {.iterations = 50}, state, summary);
  ASSERT_GT(state.accepted, 0u);
  EXPECT_GT(max_abs_diff(state.u0, u0), 0.0);
  EXPECT_EQ(max_abs_diff(state.trajectory.states[0], state.u0), 0.0);
}

TEST(Summary, EmptyChainHasNoSamples) {
  const auto problem = small_problem(8, 1.0);
  const auto summary = run_chain(problem, {.iterations = 0}, 0.2, 1);
  EXPECT_FALSE(summary.has_samples());
  EXPECT_EQ(summary.iterations(), 0u);
  EXPECT_EQ(summary.acceptance_rate(), 0.0);
  EXPECT_THROW(summary.path_mean(10), ConfigError);
  EXPECT_THROW(summary.trajectory_variance(10), ConfigError);
}

TEST(Summary, BurnInAndThinning) {
  const auto problem = small_problem(8, 1.0);
  const auto summary = run_chain(problem, {.iterations = 100, .burn_in = 10, .thin = 7}, 0.2, 1);
  EXPECT_EQ(summary.samples(), 12u);  // iterations 17, 24, ..., 94
  EXPECT_EQ(summary.phi_trace().size(), 100u);
}

TEST(RunningStats, MergeMatchesSinglePass) {
  Rng rng(3);
  RunningStats all, left, right;
  for (int n = 0; n < 1000; ++n) {
    const double x = 5.0 + rng.gaussian();
    all.push(x);
    (n < 377 ? left : right).push(x);
  }
  left.merge(right);
  EXPECT_EQ(left.count(), all.count());
  EXPECT_NEAR(left.mean(), all.mean(), 1e-12);
  EXPECT_NEAR(left.variance(), all.variance(), 1e-12);
  RunningStats empty;
  empty.merge(all);
  EXPECT_EQ(empty.mean(), all.mean());
}

TEST(Summary, MergeOfChainsPoolsSamples) {
  const auto problem = small_problem(8, 1.0);
  const ChainSettings settings{.iterations = 60, .burn_in = 10, .thin = 5};
  auto a = run_chain(problem, settings, 0.2, 1);
  const auto b = run_chain(problem, settings, 0.2, 2);
  const auto i = problem.prior.lattice->index_of({0, 1});
  RunningStats expected = a.path_stats(10, i, ChainSummary::kReal);
  expected.merge(b.path_stats(10, i, ChainSummary::kReal));
  a.merge(b);
  EXPECT_EQ(a.samples(), 20u);
  EXPECT_EQ(a.iterations(), 120u);
  EXPECT_EQ(a.path_stats(10, i, ChainSummary::kReal).mean(), expected.mean());
  ChainSummary other(build_lattice(16), kGrid, 0, 1);
  EXPECT_THROW(a.merge(other), ConfigError);
}

TEST(Checkpoint, ResumeReproducesTheUninterruptedChain) {
  const auto problem = small_problem(8, 1.0);
  const ChainSettings full{.iterations = 80, .burn_in = 10, .thin = 3};

  auto straight = initialize_chain(problem, 0.2, 9);
  ChainSummary straight_summary(problem.prior.lattice, kGrid, full.burn_in, full.thin);
  run_chain(problem, full, straight, straight_summary);

  auto first = initialize_chain(problem, 0.2, 9);
  ChainSummary first_summary(problem.prior.lattice, kGrid, full.burn_in, full.thin);
  auto partial = full;
  partial.stop_after = 37;
  run_chain(problem, partial, first, first_summary);
  ASSERT_EQ(first.iteration, 37u);

  std::stringstream ss;
  write_checkpoint(ss, first, first_summary, 0xabcdefu);
  auto ck = read_checkpoint(ss, problem);
  EXPECT_EQ(ck.config_hash, 0xabcdefu);
  EXPECT_EQ(ck.state.iteration, 37u);
  EXPECT_TRUE(ck.state.rng == first.rng);
  run_chain(problem, full, ck.state, ck.summary);

  EXPECT_EQ(ck.state.iteration, straight.iteration);
  EXPECT_EQ(ck.state.accepted, straight.accepted);
  EXPECT_EQ(ck.state.phi, straight.phi);
  EXPECT_EQ(max_abs_diff(ck.state.path.value(10), straight.path.value(10)), 0.0);
  EXPECT_EQ(ck.summary.phi_trace(), straight_summary.phi_trace());
  EXPECT_EQ(ck.summary.samples(), straight_summary.samples());
  for (std::size_t e = 0; e < straight_summary.raw_path().size(); ++e) {
    ASSERT_EQ(ck.summary.raw_path()[e].mean(), straight_summary.raw_path()[e].mean());
    ASSERT_EQ(ck.summary.raw_trajectory()[e].m2(), straight_summary.raw_trajectory()[e].m2());
  }

  std::stringstream bogus;
  write_checkpoint(bogus, first, first_summary, 1);
  auto other = small_problem(16, 1.0);
  EXPECT_THROW(read_checkpoint(bogus, other), ConfigError);
  std::stringstream truncated(ss.str().substr(0, 200));
  EXPECT_THROW(read_checkpoint(truncated, problem), Error);
}

// Single-mode linear Gaussian problem: prior sigma on (0,1) only, observe its
// coefficient at every knot. The posterior is Gaussian and available in
// closed form.
TEST(Chain, MatchesConjugateGaussianPosterior) {
  const auto lat = build_lattice(8);
  const Wavenumber k{0, 1};
  const double sigma = 1.0, gamma = 0.05, nu = 0.1, dt = 0.01;
  ChainProblem problem{make_table_prior(lat, kGrid, {{k, sigma}}), std::nullopt, SpectralField(lat),
                       {}, nu, {.nonlinear = false}};
  ObservationConfig cfg;
  cfg.kind = ObservationKind::ModeCoefficients;
  cfg.modes = {k};
  cfg.gamma = gamma;
  for (int n = 1; n <= 10; ++n) cfg.times.push_back(0.01 * n);
  Rng truth_rng(42);
  const auto truth = sample_path(problem.prior, truth_rng);
  problem.data = synthesize_data(solve_forward(problem.u0, truth, nu, problem.solver), cfg, truth_rng);

  // Real parts: y_j = sum_{n<j} e^{-mu (j-n) dt} dW_n + noise.
  const double mu = nu * 1.0;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(10, 10);
  for (int j = 1; j <= 10; ++j) {
    for (int n = 0; n < j; ++n) h(j - 1, n) = std::exp(-mu * (j - n) * dt);
  }
  const double prior_var = sigma * sigma * dt / 2.0;
  const Eigen::MatrixXd precision =
      Eigen::MatrixXd::Identity(10, 10) / prior_var + h.transpose() * h / (gamma * gamma);
  const Eigen::MatrixXd cov = precision.inverse();
  Eigen::VectorXd y(10);
  for (int j = 0; j < 10; ++j) y(j) = problem.data.data[2 * j];
  const Eigen::VectorXd mean = cov * h.transpose() * y / (gamma * gamma);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(10);
  const double exact_mean = ones.dot(mean);      // posterior mean of Re W_k(T)
  const double exact_var = ones.dot(cov * ones);  // posterior variance of Re W_k(T)

  const std::size_t i = lat->index_of(k);
  const std::uint64_t burn = 5000, n_iter = 105000;
  std::vector<double> series;
  series.reserve(n_iter - burn);
  ChainHooks hooks;
  hooks.on_step = [&](const ChainState& s) {
    if (s.iteration > burn) series.push_back(s.path.value(10)[i].real());
  };
  const auto summary = run_chain(problem, {.iterations = n_iter, .burn_in = burn}, 0.15, 7, hooks);
  const auto& stats = summary.path_stats(10, i, ChainSummary::kReal);
  EXPECT_GT(summary.acceptance_rate(), 0.1);

  const double se_mean = batch_means_standard_error(series);
  std::vector<double> sq(series.size());
  for (std::size_t e = 0; e < sq.size(); ++e) sq[e] = std::pow(series[e] - stats.mean(), 2);
  const double se_var = batch_means_standard_error(sq);
  EXPECT_NEAR(stats.mean(), exact_mean, 4 * se_mean);
  EXPECT_NEAR(stats.variance(), exact_var, 4 * se_var);
  EXPECT_LT(exact_var, 0.5 * sigma * sigma * 0.1 / 2.0);
}

}  // namespace
}  // namespace nsb
