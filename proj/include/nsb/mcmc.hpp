#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "nsb/errors.hpp"
#include "nsb/forward_solver.hpp"
#include "nsb/observation.hpp"
#include "nsb/prior.hpp"
#include "nsb/running_stats.hpp"

namespace nsb {

/// Everything that stays fixed along a chain.
struct ChainProblem {
  PriorSpec prior;
  /// Set for joint inference of (u0, W); unset infers W with `u0` known.
  std::optional<InitialConditionPrior> initial_prior;
  SpectralField u0;
  ObservationSet data;
  double viscosity = 0.1;
  SolverOptions solver;

  bool joint() const noexcept { return initial_prior.has_value(); }
};

struct ChainState {
  WienerPath path;
  SpectralField u0;
  /// Trajectory of (u0, path); `phi` is its misfit.
  Trajectory trajectory;
  double phi = 0.0;
  double beta = 0.05;
  std::uint64_t iteration = 0;
  std::uint64_t accepted = 0;
  std::uint64_t forward_solves = 0;
  std::uint64_t blowups = 0;
  bool last_accepted = false;
  Rng rng;
};

/// min{1, exp(phi_current - phi_proposed)}; a non-finite proposal is rejected.
inline double acceptance_probability(double phi_current, double phi_proposed) {
  if (std::isnan(phi_proposed) || phi_proposed == std::numeric_limits<double>::infinity()) {
    return 0.0;
  }
  const double log_ratio = phi_current - phi_proposed;
  return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

/// Chain started at the given point; evaluates Phi once.
inline ChainState initialize_chain(const ChainProblem& problem, double beta, Rng rng,
                                   WienerPath start, SpectralField u0) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("pCN beta must lie in [0, 1]");
  ChainState state;
  state.beta = beta;
  state.rng = std::move(rng);
  state.path = std::move(start);
  state.u0 = std::move(u0);
  auto ev = phi(state.path, state.u0, problem.data, problem.viscosity, problem.solver);
  ++state.forward_solves;
  state.trajectory = std::move(ev.trajectory);
  state.phi = ev.phi;
  return state;
}

/// Chain started from a prior draw (and, in joint mode, an initial-condition draw).
inline ChainState initialize_chain(const ChainProblem& problem, double beta,
                                   std::uint64_t seed) {
  Rng rng(seed);
  WienerPath start = sample_path(problem.prior, rng);
  SpectralField u0 = problem.joint() ? sample_initial(*problem.initial_prior, rng) : problem.u0;
  return initialize_chain(problem, beta, std::move(rng), std::move(start), std::move(u0));
}

/**
 * One pCN Metropolis-Hastings step: blend the state with a fresh prior draw,
 * evaluate Phi once (one forward solve) and accept with
 * min{1, exp(Phi(current) - Phi(proposal))}. A proposal whose forward solve
 * blows up is rejected.
 */
inline void mcmc_step(ChainState& state, const ChainProblem& problem) {
  const WienerPath fresh = sample_path(problem.prior, state.rng);
  WienerPath proposal = pcn_blend(state.path, fresh, state.beta);
  SpectralField u0 = state.u0;
  if (problem.joint()) {
    u0 = pcn_blend(state.u0, sample_initial(*problem.initial_prior, state.rng), state.beta);
  }

  std::optional<PhiEvaluation> ev;
  double proposed_phi = std::numeric_limits<double>::infinity();
  try {
    ++state.forward_solves;
    ev = phi(proposal, u0, problem.data, problem.viscosity, problem.solver);
    proposed_phi = ev->phi;
  } catch (const NumericalError& e) {
    ++state.blowups;
    std::clog << "nsb: iteration " << state.iteration + 1 << ": proposal rejected: " << e.what()
              << '\n';
  }

  const double alpha = acceptance_probability(state.phi, proposed_phi);
  const double u = state.rng.uniform();
  state.last_accepted = ev.has_value() && u < alpha;
  if (state.last_accepted) {
    state.path = std::move(proposal);
    state.u0 = std::move(u0);
    state.trajectory = std::move(ev->trajectory);
    state.phi = proposed_phi;
    ++state.accepted;
  }
  ++state.iteration;
}

/**
 * Posterior statistics accumulated along a chain: per knot and per mode, the
 * one-pass mean and variance of the real and imaginary parts of W(t_n) and of
 * u(t_n), plus the Phi trace and acceptance counts. Samples are recorded
 * after `burn_in` iterations, every `thin`-th iteration.
 */
class ChainSummary {
 public:
  enum Part { kReal = 0, kImag = 1 };

  ChainSummary() = default;
  ChainSummary(LatticePtr lattice, TimeGrid grid, std::uint64_t burn_in, std::uint64_t thin)
      : lattice_(std::move(lattice)),
        grid_(grid),
        burn_in_(burn_in),
        thin_(thin == 0 ? 1 : thin),
        path_(2 * grid.knots() * lattice_->size()),
        traj_(2 * grid.knots() * lattice_->size()) {}

  const LatticePtr& lattice_ptr() const noexcept { return lattice_; }
  const TimeGrid& grid() const noexcept { return grid_; }
  std::uint64_t burn_in() const noexcept { return burn_in_; }
  std::uint64_t thin() const noexcept { return thin_; }

  /// Bookkeeping after `state` completed an iteration; records a sample
  /// when the iteration is past burn-in and on the thinning stride.
  void observe(const ChainState& state) {
    ++iterations_;
    if (state.last_accepted) ++accepted_;
    phi_trace_.push_back(state.phi);
    if (state.iteration > burn_in_ && (state.iteration - burn_in_) % thin_ == 0) record(state);
  }

  void record(const ChainState& state) {
    const std::size_t modes = lattice_->size();
    for (std::size_t n = 0; n < grid_.knots(); ++n) {
      const auto& w = state.path.value(n);
      const auto& u = state.trajectory.states[n];
      for (std::size_t i = 0; i < modes; ++i) {
        const std::size_t at = 2 * (n * modes + i);
        path_[at].push(w[i].real());
        path_[at + 1].push(w[i].imag());
        traj_[at].push(u[i].real());
        traj_[at + 1].push(u[i].imag());
      }
    }
    ++samples_;
  }

  /// Associative combination of two independent chains' summaries.
  void merge(const ChainSummary& other) {
    if (!(*lattice_ == *other.lattice_) || !(grid_ == other.grid_)) {
      throw ConfigError("cannot merge summaries of different problems");
    }
    for (std::size_t e = 0; e < path_.size(); ++e) {
      path_[e].merge(other.path_[e]);
      traj_[e].merge(other.traj_[e]);
    }
    samples_ += other.samples_;
    iterations_ += other.iterations_;
    accepted_ += other.accepted_;
    phi_trace_.insert(phi_trace_.end(), other.phi_trace_.begin(), other.phi_trace_.end());
  }

  std::uint64_t samples() const noexcept { return samples_; }
  bool has_samples() const noexcept { return samples_ > 0; }
  std::uint64_t iterations() const noexcept { return iterations_; }
  std::uint64_t accepted() const noexcept { return accepted_; }
  double acceptance_rate() const noexcept {
    return iterations_ == 0 ? 0.0
                            : static_cast<double>(accepted_) / static_cast<double>(iterations_);
  }
  const std::vector<double>& phi_trace() const noexcept { return phi_trace_; }

  const RunningStats& path_stats(std::size_t knot, std::size_t mode, Part part) const {
    return path_.at(2 * (knot * lattice_->size() + mode) + part);
  }
  const RunningStats& trajectory_stats(std::size_t knot, std::size_t mode, Part part) const {
    return traj_.at(2 * (knot * lattice_->size() + mode) + part);
  }

  SpectralField path_mean(std::size_t knot) const { return mean_of(path_, knot); }
  SpectralField trajectory_mean(std::size_t knot) const { return mean_of(traj_, knot); }
  /// E|a_k - E a_k|^2 = Var(re) + Var(im) per mode.
  std::vector<double> path_variance(std::size_t knot) const { return variance_of(path_, knot); }
  std::vector<double> trajectory_variance(std::size_t knot) const {
    return variance_of(traj_, knot);
  }

  // Raw access for serialization.
  std::vector<RunningStats>& raw_path() noexcept { return path_; }
  std::vector<RunningStats>& raw_trajectory() noexcept { return traj_; }
  const std::vector<RunningStats>& raw_path() const noexcept { return path_; }
  const std::vector<RunningStats>& raw_trajectory() const noexcept { return traj_; }
  void restore_counts(std::uint64_t samples, std::uint64_t iterations, std::uint64_t accepted,
                      std::vector<double> phi_trace) {
    samples_ = samples;
    iterations_ = iterations;
    accepted_ = accepted;
    phi_trace_ = std::move(phi_trace);
  }

 private:
  SpectralField mean_of(const std::vector<RunningStats>& stats, std::size_t knot) const {
    if (!has_samples()) throw ConfigError("chain summary holds no samples; mean is undefined");
    SpectralField f(lattice_);
    for (std::size_t i = 0; i < f.size(); ++i) {
      const std::size_t at = 2 * (knot * lattice_->size() + i);
      f[i] = Complex(stats.at(at).mean(), stats.at(at + 1).mean());
    }
    return f;
  }
  std::vector<double> variance_of(const std::vector<RunningStats>& stats,
                                  std::size_t knot) const {
    if (!has_samples()) throw ConfigError("chain summary holds no samples; variance is undefined");
    std::vector<double> v(lattice_->size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::size_t at = 2 * (knot * lattice_->size() + i);
      v[i] = stats.at(at).variance() + stats.at(at + 1).variance();
    }
    return v;
  }

  LatticePtr lattice_;
  TimeGrid grid_;
  std::uint64_t burn_in_ = 0;
  std::uint64_t thin_ = 1;
  std::vector<RunningStats> path_;
  std::vector<RunningStats> traj_;
  std::uint64_t samples_ = 0;
  std::uint64_t iterations_ = 0;
  std::uint64_t accepted_ = 0;
  std::vector<double> phi_trace_;
};

struct ChainSettings {
  std::uint64_t iterations = 0;
  std::uint64_t burn_in = 0;
  std::uint64_t thin = 1;
  /// Checkpoint hook cadence in iterations; 0 disables.
  std::uint64_t checkpoint_every = 0;
  /// Stop early once this many iterations are done (0: run to `iterations`).
  std::uint64_t stop_after = 0;
};

struct ChainHooks {
  std::function<void(const ChainState&)> on_step;
  std::function<void(const ChainState&, const ChainSummary&)> on_checkpoint;
};

/// Advances `state` to `settings.iterations`, accumulating into `summary`.
inline void run_chain(const ChainProblem& problem, const ChainSettings& settings,
                      ChainState& state, ChainSummary& summary, const ChainHooks& hooks = {}) {
  while (state.iteration < settings.iterations) {
    if (settings.stop_after != 0 && state.iteration >= settings.stop_after) break;
    mcmc_step(state, problem);
    summary.observe(state);
    if (hooks.on_step) hooks.on_step(state);
    if (settings.checkpoint_every != 0 && state.iteration % settings.checkpoint_every == 0 &&
        hooks.on_checkpoint) {
      hooks.on_checkpoint(state, summary);
    }
  }
}

/// Fresh chain from a prior draw with the given seed, run to completion.
inline ChainSummary run_chain(const ChainProblem& problem, const ChainSettings& settings,
                              double beta, std::uint64_t seed, const ChainHooks& hooks = {}) {
  ChainState state = initialize_chain(problem, beta, seed);
  ChainSummary summary(problem.prior.lattice, problem.prior.grid, settings.burn_in,
                       settings.thin);
  run_chain(problem, settings, state, summary, hooks);
  return summary;
}

}  // namespace nsb
