#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nsb/errors.hpp"
#include "nsb/forward_solver.hpp"
#include "nsb/lattice.hpp"
#include "nsb/spectral_field.hpp"

namespace nsb {

/// Seeded random source. The full state (engine and the normal
/// distribution's cached deviate) can be saved and restored, so a restored
/// generator continues the identical stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double gaussian() { return normal_(engine_); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  std::uint64_t next_u64() { return engine_(); }

  std::string state() const {
    std::ostringstream os;
    os << engine_ << ' ' << normal_;
    return os.str();
  }
  void restore(const std::string& text) {
    std::istringstream is(text);
    is >> engine_ >> normal_;
    if (!is) throw IoError("corrupt rng state");
  }

  bool operator==(const Rng& o) const { return engine_ == o.engine_ && normal_ == o.normal_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

/**
 * Q-Wiener prior on driving paths: W(t) = sum_k sigma_k e_k beta_k(t) with
 * independent standard Brownian motions beta_k. Each complex mode increment
 * over a step has E|dW_k|^2 = dt sigma_k^2, split evenly between the real and
 * imaginary parts, so that a real orthonormal basis sees variance sigma_k^2
 * per basis function.
 */
struct PriorSpec {
  LatticePtr lattice;
  std::vector<double> sigma;
  TimeGrid grid;
  double epsilon = 0.25;

  double horizon() const noexcept { return grid.horizon(); }
};

/// sigma_k = pi^2 / lambda_k, i.e. spatial covariance pi^4 A^-2. In time the
/// covariance is min(s, t), the Green's function of the time Laplacian with
/// a Dirichlet condition at 0 and a Neumann condition at T, realised exactly
/// by Brownian increments.
inline PriorSpec make_paper_prior(const LatticePtr& lattice, double horizon, double dt) {
  PriorSpec spec{lattice, std::vector<double>(lattice->size(), 0.0),
                 TimeGrid::from_horizon(horizon, dt)};
  const double pi2 = std::numbers::pi * std::numbers::pi;
  for (std::size_t i = 0; i < lattice->size(); ++i) {
    if (lattice->is_active(i)) spec.sigma[i] = pi2 / lattice->eigenvalue(i);
  }
  return spec;
}

/// Prior with sigma given per wavenumber; the entry for k also applies to -k
/// and unlisted modes get zero.
inline PriorSpec make_table_prior(const LatticePtr& lattice, TimeGrid grid,
                                  const std::map<Wavenumber, double>& table) {
  PriorSpec spec{lattice, std::vector<double>(lattice->size(), 0.0), grid};
  for (const auto& [k, s] : table) {
    if (!(s >= 0.0)) throw ConfigError("sigma for " + to_string(k) + " must be >= 0");
    const std::size_t i = lattice->index_of(k);
    if (!lattice->is_active(i)) {
      throw ConfigError("sigma table entry " + to_string(k) + " is on the Nyquist row");
    }
    spec.sigma[i] = s;
    spec.sigma[lattice->conjugate(i)] = s;
  }
  return spec;
}

/// Trace of the spatial covariance, E_0 = sum_k sigma_k^2.
inline double noise_energy(const PriorSpec& spec) {
  double e = 0.0;
  for (double s : spec.sigma) e += s * s;
  return e;
}

struct TraceClassReport {
  double epsilon = 0.0;
  /// sum_k sigma_k^2 lambda_k^(1/2 + eps) over the lattice.
  double partial_sum = 0.0;
  /// Contribution of the outermost nonempty eigenvalue shell.
  double last_shell_sum = 0.0;
  double last_shell_eigenvalue = 0.0;
  double tail_ratio = 0.0;
  bool passed = false;
};

inline constexpr double kTraceClassTailRatio = 1e-3;

/**
 * Truncated check of sum_k sigma_k^2 lambda_k^(1/2 + eps) < infinity. A shell
 * is the set of modes sharing one eigenvalue; the check passes when the
 * outermost shell that carries any variance contributes less than 1e-3 of
 * the total.
 */
inline TraceClassReport check_trace_class(const PriorSpec& spec, double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("trace-class epsilon must be positive");
  TraceClassReport report;
  report.epsilon = epsilon;
  std::map<double, double> shells;
  const auto& lat = *spec.lattice;
  for (std::size_t i = 0; i < lat.size(); ++i) {
    const double s2 = spec.sigma[i] * spec.sigma[i];
    if (s2 == 0.0) continue;
    const double term = s2 * std::pow(lat.eigenvalue(i), 0.5 + epsilon);
    shells[lat.eigenvalue(i)] += term;
    report.partial_sum += term;
  }
  if (!shells.empty()) {
    report.last_shell_eigenvalue = shells.rbegin()->first;
    report.last_shell_sum = shells.rbegin()->second;
    report.tail_ratio = report.last_shell_sum / report.partial_sum;
  }
  report.passed = std::isfinite(report.partial_sum) &&
                  (shells.size() <= 1 || report.tail_ratio < kTraceClassTailRatio);
  return report;
}

namespace detail {

/// Conjugate-symmetric complex Gaussian with E|a_k|^2 = scale_k^2.
inline SpectralField gaussian_field(const LatticePtr& lattice,
                                    const std::vector<double>& scale, Rng& rng) {
  SpectralField f(lattice);
  for (std::size_t i = 0; i < lattice->size(); ++i) {
    if (!lattice->is_active(i) || !lattice->is_positive_half(i)) continue;
    const double sd = scale[i] * std::numbers::sqrt2 / 2.0;
    const double re = rng.gaussian();
    const double im = rng.gaussian();
    if (sd == 0.0) continue;
    const Complex a(sd * re, sd * im);
    f[i] = a;
    f[lattice->conjugate(i)] = std::conj(a);
  }
  return f;
}

}  // namespace detail

/// Draw from the prior: independent increments, mode-k variance dt sigma_k^2.
inline WienerPath sample_path(const PriorSpec& spec, Rng& rng) {
  std::vector<double> scale(spec.sigma.size());
  const double sqrt_dt = std::sqrt(spec.grid.dt);
  for (std::size_t i = 0; i < scale.size(); ++i) scale[i] = spec.sigma[i] * sqrt_dt;
  std::vector<SpectralField> inc;
  inc.reserve(spec.grid.steps);
  for (std::size_t n = 0; n < spec.grid.steps; ++n) {
    inc.push_back(detail::gaussian_field(spec.lattice, scale, rng));
  }
  return WienerPath::from_increments(spec.grid, std::move(inc));
}

/// Centered Gaussian prior on the initial condition, E|a_k|^2 = tau_k^2.
struct InitialConditionPrior {
  LatticePtr lattice;
  std::vector<double> tau;

  double trace() const {
    double t = 0.0;
    for (double v : tau) t += v * v;
    return t;
  }
};

/// tau_k = scale * lambda_k^(-exponent); scale = 0 gives the point mass at 0.
inline InitialConditionPrior make_power_ic_prior(const LatticePtr& lattice, double scale,
                                                 double exponent) {
  InitialConditionPrior p{lattice, std::vector<double>(lattice->size(), 0.0)};
  for (std::size_t i = 0; i < lattice->size(); ++i) {
    if (lattice->is_active(i)) p.tau[i] = scale * std::pow(lattice->eigenvalue(i), -exponent);
  }
  return p;
}

inline SpectralField sample_initial(const InitialConditionPrior& prior, Rng& rng) {
  return detail::gaussian_field(prior.lattice, prior.tau, rng);
}

/// sqrt(1 - beta^2) current + beta fresh, modewise.
inline SpectralField pcn_blend(const SpectralField& current, const SpectralField& fresh,
                               double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("pCN beta must lie in [0, 1]");
  current.require_compatible(fresh);
  const double keep = std::sqrt(1.0 - beta * beta);
  SpectralField out(current.lattice_ptr());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = keep * current[i] + beta * fresh[i];
  return out;
}

/// Knotwise pCN blend of two paths on the same grid.
inline WienerPath pcn_blend(const WienerPath& current, const WienerPath& fresh, double beta) {
  if (!(current.grid() == fresh.grid())) throw ConfigError("pCN blend of paths on different grids");
  if (beta == 0.0) return current;
  if (beta == 1.0) return fresh;
  std::vector<SpectralField> inc;
  inc.reserve(current.grid().steps);
  for (std::size_t n = 0; n < current.grid().steps; ++n) {
    inc.push_back(pcn_blend(current.increment(n), fresh.increment(n), beta));
  }
  return WienerPath::from_increments(current.grid(), std::move(inc));
}

}  // namespace nsb
