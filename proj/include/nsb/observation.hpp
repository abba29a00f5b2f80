#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "nsb/errors.hpp"
#include "nsb/field_io.hpp"
#include "nsb/forward_solver.hpp"
#include "nsb/prior.hpp"
#include "nsb/transform.hpp"

namespace nsb {

enum class ObservationKind {
  /// Both velocity components at every collocation point.
  GridVelocity,
  /// Real and imaginary part of the listed mode amplitudes.
  ModeCoefficients,
};

/**
 * Which linear functionals of u(t_j) are observed, and with what noise.
 * Entries are ordered time-major, then grid point (x index outer, y index
 * inner), then velocity component. For ModeCoefficients: time-major, then
 * listed mode, then (re, im).
 */
struct ObservationConfig {
  std::vector<double> times;
  ObservationKind kind = ObservationKind::GridVelocity;
  std::vector<Wavenumber> modes;
  int modes_per_dim = 0;
  double gamma = 1.0;
  /// Optional per-entry noise variances (length J*K); empty means gamma^2 I.
  std::vector<double> noise_variance;

  std::size_t values_per_time() const {
    return kind == ObservationKind::GridVelocity
               ? 2 * static_cast<std::size_t>(modes_per_dim) * modes_per_dim
               : 2 * modes.size();
  }
  std::size_t size() const { return times.size() * values_per_time(); }

  /// `allow_noise_free` admits gamma = 0 for generating exact data; the
  /// likelihood always needs gamma > 0.
  void validate(bool allow_noise_free = false) const {
    if (!(gamma > 0.0) && !(allow_noise_free && gamma == 0.0)) {
      throw ConfigError("observation noise gamma must be > 0");
    }
    for (std::size_t j = 0; j < times.size(); ++j) {
      if (!(times[j] > 0.0)) throw ConfigError("observation times must be > 0");
      if (j > 0 && !(times[j] > times[j - 1])) {
        throw ConfigError("observation times must be strictly increasing");
      }
    }
    if (!noise_variance.empty()) {
      if (noise_variance.size() != size()) {
        throw ConfigError("noise_variance length does not match J*K");
      }
      for (double v : noise_variance) {
        if (!(v > 0.0)) throw ConfigError("noise variances must be positive");
      }
    }
  }

  double variance(std::size_t entry) const {
    return noise_variance.empty() ? gamma * gamma : noise_variance[entry];
  }
};

struct ObservationSet {
  ObservationConfig config;
  std::vector<double> data;
  std::optional<std::uint64_t> noise_seed;
};

/// Appends the observed functionals of one state to `out`.
inline void observe_state(const SpectralField& u, const ObservationConfig& cfg,
                          std::vector<double>& out) {
  if (cfg.kind == ObservationKind::GridVelocity) {
    if (u.lattice().modes_per_dim() != cfg.modes_per_dim) {
      throw ConfigError("observation grid does not match the solver lattice");
    }
    const PhysicalField phys = to_physical(u);
    const std::size_t n = phys.points();
    for (std::size_t p = 0; p < n; ++p) {
      out.push_back(phys.values[p]);
      out.push_back(phys.values[n + p]);
    }
  } else {
    for (const auto& k : cfg.modes) {
      const Complex a = u.at(k);
      out.push_back(a.real());
      out.push_back(a.imag());
    }
  }
}

/// G(W): observed functionals at every configured time. Times must be knots.
inline std::vector<double> forward_observe(const Trajectory& traj,
                                           const ObservationConfig& cfg) {
  std::vector<double> out;
  out.reserve(cfg.size());
  for (double t : cfg.times) observe_state(traj.states.at(traj.grid.knot_of(t)), cfg, out);
  return out;
}

/// delta = G + noise with noise ~ N(0, Sigma).
inline ObservationSet synthesize_data(const Trajectory& traj, const ObservationConfig& cfg,
                                      Rng& rng) {
  cfg.validate(/*allow_noise_free=*/true);
  ObservationSet set{cfg, forward_observe(traj, cfg), std::nullopt};
  for (std::size_t e = 0; e < set.data.size(); ++e) {
    set.data[e] += std::sqrt(cfg.variance(e)) * rng.gaussian();
  }
  return set;
}

/// 1/2 |Sigma^{-1/2} (delta - G)|^2.
inline double misfit(const std::vector<double>& predicted, const ObservationSet& obs) {
  if (predicted.size() != obs.data.size()) {
    throw ConfigError("prediction length " + std::to_string(predicted.size()) +
                      " does not match data length " + std::to_string(obs.data.size()));
  }
  if (!obs.data.empty() && obs.config.noise_variance.empty() && !(obs.config.gamma > 0.0)) {
    throw ConfigError("the likelihood needs observation noise gamma > 0");
  }
  double sum = 0.0;
  for (std::size_t e = 0; e < predicted.size(); ++e) {
    const double r = obs.data[e] - predicted[e];
    sum += r * r / obs.config.variance(e);
  }
  return 0.5 * sum;
}

struct PhiEvaluation {
  double phi = 0.0;
  std::vector<double> predicted;
  Trajectory trajectory;
};

/// Phi(u0, W; delta): one forward solve, then the weighted misfit.
inline PhiEvaluation phi(const WienerPath& path, const SpectralField& u0,
                         const ObservationSet& data, double viscosity,
                         SolverOptions options = {}) {
  PhiEvaluation ev;
  ev.trajectory = solve_forward(u0, path, viscosity, options);
  ev.predicted = forward_observe(ev.trajectory, data.config);
  ev.phi = misfit(ev.predicted, data);
  return ev;
}

/**
 * Observation data file:
 *
 *   nsb-obs v1 <J> <K> <gamma>
 *   # noise_seed <n>        (optional provenance line)
 *   J*K values, one per line, in the fixed ordering
 */
inline void write_observations(const std::filesystem::path& path, const ObservationSet& obs) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "nsb-obs v1 " << obs.config.times.size() << ' ' << obs.config.values_per_time()
     << ' ' << format_double(obs.config.gamma) << '\n';
  if (obs.noise_seed) os << "# noise_seed " << *obs.noise_seed << '\n';
  for (double v : obs.data) os << format_double(v) << '\n';
  if (!os) throw IoError("failed writing " + path.string());
}

/// Reads a data file and checks it against the expected configuration.
inline ObservationSet read_observations(const std::filesystem::path& path,
                                        const ObservationConfig& cfg) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open observation file " + path.string());
  std::string magic, version, gamma_text;
  std::size_t j = 0, k = 0;
  if (!(is >> magic >> version >> j >> k >> gamma_text) || magic != "nsb-obs" ||
      version != "v1") {
    throw IoError(path.string() + ": missing 'nsb-obs v1 J K gamma' header");
  }
  if (j != cfg.times.size() || k != cfg.values_per_time()) {
    throw ConfigError(path.string() + ": holds J=" + std::to_string(j) + " K=" +
                      std::to_string(k) + " but the configuration expects J=" +
                      std::to_string(cfg.times.size()) + " K=" +
                      std::to_string(cfg.values_per_time()));
  }
  ObservationSet obs{cfg, {}, std::nullopt};
  // The header gamma records how the data was generated; the likelihood uses
  // the configured noise model.
  parse_double(gamma_text, path.string());
  obs.data.reserve(j * k);
  std::string token;
  while (is >> token) {
    if (token == "#") {
      std::string key, value;
      is >> key >> value;
      if (key == "noise_seed") obs.noise_seed = std::stoull(value);
      continue;
    }
    obs.data.push_back(parse_double(token, path.string()));
  }
  if (obs.data.size() != j * k) {
    throw IoError(path.string() + ": expected " + std::to_string(j * k) + " values, found " +
                  std::to_string(obs.data.size()));
  }
  return obs;
}

}  // namespace nsb
