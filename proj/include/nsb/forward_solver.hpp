#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "nsb/errors.hpp"
#include "nsb/field_io.hpp"
#include "nsb/lattice.hpp"
#include "nsb/spectral_field.hpp"
#include "nsb/transform.hpp"

namespace nsb {

/// Uniform knots t_n = n * dt, n = 0..steps.
struct TimeGrid {
  std::size_t steps = 0;
  double dt = 0.0;

  double horizon() const noexcept { return static_cast<double>(steps) * dt; }
  double time(std::size_t n) const noexcept { return static_cast<double>(n) * dt; }
  std::size_t knots() const noexcept { return steps + 1; }

  /// Knot index of time t, or throws if t is not within 1e-9 dt of a knot.
  std::size_t knot_of(double t) const {
    const double x = t / dt;
    const double r = std::round(x);
    if (r < 0.0 || r > static_cast<double>(steps) || std::abs(x - r) > 1e-9) {
      throw ConfigError("time " + format_brief(t) + " is not a knot of the grid dt=" +
                        format_brief(dt) + ", T=" + format_brief(horizon()));
    }
    return static_cast<std::size_t>(r);
  }

  bool operator==(const TimeGrid&) const = default;

  static TimeGrid from_horizon(double horizon, double dt) {
    if (!(dt > 0.0) || !(horizon > 0.0)) {
      throw ConfigError("time horizon and step must be positive");
    }
    const double n = std::round(horizon / dt);
    if (n < 1.0 || std::abs(n * dt - horizon) > 1e-9 * horizon) {
      throw ConfigError("horizon T=" + format_brief(horizon) +
                        " is not a whole number of steps dt=" + format_brief(dt));
    }
    return {static_cast<std::size_t>(n), dt};
  }
};

/**
 * Driving path sampled at the knots of a TimeGrid, W(t_0) = 0, interpreted as
 * piecewise linear between knots. Increments are the primary data; knot
 * values are their prefix sums.
 */
class WienerPath {
 public:
  WienerPath() = default;

  WienerPath(LatticePtr lattice, TimeGrid grid)
      : grid_(grid),
        increments_(grid.steps, SpectralField(lattice)),
        values_(grid.knots(), SpectralField(lattice)) {}

  static WienerPath from_increments(TimeGrid grid, std::vector<SpectralField> increments) {
    if (increments.size() != grid.steps || increments.empty()) {
      throw ConfigError("path needs one increment per time step");
    }
    WienerPath w;
    w.grid_ = grid;
    w.increments_ = std::move(increments);
    w.values_.reserve(grid.knots());
    w.values_.emplace_back(w.increments_.front().lattice_ptr());
    for (const auto& dw : w.increments_) w.values_.push_back(w.values_.back() + dw);
    return w;
  }

  /// Path through the given knot values; values[0] must be exactly zero.
  static WienerPath from_values(TimeGrid grid, const std::vector<SpectralField>& values) {
    if (values.size() != grid.knots()) {
      throw ConfigError("path needs one value per knot");
    }
    for (const auto& c : values.front().coeffs()) {
      if (c != Complex(0.0)) throw ConfigError("driving path must start at W(0) = 0");
    }
    std::vector<SpectralField> inc;
    inc.reserve(grid.steps);
    for (std::size_t n = 0; n < grid.steps; ++n) inc.push_back(values[n + 1] - values[n]);
    return from_increments(grid, std::move(inc));
  }

  const TimeGrid& grid() const noexcept { return grid_; }
  const LatticePtr& lattice_ptr() const { return values_.front().lattice_ptr(); }
  const WavenumberLattice& lattice() const { return values_.front().lattice(); }

  const SpectralField& value(std::size_t n) const { return values_.at(n); }
  const SpectralField& increment(std::size_t n) const { return increments_.at(n); }
  const std::vector<SpectralField>& values() const noexcept { return values_; }
  const std::vector<SpectralField>& increments() const noexcept { return increments_; }

  /// Linear interpolation between the bracketing knots.
  SpectralField value_at(double t) const {
    const double tol = 1e-12 * grid_.horizon();
    if (t < -tol || t > grid_.horizon() + tol) {
      throw ConfigError("time " + format_brief(t) + " outside [0, " +
                        format_brief(grid_.horizon()) + "]");
    }
    const double x = std::clamp(t / grid_.dt, 0.0, static_cast<double>(grid_.steps));
    std::size_t n = static_cast<std::size_t>(std::floor(x));
    if (n >= grid_.steps) return values_.back();
    const double theta = x - static_cast<double>(n);
    return values_[n] + theta * increments_[n];
  }

  /// sup_t ||W(t)||_{H^s}; attained at a knot for piecewise-linear paths.
  double sup_norm(double s) const {
    double m = 0.0;
    for (const auto& v : values_) m = std::max(m, sobolev_norm(v, s));
    return m;
  }

 private:
  TimeGrid grid_;
  std::vector<SpectralField> increments_;
  std::vector<SpectralField> values_;
};

/// Solution states u(t_n) on the knots of the driving path.
struct Trajectory {
  TimeGrid grid;
  std::vector<SpectralField> states;

  const SpectralField& at_time(double t) const { return states.at(grid.knot_of(t)); }
};

struct SolverOptions {
  bool nonlinear = true;
  /// Abort once ||u||_H exceeds this value.
  double blowup_cap = 1e6;
};

/**
 * Exponential Euler step for du = -nu A u dt - B(u,u) dt + dW:
 *
 *   a_{n+1} = E a_n + phi1 b_n + E dW_n,   E = exp(-nu lambda dt),
 *   phi1 = (1 - E) / (nu lambda),          b_n = -P B(u_n, u_n).
 *
 * The linear part is integrated exactly; the noise increment is propagated
 * over the full step as a left-endpoint increment.
 */
class ExponentialEuler {
 public:
  ExponentialEuler(const LatticePtr& lattice, double dt, double viscosity,
                   SolverOptions options = {})
      : options_(options), decay_(lattice->size()), phi1_(lattice->size()) {
    if (!(dt > 0.0) || !(viscosity > 0.0)) {
      throw ConfigError("time step and viscosity must be positive");
    }
    for (std::size_t i = 0; i < lattice->size(); ++i) {
      const double mu = viscosity * lattice->eigenvalue(i);
      decay_[i] = std::exp(-mu * dt);
      phi1_[i] = -std::expm1(-mu * dt) / mu;
    }
  }

  SpectralField advance(const SpectralField& u, const SpectralField& dw) const {
    u.require_compatible(dw);
    if (!u.all_finite() || !dw.all_finite()) {
      throw NumericalError("non-finite coefficient entering a solver step");
    }
    SpectralField next(u.lattice_ptr());
    if (options_.nonlinear) {
      const SpectralField b = nonlinear_term(u);
      for (std::size_t i = 0; i < next.size(); ++i) {
        next[i] = decay_[i] * (u[i] + dw[i]) - phi1_[i] * b[i];
      }
    } else {
      for (std::size_t i = 0; i < next.size(); ++i) next[i] = decay_[i] * (u[i] + dw[i]);
    }
    return next;
  }

  const SolverOptions& options() const noexcept { return options_; }

 private:
  SolverOptions options_;
  std::vector<double> decay_;
  std::vector<double> phi1_;
};

inline SpectralField step(const SpectralField& u, const SpectralField& dw, double dt,
                          double viscosity, SolverOptions options = {}) {
  return ExponentialEuler(u.lattice_ptr(), dt, viscosity, options).advance(u, dw);
}

inline Trajectory solve_forward(const SpectralField& u0, const WienerPath& path,
                                double viscosity, SolverOptions options = {}) {
  u0.require_compatible(path.value(0));
  const TimeGrid& grid = path.grid();
  ExponentialEuler stepper(u0.lattice_ptr(), grid.dt, viscosity, options);
  Trajectory traj{grid, {}};
  traj.states.reserve(grid.knots());
  traj.states.push_back(u0);
  for (std::size_t n = 0; n < grid.steps; ++n) {
    SpectralField next = stepper.advance(traj.states.back(), path.increment(n));
    const double energy = sobolev_norm(next, 0.0);
    if (!std::isfinite(energy) || energy > options.blowup_cap) {
      throw NumericalError("forward solve blew up at knot " + std::to_string(n + 1) +
                           " (t=" + format_double(grid.time(n + 1)) +
                           "): ||u||_H = " + format_brief(energy) + " exceeds cap " +
                           format_double(options.blowup_cap));
    }
    traj.states.push_back(std::move(next));
  }
  return traj;
}

/**
 * Stochastic convolution z(t) = W(t) - int_0^t nu A exp(-nu A (t - s)) W(s) ds
 * for the piecewise-linear path, integrated in closed form on each segment.
 */
inline SpectralField z_process(const WienerPath& path, double t, double viscosity) {
  const TimeGrid& grid = path.grid();
  const double tol = 1e-12 * grid.horizon();
  if (t < -tol || t > grid.horizon() + tol) {
    throw ConfigError("z_process time " + format_brief(t) + " outside [0, " +
                      format_brief(grid.horizon()) + "]");
  }
  t = std::clamp(t, 0.0, grid.horizon());
  const auto& lat = path.lattice();
  SpectralField z = path.value_at(t);

  for (std::size_t i = 0; i < lat.size(); ++i) {
    const double mu = viscosity * lat.eigenvalue(i);
    Complex integral = 0.0;
    for (std::size_t n = 0; n < grid.steps; ++n) {
      const double s0 = grid.time(n);
      if (s0 >= t) break;
      const double s1 = std::min(grid.time(n + 1), t);
      const double h = s1 - s0;
      const Complex w0 = path.value(n)[i];
      const Complex slope = path.increment(n)[i] / grid.dt;
      // int_{s0}^{s1} (w0 + slope (s - s0)) mu exp(-mu (t - s)) ds
      const double e1 = std::exp(-mu * (t - s1));
      const double span = -e1 * std::expm1(-mu * h);  // e1 - e0
      const double ramp = h * e1 - span / mu;
      integral += w0 * span + slope * ramp;
    }
    z[i] -= integral;
  }
  return z;
}

/**
 * |<u(t),phi> + nu int <u, A phi> - int <B(u, phi), u> - <u0, phi> - <W(t), phi>|
 * at knot `t_index`, with phi the real field of mode pair `phi_mode` (unit
 * amplitude) and trapezoidal quadrature on the knots.
 */
inline double weak_form_residual(const Trajectory& traj, const WienerPath& path,
                                 Wavenumber phi_mode, std::size_t t_index,
                                 double viscosity) {
  if (t_index >= traj.states.size()) {
    throw ConfigError("weak_form_residual knot index out of range");
  }
  const auto& lattice = traj.states.front().lattice_ptr();
  const SpectralField phi = single_mode(lattice, phi_mode, 1.0);
  const double lambda = lattice->eigenvalue(lattice->index_of(phi_mode));

  auto integrand = [&](const SpectralField& u) {
    return viscosity * lambda * inner(u, phi) - inner(nonlinear_term(u, phi), u);
  };
  double integral = 0.0;
  double prev = integrand(traj.states[0]);
  for (std::size_t n = 1; n <= t_index; ++n) {
    const double cur = integrand(traj.states[n]);
    integral += 0.5 * traj.grid.dt * (prev + cur);
    prev = cur;
  }
  return std::abs(inner(traj.states[t_index], phi) + integral -
                  inner(traj.states[0], phi) - inner(path.value(t_index), phi));
}

/**
 * Writes one field snapshot per knot as `<prefix>_<index>.field` plus a
 * `<prefix>_manifest.txt` listing index, time and file name.
 */
inline void write_snapshots(const std::filesystem::path& dir, const std::string& prefix,
                            const TimeGrid& grid, const std::vector<SpectralField>& states) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / (prefix + "_manifest.txt"));
  if (!manifest) throw IoError("cannot write manifest in " + dir.string());
  manifest << "nsb-manifest v1 " << prefix << ' ' << states.size() << ' '
           << format_double(grid.dt) << '\n';
  for (std::size_t n = 0; n < states.size(); ++n) {
    char name[64];
    std::snprintf(name, sizeof name, "%s_%04zu.field", prefix.c_str(), n);
    write_field_file(dir / name, states[n]);
    manifest << n << ' ' << format_double(grid.time(n)) << ' ' << name << '\n';
  }
  if (!manifest) throw IoError("failed writing manifest in " + dir.string());
}

inline void write_trajectory(const std::filesystem::path& dir, const Trajectory& traj,
                             const std::string& prefix = "u") {
  write_snapshots(dir, prefix, traj.grid, traj.states);
}

inline void write_path(const std::filesystem::path& dir, const WienerPath& path,
                       const std::string& prefix = "W") {
  write_snapshots(dir, prefix, path.grid(), path.values());
}

/// Reads snapshots written by write_snapshots; returns the grid and states.
inline Trajectory read_snapshots(const std::filesystem::path& dir, const std::string& prefix) {
  const auto manifest_path = dir / (prefix + "_manifest.txt");
  std::ifstream manifest(manifest_path);
  if (!manifest) throw IoError("missing manifest " + manifest_path.string());
  std::string magic, version, name, dt_text;
  std::size_t count = 0;
  if (!(manifest >> magic >> version >> name >> count >> dt_text) ||
      magic != "nsb-manifest" || version != "v1" || name != prefix || count < 2) {
    throw IoError(manifest_path.string() + ": malformed manifest header");
  }
  Trajectory traj;
  traj.grid = {count - 1, parse_double(dt_text, manifest_path.string())};
  for (std::size_t n = 0; n < count; ++n) {
    std::size_t index = 0;
    std::string time, file;
    if (!(manifest >> index >> time >> file) || index != n) {
      throw IoError(manifest_path.string() + ": bad entry " + std::to_string(n));
    }
    traj.states.push_back(read_field_file(dir / file));
  }
  return traj;
}

inline WienerPath read_path(const std::filesystem::path& dir, const std::string& prefix = "W") {
  Trajectory t = read_snapshots(dir, prefix);
  return WienerPath::from_values(t.grid, t.states);
}

}  // namespace nsb
