#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "nsb/errors.hpp"
#include "nsb/field_io.hpp"
#include "nsb/mcmc.hpp"

// Checkpoint and summary files are line-oriented text. Every floating-point
// value is written as a C99 hexadecimal float, so a reload is bit-exact.
//
//   nsb-checkpoint v1
//   config_hash <hex>
//   counters <iteration> <accepted> <forward_solves> <blowups> <last_accepted>
//   beta <x> phi <x>
//   rng <engine and normal-distribution state>
//   path <M> <steps> <dt>      then steps * (M*M - 1) lines "re im"
//   u0                         then M*M - 1 lines "re im"
//   <summary block>
//
// Summary block:
//
//   nsb-summary v1
//   shape <M> <steps> <dt> <burn_in> <thin>
//   counts <samples> <iterations> <accepted>
//   phi_trace <n>              then n values
//   path_stats <n>             then n lines "mean m2"
//   trajectory_stats <n>       then n lines "mean m2"
//
// The trajectory is not stored; it is recomputed from (u0, path) on load.

namespace nsb {

namespace detail {

inline void expect_token(std::istream& is, const std::string& token, const std::string& source) {
  std::string got;
  if (!(is >> got) || got != token) {
    throw IoError(source + ": expected '" + token + "', found '" + got + "'");
  }
}

inline double read_hex(std::istream& is, const std::string& source) {
  std::string token;
  if (!(is >> token)) throw IoError(source + ": unexpected end of file");
  return parse_double(token, source);
}

template <class T>
T read_int(std::istream& is, const std::string& source) {
  T v{};
  if (!(is >> v)) throw IoError(source + ": expected an integer");
  return v;
}

inline void write_coeffs(std::ostream& os, const SpectralField& f) {
  for (const auto& c : f.coeffs()) os << format_hex(c.real()) << ' ' << format_hex(c.imag()) << '\n';
}

inline SpectralField read_coeffs(std::istream& is, const LatticePtr& lattice,
                                 const std::string& source) {
  SpectralField f(lattice);
  for (auto& c : f.coeffs()) {
    const double re = read_hex(is, source);
    const double im = read_hex(is, source);
    c = Complex(re, im);
  }
  return f;
}

}  // namespace detail

inline void write_summary(std::ostream& os, const ChainSummary& s) {
  os << "nsb-summary v1\n";
  os << "shape " << s.lattice_ptr()->modes_per_dim() << ' ' << s.grid().steps << ' '
     << format_hex(s.grid().dt) << ' ' << s.burn_in() << ' ' << s.thin() << '\n';
  os << "counts " << s.samples() << ' ' << s.iterations() << ' ' << s.accepted() << '\n';
  os << "phi_trace " << s.phi_trace().size() << '\n';
  for (double v : s.phi_trace()) os << format_hex(v) << '\n';
  auto stats = [&](const char* name, const std::vector<RunningStats>& v) {
    os << name << ' ' << v.size() << '\n';
    for (const auto& r : v) os << format_hex(r.mean()) << ' ' << format_hex(r.m2()) << '\n';
  };
  stats("path_stats", s.raw_path());
  stats("trajectory_stats", s.raw_trajectory());
}

inline ChainSummary read_summary(std::istream& is, const std::string& source = "summary") {
  detail::expect_token(is, "nsb-summary", source);
  detail::expect_token(is, "v1", source);
  detail::expect_token(is, "shape", source);
  const int m = detail::read_int<int>(is, source);
  const auto steps = detail::read_int<std::size_t>(is, source);
  const double dt = detail::read_hex(is, source);
  const auto burn_in = detail::read_int<std::uint64_t>(is, source);
  const auto thin = detail::read_int<std::uint64_t>(is, source);
  LatticePtr lattice;
  try {
    lattice = build_lattice(m);
  } catch (const ConfigError& e) {
    throw IoError(source + ": " + e.what());
  }
  ChainSummary s(lattice, TimeGrid{steps, dt}, burn_in, thin);
  detail::expect_token(is, "counts", source);
  const auto samples = detail::read_int<std::uint64_t>(is, source);
  const auto iterations = detail::read_int<std::uint64_t>(is, source);
  const auto accepted = detail::read_int<std::uint64_t>(is, source);
  detail::expect_token(is, "phi_trace", source);
  const auto n_trace = detail::read_int<std::size_t>(is, source);
  std::vector<double> trace(n_trace);
  for (auto& v : trace) v = detail::read_hex(is, source);
  auto stats = [&](const char* name, std::vector<RunningStats>& v) {
    detail::expect_token(is, name, source);
    const auto n = detail::read_int<std::size_t>(is, source);
    if (n != v.size()) throw IoError(source + ": " + name + " has the wrong length");
    for (auto& r : v) {
      const double mean = detail::read_hex(is, source);
      const double m2 = detail::read_hex(is, source);
      r = RunningStats::restore(samples, mean, m2);
    }
  };
  stats("path_stats", s.raw_path());
  stats("trajectory_stats", s.raw_trajectory());
  s.restore_counts(samples, iterations, accepted, std::move(trace));
  return s;
}

inline void write_checkpoint(std::ostream& os, const ChainState& state,
                             const ChainSummary& summary, std::uint64_t config_hash) {
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash));
  os << "nsb-checkpoint v1\n";
  os << "config_hash " << hash << '\n';
  os << "counters " << state.iteration << ' ' << state.accepted << ' ' << state.forward_solves
     << ' ' << state.blowups << ' ' << (state.last_accepted ? 1 : 0) << '\n';
  os << "beta " << format_hex(state.beta) << " phi " << format_hex(state.phi) << '\n';
  os << "rng " << state.rng.state() << '\n';
  const auto& grid = state.path.grid();
  os << "path " << state.path.lattice().modes_per_dim() << ' ' << grid.steps << ' '
     << format_hex(grid.dt) << '\n';
  for (const auto& inc : state.path.increments()) detail::write_coeffs(os, inc);
  os << "u0\n";
  detail::write_coeffs(os, state.u0);
  write_summary(os, summary);
}

struct Checkpoint {
  ChainState state;
  ChainSummary summary;
  std::uint64_t config_hash = 0;
};

/// Restores a checkpoint; the trajectory of the stored state is recomputed
/// with `problem`'s forward model (not counted as a chain forward solve).
inline Checkpoint read_checkpoint(std::istream& is, const ChainProblem& problem,
                                  const std::string& source = "checkpoint") {
  Checkpoint ck;
  detail::expect_token(is, "nsb-checkpoint", source);
  detail::expect_token(is, "v1", source);
  detail::expect_token(is, "config_hash", source);
  std::string hash;
  is >> hash;
  ck.config_hash = std::stoull(hash, nullptr, 16);
  detail::expect_token(is, "counters", source);
  ChainState& st = ck.state;
  st.iteration = detail::read_int<std::uint64_t>(is, source);
  st.accepted = detail::read_int<std::uint64_t>(is, source);
  st.forward_solves = detail::read_int<std::uint64_t>(is, source);
  st.blowups = detail::read_int<std::uint64_t>(is, source);
  st.last_accepted = detail::read_int<int>(is, source) != 0;
  detail::expect_token(is, "beta", source);
  st.beta = detail::read_hex(is, source);
  detail::expect_token(is, "phi", source);
  st.phi = detail::read_hex(is, source);
  detail::expect_token(is, "rng", source);
  std::string rng_line;
  std::getline(is, rng_line);
  st.rng.restore(rng_line);
  detail::expect_token(is, "path", source);
  const int m = detail::read_int<int>(is, source);
  const auto steps = detail::read_int<std::size_t>(is, source);
  const double dt = detail::read_hex(is, source);
  const auto& lattice = problem.prior.lattice;
  if (m != lattice->modes_per_dim() || !(TimeGrid{steps, dt} == problem.prior.grid)) {
    throw ConfigError(source + ": checkpoint lattice or time grid differs from the problem");
  }
  std::vector<SpectralField> inc;
  inc.reserve(steps);
  for (std::size_t n = 0; n < steps; ++n) inc.push_back(detail::read_coeffs(is, lattice, source));
  st.path = WienerPath::from_increments(TimeGrid{steps, dt}, std::move(inc));
  detail::expect_token(is, "u0", source);
  st.u0 = detail::read_coeffs(is, lattice, source);
  ck.summary = read_summary(is, source);
  st.trajectory = solve_forward(st.u0, st.path, problem.viscosity, problem.solver);
  return ck;
}

inline void write_checkpoint_file(const std::filesystem::path& path, const ChainState& state,
                                  const ChainSummary& summary, std::uint64_t config_hash) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp);
    if (!os) throw IoError("cannot write checkpoint " + tmp.string());
    write_checkpoint(os, state, summary, config_hash);
    if (!os) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint read_checkpoint_file(const std::filesystem::path& path,
                                       const ChainProblem& problem) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  return read_checkpoint(is, problem, path.string());
}

}  // namespace nsb
