#pragma once

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "nsb/checkpoint.hpp"
#include "nsb/config.hpp"
#include "nsb/errors.hpp"
#include "nsb/field_io.hpp"
#include "nsb/forward_solver.hpp"
#include "nsb/mcmc.hpp"
#include "nsb/observation.hpp"
#include "nsb/prior.hpp"
#include "nsb/transform.hpp"

// Experiment driver behind the command-line tool. Everything lives under the
// configured output directory:
//
//   config.json            resolved configuration (written by truth)
//   truth/                 W_NNNN.field, u_NNNN.field and their manifests
//   obs.dat                synthetic observations
//   chain_<i>/             trace.txt, checkpoint.txt, summary.txt, report.txt
//   export/                plot tables written by export

namespace nsb {

namespace fs = std::filesystem;

inline fs::path truth_dir(const RunConfig& c) { return c.out_dir / "truth"; }
inline fs::path obs_path(const RunConfig& c) { return c.out_dir / "obs.dat"; }
inline fs::path chain_dir(const RunConfig& c, std::size_t i) {
  return c.out_dir / ("chain_" + std::to_string(i));
}

/// Seed of chain i: the configured chain seed for chain 0, a splitmix64
/// scramble of (seed + i) otherwise.
inline std::uint64_t derived_seed(std::uint64_t seed, std::size_t i) {
  if (i == 0) return seed;
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (i + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Column label of a watched mode, e.g. a01 for (0,1) and a-2_3 for (-2,3).
inline std::string mode_label(Wavenumber k) {
  if (k.k1 >= 0 && k.k1 <= 9 && k.k2 >= 0 && k.k2 <= 9) {
    return "a" + std::to_string(k.k1) + std::to_string(k.k2);
  }
  return "a" + std::to_string(k.k1) + "_" + std::to_string(k.k2);
}

namespace detail {

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("failed writing " + path.string());
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace detail

/// Draws the truth W from the prior (truth seed) and u0 from the
/// initial-condition prior, solves forward and writes truth/ atomically.
inline Trajectory cmd_truth(const RunConfig& cfg) {
  cfg.validate(/*allow_noise_free=*/true);
  const PriorSpec prior = cfg.prior();
  Rng rng(cfg.seeds.truth);
  const WienerPath w = sample_path(prior, rng);
  const SpectralField u0 = sample_initial(cfg.initial_prior(), rng);
  Trajectory traj = solve_forward(u0, w, cfg.viscosity, cfg.solver);

  detail::ensure_dir(cfg.out_dir);
  const fs::path final_dir = truth_dir(cfg);
  const fs::path tmp = cfg.out_dir / "truth.tmp";
  fs::remove_all(tmp);
  try {
    detail::ensure_dir(tmp);
    write_path(tmp, w, "W");
    write_trajectory(tmp, traj, "u");
  } catch (...) {
    fs::remove_all(tmp);
    throw;
  }
  fs::remove_all(final_dir);
  fs::rename(tmp, final_dir);
  detail::write_text(cfg.out_dir / "config.json", cfg.to_json().dump(2) + "\n");
  return traj;
}

/// Synthesizes observations of the stored truth with the noise seed.
inline ObservationSet cmd_observe(const RunConfig& cfg) {
  cfg.validate(/*allow_noise_free=*/true);
  const Trajectory traj = read_snapshots(truth_dir(cfg), "u");
  if (!(traj.grid == cfg.grid()) || traj.states.front().lattice().modes_per_dim() != cfg.modes_per_dim) {
    throw ConfigError("stored truth does not match the configured lattice or time grid");
  }
  ObservationConfig ocfg = cfg.observation();
  Rng rng(cfg.seeds.noise);
  ObservationSet set = synthesize_data(traj, ocfg, rng);
  set.noise_seed = cfg.seeds.noise;
  write_observations(obs_path(cfg), set);
  return set;
}

/// The chain problem implied by a configuration and the files on disk.
inline ChainProblem load_problem(const RunConfig& cfg) {
  cfg.validate();
  const auto lat = cfg.lattice();
  ChainProblem p{cfg.prior(), std::nullopt, SpectralField(lat), {}, cfg.viscosity, cfg.solver};
  p.data = read_observations(obs_path(cfg), cfg.observation());
  if (cfg.mode == InferenceMode::Joint) {
    p.initial_prior = cfg.initial_prior();
  } else {
    p.u0 = read_field_file(truth_dir(cfg) / "u_0000.field");
    if (p.u0.lattice().modes_per_dim() != cfg.modes_per_dim) {
      throw ConfigError("stored initial condition does not match modes_per_dim");
    }
  }
  return p;
}

struct SampleOptions {
  std::size_t chains = 1;
  /// Checkpoint to continue from (single chain); its directory is reused.
  std::optional<fs::path> resume;
  /// Stop once this many iterations are done (0: run to the configured count).
  std::uint64_t stop_after = 0;
};

namespace detail {

inline std::string trace_header(const RunConfig& cfg) {
  std::string h = "nsb-trace v1\niter phi accepted";
  for (const auto& k : cfg.watch_modes) h += " " + mode_label(k) + "_re " + mode_label(k) + "_im";
  return h + "\n";
}

inline std::string trace_row(const ChainState& s, const std::vector<std::size_t>& watch) {
  std::string row = std::to_string(s.iteration) + " " + format_double(s.phi) + " " +
                    (s.last_accepted ? "1" : "0");
  const auto& w = s.path.value(s.path.grid().steps);
  for (std::size_t i : watch) {
    row += " " + format_double(w[i].real()) + " " + format_double(w[i].imag());
  }
  return row + "\n";
}

/// Keeps the two header lines and the first `rows` data rows.
inline void truncate_trace(const fs::path& path, std::uint64_t rows) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open trace " + path.string() + " for resumption");
  std::string kept, line;
  std::uint64_t lines = 0;
  while (lines < rows + 2 && std::getline(is, line)) {
    kept += line + "\n";
    ++lines;
  }
  if (lines < rows + 2) {
    throw IoError(path.string() + ": trace has fewer rows than the checkpoint iteration");
  }
  is.close();
  write_text(path, kept);
}

inline void write_report(const fs::path& path, const ChainState& s, const ChainSummary& sum) {
  std::string r;
  r += "iterations " + std::to_string(s.iteration) + "\n";
  r += "accepted " + std::to_string(s.accepted) + "\n";
  r += "acceptance_rate " + format_double(sum.acceptance_rate()) + "\n";
  r += "samples " + std::to_string(sum.samples()) + "\n";
  r += "forward_solves " + std::to_string(s.forward_solves) + "\n";
  r += "blowups " + std::to_string(s.blowups) + "\n";
  write_text(path, r);
}

inline ChainSummary run_one_chain(const RunConfig& cfg, const ChainProblem& problem,
                                  const fs::path& dir, std::uint64_t seed,
                                  const SampleOptions& opt) {
  const std::uint64_t hash = cfg.hash();
  const auto lat = cfg.lattice();
  std::vector<std::size_t> watch;
  for (const auto& k : cfg.watch_modes) watch.push_back(lat->index_of(k));

  ChainState state;
  ChainSummary summary;
  const fs::path trace_path = dir / "trace.txt";
  if (opt.resume) {
    Checkpoint ck = read_checkpoint_file(*opt.resume, problem);
    if (ck.config_hash != hash) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%016llx vs %016llx",
                    static_cast<unsigned long long>(ck.config_hash),
                    static_cast<unsigned long long>(hash));
      throw ConfigError("refusing to resume: checkpoint belongs to a different configuration (" +
                        std::string(buf) + ")");
    }
    state = std::move(ck.state);
    summary = std::move(ck.summary);
    truncate_trace(trace_path, state.iteration);
  } else {
    ensure_dir(dir);
    state = initialize_chain(problem, cfg.beta, seed);
    summary = ChainSummary(lat, cfg.grid(), cfg.burn_in, cfg.thin);
    write_text(trace_path, trace_header(cfg));
  }

  std::ofstream trace(trace_path, std::ios::binary | std::ios::app);
  if (!trace) throw IoError("cannot append to " + trace_path.string());
  ChainHooks hooks;
  hooks.on_step = [&](const ChainState& s) { trace << trace_row(s, watch); };
  hooks.on_checkpoint = [&](const ChainState& s, const ChainSummary& sum) {
    trace.flush();
    if (!trace) throw IoError("failed writing " + trace_path.string());
    write_checkpoint_file(dir / "checkpoint.txt", s, sum, hash);
  };
  ChainSettings settings = cfg.chain_settings();
  settings.stop_after = opt.stop_after;
  run_chain(problem, settings, state, summary, hooks);
  trace.flush();
  if (!trace) throw IoError("failed writing " + trace_path.string());
  trace.close();

  write_checkpoint_file(dir / "checkpoint.txt", state, summary, hash);
  std::ofstream os(dir / "summary.txt", std::ios::binary);
  write_summary(os, summary);
  if (!os) throw IoError("failed writing " + (dir / "summary.txt").string());
  write_report(dir / "report.txt", state, summary);
  return summary;
}

}  // namespace detail

/// Runs one or more independent chains (one thread each, derived seeds) and
/// returns their merged summary.
inline ChainSummary cmd_sample(const RunConfig& cfg, const SampleOptions& opt = {}) {
  const ChainProblem problem = load_problem(cfg);
  if (opt.chains == 0) throw ConfigError("--chains must be >= 1");
  if (opt.resume) {
    if (opt.chains != 1) throw ConfigError("--resume continues a single chain; drop --chains");
    return detail::run_one_chain(cfg, problem, opt.resume->parent_path(), 0, opt);
  }
  std::vector<ChainSummary> results(opt.chains);
  if (opt.chains == 1) {
    results[0] = detail::run_one_chain(cfg, problem, chain_dir(cfg, 0), cfg.seeds.chain, opt);
  } else {
    std::vector<std::exception_ptr> errors(opt.chains);
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < opt.chains; ++i) {
      threads.emplace_back([&, i] {
        try {
          results[i] = detail::run_one_chain(cfg, problem, chain_dir(cfg, i),
                                             derived_seed(cfg.seeds.chain, i), opt);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  ChainSummary merged = results[0];
  for (std::size_t i = 1; i < results.size(); ++i) merged.merge(results[i]);
  return merged;
}

/// Merged summary of every chain_<i> directory present.
inline ChainSummary load_summaries(const RunConfig& cfg) {
  std::optional<ChainSummary> merged;
  for (std::size_t i = 0;; ++i) {
    const fs::path p = chain_dir(cfg, i) / "summary.txt";
    if (!fs::exists(p)) break;
    std::ifstream is(p, std::ios::binary);
    ChainSummary s = read_summary(is, p.string());
    if (merged) {
      merged->merge(s);
    } else {
      merged = std::move(s);
    }
  }
  if (!merged) throw IoError("no chain summaries under " + cfg.out_dir.string() + "; run sample first");
  return *merged;
}

namespace detail {

inline std::string time_tag(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", t);
  return buf;
}

inline void write_vorticity_grid(const fs::path& path, const SpectralField& u, double t,
                                 const std::string& what) {
  const PhysicalField w = vorticity(u);
  const int m = w.modes_per_dim;
  std::string text = "# " + what + " vorticity w = d/dx u2 - d/dy u1 at t=" + time_tag(t) +
                     "; row i is x = 2 pi i/" + std::to_string(m) + ", column j is y = 2 pi j/" +
                     std::to_string(m) + "\n";
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (j > 0) text += ' ';
      text += format_double(w(0, i, j));
    }
    text += '\n';
  }
  write_text(path, text);
}

}  // namespace detail

/// Writes plot tables for `what` = fig1 | fig2 | csv; returns the files written.
inline std::vector<fs::path> cmd_export(const RunConfig& cfg, const std::string& what) {
  if (what != "fig1" && what != "fig2" && what != "csv") {
    throw ConfigError("unknown export kind '" + what + "' (expected fig1, fig2 or csv)");
  }
  cfg.validate();
  const ChainSummary summary = load_summaries(cfg);
  if (!summary.has_samples()) {
    throw ConfigError("chain summary holds no samples (iterations <= burn_in?); nothing to export");
  }
  const Trajectory truth = read_snapshots(truth_dir(cfg), "u");
  const WienerPath truth_w = read_path(truth_dir(cfg), "W");
  const auto& lat = *summary.lattice_ptr();
  if (lat.modes_per_dim() != cfg.modes_per_dim || !(truth.grid == summary.grid())) {
    throw ConfigError("stored truth and chain summary disagree on the lattice or time grid");
  }
  const fs::path dir = cfg.out_dir / "export";
  detail::ensure_dir(dir);
  std::vector<fs::path> written;
  const TimeGrid grid = summary.grid();

  if (what == "fig1") {
    for (double t : cfg.fig1_times) {
      const std::size_t n = grid.knot_of(t);
      const auto tag = detail::time_tag(t);
      written.push_back(dir / ("fig1_truth_t" + tag + ".txt"));
      detail::write_vorticity_grid(written.back(), truth.states[n], t, "truth");
      written.push_back(dir / ("fig1_mean_t" + tag + ".txt"));
      detail::write_vorticity_grid(written.back(), summary.trajectory_mean(n), t, "posterior mean");
    }
  } else if (what == "fig2") {
    for (const auto& k : cfg.export_modes) {
      const std::size_t i = lat.index_of(k);
      for (const char* quantity : {"W", "u"}) {
        const bool is_path = quantity[0] == 'W';
        for (auto part : {ChainSummary::kReal, ChainSummary::kImag}) {
          std::string text = "t truth mean mean_minus_std mean_plus_std\n";
          for (std::size_t n = 0; n < grid.knots(); ++n) {
            const Complex tv = is_path ? truth_w.value(n)[i] : truth.states[n][i];
            const auto& st = is_path ? summary.path_stats(n, i, part)
                                     : summary.trajectory_stats(n, i, part);
            const double truth_part = part == ChainSummary::kReal ? tv.real() : tv.imag();
            text += format_double(grid.time(n)) + ' ' + format_double(truth_part) + ' ' +
                    format_double(st.mean()) + ' ' + format_double(st.mean() - st.stddev()) + ' ' +
                    format_double(st.mean() + st.stddev()) + '\n';
          }
          written.push_back(dir / (std::string("fig2_") + quantity + "_" + mode_label(k) +
                                   (part == ChainSummary::kReal ? "_re" : "_im") + ".txt"));
          detail::write_text(written.back(), text);
        }
      }
    }
  } else {
    std::string text = "t,k1,k2,truth_re,truth_im,mean_re,mean_im,std_re,std_im\n";
    for (std::size_t n = 0; n < grid.knots(); ++n) {
      for (const auto& k : cfg.export_modes) {
        const std::size_t i = lat.index_of(k);
        const auto& re = summary.path_stats(n, i, ChainSummary::kReal);
        const auto& im = summary.path_stats(n, i, ChainSummary::kImag);
        const Complex tv = truth_w.value(n)[i];
        text += format_double(grid.time(n)) + ',' + std::to_string(k.k1) + ',' +
                std::to_string(k.k2) + ',' + format_double(tv.real()) + ',' +
                format_double(tv.imag()) + ',' + format_double(re.mean()) + ',' +
                format_double(im.mean()) + ',' + format_double(re.stddev()) + ',' +
                format_double(im.stddev()) + '\n';
      }
    }
    written.push_back(dir / "posterior_W.csv");
    detail::write_text(written.back(), text);
  }
  return written;
}

/// Prints the trace-class report; returns whether the check passed.
inline bool cmd_check_prior(const RunConfig& cfg, std::ostream& os) {
  cfg.validate();
  const PriorSpec spec = cfg.prior();
  const auto r = check_trace_class(spec, cfg.epsilon_check);
  os << "modes_per_dim " << cfg.modes_per_dim << '\n'
     << "epsilon " << format_double(r.epsilon) << '\n'
     << "partial_sum " << format_double(r.partial_sum) << '\n'
     << "last_shell_eigenvalue " << format_double(r.last_shell_eigenvalue) << '\n'
     << "last_shell_sum " << format_double(r.last_shell_sum) << '\n'
     << "tail_ratio " << format_double(r.tail_ratio) << " (threshold "
     << format_double(kTraceClassTailRatio) << ")\n"
     << "noise_energy " << format_double(noise_energy(spec)) << '\n'
     << "trace_class " << (r.passed ? "pass" : "fail") << '\n';
  return r.passed;
}

}  // namespace nsb
