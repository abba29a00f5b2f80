// nsb: command-line front end.
//
//   nsb truth        sample the truth forcing and solve forward
//   nsb observe      synthesize noisy observations of the truth
//   nsb sample       run the pCN chain(s)
//   nsb export KIND  write plot tables (fig1, fig2, csv)
//   nsb check-prior  trace-class report for the configured prior
//
// Exit status: 0 success, 2 configuration error, 3 numerical failure, 4 I/O.

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "nsb/config.hpp"
#include "nsb/errors.hpp"
#include "nsb/experiment.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::string preset = "paper-sec5";
  std::optional<std::uint64_t> seed_truth, seed_noise, seed_chain;
  std::optional<std::string> out;
  std::optional<std::string> mode;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON configuration file (schema nsb-config v1)");
  cmd->add_option("--preset", f.preset, "base preset: paper-sec5 or desk")
      ->check(CLI::IsMember({"paper-sec5", "desk"}));
  cmd->add_option("--seed-truth", f.seed_truth, "seed for the truth forcing");
  cmd->add_option("--seed-noise", f.seed_noise, "seed for the observation noise");
  cmd->add_option("--seed-chain", f.seed_chain, "seed for the chain");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--mode", f.mode, "forcing or joint")->check(CLI::IsMember({"forcing", "joint"}));
}

nsb::RunConfig resolve(const CommonFlags& f) {
  nsb::RunConfig cfg = nsb::preset_config(f.preset);
  if (!f.config.empty()) cfg = nsb::load_config(f.config, cfg);
  if (f.seed_truth) cfg.seeds.truth = *f.seed_truth;
  if (f.seed_noise) cfg.seeds.noise = *f.seed_noise;
  if (f.seed_chain) cfg.seeds.chain = *f.seed_chain;
  if (f.out) cfg.out_dir = *f.out;
  if (f.mode) cfg.mode = *f.mode == "joint" ? nsb::InferenceMode::Joint : nsb::InferenceMode::Forcing;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian inference of the forcing of 2D periodic Navier-Stokes"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto* truth = app.add_subcommand("truth", "sample the truth forcing and solve forward");
  auto* observe = app.add_subcommand("observe", "write noisy observations of the truth");
  auto* sample = app.add_subcommand("sample", "run pCN MCMC on the observations");
  auto* exporter = app.add_subcommand("export", "write plot tables from the chain summaries");
  auto* check = app.add_subcommand("check-prior", "print the trace-class report of the prior");
  for (auto* cmd : {truth, observe, sample, exporter, check}) add_common(cmd, flags);

  std::size_t chains = 1;
  std::string resume;
  std::uint64_t stop_after = 0;
  sample->add_option("--chains", chains, "independent chains, one thread each")
      ->check(CLI::PositiveNumber);
  sample->add_option("--resume", resume, "continue the chain stored in this checkpoint");
  sample->add_option("--stop-after", stop_after, "stop after this many iterations");

  std::string kind;
  exporter->add_option("kind", kind, "fig1, fig2 or csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const nsb::RunConfig cfg = resolve(flags);
    if (truth->parsed()) {
      const auto traj = nsb::cmd_truth(cfg);
      std::cout << "truth: " << traj.states.size() << " knots written to "
                << nsb::truth_dir(cfg).string() << '\n';
    } else if (observe->parsed()) {
      const auto set = nsb::cmd_observe(cfg);
      std::cout << "observe: " << set.data.size() << " values written to "
                << nsb::obs_path(cfg).string() << '\n';
    } else if (sample->parsed()) {
      nsb::SampleOptions opt;
      opt.chains = chains;
      if (!resume.empty()) opt.resume = std::filesystem::path(resume);
      opt.stop_after = stop_after;
      const auto summary = nsb::cmd_sample(cfg, opt);
      std::cout << "sample: " << summary.iterations() << " iterations, acceptance rate "
                << nsb::format_double(summary.acceptance_rate()) << ", " << summary.samples()
                << " samples\n";
    } else if (exporter->parsed()) {
      for (const auto& p : nsb::cmd_export(cfg, kind)) std::cout << p.string() << '\n';
    } else if (check->parsed()) {
      nsb::cmd_check_prior(cfg, std::cout);
    }
  } catch (const nsb::Error& e) {
    std::cerr << "nsb: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "nsb: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "nsb: unexpected error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
