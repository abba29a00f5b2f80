#include <gtest/gtest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "nsb/config.hpp"
#include "nsb/experiment.hpp"

namespace nsb {
namespace {

namespace fs = std::filesystem;

const fs::path kRoot = fs::temp_directory_path() / "nsb_experiment_test";

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

/// Runs the CLI; returns its exit status. Output goes to `<kRoot>/last.log`.
int cli(const std::string& args) {
  fs::create_directories(kRoot);
  const std::string cmd =
      std::string(NSB_CLI_PATH) + " " + args + " > " + (kRoot / "last.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream is(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(is, line)) ++n;
  return n;
}

/// Small fast experiment: 8x8 lattice, short chain.
fs::path small_config(const std::string& name, const std::string& extra_chain = "",
                      const std::string& extra_top = "") {
  const fs::path p = kRoot / (name + ".json");
  spit(p, R"({"schema": "nsb-config v1", "preset": "desk", "modes_per_dim": 8,)" + extra_top +
              R"( "chain": {"iterations": 400, "burn_in": 50, "thin": 5, "checkpoint_every": 100,)" +
              R"( "watch_modes": [[0, 1], [2, 2]], "export_modes": [[0, 1], [2, 2]])" +
              extra_chain + "}}");
  return p;
}

int pipeline(const fs::path& config, const fs::path& out, const std::string& sample_args = "") {
  const std::string common = "--config " + config.string() + " --out " + out.string();
  if (int rc = cli("truth " + common)) return rc;
  if (int rc = cli("observe " + common)) return rc;
  return cli("sample " + common + " " + sample_args);
}

class Experiment : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { fs::remove_all(kRoot); }
};

TEST_F(Experiment, SameSeedsGiveIdenticalBytes) {
  const auto cfg = small_config("det");
  ASSERT_EQ(pipeline(cfg, kRoot / "det_a"), 0) << slurp(kRoot / "last.log");
  ASSERT_EQ(pipeline(cfg, kRoot / "det_b"), 0);
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(kRoot / "det_a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), kRoot / "det_a");
    if (rel == "config.json") continue;  // records out_dir
    EXPECT_EQ(slurp(e.path()), slurp(kRoot / "det_b" / rel)) << rel;
    ++compared;
  }
  EXPECT_GT(compared, 20u);
  ASSERT_EQ(cli("sample --config " + cfg.string() + " --out " + (kRoot / "det_b").string() +
                " --seed-chain 99"),
            0);
  EXPECT_NE(slurp(kRoot / "det_a/chain_0/trace.txt"), slurp(kRoot / "det_b/chain_0/trace.txt"));
}

TEST_F(Experiment, TraceLayout) {
  const auto cfg = small_config("layout");
  ASSERT_EQ(pipeline(cfg, kRoot / "layout"), 0);
  std::ifstream is(kRoot / "layout/chain_0/trace.txt");
  std::string l1, l2, l3;
  std::getline(is, l1);
  std::getline(is, l2);
  std::getline(is, l3);
  EXPECT_EQ(l1, "nsb-trace v1");
  EXPECT_EQ(l2, "iter phi accepted a01_re a01_im a22_re a22_im");
  EXPECT_EQ(l3.rfind("1 ", 0), 0u);
  EXPECT_EQ(count_lines(kRoot / "layout/chain_0/trace.txt"), 402u);
}

TEST_F(Experiment, PhiColumnMatchesRecomputation) {
  const auto path = small_config("audit");
  ASSERT_EQ(pipeline(path, kRoot / "audit"), 0);
  RunConfig cfg = load_config(path, preset_config("desk"));
  cfg.out_dir = kRoot / "audit";
  const auto problem = load_problem(cfg);
  const auto ck = read_checkpoint_file(kRoot / "audit/chain_0/checkpoint.txt", problem);
  const double recomputed = phi(ck.state.path, ck.state.u0, problem.data, cfg.viscosity).phi;
  std::ifstream is(kRoot / "audit/chain_0/trace.txt");
  std::string line, last;
  while (std::getline(is, line)) last = line;
  std::istringstream row(last);
  std::uint64_t iter;
  double phi_col;
  row >> iter >> phi_col;
  EXPECT_EQ(iter, 400u);
  EXPECT_NEAR(phi_col, recomputed, 1e-10 * recomputed);
}

TEST_F(Experiment, PaperPresetTruthHasElevenKnots) {
  ASSERT_EQ(cli("truth --preset paper-sec5 --out " + (kRoot / "paper").string()), 0)
      << slurp(kRoot / "last.log");
  EXPECT_EQ(count_lines(kRoot / "paper/truth/u_manifest.txt"), 12u);
  EXPECT_TRUE(fs::exists(kRoot / "paper/truth/u_0010.field"));
  EXPECT_FALSE(fs::exists(kRoot / "paper/truth/u_0011.field"));
  EXPECT_FALSE(fs::exists(kRoot / "paper/truth.tmp"));
  ASSERT_EQ(cli("observe --preset paper-sec5 --out " + (kRoot / "paper").string()), 0);
  std::ifstream is(kRoot / "paper/obs.dat");
  std::string magic, version;
  std::size_t j, k;
  is >> magic >> version >> j >> k;
  EXPECT_EQ(j * k, 10u * 2 * 32 * 32);
  EXPECT_EQ(count_lines(kRoot / "paper/obs.dat"), 2u + 10 * 2 * 32 * 32);
}

TEST_F(Experiment, InvalidConfigFailsWithoutWritingFiles) {
  const fs::path bad = kRoot / "bad.json";
  spit(bad, R"({"schema": "nsb-config v1", "observation": {"times": [0.015]}})");
  EXPECT_EQ(cli("truth --config " + bad.string() + " --out " + (kRoot / "bad_out").string()), 2);
  EXPECT_FALSE(fs::exists(kRoot / "bad_out"));
  EXPECT_NE(slurp(kRoot / "last.log").find("0.015"), std::string::npos);

  spit(bad, R"({"schema": "nsb-config v1", "chain": {"betta": 0.1}})");
  EXPECT_EQ(cli("truth --config " + bad.string() + " --out " + (kRoot / "bad_out").string()), 2);
  EXPECT_NE(slurp(kRoot / "last.log").find("chain.betta"), std::string::npos);

  spit(bad, R"({"schema": "nsb-config v1", "observation": {"grid_order": "y-x-component"}})");
  EXPECT_EQ(cli("truth --config " + bad.string() + " --out " + (kRoot / "bad_out").string()), 2);

  spit(bad, R"({"schema": "nsb-config v2"})");
  EXPECT_EQ(cli("truth --config " + bad.string() + " --out " + (kRoot / "bad_out").string()), 2);
  spit(bad, "{not json");
  EXPECT_EQ(cli("truth --config " + bad.string() + " --out " + (kRoot / "bad_out").string()), 2);
  EXPECT_FALSE(fs::exists(kRoot / "bad_out"));

  EXPECT_EQ(cli("truth --preset nope"), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("truth --config " + (kRoot / "missing.json").string()), 4);
  EXPECT_EQ(cli("sample --preset desk --out " + (kRoot / "empty_dir").string()), 4);
}

TEST_F(Experiment, NoiseFreeObservationsReproduceTheForwardMap) {
  const auto path = small_config("exact", "", R"( "observation": {"gamma": 0},)");
  const fs::path out = kRoot / "exact";
  ASSERT_EQ(cli("truth --config " + path.string() + " --out " + out.string()), 0);
  ASSERT_EQ(cli("observe --config " + path.string() + " --out " + out.string()), 0)
      << slurp(kRoot / "last.log");
  RunConfig cfg = load_config(path, preset_config("desk"));
  const auto traj = read_snapshots(out / "truth", "u");
  const auto g = forward_observe(traj, cfg.observation());
  // gamma = 0 is not a valid likelihood, so read with a nonzero gamma.
  cfg.gamma = 1.0;
  const auto obs = read_observations(out / "obs.dat", cfg.observation());
  EXPECT_EQ(obs.data, g);
  EXPECT_EQ(obs.noise_seed, std::optional<std::uint64_t>(cfg.seeds.noise));
  EXPECT_EQ(cli("sample --config " + path.string() + " --out " + out.string()), 2);
}

TEST(Config, PaperPresetSerializesTheExperimentConstants) {
  const Json j = preset_config("paper-sec5").to_json();
  EXPECT_EQ(j["schema"], "nsb-config v1");
  EXPECT_EQ(j["modes_per_dim"], 32);
  EXPECT_EQ(j["viscosity"].get<double>(), 0.1);
  EXPECT_EQ(j["T"].get<double>(), 0.1);
  EXPECT_EQ(j["dt"].get<double>(), 0.01);
  EXPECT_EQ(j["sigma_rule"], "pi2_over_lambda");
  EXPECT_EQ(j["observation"]["gamma"].get<double>(), 3.2);
  EXPECT_EQ(j["observation"]["kind"], "grid");
  EXPECT_EQ(j["observation"]["times"],
            Json({0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.1}));
  EXPECT_EQ(j["mode"], "forcing");
  EXPECT_EQ(j["chain"]["export_modes"], Json({{0, 1}, {4, 4}}));
  EXPECT_EQ(j["chain"]["fig1_times"], Json({0.01, 0.1}));

  const Json d = preset_config("desk").to_json();
  EXPECT_EQ(d["modes_per_dim"], 16);
  EXPECT_EQ(d["chain"]["iterations"], 20000);
  EXPECT_EQ(d["viscosity"].get<double>(), 0.1);
  EXPECT_EQ(d["observation"]["gamma"].get<double>(), 3.2);
}

TEST(Config, JsonRoundTripAndHash) {
  RunConfig c = preset_config("desk");
  c.sigma_rule = SigmaRule::Table;
  c.sigma_table = {{{1, 0}, 2.0}};
  c.mode = InferenceMode::Joint;
  c.tau_rule = TauRule::Power;
  const RunConfig back = parse_config(c.to_json().dump());
  EXPECT_EQ(back.to_json().dump(), c.to_json().dump());
  EXPECT_EQ(back.hash(), c.hash());
  RunConfig moved = c;
  moved.out_dir = "elsewhere";
  EXPECT_EQ(moved.hash(), c.hash());
  moved.beta = 0.2;
  EXPECT_NE(moved.hash(), c.hash());
  EXPECT_THROW(parse_config(R"({"schema": "nsb-config v1", "chain": {"iterations": -1}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"schema": "nsb-config v1", "viscosity": "x"})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"schema": "nsb-config v1", "mode": "both"})"), ConfigError);
}

TEST(Config, ValidationRejectsInconsistentSettings) {
  RunConfig c = preset_config("desk");
  EXPECT_NO_THROW(c.validate());
  c.dt = 0.03;
  EXPECT_THROW(c.validate(), ConfigError);
  c = preset_config("desk");
  c.watch_modes = {{8, 1}};
  EXPECT_THROW(c.validate(), ConfigError);
  c = preset_config("desk");
  c.beta = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = preset_config("desk");
  c.fig1_times = {0.025};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST_F(Experiment, ResumeMatchesUninterruptedRun) {
  const auto cfg = small_config("resume");
  ASSERT_EQ(pipeline(cfg, kRoot / "resume_full"), 0);
  ASSERT_EQ(pipeline(cfg, kRoot / "resume_cut", "--stop-after 230"), 0);
  EXPECT_EQ(count_lines(kRoot / "resume_cut/chain_0/trace.txt"), 232u);
  // Simulate a crash after the last checkpoint: extra rows beyond it are dropped.
  std::ofstream(kRoot / "resume_cut/chain_0/trace.txt", std::ios::app) << "999 0 0 0 0 0 0\n";
  const auto ckpt = kRoot / "resume_cut/chain_0/checkpoint.txt";
  ASSERT_EQ(cli("sample --config " + cfg.string() + " --out " + (kRoot / "resume_cut").string() +
                " --resume " + ckpt.string()),
            0)
      << slurp(kRoot / "last.log");
  for (const char* f : {"trace.txt", "summary.txt", "checkpoint.txt", "report.txt"}) {
    EXPECT_EQ(slurp(kRoot / "resume_full/chain_0" / f), slurp(kRoot / "resume_cut/chain_0" / f))
        << f;
  }

  const auto other = small_config("resume_other", R"(, "beta": 0.2)");
  EXPECT_EQ(cli("sample --config " + other.string() + " --out " + (kRoot / "resume_cut").string() +
                " --resume " + ckpt.string()),
            2);
  EXPECT_NE(slurp(kRoot / "last.log").find("refusing to resume"), std::string::npos);
}

TEST_F(Experiment, IndependentChainsUseSeparateDirectories) {
  const auto cfg = small_config("chains");
  ASSERT_EQ(pipeline(cfg, kRoot / "chains_one"), 0);
  ASSERT_EQ(pipeline(cfg, kRoot / "chains_two", "--chains 2"), 0);
  EXPECT_EQ(slurp(kRoot / "chains_one/chain_0/trace.txt"),
            slurp(kRoot / "chains_two/chain_0/trace.txt"));
  EXPECT_NE(slurp(kRoot / "chains_two/chain_0/trace.txt"),
            slurp(kRoot / "chains_two/chain_1/trace.txt"));
  ASSERT_EQ(cli("export csv --config " + cfg.string() + " --out " + (kRoot / "chains_two").string()), 0);
}

TEST_F(Experiment, ZeroIterationRunWritesAnEmptySummary) {
  const auto cfg = small_config("zero", R"(, "iterations": 0)");
  ASSERT_EQ(pipeline(cfg, kRoot / "zero"), 0) << slurp(kRoot / "last.log");
  std::ifstream is(kRoot / "zero/chain_0/summary.txt");
  const auto s = read_summary(is);
  EXPECT_EQ(s.samples(), 0u);
  EXPECT_EQ(count_lines(kRoot / "zero/chain_0/trace.txt"), 2u);
  EXPECT_EQ(cli("export csv --config " + cfg.string() + " --out " + (kRoot / "zero").string()), 2);
}

TEST_F(Experiment, ExportsOfAPriorOnlyChain) {
  // No observations: Phi = 0, and beta = 1 draws independent prior samples.
  const auto path = small_config("prior_only", R"(, "beta": 1.0, "iterations": 4000, "thin": 1)",
                                 R"( "observation": {"times": []},)");
  const fs::path out = kRoot / "prior_only";
  ASSERT_EQ(pipeline(path, out), 0) << slurp(kRoot / "last.log");
  EXPECT_NE(slurp(out / "chain_0/report.txt").find("acceptance_rate 1\n"), std::string::npos);
  const std::string common = " --config " + path.string() + " --out " + out.string();
  ASSERT_EQ(cli("export csv" + common), 0);
  ASSERT_EQ(cli("export fig2" + common), 0);
  ASSERT_EQ(cli("export fig1" + common), 0);
  EXPECT_EQ(cli("export fig3" + common), 2);

  EXPECT_EQ(count_lines(out / "export/posterior_W.csv"), 1u + 11 * 2);
  RunConfig cfg = load_config(path, preset_config("desk"));
  const auto truth_w = read_snapshots(out / "truth", "W");
  std::ifstream csv(out / "export/posterior_W.csv");
  std::string line;
  std::getline(csv, line);
  const std::size_t samples = 4000 - 50;
  while (std::getline(csv, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double t, truth_re, truth_im, mean_re, mean_im, sd_re, sd_im;
    int k1, k2;
    row >> t >> k1 >> k2 >> truth_re >> truth_im >> mean_re >> mean_im >> sd_re >> sd_im;
    const auto n = cfg.grid().knot_of(t);
    EXPECT_EQ(truth_re, truth_w.states[n].at({k1, k2}).real());
    EXPECT_EQ(truth_im, truth_w.states[n].at({k1, k2}).imag());
    const double se = 4.0 * std::max(sd_re, 1e-300) / std::sqrt(static_cast<double>(samples));
    EXPECT_LE(std::abs(mean_re), se) << line;
    EXPECT_LE(std::abs(mean_im), 4.0 * std::max(sd_im, 1e-300) / std::sqrt(double(samples))) << line;
    if (t > 0) {
      const double sigma = std::numbers::pi * std::numbers::pi / (k1 * k1 + k2 * k2);
      EXPECT_NEAR(sd_re * sd_re, t * sigma * sigma / 2, 0.1 * t * sigma * sigma / 2);
    }
  }

  EXPECT_EQ(count_lines(out / "export/fig2_W_a01_re.txt"), 12u);
  EXPECT_TRUE(fs::exists(out / "export/fig2_u_a22_im.txt"));
  EXPECT_EQ(count_lines(out / "export/fig1_truth_t0.01.txt"), 9u);
  EXPECT_TRUE(fs::exists(out / "export/fig1_mean_t0.1.txt"));
}

TEST_F(Experiment, CheckPriorReportsBothNumbers) {
  EXPECT_EQ(cli("check-prior --preset paper-sec5"), 0);
  const auto log = slurp(kRoot / "last.log");
  EXPECT_NE(log.find("trace_class pass"), std::string::npos) << log;
  EXPECT_NE(log.find("tail_ratio"), std::string::npos);
  EXPECT_NE(log.find("partial_sum"), std::string::npos);
}

}  // namespace
}  // namespace nsb
