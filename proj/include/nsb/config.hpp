#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsb/errors.hpp"
#include "nsb/forward_solver.hpp"
#include "nsb/mcmc.hpp"
#include "nsb/observation.hpp"
#include "nsb/prior.hpp"

// Run configuration: a JSON document with schema tag "nsb-config v1". A file
// may name a preset as its base and override any subset of keys; unknown keys
// are rejected.
//
//   {
//     "schema": "nsb-config v1",
//     "preset": "desk",
//     "mode": "forcing",                      forcing | joint
//     "modes_per_dim": 16, "viscosity": 0.1, "T": 0.1, "dt": 0.01,
//     "sigma_rule": "pi2_over_lambda",        pi2_over_lambda | table
//     "sigma_table": [[k1, k2, sigma], ...],
//     "epsilon_check": 0.25,
//     "ic_prior": {"tau_rule": "zero", "scale": 1.0, "exponent": 1.0},
//     "observation": {"kind": "grid", "times": [...], "gamma": 3.2,
//                     "modes": [[k1, k2], ...], "noise_variance": [...],
//                     "grid_order": "x-y-component"},
//     "solver": {"nonlinear": true, "blowup_cap": 1e6},
//     "chain": {"beta": 0.05, "iterations": 20000, "burn_in": 2000, "thin": 10,
//               "checkpoint_every": 1000, "watch_modes": [[0, 1], [4, 4]],
//               "export_modes": [[0, 1], [4, 4]], "fig1_times": [0.01, 0.1]},
//     "seeds": {"truth": 1, "noise": 2, "chain": 3},
//     "out_dir": "run"
//   }

namespace nsb {

using Json = nlohmann::ordered_json;

enum class InferenceMode { Forcing, Joint };
enum class SigmaRule { Pi2OverLambda, Table };
enum class TauRule { Zero, Power };

/// The only supported observation ordering: x index outer, y index inner,
/// then velocity component.
inline constexpr const char* kGridOrder = "x-y-component";

struct Seeds {
  std::uint64_t truth = 1;
  std::uint64_t noise = 2;
  std::uint64_t chain = 3;
};

struct RunConfig {
  std::string preset = "paper-sec5";
  InferenceMode mode = InferenceMode::Forcing;

  int modes_per_dim = 32;
  double viscosity = 0.1;
  double horizon = 0.1;
  double dt = 0.01;
  SigmaRule sigma_rule = SigmaRule::Pi2OverLambda;
  std::map<Wavenumber, double> sigma_table;
  double epsilon_check = 0.25;

  TauRule tau_rule = TauRule::Zero;
  double tau_scale = 1.0;
  double tau_exponent = 1.0;

  ObservationKind obs_kind = ObservationKind::GridVelocity;
  std::vector<double> obs_times;
  double gamma = 3.2;
  std::vector<Wavenumber> obs_modes;
  std::vector<double> noise_variance;

  SolverOptions solver;

  double beta = 0.05;
  std::uint64_t iterations = 100000;
  std::uint64_t burn_in = 10000;
  std::uint64_t thin = 10;
  std::uint64_t checkpoint_every = 1000;
  std::vector<Wavenumber> watch_modes{{0, 1}, {4, 4}};
  std::vector<Wavenumber> export_modes{{0, 1}, {4, 4}};
  std::vector<double> fig1_times{0.01, 0.1};

  Seeds seeds;
  std::filesystem::path out_dir = "run";

  TimeGrid grid() const { return TimeGrid::from_horizon(horizon, dt); }
  LatticePtr lattice() const { return build_lattice(modes_per_dim); }

  PriorSpec prior() const {
    const auto lat = lattice();
    PriorSpec spec = sigma_rule == SigmaRule::Pi2OverLambda
                         ? make_paper_prior(lat, horizon, dt)
                         : make_table_prior(lat, grid(), sigma_table);
    spec.epsilon = epsilon_check;
    return spec;
  }

  InitialConditionPrior initial_prior() const {
    return make_power_ic_prior(lattice(), tau_rule == TauRule::Zero ? 0.0 : tau_scale,
                               tau_exponent);
  }

  ObservationConfig observation() const {
    ObservationConfig cfg;
    cfg.times = obs_times;
    cfg.kind = obs_kind;
    cfg.modes = obs_modes;
    cfg.modes_per_dim = modes_per_dim;
    cfg.gamma = gamma;
    cfg.noise_variance = noise_variance;
    return cfg;
  }

  ChainSettings chain_settings() const {
    return ChainSettings{iterations, burn_in, thin, checkpoint_every, 0};
  }

  /// Cross-field checks; throws ConfigError naming the offending key.
  /// `allow_noise_free` admits gamma = 0, which can generate data but not
  /// define a likelihood.
  void validate(bool allow_noise_free = false) const {
    if (modes_per_dim < 4 || modes_per_dim % 2 != 0) {
      throw ConfigError("modes_per_dim must be even and >= 4");
    }
    if (!(viscosity > 0.0)) throw ConfigError("viscosity must be > 0");
    const TimeGrid g = grid();
    const auto lat = lattice();
    if (!(epsilon_check > 0.0)) throw ConfigError("epsilon_check must be > 0");
    if (sigma_rule == SigmaRule::Table && sigma_table.empty()) {
      throw ConfigError("sigma_rule 'table' needs a non-empty sigma_table");
    }
    prior();
    if (tau_rule == TauRule::Power && !(tau_scale >= 0.0)) {
      throw ConfigError("ic_prior.scale must be >= 0");
    }
    auto check_knot = [&](double t, const std::string& key) {
      try {
        g.knot_of(t);
      } catch (const ConfigError&) {
        throw ConfigError(key + ": time " + format_brief(t) + " is not on the knot grid (dt=" +
                          format_brief(dt) + ", T=" + format_brief(horizon) + ")");
      }
    };
    for (double t : obs_times) check_knot(t, "observation.times");
    for (double t : fig1_times) check_knot(t, "chain.fig1_times");
    auto check_modes = [&](const std::vector<Wavenumber>& modes, const std::string& key) {
      for (const auto& k : modes) {
        const auto i = lat->find(k);
        if (!i || !lat->is_active(*i)) {
          throw ConfigError(key + ": mode " + to_string(k) + " is not an active lattice mode");
        }
      }
    };
    check_modes(obs_modes, "observation.modes");
    check_modes(watch_modes, "chain.watch_modes");
    check_modes(export_modes, "chain.export_modes");
    if (obs_kind == ObservationKind::ModeCoefficients && obs_modes.empty()) {
      throw ConfigError("observation.kind 'modes' needs observation.modes");
    }
    observation().validate(allow_noise_free);
    if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("chain.beta must lie in (0, 1]");
    if (thin == 0) throw ConfigError("chain.thin must be >= 1");
    if (!(solver.blowup_cap > 0.0)) throw ConfigError("solver.blowup_cap must be > 0");
  }

  Json to_json() const;
  /// FNV-1a 64 of the canonical JSON without `out_dir`; identifies the
  /// experiment a checkpoint belongs to.
  std::uint64_t hash() const;
};

inline RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  for (int n = 1; n <= 10; ++n) c.obs_times.push_back(n / 100.0);
  if (name == "paper-sec5") return c;
  if (name == "desk") {
    c.modes_per_dim = 16;
    c.iterations = 20000;
    c.burn_in = 2000;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (known: paper-sec5, desk)");
}

namespace detail {

inline Json modes_to_json(const std::vector<Wavenumber>& modes) {
  Json a = Json::array();
  for (const auto& k : modes) a.push_back({k.k1, k.k2});
  return a;
}

inline const char* mode_name(InferenceMode m) {
  return m == InferenceMode::Forcing ? "forcing" : "joint";
}

}  // namespace detail

inline Json RunConfig::to_json() const {
  Json j;
  j["schema"] = "nsb-config v1";
  j["preset"] = preset;
  j["mode"] = detail::mode_name(mode);
  j["modes_per_dim"] = modes_per_dim;
  j["viscosity"] = viscosity;
  j["T"] = horizon;
  j["dt"] = dt;
  j["sigma_rule"] = sigma_rule == SigmaRule::Pi2OverLambda ? "pi2_over_lambda" : "table";
  Json table = Json::array();
  for (const auto& [k, s] : sigma_table) table.push_back({k.k1, k.k2, s});
  j["sigma_table"] = table;
  j["epsilon_check"] = epsilon_check;
  j["ic_prior"] = {{"tau_rule", tau_rule == TauRule::Zero ? "zero" : "power"},
                   {"scale", tau_scale},
                   {"exponent", tau_exponent}};
  j["observation"] = {{"kind", obs_kind == ObservationKind::GridVelocity ? "grid" : "modes"},
                      {"times", obs_times},
                      {"gamma", gamma},
                      {"modes", detail::modes_to_json(obs_modes)},
                      {"noise_variance", noise_variance},
                      {"grid_order", kGridOrder}};
  j["solver"] = {{"nonlinear", solver.nonlinear}, {"blowup_cap", solver.blowup_cap}};
  j["chain"] = {{"beta", beta},
                {"iterations", iterations},
                {"burn_in", burn_in},
                {"thin", thin},
                {"checkpoint_every", checkpoint_every},
                {"watch_modes", detail::modes_to_json(watch_modes)},
                {"export_modes", detail::modes_to_json(export_modes)},
                {"fig1_times", fig1_times}};
  j["seeds"] = {{"truth", seeds.truth}, {"noise", seeds.noise}, {"chain", seeds.chain}};
  j["out_dir"] = out_dir.string();
  return j;
}

inline std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t RunConfig::hash() const {
  Json j = to_json();
  j.erase("out_dir");
  return fnv1a64(j.dump());
}

namespace detail {

class ConfigReader {
 public:
  ConfigReader(Json j, std::string where) : j_(std::move(j)), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be a JSON object");
  }

  /// Rejects keys not consumed by the time this is called.
  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown configuration key '" + path(key) + "'");
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <class T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("configuration key '" + path(key) + "' has the wrong type");
    }
  }

  void read_u64(const std::string& key, std::uint64_t& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw ConfigError("configuration key '" + path(key) + "' must be a non-negative integer");
    }
    out = v.get<std::uint64_t>();
  }

  void read_modes(const std::string& key, std::vector<Wavenumber>& out) {
    if (!has(key)) return;
    out.clear();
    const auto& v = j_.at(key);
    if (!v.is_array()) throw ConfigError("configuration key '" + path(key) + "' must be a list");
    for (const auto& e : v) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() ||
          !e[1].is_number_integer()) {
        throw ConfigError("configuration key '" + path(key) + "' entries must be [k1, k2]");
      }
      out.push_back({e[0].get<int>(), e[1].get<int>()});
    }
  }

  ConfigReader child(const std::string& key) {
    has(key);
    return ConfigReader(j_.contains(key) ? j_.at(key) : Json::object(), path(key));
  }

  const Json& raw(const std::string& key) { return has(key), j_.at(key); }

  std::string path(const std::string& key) const {
    return where_.empty() ? key : where_ + "." + key;
  }

 private:
  Json j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace detail

/// Applies the keys of `j` on top of `base`. Throws ConfigError on schema
/// mismatch, unknown keys, bad types or bad enumerator values.
inline RunConfig apply_json(RunConfig c, const Json& j) {
  detail::ConfigReader r(j, "");
  std::string schema;
  r.read("schema", schema);
  if (schema != "nsb-config v1") {
    throw ConfigError("configuration schema must be \"nsb-config v1\", got \"" + schema + "\"");
  }
  if (r.has("preset")) {
    std::string name;
    r.read("preset", name);
    const auto out = c.out_dir;
    const auto seeds = c.seeds;
    c = preset_config(name);
    c.out_dir = out;
    c.seeds = seeds;
  }
  auto enum_key = [&](const std::string& key, const std::map<std::string, int>& values,
                      auto& out, detail::ConfigReader& reader) {
    if (!reader.has(key)) return;
    std::string text;
    reader.read(key, text);
    const auto it = values.find(text);
    if (it == values.end()) {
      throw ConfigError("configuration key '" + reader.path(key) + "' has unknown value '" +
                        text + "'");
    }
    out = static_cast<std::remove_reference_t<decltype(out)>>(it->second);
  };
  enum_key("mode", {{"forcing", 0}, {"joint", 1}}, c.mode, r);
  r.read("modes_per_dim", c.modes_per_dim);
  r.read("viscosity", c.viscosity);
  r.read("T", c.horizon);
  r.read("dt", c.dt);
  enum_key("sigma_rule", {{"pi2_over_lambda", 0}, {"table", 1}}, c.sigma_rule, r);
  if (r.has("sigma_table")) {
    c.sigma_table.clear();
    const auto& t = r.raw("sigma_table");
    if (!t.is_array()) throw ConfigError("configuration key 'sigma_table' must be a list");
    for (const auto& e : t) {
      if (!e.is_array() || e.size() != 3 || !e[0].is_number_integer() ||
          !e[1].is_number_integer() || !e[2].is_number()) {
        throw ConfigError("sigma_table entries must be [k1, k2, sigma]");
      }
      c.sigma_table[{e[0].get<int>(), e[1].get<int>()}] = e[2].get<double>();
    }
  }
  r.read("epsilon_check", c.epsilon_check);

  auto ic = r.child("ic_prior");
  enum_key("tau_rule", {{"zero", 0}, {"power", 1}}, c.tau_rule, ic);
  ic.read("scale", c.tau_scale);
  ic.read("exponent", c.tau_exponent);
  ic.finish();

  auto obs = r.child("observation");
  enum_key("kind", {{"grid", 0}, {"modes", 1}}, c.obs_kind, obs);
  obs.read("times", c.obs_times);
  obs.read("gamma", c.gamma);
  obs.read_modes("modes", c.obs_modes);
  obs.read("noise_variance", c.noise_variance);
  if (obs.has("grid_order")) {
    std::string order;
    obs.read("grid_order", order);
    if (order != kGridOrder) {
      throw ConfigError("observation.grid_order is fixed to '" + std::string(kGridOrder) +
                        "'; got '" + order + "'");
    }
  }
  obs.finish();

  auto solver = r.child("solver");
  solver.read("nonlinear", c.solver.nonlinear);
  solver.read("blowup_cap", c.solver.blowup_cap);
  solver.finish();

  auto chain = r.child("chain");
  chain.read("beta", c.beta);
  chain.read_u64("iterations", c.iterations);
  chain.read_u64("burn_in", c.burn_in);
  chain.read_u64("thin", c.thin);
  chain.read_u64("checkpoint_every", c.checkpoint_every);
  chain.read_modes("watch_modes", c.watch_modes);
  chain.read_modes("export_modes", c.export_modes);
  chain.read("fig1_times", c.fig1_times);
  chain.finish();

  auto seeds = r.child("seeds");
  seeds.read_u64("truth", c.seeds.truth);
  seeds.read_u64("noise", c.seeds.noise);
  seeds.read_u64("chain", c.seeds.chain);
  seeds.finish();

  if (r.has("out_dir")) {
    std::string out;
    r.read("out_dir", out);
    c.out_dir = out;
  }
  r.finish();
  return c;
}

inline RunConfig parse_config(const std::string& text, RunConfig base = preset_config("paper-sec5")) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
  return apply_json(std::move(base), j);
}

inline RunConfig load_config(const std::filesystem::path& path,
                             RunConfig base = preset_config("paper-sec5")) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open configuration " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return parse_config(ss.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace nsb
