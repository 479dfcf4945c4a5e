#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rewag/embed.hpp"
#include "rewag/errors.hpp"
#include "rewag/filter.hpp"
#include "rewag/geometry.hpp"
#include "rewag/loss.hpp"
#include "rewag/rng.hpp"
#include "rewag/world.hpp"

namespace rewag {

enum class Backend { oracle, safa };

/// Fully resolved experiment configuration. Every random consumer gets a
/// concrete seed here: explicit config values win, otherwise the seed is
/// derived from the master seed through a per-subsystem stream, so
/// overriding one subsystem never shifts another's draws.
struct RunConfig {
  std::uint64_t master_seed = 1;
  int threads = 1;
  Backend backend = Backend::oracle;
  PoseMode pose_mode = PoseMode::full;

  GridSpec grid{0.0, 0.0, 60.0, 256, 256};

  WorldSpec world;  // world.seed resolved at load
  std::optional<std::string> world_file;

  EmbedConfig embed;  // embed.mode mirrors pose_mode; seeds resolved
  std::optional<std::string> store_file;

  int particle_count = 30000;
  std::optional<double> init_center_x;  // default: grid center
  std::optional<double> init_center_y;
  double init_sigma = 900.0;
  std::uint64_t filter_seed = 0;
  NoiseParams noise;
  MeasModel meas;
  double resample_threshold = 0.5;       // fraction of N
  double convergence_threshold = 60.0;   // meters

  TripletParams triplet;
  TrinomialParams trinomial;
  double r_pos = 0.0;  // 0 means spacing/4

  std::optional<std::string> trajectory_file;
  int trajectory_steps = 200;
  double step_length = 15.0;
  double max_turn = 0.25;
  std::uint64_t trajectory_seed = 0;

  std::uint64_t compass_seed = 0;

  std::string trace_csv = "trace.csv";
  bool record_timing = false;

  InitSpec init_spec() const {
    InitSpec s;
    s.center_x = init_center_x.value_or((grid.min_x() + grid.max_x()) / 2.0);
    s.center_y = init_center_y.value_or((grid.min_y() + grid.max_y()) / 2.0);
    s.sigma = init_sigma;
    s.count = particle_count;
    s.seed = filter_seed;
    return s;
  }

  double positive_radius() const { return r_pos > 0.0 ? r_pos : grid.spacing / 4.0; }
};

namespace detail {

inline std::string join_path(const std::string& where, const char* key) {
  return where.empty() ? key : where + "." + key;
}

inline void check_keys(const nlohmann::json& j, const std::string& where,
                       std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || item.key() == k;
    if (!ok) {
      throw ParseError("unknown key '" + item.key() + "'" +
                       (where.empty() ? "" : " in '" + where + "'"));
    }
  }
}

inline const nlohmann::json* find(const nlohmann::json& j, const char* key) {
  const auto it = j.find(key);
  return it == j.end() || it->is_null() ? nullptr : &*it;
}

inline double get_num(const nlohmann::json& j, const char* key, double fallback,
                      const std::string& where) {
  const nlohmann::json* v = find(j, key);
  if (v == nullptr) return fallback;
  if (!v->is_number()) throw ParseError("'" + join_path(where, key) + "' must be a number");
  return v->get<double>();
}

inline int get_int(const nlohmann::json& j, const char* key, int fallback,
                   const std::string& where) {
  const nlohmann::json* v = find(j, key);
  if (v == nullptr) return fallback;
  if (!v->is_number_integer()) {
    throw ParseError("'" + join_path(where, key) + "' must be an integer");
  }
  return v->get<int>();
}

inline std::optional<std::uint64_t> get_seed(const nlohmann::json& j, const char* key,
                                             const std::string& where) {
  const nlohmann::json* v = find(j, key);
  if (v == nullptr) return std::nullopt;
  if (!v->is_number_unsigned() && !v->is_number_integer()) {
    throw ParseError("'" + join_path(where, key) + "' must be an integer seed");
  }
  return v->get<std::uint64_t>();
}

inline std::string get_str(const nlohmann::json& j, const char* key,
                           const std::string& fallback, const std::string& where) {
  const nlohmann::json* v = find(j, key);
  if (v == nullptr) return fallback;
  if (!v->is_string()) throw ParseError("'" + join_path(where, key) + "' must be a string");
  return v->get<std::string>();
}

inline std::optional<std::string> get_path(const nlohmann::json& j, const char* key,
                                           const std::string& where) {
  const nlohmann::json* v = find(j, key);
  if (v == nullptr) return std::nullopt;
  if (!v->is_string()) throw ParseError("'" + join_path(where, key) + "' must be a string");
  return v->get<std::string>();
}

inline bool get_bool(const nlohmann::json& j, const char* key, bool fallback,
                     const std::string& where) {
  const nlohmann::json* v = find(j, key);
  if (v == nullptr) return fallback;
  if (!v->is_boolean()) throw ParseError("'" + join_path(where, key) + "' must be a boolean");
  return v->get<bool>();
}

inline const nlohmann::json& section(const nlohmann::json& j, const char* key,
                                     const std::string& where) {
  static const nlohmann::json empty = nlohmann::json::object();
  const nlohmann::json* v = find(j, key);
  if (v == nullptr) return empty;
  if (!v->is_object()) throw ParseError("'" + join_path(where, key) + "' must be an object");
  return *v;
}

}  // namespace detail

/// Builds a validated RunConfig from parsed JSON. Unknown keys anywhere
/// are rejected by name; out-of-range values raise ValidationError. An
/// empty object yields the full default configuration.
inline RunConfig config_from_json(const nlohmann::json& j) {
  using namespace detail;
  if (!j.is_object()) throw ParseError("config root must be an object");
  check_keys(j, "", {"seed", "threads", "backend", "pose_mode", "grid", "world", "embed",
                     "filter", "loss", "trajectory", "output"});
  RunConfig cfg;
  cfg.master_seed = get_seed(j, "seed", "").value_or(1);
  cfg.threads = get_int(j, "threads", 1, "");
  if (cfg.threads < 1) throw ValidationError("threads must be >= 1");

  const std::string backend = get_str(j, "backend", "oracle", "");
  if (backend == "oracle") cfg.backend = Backend::oracle;
  else if (backend == "safa") cfg.backend = Backend::safa;
  else throw ValidationError("backend must be 'oracle' or 'safa'");

  const std::string mode = get_str(j, "pose_mode", "full", "");
  if (mode == "full") cfg.pose_mode = PoseMode::full;
  else if (mode == "heading_only") cfg.pose_mode = PoseMode::heading_only;
  else if (mode == "none") cfg.pose_mode = PoseMode::none;
  else throw ValidationError("pose_mode must be 'full', 'heading_only', or 'none'");

  {
    const nlohmann::json& g = section(j, "grid", "");
    check_keys(g, "grid", {"origin_x", "origin_y", "spacing_m", "cols", "rows"});
    cfg.grid.origin_x = get_num(g, "origin_x", 0.0, "grid");
    cfg.grid.origin_y = get_num(g, "origin_y", 0.0, "grid");
    cfg.grid.spacing = get_num(g, "spacing_m", 60.0, "grid");
    cfg.grid.cols = get_int(g, "cols", 256, "grid");
    cfg.grid.rows = get_int(g, "rows", 256, "grid");
    if (!cfg.grid.valid()) {
      throw ValidationError("grid requires spacing_m > 0, cols >= 1, rows >= 1, "
                            "finite origin");
    }
  }
  {
    const nlohmann::json& w = section(j, "world", "");
    check_keys(w, "world", {"seed", "landmark_count", "descriptor_dim", "salience_min",
                            "salience_max", "visibility_range_m", "fov_rad", "file"});
    cfg.world.seed = get_seed(w, "seed", "world").value_or(
        derive_seed(cfg.master_seed, streams::kWorld));
    cfg.world.landmark_count = get_int(w, "landmark_count", 2000, "world");
    cfg.world.descriptor_dim = get_int(w, "descriptor_dim", 32, "world");
    cfg.world.salience_min = get_num(w, "salience_min", 0.5, "world");
    cfg.world.salience_max = get_num(w, "salience_max", 1.5, "world");
    cfg.world.visibility_range = get_num(w, "visibility_range_m", 120.0, "world");
    cfg.world.fov = get_num(w, "fov_rad", M_PI / 2, "world");
    cfg.world.validate();
    cfg.world_file = get_path(w, "file", "world");
  }
  {
    const nlohmann::json& e = section(j, "embed", "");
    check_keys(e, "embed", {"positions", "channels", "heads", "hidden", "lift_seed",
                            "safa_seed", "store_file"});
    cfg.embed.positions = get_int(e, "positions", 8, "embed");
    cfg.embed.channels = get_int(e, "channels", 16, "embed");
    cfg.embed.heads = get_int(e, "heads", 4, "embed");
    cfg.embed.hidden = get_int(e, "hidden", cfg.embed.positions, "embed");
    cfg.embed.lift_seed = get_seed(e, "lift_seed", "embed").value_or(
        derive_seed(cfg.master_seed, streams::kLift));
    cfg.embed.safa_seed = get_seed(e, "safa_seed", "embed").value_or(
        derive_seed(cfg.master_seed, streams::kAttentionGround));
    cfg.embed.mode = cfg.pose_mode;
    cfg.embed.validate();
    cfg.store_file = get_path(e, "store_file", "embed");
  }
  {
    const nlohmann::json& f = section(j, "filter", "");
    check_keys(f, "filter", {"count", "init", "noise", "meas", "resample_threshold",
                             "convergence_threshold_m"});
    cfg.particle_count = get_int(f, "count", 30000, "filter");
    if (cfg.particle_count < 1) throw ValidationError("filter.count must be >= 1");

    const nlohmann::json& init = section(f, "init", "filter");
    check_keys(init, "filter.init", {"center_x", "center_y", "sigma_m", "seed"});
    if (find(init, "center_x") != nullptr) {
      cfg.init_center_x = get_num(init, "center_x", 0.0, "filter.init");
    }
    if (find(init, "center_y") != nullptr) {
      cfg.init_center_y = get_num(init, "center_y", 0.0, "filter.init");
    }
    cfg.init_sigma = get_num(init, "sigma_m", 900.0, "filter.init");
    if (!(cfg.init_sigma > 0.0)) throw ValidationError("filter.init.sigma_m must be > 0");
    cfg.filter_seed = get_seed(init, "seed", "filter.init")
                          .value_or(derive_seed(cfg.master_seed, streams::kInit));

    const nlohmann::json& noise = section(f, "noise", "filter");
    check_keys(noise, "filter.noise", {"odom_frac", "heading_frac"});
    cfg.noise.odom_frac = get_num(noise, "odom_frac", 0.02, "filter.noise");
    cfg.noise.heading_frac = get_num(noise, "heading_frac", 0.01, "filter.noise");
    cfg.noise.validate();

    const nlohmann::json& meas = section(f, "meas", "filter");
    check_keys(meas, "filter.meas", {"sigma_s", "s_ref"});
    cfg.meas.sigma_s = get_num(meas, "sigma_s", 0.3, "filter.meas");
    cfg.meas.s_ref = get_num(meas, "s_ref", 1.0, "filter.meas");
    cfg.meas.validate();

    cfg.resample_threshold = get_num(f, "resample_threshold", 0.5, "filter");
    if (!(cfg.resample_threshold >= 0.0) || cfg.resample_threshold > 1.0) {
      throw ValidationError("filter.resample_threshold must be in [0, 1]");
    }
    cfg.convergence_threshold = get_num(f, "convergence_threshold_m", 60.0, "filter");
    if (!(cfg.convergence_threshold > 0.0)) {
      throw ValidationError("filter.convergence_threshold_m must be > 0");
    }
  }
  {
    const nlohmann::json& l = section(j, "loss", "");
    check_keys(l, "loss", {"alpha", "alpha_p", "alpha_n", "alpha_semi", "m_p", "m_n",
                           "m_semi", "r_pos_m"});
    cfg.triplet.alpha = get_num(l, "alpha", 10.0, "loss");
    if (!(cfg.triplet.alpha > 0.0)) throw ValidationError("loss.alpha must be > 0");
    cfg.trinomial.alpha_p = get_num(l, "alpha_p", 10.0, "loss");
    cfg.trinomial.alpha_n = get_num(l, "alpha_n", 10.0, "loss");
    cfg.trinomial.alpha_semi = get_num(l, "alpha_semi", 10.0, "loss");
    cfg.trinomial.m_p = get_num(l, "m_p", 0.6, "loss");
    cfg.trinomial.m_n = get_num(l, "m_n", 0.3, "loss");
    cfg.trinomial.m_semi = get_num(l, "m_semi", 0.45, "loss");
    cfg.trinomial.validate();
    cfg.r_pos = get_num(l, "r_pos_m", 0.0, "loss");
    if (cfg.r_pos < 0.0) throw ValidationError("loss.r_pos_m must be >= 0");
  }
  {
    const nlohmann::json& t = section(j, "trajectory", "");
    check_keys(t, "trajectory", {"seed", "steps", "step_length_m", "max_turn_rad", "file"});
    cfg.trajectory_seed = get_seed(t, "seed", "trajectory")
                              .value_or(derive_seed(cfg.master_seed, streams::kTrajectory));
    cfg.trajectory_steps = get_int(t, "steps", 200, "trajectory");
    if (cfg.trajectory_steps < 1) throw ValidationError("trajectory.steps must be >= 1");
    cfg.step_length = get_num(t, "step_length_m", 15.0, "trajectory");
    if (!(cfg.step_length > 0.0)) throw ValidationError("trajectory.step_length_m must be > 0");
    cfg.max_turn = get_num(t, "max_turn_rad", 0.25, "trajectory");
    if (!(cfg.max_turn > 0.0)) throw ValidationError("trajectory.max_turn_rad must be > 0");
    cfg.trajectory_file = get_path(t, "file", "trajectory");
  }
  {
    const nlohmann::json& o = section(j, "output", "");
    check_keys(o, "output", {"trace_csv", "record_timing"});
    cfg.trace_csv = get_str(o, "trace_csv", "trace.csv", "output");
    cfg.record_timing = get_bool(o, "record_timing", false, "output");
  }
  cfg.compass_seed = derive_seed(cfg.master_seed, streams::kCompass);
  return cfg;
}

/// Loads and validates a JSON config file. Syntax errors carry the line
/// number; unknown keys are named.
inline RunConfig load_config(const std::string& path) {
  const std::vector<unsigned char> bytes = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1;
    const std::size_t upto = e.byte < bytes.size() ? e.byte : bytes.size();
    for (std::size_t i = 0; i < upto; ++i) {
      if (bytes[i] == '\n') ++line;
    }
    throw ParseError(path + ":" + std::to_string(line) + ": " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace rewag
