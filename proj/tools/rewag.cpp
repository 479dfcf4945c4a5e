// Command-line front end: generate worlds and trajectories, precompute
// satellite stores, run experiments, and summarize traces.
//
// Exit codes: 0 success, 2 configuration/validation problems, 1 runtime
// failures.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rewag/rewag.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> backend;
  std::optional<std::string> pose_mode;
  std::optional<int> particles;
  std::optional<int> steps;
  std::string out;
};

void add_common_options(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON configuration file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", args.sets,
                  "Override a config key, e.g. --set filter.noise.odom_frac=0.05");
  cmd->add_option("--seed", args.seed, "Master seed override");
  cmd->add_option("--threads", args.threads, "Worker thread count override");
  cmd->add_option("--backend", args.backend, "Similarity backend: oracle or safa");
  cmd->add_option("--pose-mode", args.pose_mode, "Pose mode: full, heading_only, none");
  cmd->add_option("--particles", args.particles, "Particle count override");
  cmd->add_option("--steps", args.steps, "Trajectory step count override");
}

nlohmann::json load_json(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  const std::vector<unsigned char> bytes = rewag::read_file(path);
  try {
    return nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1;
    const std::size_t upto = e.byte < bytes.size() ? e.byte : bytes.size();
    for (std::size_t i = 0; i < upto; ++i) {
      if (bytes[i] == '\n') ++line;
    }
    throw rewag::ParseError(path + ":" + std::to_string(line) + ": " + e.what());
  }
}

void apply_set(nlohmann::json& j, const std::string& expr) {
  const std::size_t eq = expr.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw rewag::ValidationError("--set expects key.path=value, got '" + expr + "'");
  }
  std::string key = expr.substr(0, eq);
  const std::string value = expr.substr(eq + 1);
  for (char& c : key) {
    if (c == '.') c = '/';
  }
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::parse_error&) {
    parsed = value;  // bare words are strings
  }
  j[nlohmann::json::json_pointer("/" + key)] = parsed;
}

rewag::RunConfig resolve_config(const CommonArgs& args) {
  nlohmann::json j = load_json(args.config_path);
  if (!j.is_object()) throw rewag::ParseError("config root must be an object");
  for (const std::string& expr : args.sets) apply_set(j, expr);
  if (args.seed) j["seed"] = *args.seed;
  if (args.threads) j["threads"] = *args.threads;
  if (args.backend) j["backend"] = *args.backend;
  if (args.pose_mode) j["pose_mode"] = *args.pose_mode;
  if (args.particles) j["filter"]["count"] = *args.particles;
  if (args.steps) j["trajectory"]["steps"] = *args.steps;
  return rewag::config_from_json(j);
}

std::string require_out(const std::string& flag_value,
                        const std::optional<std::string>& config_value, const char* what) {
  if (!flag_value.empty()) return flag_value;
  if (config_value) return *config_value;
  throw rewag::ValidationError(std::string("no output path for ") + what +
                               ": pass --out or set it in the config");
}

int cmd_gen_world(const CommonArgs& args) {
  const rewag::RunConfig cfg = resolve_config(args);
  const std::string out = require_out(args.out, cfg.world_file, "the world");
  const rewag::World world = rewag::World::generate(cfg.world, cfg.grid);
  rewag::save_world(world, out);
  std::cout << "wrote " << world.landmarks().size() << " landmarks to " << out << "\n";
  return 0;
}

int cmd_gen_traj(const CommonArgs& args) {
  const rewag::RunConfig cfg = resolve_config(args);
  const std::string out = require_out(args.out, cfg.trajectory_file, "the trajectory");
  const rewag::Trajectory traj = rewag::generate_trajectory(
      cfg.grid, cfg.trajectory_seed, cfg.trajectory_steps, cfg.step_length, cfg.max_turn);
  rewag::save_trajectory(traj, out);
  std::cout << "wrote " << traj.steps.size() << " steps to " << out << "\n";
  return 0;
}

int cmd_precompute(const CommonArgs& args) {
  const rewag::RunConfig cfg = resolve_config(args);
  const std::string out = require_out(args.out, cfg.store_file, "the satellite store");
  rewag::World world;
  if (cfg.world_file && std::filesystem::exists(*cfg.world_file)) {
    world = rewag::load_world(*cfg.world_file);
  } else {
    world = rewag::World::generate(cfg.world, cfg.grid);
  }
  const rewag::SatStore store = rewag::precompute_sat_store(world, cfg.grid, cfg.embed);
  rewag::save_store(store, out);
  std::cout << "wrote " << cfg.grid.tile_count() << " tile embeddings to " << out << "\n";
  return 0;
}

int cmd_run(const CommonArgs& args, const std::string& trace_path) {
  rewag::RunConfig cfg = resolve_config(args);
  if (!trace_path.empty()) cfg.trace_csv = trace_path;
  const rewag::MetricsTrace trace = rewag::run(cfg);
  rewag::write_trace(trace, cfg.trace_csv);
  std::cout << rewag::report(trace);
  return 0;
}

int cmd_report(const std::string& trace_path, double threshold) {
  const rewag::MetricsTrace trace = rewag::read_trace(trace_path, threshold);
  std::cout << rewag::report(trace);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coarse-tile particle-filter geolocalization runner"};
  app.require_subcommand(1);

  CommonArgs gen_world_args, gen_traj_args, precompute_args, run_args;
  std::string run_trace, report_trace;
  double report_threshold = 60.0;

  CLI::App* gen_world = app.add_subcommand("gen-world", "Generate and save a landmark world");
  add_common_options(gen_world, gen_world_args);
  gen_world->add_option("--out", gen_world_args.out, "Output world file");

  CLI::App* gen_traj = app.add_subcommand("gen-traj", "Generate and save a trajectory");
  add_common_options(gen_traj, gen_traj_args);
  gen_traj->add_option("--out", gen_traj_args.out, "Output trajectory CSV");

  CLI::App* precompute =
      app.add_subcommand("precompute", "Precompute the satellite embedding store");
  add_common_options(precompute, precompute_args);
  precompute->add_option("--out", precompute_args.out, "Output store file");

  CLI::App* run = app.add_subcommand("run", "Run an experiment and write the metrics trace");
  add_common_options(run, run_args);
  run->add_option("--trace", run_trace, "Metrics CSV destination (overrides config)");

  CLI::App* report = app.add_subcommand("report", "Summarize a metrics trace");
  report->add_option("--trace", report_trace, "Metrics CSV to summarize")->required();
  report->add_option("--threshold", report_threshold, "Convergence threshold in meters");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen_world->parsed()) return cmd_gen_world(gen_world_args);
    if (gen_traj->parsed()) return cmd_gen_traj(gen_traj_args);
    if (precompute->parsed()) return cmd_precompute(precompute_args);
    if (run->parsed()) return cmd_run(run_args, run_trace);
    if (report->parsed()) return cmd_report(report_trace, report_threshold);
  } catch (const rewag::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const rewag::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
