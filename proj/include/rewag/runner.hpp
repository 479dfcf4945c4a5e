#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "rewag/config.hpp"
#include "rewag/embed.hpp"
#include "rewag/errors.hpp"
#include "rewag/filter.hpp"
#include "rewag/geometry.hpp"
#include "rewag/loss.hpp"
#include "rewag/parallel.hpp"
#include "rewag/text_io.hpp"
#include "rewag/trajectory.hpp"
#include "rewag/world.hpp"

namespace rewag {

struct StepMetrics {
  int step = 0;
  double err_m = 0.0;
  double dispersion_m = 0.0;
  double ess = 0.0;
  bool resampled = false;
  double ms = 0.0;
};

struct MetricsTrace {
  std::vector<StepMetrics> steps;
  double convergence_threshold = 60.0;
};

struct RunSummary {
  double final_error = 0.0;
  double average_error = 0.0;
  int convergence_step = -1;  // -1: never converged
};

/// Convergence is the first step whose dispersion is below the threshold
/// with every later step staying below it too, so transient dips don't
/// count.
inline RunSummary summarize(const MetricsTrace& trace) {
  if (trace.steps.empty()) throw ValidationError("summarize: empty trace");
  RunSummary s;
  s.final_error = trace.steps.back().err_m;
  double acc = 0.0;
  for (const StepMetrics& m : trace.steps) acc += m.err_m;
  s.average_error = acc / static_cast<double>(trace.steps.size());
  int conv = -1;
  for (int i = static_cast<int>(trace.steps.size()) - 1; i >= 0; --i) {
    if (trace.steps[static_cast<std::size_t>(i)].dispersion_m < trace.convergence_threshold) {
      conv = i;
    } else {
      break;
    }
  }
  s.convergence_step = conv;
  return s;
}

/// Cosine similarity between two observation descriptors; empty
/// observations are similar to nothing.
inline double observation_similarity(const GroundObservation& a, const GroundObservation& b) {
  if (a.visible_count == 0 || b.visible_count == 0) return 0.0;
  const double d = a.descriptor.dot(b.descriptor);
  return d > 1.0 ? 1.0 : (d < -1.0 ? -1.0 : d);
}

/// Analytic scoring backend: each particle's score is the cosine between
/// the true observation and the observation the world would produce at
/// the particle's hypothesis. The hypothesis honors the pose mode: full
/// uses the particle's exact position, heading_only collapses to the tile
/// center (position withheld), none compares against the tile's overhead
/// descriptor (heading withheld too). Out-of-footprint particles score at
/// their clamped pose.
inline std::vector<double> oracle_scores(const World& world, const WorldSpec& wspec,
                                         const GridSpec& grid,
                                         const std::vector<Particle>& particles,
                                         const GroundObservation& true_obs, double psi_meas,
                                         PoseMode mode, int threads = 1) {
  std::vector<double> scores(particles.size(), 0.0);
  if (mode == PoseMode::full) {
    parallel_for(particles.size(), threads, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        ParticlePose p = clamp_to_footprint(particles[i].pose, grid);
        p.psi = psi_meas;
        scores[i] = observation_similarity(true_obs, ground_descriptor(world, p, wspec));
      }
    });
    return scores;
  }
  // Tile-granular modes: every particle in a tile shares the tile's
  // score, so compute each distinct tile once.
  std::vector<double> cache(static_cast<std::size_t>(grid.tile_count()),
                            std::numeric_limits<double>::quiet_NaN());
  std::vector<std::size_t> tile_of_particle(particles.size());
  for (std::size_t i = 0; i < particles.size(); ++i) {
    const ParticlePose p = clamp_to_footprint(particles[i].pose, grid);
    const TileIndex t = tile_of(p, grid);
    const std::size_t flat = static_cast<std::size_t>(t.row) * grid.cols + t.col;
    tile_of_particle[i] = flat;
    if (std::isnan(cache[flat])) {
      if (mode == PoseMode::heading_only) {
        ParticlePose c = tile_center(t, grid);
        c.psi = psi_meas;
        cache[flat] = observation_similarity(true_obs, ground_descriptor(world, c, wspec));
      } else {
        GroundObservation sat;
        sat.descriptor = satellite_descriptor(world, t, grid);
        sat.visible_count = sat.descriptor.isZero(0.0) ? 0 : 1;
        cache[flat] = observation_similarity(true_obs, sat);
      }
    }
  }
  for (std::size_t i = 0; i < particles.size(); ++i) scores[i] = cache[tile_of_particle[i]];
  return scores;
}

namespace detail {

inline Trajectory resolve_trajectory(const RunConfig& cfg) {
  if (cfg.trajectory_file) {
    if (!std::filesystem::exists(*cfg.trajectory_file)) {
      throw IoError("trajectory file not found: " + *cfg.trajectory_file);
    }
    return load_trajectory(*cfg.trajectory_file);
  }
  return generate_trajectory(cfg.grid, cfg.trajectory_seed, cfg.trajectory_steps,
                             cfg.step_length, cfg.max_turn);
}

inline World resolve_world(const RunConfig& cfg) {
  if (cfg.world_file) {
    if (!std::filesystem::exists(*cfg.world_file)) {
      throw IoError("world file not found: " + *cfg.world_file);
    }
    return load_world(*cfg.world_file);
  }
  return World::generate(cfg.world, cfg.grid);
}

inline SatStore resolve_store(const RunConfig& cfg, const World& world) {
  if (cfg.store_file && std::filesystem::exists(*cfg.store_file)) {
    SatStore s = load_store(*cfg.store_file);
    if (!(s.grid == cfg.grid)) {
      throw ValidationError("store grid does not match configured grid: " + *cfg.store_file);
    }
    if (s.K != cfg.embed.heads || s.C != cfg.embed.channels) {
      throw ValidationError("store embedding shape does not match configuration: " +
                            *cfg.store_file);
    }
    return s;
  }
  if (cfg.store_file) throw IoError("store file not found: " + *cfg.store_file);
  return precompute_sat_store(world, cfg.grid, cfg.embed);
}

}  // namespace detail

/// One experiment: per step, predict with noisy odometry, observe at the
/// true pose, score all particles (sharing one base embedding per step on
/// the learned backend), update weights, resample below the ESS
/// threshold, and record metrics. Deterministic in the resolved seeds for
/// any thread count.
inline MetricsTrace run(const RunConfig& cfg) {
  const GridSpec& grid = cfg.grid;
  const World world = detail::resolve_world(cfg);
  const Trajectory traj = detail::resolve_trajectory(cfg);

  FilterState state = init(cfg.init_spec(), grid);

  SatStore store;
  SafaWeights gweights;
  Lifter lifter(1, 1, 1, 0);
  if (cfg.backend == Backend::safa) {
    store = detail::resolve_store(cfg, world);
    gweights = ground_weights(cfg.embed);
    lifter = Lifter(cfg.embed.positions, cfg.embed.channels, world.descriptor_dim(),
                    cfg.embed.lift_seed);
  }

  SplitMix64 compass(cfg.compass_seed);
  MetricsTrace trace;
  trace.convergence_threshold = cfg.convergence_threshold;
  trace.steps.reserve(traj.steps.size());
  std::vector<ParticlePose> poses;

  for (std::size_t k = 0; k < traj.steps.size(); ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const TrajectoryStep& ts = traj.steps[k];
      predict(state, {ts.dx, ts.dy, ts.dpsi}, cfg.noise, cfg.threads);
      const double psi_meas =
          wrap_heading(ts.pose.psi + cfg.noise.heading_frac * M_PI * compass.gaussian());
      set_shared_heading(state, psi_meas);

      const GroundObservation obs = ground_descriptor(world, ts.pose, cfg.world);
      std::vector<double> scores;
      if (cfg.backend == Backend::oracle) {
        scores = oracle_scores(world, cfg.world, grid, state.particles, obs, psi_meas,
                               cfg.pose_mode, cfg.threads);
      } else {
        const BaseEmbedding base = lifter.lift(obs);
        poses.resize(state.particles.size());
        for (std::size_t i = 0; i < state.particles.size(); ++i) {
          poses[i] = state.particles[i].pose;
        }
        scores = pseudo_similarity(poses, base, psi_meas, store, gweights, cfg.pose_mode,
                                   cfg.threads);
      }
      update(state, scores, cfg.meas);

      StepMetrics m;
      m.step = static_cast<int>(k);
      m.ess = effective_sample_size(state);
      if (m.ess < cfg.resample_threshold * static_cast<double>(state.count())) {
        resample_systematic(state);
        m.resampled = true;
      }
      const ParticlePose est = estimate(state);
      const double ex = est.x - ts.pose.x;
      const double ey = est.y - ts.pose.y;
      m.err_m = std::sqrt(ex * ex + ey * ey);
      m.dispersion_m = dispersion(state);
      if (cfg.record_timing) {
        m.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                         t0)
                   .count();
      }
      trace.steps.push_back(m);
    } catch (const Error& e) {
      throw Error("step " + std::to_string(k) + ": " + e.what());
    }
  }
  return trace;
}

inline constexpr const char* kTraceHeader = "step,err_m,dispersion_m,ess,resampled,ms";

inline std::string serialize_trace(const MetricsTrace& trace) {
  std::string out = kTraceHeader;
  out += '\n';
  for (const StepMetrics& m : trace.steps) {
    out += std::to_string(m.step);
    out += ',';
    out += fmt_double(m.err_m);
    out += ',';
    out += fmt_double(m.dispersion_m);
    out += ',';
    out += fmt_double(m.ess);
    out += ',';
    out += m.resampled ? '1' : '0';
    out += ',';
    out += fmt_double(m.ms);
    out += '\n';
  }
  return out;
}

inline void write_trace(const MetricsTrace& trace, const std::string& path) {
  write_text(path, serialize_trace(trace));
}

inline MetricsTrace read_trace(const std::string& path, double convergence_threshold) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty() || lines[0] != kTraceHeader) {
    throw ParseError(std::string("trace header must be '") + kTraceHeader + "'");
  }
  MetricsTrace trace;
  trace.convergence_threshold = convergence_threshold;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty() && i + 1 == lines.size()) break;
    const std::vector<std::string> f = split_csv_line(lines[i]);
    if (f.size() != 6) {
      throw ParseError("trace line " + std::to_string(i + 1) + ": want 6 fields, got " +
                       std::to_string(f.size()));
    }
    StepMetrics m;
    m.step = static_cast<int>(parse_double(f[0], "step"));
    m.err_m = parse_double(f[1], "err_m");
    m.dispersion_m = parse_double(f[2], "dispersion_m");
    m.ess = parse_double(f[3], "ess");
    if (f[4] != "0" && f[4] != "1") throw ParseError("trace resampled field must be 0 or 1");
    m.resampled = f[4] == "1";
    m.ms = parse_double(f[5], "ms");
    trace.steps.push_back(m);
  }
  if (trace.steps.empty()) throw ParseError("trace has no rows");
  return trace;
}

/// Human-readable summary. The convergence line prints "-" for a run that
/// never settled below the threshold.
inline std::string report(const MetricsTrace& trace) {
  const RunSummary s = summarize(trace);
  std::string out;
  out += "steps: " + std::to_string(trace.steps.size()) + "\n";
  out += "final_error_m: " + fmt_double(s.final_error) + "\n";
  out += "average_error_m: " + fmt_double(s.average_error) + "\n";
  out += "convergence_step: ";
  out += s.convergence_step < 0 ? "-" : std::to_string(s.convergence_step);
  out += "\n";
  return out;
}

}  // namespace rewag
