#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rewag/errors.hpp"
#include "rewag/geometry.hpp"
#include "rewag/rng.hpp"
#include "rewag/text_io.hpp"

namespace rewag {

/// One trajectory step: the true pose and the odometry increment that
/// produced it from the previous pose. The first step has zero increment.
struct TrajectoryStep {
  ParticlePose pose;
  double dx = 0.0;
  double dy = 0.0;
  double dpsi = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
};

/// Smooth random walk inside the grid footprint: bounded turn rate,
/// steering toward the grid center when the next step would leave a
/// safety margin. Increments are stored as the exact pose differences, so
/// integrating them reproduces the poses bit for bit.
inline Trajectory generate_trajectory(const GridSpec& grid, std::uint64_t seed,
                                      int step_count, double step_length,
                                      double max_turn = 0.25) {
  if (!grid.valid()) throw ValidationError("generate_trajectory: invalid grid");
  if (step_count < 1) throw ValidationError("step_count must be >= 1");
  if (!(step_length > 0.0)) throw ValidationError("step_length must be > 0");
  if (!(max_turn > 0.0)) throw ValidationError("max_turn must be > 0");
  SplitMix64 rng(derive_seed(seed, streams::kTrajectory));
  const double cx = (grid.min_x() + grid.max_x()) / 2.0;
  const double cy = (grid.min_y() + grid.max_y()) / 2.0;
  const double margin = std::min(2.0 * grid.spacing,
                                 0.25 * std::min(grid.max_x() - grid.min_x(),
                                                 grid.max_y() - grid.min_y()));
  const double lo_x = grid.min_x() + margin, hi_x = grid.max_x() - margin;
  const double lo_y = grid.min_y() + margin, hi_y = grid.max_y() - margin;

  Trajectory traj;
  traj.steps.resize(static_cast<std::size_t>(step_count));
  ParticlePose pose{cx, cy, rng.uniform(-M_PI, M_PI)};
  traj.steps[0] = {pose, 0.0, 0.0, 0.0};
  for (int k = 1; k < step_count; ++k) {
    const double turn = rng.uniform(-max_turn, max_turn);
    double psi_next = wrap_heading(pose.psi + turn);
    double x_next = pose.x + step_length * std::cos(psi_next);
    double y_next = pose.y + step_length * std::sin(psi_next);
    if (x_next < lo_x || x_next > hi_x || y_next < lo_y || y_next > hi_y) {
      // Steer toward the center, keeping the same turn perturbation.
      psi_next = wrap_heading(std::atan2(cy - pose.y, cx - pose.x) + turn);
      x_next = pose.x + step_length * std::cos(psi_next);
      y_next = pose.y + step_length * std::sin(psi_next);
    }
    x_next = std::clamp(x_next, lo_x, hi_x);
    y_next = std::clamp(y_next, lo_y, hi_y);
    TrajectoryStep& s = traj.steps[static_cast<std::size_t>(k)];
    s.dx = x_next - pose.x;
    s.dy = y_next - pose.y;
    s.dpsi = wrap_heading(psi_next - pose.psi);
    pose = {x_next, y_next, psi_next};
    s.pose = pose;
  }
  return traj;
}

inline constexpr const char* kTrajectoryHeader = "x,y,psi,dx,dy,dpsi";

inline std::string serialize_trajectory(const Trajectory& traj) {
  std::string out = kTrajectoryHeader;
  out += '\n';
  for (const TrajectoryStep& s : traj.steps) {
    out += fmt_double(s.pose.x);
    out += ',';
    out += fmt_double(s.pose.y);
    out += ',';
    out += fmt_double(s.pose.psi);
    out += ',';
    out += fmt_double(s.dx);
    out += ',';
    out += fmt_double(s.dy);
    out += ',';
    out += fmt_double(s.dpsi);
    out += '\n';
  }
  return out;
}

inline void save_trajectory(const Trajectory& traj, const std::string& path) {
  write_text(path, serialize_trajectory(traj));
}

/// Parses the CSV and checks the integration invariant: replaying the
/// increments from the first pose must land within 1e-6 m / 1e-6 rad of
/// each stored pose.
inline Trajectory parse_trajectory(const std::vector<std::string>& lines) {
  if (lines.empty() || lines[0] != kTrajectoryHeader) {
    throw ParseError(std::string("trajectory header must be '") + kTrajectoryHeader + "'");
  }
  Trajectory traj;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty() && i + 1 == lines.size()) break;
    const std::vector<std::string> f = split_csv_line(lines[i]);
    if (f.size() != 6) {
      throw ParseError("trajectory line " + std::to_string(i + 1) + ": want 6 fields, got " +
                       std::to_string(f.size()));
    }
    TrajectoryStep s;
    s.pose.x = parse_double(f[0], "x");
    s.pose.y = parse_double(f[1], "y");
    s.pose.psi = parse_double(f[2], "psi");
    s.dx = parse_double(f[3], "dx");
    s.dy = parse_double(f[4], "dy");
    s.dpsi = parse_double(f[5], "dpsi");
    traj.steps.push_back(s);
  }
  if (traj.steps.empty()) throw ParseError("trajectory has no steps");
  ParticlePose replay = traj.steps[0].pose;
  for (std::size_t k = 1; k < traj.steps.size(); ++k) {
    const TrajectoryStep& s = traj.steps[k];
    replay.x += s.dx;
    replay.y += s.dy;
    replay.psi = wrap_heading(replay.psi + s.dpsi);
    if (std::abs(replay.x - s.pose.x) > 1e-6 || std::abs(replay.y - s.pose.y) > 1e-6 ||
        std::abs(wrap_heading(replay.psi - s.pose.psi)) > 1e-6) {
      throw ValidationError("trajectory increments do not integrate to poses at line " +
                            std::to_string(k + 2));
    }
  }
  return traj;
}

inline Trajectory load_trajectory(const std::string& path) {
  return parse_trajectory(read_lines(path));
}

}  // namespace rewag
