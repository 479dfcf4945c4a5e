#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "rewag/errors.hpp"
#include "rewag/geometry.hpp"
#include "rewag/parallel.hpp"
#include "rewag/rng.hpp"

namespace rewag {

/// Pose hypothesis. psi mirrors the shared measured heading; particles do
/// not carry individual headings.
struct Particle {
  ParticlePose pose;
  double weight = 0.0;
};

struct NoiseParams {
  double odom_frac = 0.02;
  double heading_frac = 0.01;

  void validate() const {
    if (!(odom_frac >= 0.0) || !(heading_frac >= 0.0)) {
      throw ValidationError("noise fractions must be >= 0");
    }
  }
};

/// Gaussian measurement likelihood exp(-(s_ref - s)^2 / (2 sigma_s^2)).
struct MeasModel {
  double sigma_s = 0.3;
  double s_ref = 1.0;

  void validate() const {
    if (!(sigma_s > 0.0)) throw ValidationError("sigma_s must be > 0");
    if (!std::isfinite(s_ref)) throw ValidationError("s_ref must be finite");
  }
};

struct InitSpec {
  double center_x = 0.0;
  double center_y = 0.0;
  double sigma = 900.0;
  int count = 30000;
  std::uint64_t seed = 0;
};

/// Particle cloud plus everything needed to reproduce its randomness: the
/// base seed and the counters (step, resample calls) that index derived
/// streams. Copying the struct snapshots the full RNG state.
struct FilterState {
  std::vector<Particle> particles;
  GridSpec grid;
  double shared_heading = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::uint64_t resample_count = 0;
  bool degenerate = false;

  std::size_t count() const { return particles.size(); }
};

/// Gaussian cloud around the init center, clamped into the footprint,
/// uniform weights. Particle i draws from its own derived stream.
inline FilterState init(const InitSpec& spec, const GridSpec& grid) {
  if (spec.count < 1) throw ValidationError("particle count must be >= 1");
  if (!(spec.sigma > 0.0)) throw ValidationError("init sigma must be > 0");
  if (!std::isfinite(spec.center_x) || !std::isfinite(spec.center_y)) {
    throw NonFiniteError("init: non-finite center");
  }
  if (!grid.valid()) throw ValidationError("init: invalid grid");
  FilterState st;
  st.grid = grid;
  st.seed = spec.seed;
  st.particles.resize(static_cast<std::size_t>(spec.count));
  const double w = 1.0 / static_cast<double>(spec.count);
  for (std::size_t i = 0; i < st.particles.size(); ++i) {
    SplitMix64 rng(derive_seed(spec.seed, streams::kInit, i));
    ParticlePose p;
    p.x = spec.center_x + spec.sigma * rng.gaussian();
    p.y = spec.center_y + spec.sigma * rng.gaussian();
    p.psi = 0.0;
    st.particles[i].pose = clamp_to_footprint(p, grid);
    st.particles[i].weight = w;
  }
  return st;
}

struct Odometry {
  double dx = 0.0;
  double dy = 0.0;
  double dpsi = 0.0;
};

/// Moves every particle by the odometry increment plus zero-mean Gaussian
/// noise with sigma = odom_frac * |(dx,dy)| per translational axis. The
/// heading perturbation (sigma = heading_frac * |dpsi|) is drawn once and
/// applied to the shared heading. Weights unchanged; particles clamped to
/// the footprint. Per-particle streams are indexed by (step, particle),
/// so any chunking over particles is bit-reproducible.
inline void predict(FilterState& st, const Odometry& odo, const NoiseParams& noise,
                    int threads = 1) {
  noise.validate();
  if (!std::isfinite(odo.dx) || !std::isfinite(odo.dy) || !std::isfinite(odo.dpsi)) {
    throw NonFiniteError("predict: non-finite odometry");
  }
  const double trans_sigma = noise.odom_frac * std::sqrt(odo.dx * odo.dx + odo.dy * odo.dy);
  SplitMix64 hrng(derive_seed(st.seed, streams::kHeading, st.step));
  const double heading_noise = noise.heading_frac * std::abs(odo.dpsi) * hrng.gaussian();
  st.shared_heading = wrap_heading(st.shared_heading + odo.dpsi + heading_noise);
  const std::uint64_t step = st.step;
  parallel_for(st.particles.size(), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      SplitMix64 rng(derive_seed(st.seed, streams::kPredict, step, i));
      const double nx = rng.gaussian();
      const double ny = rng.gaussian();
      ParticlePose p = st.particles[i].pose;
      p.x += odo.dx + trans_sigma * nx;
      p.y += odo.dy + trans_sigma * ny;
      p.psi = st.shared_heading;
      st.particles[i].pose = clamp_to_footprint(p, st.grid);
    }
  });
  ++st.step;
}

/// Overwrites the shared heading (e.g. with a compass measurement) and
/// mirrors it into every particle.
inline void set_shared_heading(FilterState& st, double psi) {
  st.shared_heading = wrap_heading(psi);
  for (Particle& p : st.particles) p.pose.psi = st.shared_heading;
}

/// Multiplies weights by the Gaussian likelihood of each score and
/// normalizes in fixed index order. If the total mass underflows to zero
/// (or is poisoned by a non-finite score), weights reset to uniform and
/// the degenerate flag is raised; otherwise the flag clears.
inline void update(FilterState& st, const std::vector<double>& scores,
                   const MeasModel& model) {
  model.validate();
  if (scores.size() != st.particles.size()) {
    throw LengthMismatchError("update: scores length != particle count");
  }
  const double inv_two_var = 1.0 / (2.0 * model.sigma_s * model.sigma_s);
  double total = 0.0;
  for (std::size_t i = 0; i < st.particles.size(); ++i) {
    const double d = model.s_ref - scores[i];
    st.particles[i].weight *= std::exp(-d * d * inv_two_var);
    total += st.particles[i].weight;
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    const double w = 1.0 / static_cast<double>(st.particles.size());
    for (Particle& p : st.particles) p.weight = w;
    st.degenerate = true;
    return;
  }
  for (Particle& p : st.particles) p.weight /= total;
  st.degenerate = false;
}

/// 1 / sum of squared weights. N for uniform weights, 1 when one particle
/// holds all mass.
inline double effective_sample_size(const FilterState& st) {
  double s = 0.0;
  for (const Particle& p : st.particles) s += p.weight * p.weight;
  return 1.0 / s;
}

/// Systematic (low-variance) resampling: one uniform draw u, pointers at
/// (k + u)/N. Offspring counts are within 1 of N*w_i by construction.
/// Weights reset to uniform. The draw comes from a stream indexed by the
/// resample call counter.
inline void resample_systematic(FilterState& st) {
  const std::size_t n = st.particles.size();
  SplitMix64 rng(derive_seed(st.seed, streams::kResample, st.resample_count));
  ++st.resample_count;
  const double u = rng.uniform01();
  std::vector<Particle> out(n);
  std::size_t j = 0;
  double cum = st.particles[0].weight;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double pointer = (static_cast<double>(k) + u) * inv_n;
    while (pointer > cum && j + 1 < n) {
      ++j;
      cum += st.particles[j].weight;
    }
    out[k] = st.particles[j];
    out[k].weight = inv_n;
  }
  st.particles = std::move(out);
}

/// Weighted mean of particle positions; heading is the shared measured
/// heading.
inline ParticlePose estimate(const FilterState& st) {
  double x = 0.0, y = 0.0;
  for (const Particle& p : st.particles) {
    x += p.weight * p.pose.x;
    y += p.weight * p.pose.y;
  }
  return {x, y, st.shared_heading};
}

/// Root of the weighted mean squared distance of particles from the
/// estimate, in meters. The convergence predicate compares this against
/// the tile-size threshold.
inline double dispersion(const FilterState& st) {
  const ParticlePose est = estimate(st);
  double s = 0.0;
  for (const Particle& p : st.particles) {
    const double dx = p.pose.x - est.x;
    const double dy = p.pose.y - est.y;
    s += p.weight * (dx * dx + dy * dy);
  }
  return std::sqrt(s);
}

}  // namespace rewag
