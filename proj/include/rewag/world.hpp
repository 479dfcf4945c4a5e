#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rewag/binary_io.hpp"
#include "rewag/errors.hpp"
#include "rewag/geometry.hpp"
#include "rewag/rng.hpp"

namespace rewag {

/// Point feature with a fixed unit-norm descriptor and a positive salience.
struct Landmark {
  double x = 0.0;
  double y = 0.0;
  double salience = 1.0;
  Eigen::VectorXd descriptor;
};

/// Parameters of the synthetic world and of the ground-level sensor that
/// observes it. fov and visibility_range belong to the sensor, not to the
/// stored landmarks, so they stay valid for worlds loaded from disk.
struct WorldSpec {
  std::uint64_t seed = 1;
  int landmark_count = 2000;
  int descriptor_dim = 32;
  double salience_min = 0.5;
  double salience_max = 1.5;
  double visibility_range = 120.0;  // meters
  double fov = M_PI / 2;            // radians, (0, 2*pi]

  void validate() const {
    if (landmark_count < 0) throw ValidationError("landmark_count must be >= 0");
    if (descriptor_dim < 1) throw ValidationError("descriptor_dim must be >= 1");
    if (!(salience_min > 0.0) || !(salience_max >= salience_min)) {
      throw ValidationError("salience bounds must satisfy 0 < min <= max");
    }
    if (!(visibility_range > 0.0)) throw ValidationError("visibility_range must be > 0");
    if (!(fov > 0.0) || fov > 2.0 * M_PI + 1e-12) {
      throw ValidationError("fov must be in (0, 2*pi]");
    }
  }
};

/// Landmark set plus a uniform-grid bucket index for disc queries.
/// Queries return indices in ascending order, so accumulation over the
/// result is bitwise identical to a brute-force scan.
class World {
 public:
  World() = default;

  World(int descriptor_dim, std::vector<Landmark> landmarks)
      : dim_(descriptor_dim), landmarks_(std::move(landmarks)) {
    if (dim_ < 1) throw ValidationError("descriptor_dim must be >= 1");
    for (const Landmark& lm : landmarks_) {
      if (!std::isfinite(lm.x) || !std::isfinite(lm.y) || !std::isfinite(lm.salience)) {
        throw NonFiniteError("landmark with non-finite field");
      }
      if (!(lm.salience > 0.0)) throw ValidationError("landmark salience must be > 0");
      if (lm.descriptor.size() != dim_) {
        throw ShapeMismatchError("landmark descriptor dimension mismatch");
      }
      const double n = lm.descriptor.norm();
      if (std::abs(n - 1.0) > 1e-9) {
        throw ValidationError("landmark descriptor must be unit norm");
      }
    }
    build_index();
  }

  /// Landmarks uniform over the grid footprint, descriptors uniform on the
  /// unit sphere, salience uniform in [salience_min, salience_max]. Each
  /// landmark draws from its own derived stream.
  static World generate(const WorldSpec& spec, const GridSpec& grid) {
    spec.validate();
    if (!grid.valid()) throw ValidationError("invalid grid");
    std::vector<Landmark> lms(static_cast<std::size_t>(spec.landmark_count));
    for (std::size_t i = 0; i < lms.size(); ++i) {
      SplitMix64 rng(derive_seed(spec.seed, streams::kLandmark, i));
      Landmark& lm = lms[i];
      lm.x = rng.uniform(grid.min_x(), grid.max_x());
      lm.y = rng.uniform(grid.min_y(), grid.max_y());
      lm.salience = rng.uniform(spec.salience_min, spec.salience_max);
      lm.descriptor.resize(spec.descriptor_dim);
      for (int d = 0; d < spec.descriptor_dim; ++d) lm.descriptor[d] = rng.gaussian();
      const double n = lm.descriptor.norm();
      if (n < 1e-12) {
        lm.descriptor.setZero();
        lm.descriptor[0] = 1.0;
      } else {
        lm.descriptor /= n;
      }
    }
    return World(spec.descriptor_dim, std::move(lms));
  }

  const std::vector<Landmark>& landmarks() const { return landmarks_; }
  int descriptor_dim() const { return dim_; }

  /// Indices of landmarks within the closed disc of radius r, ascending.
  /// The membership test is sqrt(dx^2 + dy^2) <= r, the same expression
  /// the observation code evaluates, so the two can never disagree on a
  /// boundary ulp. The bucket range is padded one cell for the same
  /// reason.
  void query_disc(double x, double y, double r, std::vector<std::uint32_t>& out) const {
    out.clear();
    if (landmarks_.empty() || !(r >= 0.0)) return;
    const int c0 = bucket_clamp(std::floor((x - r - bx0_) / cell_) - 1.0, bcols_);
    const int c1 = bucket_clamp(std::floor((x + r - bx0_) / cell_) + 1.0, bcols_);
    const int r0 = bucket_clamp(std::floor((y - r - by0_) / cell_) - 1.0, brows_);
    const int r1 = bucket_clamp(std::floor((y + r - by0_) / cell_) + 1.0, brows_);
    for (int br = r0; br <= r1; ++br) {
      for (int bc = c0; bc <= c1; ++bc) {
        for (std::uint32_t idx : buckets_[static_cast<std::size_t>(br) * bcols_ + bc]) {
          const double dx = landmarks_[idx].x - x;
          const double dy = landmarks_[idx].y - y;
          if (std::sqrt(dx * dx + dy * dy) <= r) out.push_back(idx);
        }
      }
    }
    std::sort(out.begin(), out.end());
  }

  std::vector<std::uint32_t> query_disc(double x, double y, double r) const {
    std::vector<std::uint32_t> out;
    query_disc(x, y, r, out);
    return out;
  }

 private:
  /// Clamps to [0, n-1] before the int cast, so oversized coordinates
  /// cannot overflow the cast.
  static int bucket_clamp(double v, int n) {
    if (!(v > 0.0)) return 0;
    if (v >= static_cast<double>(n - 1)) return n - 1;
    return static_cast<int>(v);
  }

  void build_index() {
    if (landmarks_.empty()) {
      bcols_ = brows_ = 0;
      buckets_.clear();
      return;
    }
    double minx = landmarks_[0].x, maxx = landmarks_[0].x;
    double miny = landmarks_[0].y, maxy = landmarks_[0].y;
    for (const Landmark& lm : landmarks_) {
      minx = std::min(minx, lm.x);
      maxx = std::max(maxx, lm.x);
      miny = std::min(miny, lm.y);
      maxy = std::max(maxy, lm.y);
    }
    bx0_ = minx;
    by0_ = miny;
    cell_ = std::max({(maxx - minx) / 256.0, (maxy - miny) / 256.0, 1e-9});
    bcols_ = static_cast<int>(std::floor((maxx - bx0_) / cell_)) + 1;
    brows_ = static_cast<int>(std::floor((maxy - by0_) / cell_)) + 1;
    buckets_.assign(static_cast<std::size_t>(bcols_) * brows_, {});
    for (std::uint32_t i = 0; i < landmarks_.size(); ++i) {
      const int bc = bucket_clamp(std::floor((landmarks_[i].x - bx0_) / cell_), bcols_);
      const int br = bucket_clamp(std::floor((landmarks_[i].y - by0_) / cell_), brows_);
      buckets_[static_cast<std::size_t>(br) * bcols_ + bc].push_back(i);
    }
  }

  int dim_ = 0;
  std::vector<Landmark> landmarks_;
  double cell_ = 1.0;
  double bx0_ = 0.0;
  double by0_ = 0.0;
  int bcols_ = 0;
  int brows_ = 0;
  std::vector<std::vector<std::uint32_t>> buckets_;
};

/// What the ground sensor returns at a pose: a unit descriptor (or zero
/// when nothing is visible or contributions cancel) and how many landmarks
/// contributed.
struct GroundObservation {
  Eigen::VectorXd descriptor;
  int visible_count = 0;
};

namespace detail {

/// Wedge visibility test shared by the sensor and the in-tile ratio.
/// Closed on both the range and the angular boundary; with fov = 2*pi the
/// angular test accepts everything, so the result cannot depend on psi.
inline bool visible_from(const Landmark& lm, const ParticlePose& pose,
                         const WorldSpec& spec, double* range_out) {
  const double dx = lm.x - pose.x;
  const double dy = lm.y - pose.y;
  const double range = std::sqrt(dx * dx + dy * dy);
  if (range > spec.visibility_range) return false;
  const double delta = wrap_heading(std::atan2(dy, dx) - pose.psi);
  if (std::abs(delta) > spec.fov * 0.5) return false;
  if (range_out != nullptr) *range_out = range;
  return true;
}

}  // namespace detail

/// Salience- and range-weighted sum of descriptors visible in the heading
/// wedge, L2-normalized. Landmarks accumulate in ascending index order.
inline GroundObservation ground_descriptor(const World& world, const ParticlePose& pose,
                                           const WorldSpec& spec) {
  if (!std::isfinite(pose.x) || !std::isfinite(pose.y) || !std::isfinite(pose.psi)) {
    throw NonFiniteError("ground_descriptor: non-finite pose");
  }
  GroundObservation obs;
  obs.descriptor = Eigen::VectorXd::Zero(world.descriptor_dim());
  std::vector<std::uint32_t> near = world.query_disc(pose.x, pose.y, spec.visibility_range);
  for (std::uint32_t idx : near) {
    const Landmark& lm = world.landmarks()[idx];
    double range = 0.0;
    if (!detail::visible_from(lm, pose, spec, &range)) continue;
    obs.descriptor += (lm.salience / (1.0 + range)) * lm.descriptor;
    ++obs.visible_count;
  }
  if (obs.visible_count == 0) {
    obs.descriptor.setZero();
    return obs;
  }
  const double n = obs.descriptor.norm();
  if (n > 0.0) {
    obs.descriptor /= n;
  } else {
    obs.descriptor.setZero();
  }
  return obs;
}

/// Salience-weighted sum of the descriptors of all landmarks whose nearest
/// tile is the given one, L2-normalized; zero vector for an empty tile.
inline Eigen::VectorXd satellite_descriptor(const World& world, const TileIndex& tile,
                                            const GridSpec& grid) {
  if (!tile_valid(tile, grid)) throw OutOfBoundsError("satellite_descriptor: invalid tile");
  const ParticlePose center = tile_center(tile, grid);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(world.descriptor_dim());
  // Any point of the tile cell is within spacing of the center, so this
  // disc covers every possible member.
  std::vector<std::uint32_t> near = world.query_disc(center.x, center.y, grid.spacing);
  for (std::uint32_t idx : near) {
    const Landmark& lm = world.landmarks()[idx];
    if (!grid.contains(lm.x, lm.y)) continue;
    if (!(tile_of({lm.x, lm.y, 0.0}, grid) == tile)) continue;
    sum += lm.salience * lm.descriptor;
  }
  const double n = sum.norm();
  if (n > 0.0) sum /= n;
  else sum.setZero();
  return sum;
}

/// Fraction of wedge-visible salience that falls inside the pose's own
/// tile. 0 when nothing is visible. Raw salience weights, no range decay.
inline double oracle_similarity(const World& world, const ParticlePose& pose,
                                const GridSpec& grid, const WorldSpec& spec) {
  const TileIndex own = tile_of(pose, grid);
  std::vector<std::uint32_t> near = world.query_disc(pose.x, pose.y, spec.visibility_range);
  double total = 0.0;
  double inside = 0.0;
  for (std::uint32_t idx : near) {
    const Landmark& lm = world.landmarks()[idx];
    if (!detail::visible_from(lm, pose, spec, nullptr)) continue;
    total += lm.salience;
    if (grid.contains(lm.x, lm.y) && tile_of({lm.x, lm.y, 0.0}, grid) == own) {
      inside += lm.salience;
    }
  }
  return total > 0.0 ? inside / total : 0.0;
}

// Landmark container format: magic "RWLD", u16 version, u32 descriptor
// dim, u64 count, then per landmark x, y, salience and the descriptor, all
// little-endian f64.
inline constexpr char kWorldMagic[5] = "RWLD";
inline constexpr std::uint16_t kWorldVersion = 1;

inline std::vector<unsigned char> serialize_world(const World& world) {
  ByteWriter w;
  w.magic(kWorldMagic);
  w.u16(kWorldVersion);
  w.u32(static_cast<std::uint32_t>(world.descriptor_dim()));
  w.u64(world.landmarks().size());
  for (const Landmark& lm : world.landmarks()) {
    w.f64(lm.x);
    w.f64(lm.y);
    w.f64(lm.salience);
    for (int d = 0; d < world.descriptor_dim(); ++d) w.f64(lm.descriptor[d]);
  }
  return w.data();
}

inline void save_world(const World& world, const std::string& path) {
  write_file(path, serialize_world(world));
}

inline World deserialize_world(const std::vector<unsigned char>& bytes) {
  ByteReader r(bytes);
  if (!r.check_magic(kWorldMagic)) throw CorruptStoreError("not a landmark file");
  const std::uint16_t version = r.u16();
  if (version != kWorldVersion) {
    throw VersionMismatchError("unsupported landmark file version " +
                               std::to_string(version));
  }
  const std::uint32_t dim = r.u32();
  const std::uint64_t count = r.u64();
  if (dim < 1) throw CorruptStoreError("descriptor dimension must be >= 1");
  const std::uint64_t record = (3 + static_cast<std::uint64_t>(dim)) * 8;
  if (r.remaining() != count * record) {
    throw CorruptStoreError("landmark payload size mismatch");
  }
  std::vector<Landmark> lms(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Landmark& lm = lms[i];
    lm.x = r.f64();
    lm.y = r.f64();
    lm.salience = r.f64();
    lm.descriptor.resize(dim);
    for (std::uint32_t d = 0; d < dim; ++d) lm.descriptor[d] = r.f64();
  }
  try {
    return World(static_cast<int>(dim), std::move(lms));
  } catch (const ValidationError& e) {
    throw CorruptStoreError(std::string("invalid landmark data: ") + e.what());
  } catch (const NonFiniteError& e) {
    throw CorruptStoreError(std::string("invalid landmark data: ") + e.what());
  }
}

inline World load_world(const std::string& path) {
  return deserialize_world(read_file(path));
}

}  // namespace rewag
