#pragma once

#include <cmath>
#include <string>

#include "rewag/errors.hpp"

namespace rewag {

/// Coarse tile grid discretizing the search area. Tiles are axis-aligned
/// squares, spacing meters apart; (origin_x, origin_y) is the world
/// position of the center of tile (0,0).
struct GridSpec {
  bool operator==(const GridSpec&) const = default;

  double origin_x = 0.0;  // meters
  double origin_y = 0.0;  // meters
  double spacing = 60.0;  // meters per tile
  int cols = 1;
  int rows = 1;

  bool valid() const {
    return spacing > 0.0 && cols >= 1 && rows >= 1 && std::isfinite(origin_x) &&
           std::isfinite(origin_y) && std::isfinite(spacing);
  }

  // Footprint edges: half a spacing beyond the outermost tile centers.
  double min_x() const { return origin_x - 0.5 * spacing; }
  double max_x() const { return origin_x + (cols - 0.5) * spacing; }
  double min_y() const { return origin_y - 0.5 * spacing; }
  double max_y() const { return origin_y + (rows - 0.5) * spacing; }

  bool contains(double x, double y) const {
    return x >= min_x() && x <= max_x() && y >= min_y() && y <= max_y();
  }

  int tile_count() const { return cols * rows; }
};

struct TileIndex {
  int col = 0;
  int row = 0;

  bool operator==(const TileIndex&) const = default;
};

/// Planar pose: position in meters, heading in radians in [-pi, pi).
struct ParticlePose {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
};

/// Wrap an angle to [-pi, pi), preserving its value mod 2*pi.
inline double wrap_heading(double angle) {
  if (!std::isfinite(angle)) {
    throw NonFiniteError("wrap_heading: non-finite angle");
  }
  double r = std::remainder(angle, 2.0 * M_PI);  // [-pi, pi]
  if (r >= M_PI) r -= 2.0 * M_PI;
  if (r < -M_PI) r += 2.0 * M_PI;
  return r;
}

inline bool tile_valid(const TileIndex& t, const GridSpec& g) {
  return t.col >= 0 && t.col < g.cols && t.row >= 0 && t.row < g.rows;
}

/// World coordinates of a tile's center.
inline ParticlePose tile_center(const TileIndex& t, const GridSpec& g) {
  if (!tile_valid(t, g)) {
    throw OutOfBoundsError("tile_center: tile (" + std::to_string(t.col) + "," +
                           std::to_string(t.row) + ") outside grid");
  }
  return {g.origin_x + t.col * g.spacing, g.origin_y + t.row * g.spacing, 0.0};
}

namespace detail {

// Nearest-center index along one axis, ties broken toward the lower
// index, clamped so footprint-edge points own the outermost tile.
inline int nearest_tile_index(double v, double origin, double spacing, int count) {
  const double u = (v - origin) / spacing;
  long idx = static_cast<long>(std::ceil(u - 0.5));
  if (idx < 0) idx = 0;
  if (idx >= count) idx = count - 1;
  return static_cast<int>(idx);
}

}  // namespace detail

/// Index of the tile whose center is nearest to the pose position.
inline TileIndex tile_of(const ParticlePose& p, const GridSpec& g) {
  if (!g.contains(p.x, p.y)) {
    throw OutOfBoundsError("tile_of: pose (" + std::to_string(p.x) + "," +
                           std::to_string(p.y) + ") outside grid footprint");
  }
  return {detail::nearest_tile_index(p.x, g.origin_x, g.spacing, g.cols),
          detail::nearest_tile_index(p.y, g.origin_y, g.spacing, g.rows)};
}

struct Displacement {
  double dx = 0.0;  // meters
  double dy = 0.0;  // meters
};

/// Offset of the pose from the center of its own tile. The tile argument
/// must be the pose's tile; anything else is a contract violation.
inline Displacement displacement_from_center(const ParticlePose& p, const TileIndex& t,
                                             const GridSpec& g) {
  const TileIndex owner = tile_of(p, g);
  if (!(owner == t)) {
    throw MismatchedTileError("displacement_from_center: tile (" + std::to_string(t.col) +
                              "," + std::to_string(t.row) + ") does not own pose");
  }
  const ParticlePose c = tile_center(t, g);
  return {p.x - c.x, p.y - c.y};
}

/// Clamp a position onto the grid footprint (used by the filter instead
/// of rejecting escaped particles).
inline ParticlePose clamp_to_footprint(const ParticlePose& p, const GridSpec& g) {
  ParticlePose out = p;
  out.x = std::min(std::max(p.x, g.min_x()), g.max_x());
  out.y = std::min(std::max(p.y, g.min_y()), g.max_y());
  return out;
}

}  // namespace rewag
