#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rewag/geometry.hpp"
#include "rewag/rng.hpp"

using namespace rewag;

namespace {

// Independent oracle: scan every tile center, keep the strictly nearest.
// Row-major ascending scan keeps the lowest (row, col) on exact ties,
// which is the tie rule tile_of promises per axis.
TileIndex brute_force_nearest(const ParticlePose& p, const GridSpec& g) {
  TileIndex best{0, 0};
  double best_d2 = std::numeric_limits<double>::infinity();
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      const ParticlePose ctr = tile_center({c, r}, g);
      const double d2 = (p.x - ctr.x) * (p.x - ctr.x) + (p.y - ctr.y) * (p.y - ctr.y);
      if (d2 < best_d2) {
        best_d2 = d2;
        best = {c, r};
      }
    }
  }
  return best;
}

double wrap_by_subtraction(double a) {
  while (a >= M_PI) a -= 2.0 * M_PI;
  while (a < -M_PI) a += 2.0 * M_PI;
  return a;
}

const GridSpec kGrid{0.0, 0.0, 60.0, 8, 8};

}  // namespace

TEST_CASE("tile_of identity and nearest-center cases") {
  CHECK(tile_of({0.0, 0.0, 0.0}, kGrid) == TileIndex{0, 0});
  CHECK(tile_of({61.0, -2.0, 0.0}, kGrid) == TileIndex{1, 0});
  CHECK(tile_of({61.0, -2.0, 0.0}, kGrid) == brute_force_nearest({61.0, -2.0, 0.0}, kGrid));
}

TEST_CASE("tile_of rejects poses outside the footprint") {
  CHECK_THROWS_AS(tile_of({-40.0, 0.0, 0.0}, kGrid), OutOfBoundsError);
  CHECK_THROWS_AS(tile_of({0.0, 8 * 60.0, 0.0}, kGrid), OutOfBoundsError);
  // Footprint edge itself is in bounds and owned by the outermost tile.
  CHECK(tile_of({-30.0, 0.0, 0.0}, kGrid) == TileIndex{0, 0});
  CHECK(tile_of({7.5 * 60.0, 0.0, 0.0}, kGrid) == TileIndex{7, 0});
}

TEST_CASE("tile_of ties break toward the lower index") {
  // Halfway between centers 0 and 60.
  CHECK(tile_of({30.0, 0.0, 0.0}, kGrid) == TileIndex{0, 0});
  CHECK(tile_of({0.0, 90.0, 0.0}, kGrid) == TileIndex{0, 1});
}

TEST_CASE("tile_of matches the brute-force scan on random poses") {
  SplitMix64 rng(11u);
  for (int i = 0; i < 2000; ++i) {
    ParticlePose p{rng.uniform(kGrid.min_x(), kGrid.max_x()),
                   rng.uniform(kGrid.min_y(), kGrid.max_y()), 0.0};
    const TileIndex got = tile_of(p, kGrid);
    CHECK(got == brute_force_nearest(p, kGrid));
    // Partition: the owner's center is within half a spacing per axis.
    const Displacement d = displacement_from_center(p, got, kGrid);
    CHECK(std::abs(d.dx) <= 0.5 * kGrid.spacing + 1e-12);
    CHECK(std::abs(d.dy) <= 0.5 * kGrid.spacing + 1e-12);
  }
}

TEST_CASE("displacement_from_center examples") {
  const TileIndex t = tile_of({61.0, -2.0, 0.0}, kGrid);
  const Displacement d = displacement_from_center({61.0, -2.0, 0.0}, t, kGrid);
  CHECK(d.dx == 1.0);
  CHECK(d.dy == -2.0);

  const ParticlePose ctr = tile_center({3, 2}, kGrid);
  const Displacement zero = displacement_from_center(ctr, {3, 2}, kGrid);
  CHECK(zero.dx == 0.0);
  CHECK(zero.dy == 0.0);

  CHECK_THROWS_AS(displacement_from_center({0.0, 0.0, 0.0}, {1, 0}, kGrid),
                  MismatchedTileError);
}

TEST_CASE("round trip: tile center plus displacement reconstructs the pose") {
  SplitMix64 rng(12u);
  for (int i = 0; i < 2000; ++i) {
    ParticlePose p{rng.uniform(kGrid.min_x(), kGrid.max_x()),
                   rng.uniform(kGrid.min_y(), kGrid.max_y()), 0.0};
    const TileIndex t = tile_of(p, kGrid);
    const ParticlePose c = tile_center(t, kGrid);
    const Displacement d = displacement_from_center(p, t, kGrid);
    CHECK(c.x + d.dx == Catch::Approx(p.x).margin(1e-9));
    CHECK(c.y + d.dy == Catch::Approx(p.y).margin(1e-9));
  }
}

TEST_CASE("wrap_heading basics") {
  CHECK(wrap_heading(0.0) == 0.0);
  CHECK(wrap_heading(-M_PI) == -M_PI);
  CHECK(wrap_heading(M_PI) == -M_PI);
  CHECK(wrap_heading(3.0 * M_PI) == wrap_by_subtraction(3.0 * M_PI));
  CHECK(std::abs(std::abs(wrap_heading(3.0 * M_PI)) - M_PI) < 1e-12);
  CHECK_THROWS_AS(wrap_heading(std::numeric_limits<double>::quiet_NaN()), NonFiniteError);
  CHECK_THROWS_AS(wrap_heading(std::numeric_limits<double>::infinity()), NonFiniteError);
}

TEST_CASE("wrap_heading agrees with repeated subtraction and is idempotent") {
  SplitMix64 rng(13u);
  for (int i = 0; i < 5000; ++i) {
    const double a = rng.uniform(-50.0, 50.0);
    const double w = wrap_heading(a);
    CHECK(w >= -M_PI);
    CHECK(w < M_PI);
    CHECK(w == wrap_heading(w));  // idempotent, bit-exact
    CHECK(w == Catch::Approx(wrap_by_subtraction(a)).margin(1e-9));
    // Same angle mod 2*pi.
    CHECK(std::remainder(w - a, 2.0 * M_PI) == Catch::Approx(0.0).margin(1e-9));
  }
}

TEST_CASE("clamp_to_footprint pins escaped positions to the boundary") {
  const ParticlePose inside{10.0, 20.0, 0.3};
  const ParticlePose same = clamp_to_footprint(inside, kGrid);
  CHECK(same.x == inside.x);
  CHECK(same.y == inside.y);

  const ParticlePose out{-1000.0, 1e6, 0.0};
  const ParticlePose c = clamp_to_footprint(out, kGrid);
  CHECK(c.x == kGrid.min_x());
  CHECK(c.y == kGrid.max_y());
  CHECK(kGrid.contains(c.x, c.y));
  CHECK_NOTHROW(tile_of(c, kGrid));
}
