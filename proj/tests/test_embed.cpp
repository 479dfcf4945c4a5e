#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "rewag/embed.hpp"
#include "rewag/rng.hpp"
#include "rewag/world.hpp"

using namespace rewag;

namespace {

Eigen::VectorXd axis_vec(int dim, int axis, double sign = 1.0) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
  v[axis] = sign;
  return v;
}

Eigen::VectorXd random_unit(SplitMix64& rng, int dim) {
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.gaussian();
  const double n = v.norm();
  return n > 0.0 ? Eigen::VectorXd(v / n) : axis_vec(dim, 0);
}

BaseEmbedding random_base(SplitMix64& rng, int L, int C) {
  BaseEmbedding b;
  b.features.resize(L, C);
  for (int i = 0; i < L; ++i) {
    for (int c = 0; c < C; ++c) b.features(i, c) = rng.gaussian();
  }
  return b;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name)
      : path("/tmp/rewag_embed_" + std::to_string(getpid()) + "_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

/// World with a couple of landmarks per occupied tile; tile (1, 0) is left
/// deliberately empty.
World checkerboard_world(int dim, const GridSpec& grid) {
  std::vector<Landmark> marks;
  SplitMix64 rng(991);
  for (int row = 0; row < grid.rows; ++row) {
    for (int col = 0; col < grid.cols; ++col) {
      if (row == 0 && col == 1) continue;
      const ParticlePose c = tile_center({col, row}, grid);
      for (int j = 0; j < 3; ++j) {
        marks.push_back({c.x + rng.uniform(-20.0, 20.0), c.y + rng.uniform(-20.0, 20.0),
                         rng.uniform(0.5, 1.5), random_unit(rng, dim)});
      }
    }
  }
  return World(dim, std::move(marks));
}

}  // namespace

TEST_CASE("pose feature components") {
  const GridSpec grid{0.0, 0.0, 60.0, 4, 4};

  const PoseFeature origin = pose_feature(0.0, 0.0, 0.0, grid, PoseMode::full);
  CHECK(origin.size() == 4);
  CHECK(origin.dx_n == 0.0);
  CHECK(origin.dy_n == 0.0);
  CHECK(origin.sin_psi == 0.0);
  CHECK(origin.cos_psi == 1.0);

  const PoseFeature edge = pose_feature(30.0, -15.0, M_PI / 2.0, grid, PoseMode::full);
  CHECK(edge.dx_n == 1.0);
  CHECK(edge.dy_n == -0.5);
  CHECK(edge.sin_psi == Catch::Approx(1.0).margin(1e-15));
  CHECK(edge.cos_psi == Catch::Approx(0.0).margin(1e-15));

  CHECK(pose_feature(0.0, 0.0, 0.3, grid, PoseMode::heading_only).size() == 2);
  CHECK(pose_feature(0.0, 0.0, 0.3, grid, PoseMode::none).size() == 0);

  CHECK_THROWS_AS(pose_feature(30.1, 0.0, 0.0, grid, PoseMode::full), RangeError);
  CHECK_THROWS_AS(pose_feature(0.0, -30.1, 0.0, grid, PoseMode::full), RangeError);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(pose_feature(nan, 0.0, 0.0, grid, PoseMode::full), NonFiniteError);
  CHECK_THROWS_AS(pose_feature(0.0, 0.0, nan, grid, PoseMode::full), NonFiniteError);

  SplitMix64 rng(41);
  for (int i = 0; i < 200; ++i) {
    const double psi = rng.uniform(-20.0, 20.0);
    const PoseFeature pf =
        pose_feature(rng.uniform(-30.0, 30.0), rng.uniform(-30.0, 30.0), psi, grid,
                     PoseMode::full);
    CHECK(pf.sin_psi * pf.sin_psi + pf.cos_psi * pf.cos_psi == Catch::Approx(1.0).epsilon(1e-12));
    const PoseFeature wrapped = pose_feature(0.0, 0.0, psi + 2.0 * M_PI, grid, PoseMode::full);
    const PoseFeature direct = pose_feature(0.0, 0.0, psi, grid, PoseMode::full);
    CHECK(wrapped.sin_psi == Catch::Approx(direct.sin_psi).margin(1e-9));
    CHECK(wrapped.cos_psi == Catch::Approx(direct.cos_psi).margin(1e-9));
  }
}

TEST_CASE("lift is deterministic and linear") {
  const int dim = 12;
  const Lifter a(6, 5, dim, 77);
  const Lifter b(6, 5, dim, 77);
  const Lifter other(6, 5, dim, 78);

  const Eigen::VectorXd e1 = axis_vec(dim, 1);
  CHECK(a.lift(e1).features == b.lift(e1).features);
  CHECK(a.lift(e1).features != other.lift(e1).features);

  // Negation is exact, so linearity in sign holds bitwise.
  CHECK(a.lift(axis_vec(dim, 1, -1.0)).features == (-a.lift(e1).features).eval());

  SplitMix64 rng(42);
  for (int i = 0; i < 50; ++i) {
    const Eigen::VectorXd u = random_unit(rng, dim);
    const Eigen::VectorXd v = random_unit(rng, dim);
    const Eigen::MatrixXd sum = a.lift(u + v).features;
    const Eigen::MatrixXd parts = a.lift(u).features + a.lift(v).features;
    CHECK((sum - parts).cwiseAbs().maxCoeff() < 1e-12);
  }

  CHECK(a.lift(Eigen::VectorXd::Zero(dim)).is_zero());
  CHECK_THROWS_AS(a.lift(Eigen::VectorXd::Zero(dim + 1)), ShapeMismatchError);
  CHECK_THROWS_AS(Lifter(0, 5, dim, 1), ValidationError);
  CHECK_THROWS_AS(Lifter(6, 5, 0, 1), ValidationError);

  GroundObservation obs;
  obs.descriptor = e1;
  obs.visible_count = 3;
  CHECK(a.lift(obs).features == a.lift(e1).features);
  CHECK(lift_ground(obs, 6, 5, 77).features == a.lift(e1).features);
}

TEST_CASE("lift instrumentation counts and tags calls") {
  const Lifter a(3, 3, 4, 5);
  instrument::reset_lift_calls();
  CHECK(instrument::lift_calls().load() == 0);
  const BaseEmbedding first = a.lift(axis_vec(4, 0));
  const BaseEmbedding second = a.lift(axis_vec(4, 1));
  CHECK(instrument::lift_calls().load() == 2);
  CHECK(first.source_id + 1 == second.source_id);
}

TEST_CASE("attention forward pass") {
  const int L = 5, C = 4, K = 2, hidden = 3;
  const SafaWeights w = SafaWeights::seeded(K, L, 4, hidden, 11);
  const GridSpec grid{0.0, 0.0, 60.0, 4, 4};
  SplitMix64 rng(43);

  SECTION("zero base short-circuits") {
    BaseEmbedding zero;
    zero.features = Eigen::MatrixXd::Zero(L, C);
    const Embedding e = safa_forward(zero, pose_feature(1.0, 2.0, 0.3, grid, PoseMode::full), w);
    CHECK(e.zero);
    CHECK(e.v.size() == K * C);
    CHECK(e.v.isZero(0.0));
  }

  SECTION("nonzero outputs are unit vectors") {
    for (int i = 0; i < 100; ++i) {
      const BaseEmbedding base = random_base(rng, L, C);
      const PoseFeature pf = pose_feature(rng.uniform(-30.0, 30.0), rng.uniform(-30.0, 30.0),
                                          rng.uniform(-3.0, 3.0), grid, PoseMode::full);
      const Embedding e = safa_forward(base, pf, w);
      REQUIRE_FALSE(e.zero);
      CHECK(std::abs(e.v.norm() - 1.0) < 1e-9);
    }
  }

  SECTION("matches a naive reimplementation") {
    const BaseEmbedding base = random_base(rng, L, C);
    const PoseFeature pf = pose_feature(12.0, -7.0, 0.9, grid, PoseMode::full);
    // Plain-loop replica of the head arithmetic.
    std::vector<double> u(L + 4);
    for (int i = 0; i < L; ++i) {
      double m = base.features(i, 0);
      for (int c = 1; c < C; ++c) m = std::max(m, base.features(i, c));
      u[i] = m;
    }
    u[L] = pf.dx_n;
    u[L + 1] = pf.dy_n;
    u[L + 2] = pf.sin_psi;
    u[L + 3] = pf.cos_psi;
    std::vector<double> raw(K * C, 0.0);
    for (int k = 0; k < K; ++k) {
      std::vector<double> h(hidden, 0.0);
      for (int r = 0; r < hidden; ++r) {
        double acc = 0.0;
        for (int c = 0; c < L + 4; ++c) acc += w.w1[k](r, c) * u[c];
        h[r] = std::tanh(acc);
      }
      std::vector<double> mask(L, 0.0);
      for (int i = 0; i < L; ++i) {
        double acc = 0.0;
        for (int r = 0; r < hidden; ++r) acc += w.w2[k](i, r) * h[r];
        mask[i] = acc;
      }
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int i = 0; i < L; ++i) acc += base.features(i, c) * mask[i];
        raw[k * C + c] = acc;
      }
    }
    double norm = 0.0;
    for (double v : raw) norm += v * v;
    norm = std::sqrt(norm);
    const Embedding e = safa_forward(base, pf, w);
    REQUIRE_FALSE(e.zero);
    for (int j = 0; j < K * C; ++j) {
      CHECK(e.v[j] == Catch::Approx(raw[j] / norm).margin(1e-12));
    }
  }

  SECTION("pose changes move the embedding") {
    const BaseEmbedding base = random_base(rng, L, C);
    const Embedding at_center = safa_forward(base, pose_feature(0.0, 0.0, 0.0, grid, PoseMode::full), w);
    const Embedding offset = safa_forward(base, pose_feature(25.0, 0.0, 0.0, grid, PoseMode::full), w);
    const Embedding turned = safa_forward(base, pose_feature(0.0, 0.0, 2.0, grid, PoseMode::full), w);
    CHECK(similarity(at_center, offset) < 1.0);
    CHECK(similarity(at_center, turned) < 1.0);
  }

  SECTION("pose-free weights ignore heading") {
    const SafaWeights w0 = SafaWeights::seeded(K, L, 0, hidden, 11);
    const BaseEmbedding base = random_base(rng, L, C);
    const PoseFeature a{PoseMode::none};
    PoseFeature b{PoseMode::none};
    b.sin_psi = 1.0;
    b.cos_psi = 0.0;
    CHECK(safa_forward(base, a, w0).v == safa_forward(base, b, w0).v);
  }

  SECTION("shape mismatches are rejected") {
    const BaseEmbedding base = random_base(rng, L + 1, C);
    CHECK_THROWS_AS(safa_forward(base, pose_feature(0.0, 0.0, 0.0, grid, PoseMode::full), w),
                    ShapeMismatchError);
    const BaseEmbedding ok = random_base(rng, L, C);
    CHECK_THROWS_AS(safa_forward(ok, pose_feature(0.0, 0.0, 0.0, grid, PoseMode::heading_only), w),
                    ShapeMismatchError);
  }
}

TEST_CASE("similarity properties") {
  SplitMix64 rng(44);
  const SafaWeights w = SafaWeights::seeded(2, 4, 0, 3, 9);
  const PoseFeature pf{PoseMode::none};
  const Embedding zero = Embedding::zero_of(8);
  const Embedding a = safa_forward(random_base(rng, 4, 4), pf, w);
  const Embedding b = safa_forward(random_base(rng, 4, 4), pf, w);

  CHECK(similarity(zero, a) == 0.0);
  CHECK(similarity(a, zero) == 0.0);
  CHECK(similarity(a, b) == similarity(b, a));
  CHECK(similarity(a, a) >= similarity(a, b));
  CHECK(similarity(a, a) == Catch::Approx(1.0).epsilon(1e-12));
  for (int i = 0; i < 50; ++i) {
    const Embedding c = safa_forward(random_base(rng, 4, 4), pf, w);
    const double s = similarity(a, c);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("weight streams are separated") {
  EmbedConfig cfg;
  cfg.safa_seed = 123;
  const SafaWeights g = ground_weights(cfg);
  const SafaWeights s = satellite_weights(cfg);
  CHECK(g.P == 4);
  CHECK(s.P == 0);
  CHECK(g.w2[0] != s.w2[0]);  // sibling streams, same shapes

  EmbedConfig bad = cfg;
  bad.heads = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("satellite store precomputation") {
  const GridSpec grid{0.0, 0.0, 60.0, 3, 2};
  const int dim = 10;
  const World world = checkerboard_world(dim, grid);
  EmbedConfig cfg;
  cfg.positions = 5;
  cfg.channels = 6;
  cfg.heads = 3;
  cfg.hidden = 4;
  cfg.lift_seed = 21;
  cfg.safa_seed = 22;

  const SatStore store = precompute_sat_store(world, grid, cfg);
  CHECK(store.grid == grid);
  CHECK(store.embed_dim() == 18);
  CHECK(store.data.size() == static_cast<std::size_t>(grid.tile_count()) * 18);

  SECTION("deterministic across reruns") {
    const SatStore again = precompute_sat_store(world, grid, cfg);
    CHECK(store.checksum() == again.checksum());
    CHECK(serialize_store(store) == serialize_store(again));
  }

  SECTION("entries equal a direct per-tile recomputation") {
    const Lifter lifter(cfg.positions, cfg.channels, dim, cfg.lift_seed);
    const SafaWeights w = satellite_weights(cfg);
    for (int row = 0; row < grid.rows; ++row) {
      for (int col = 0; col < grid.cols; ++col) {
        const Embedding direct =
            safa_forward(lifter.lift(satellite_descriptor(world, {col, row}, grid)),
                         PoseFeature{PoseMode::none}, w);
        const Embedding stored = store.at({col, row});
        REQUIRE(stored.zero == direct.zero);
        for (int j = 0; j < store.embed_dim(); ++j) {
          CHECK(stored.v[j] == static_cast<double>(static_cast<float>(direct.v[j])));
        }
      }
    }
  }

  SECTION("empty tile carries the zero flag") {
    CHECK(store.at({1, 0}).zero);
    CHECK_FALSE(store.at({0, 0}).zero);
    CHECK_THROWS_AS(store.at({3, 0}), OutOfBoundsError);
  }
}

TEST_CASE("per-particle scoring composes the shared base with local pose") {
  const GridSpec grid{0.0, 0.0, 60.0, 3, 2};
  const int dim = 10;
  const World world = checkerboard_world(dim, grid);
  EmbedConfig cfg;
  cfg.positions = 5;
  cfg.channels = 6;
  cfg.heads = 3;
  cfg.hidden = 4;
  cfg.lift_seed = 21;
  cfg.safa_seed = 22;
  const SatStore store = precompute_sat_store(world, grid, cfg);
  const SafaWeights gw = ground_weights(cfg);
  const Lifter lifter(cfg.positions, cfg.channels, dim, cfg.lift_seed);
  WorldSpec wspec;
  wspec.descriptor_dim = dim;
  wspec.visibility_range = 150.0;
  wspec.fov = 2.0;
  const BaseEmbedding base = lifter.lift(ground_descriptor(world, {95.0, 65.0, 0.4}, wspec));

  SECTION("singleton batch equals manual composition") {
    const ParticlePose p{95.0, 65.0, 0.0};
    const double psi_meas = 0.4;
    const std::vector<ParticlePose> batch{p};
    const std::vector<double> scores =
        pseudo_similarity(batch, base, psi_meas, store, gw, PoseMode::full);
    const TileIndex tile = tile_of(p, grid);
    const Displacement d = displacement_from_center(p, tile, grid);
    const Embedding g =
        safa_forward(base, pose_feature(d.dx, d.dy, psi_meas, grid, PoseMode::full), gw);
    REQUIRE(scores.size() == 1);
    CHECK(scores[0] == similarity(g, store.at(tile)));
  }

  SECTION("matches a naive loop and is thread-count invariant") {
    SplitMix64 rng(45);
    std::vector<ParticlePose> batch;
    for (int i = 0; i < 100; ++i) {
      batch.push_back({rng.uniform(-40.0, 220.0), rng.uniform(-40.0, 160.0),
                       rng.uniform(-3.0, 3.0)});
    }
    const double psi_meas = -1.2;
    const std::vector<double> one =
        pseudo_similarity(batch, base, psi_meas, store, gw, PoseMode::full, 1);
    std::vector<double> naive(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const ParticlePose pose = clamp_to_footprint(batch[i], grid);
      const TileIndex tile = tile_of(pose, grid);
      const Displacement d = displacement_from_center(pose, tile, grid);
      const Embedding g =
          safa_forward(base, pose_feature(d.dx, d.dy, psi_meas, grid, PoseMode::full), gw);
      naive[i] = similarity(g, store.at(tile));
    }
    CHECK(one == naive);
    CHECK(pseudo_similarity(batch, base, psi_meas, store, gw, PoseMode::full, 3) == one);
    CHECK(pseudo_similarity(batch, base, psi_meas, store, gw, PoseMode::full, 8) == one);
  }

  SECTION("identical pose inputs score identically") {
    const std::vector<ParticlePose> batch{{100.0, 70.0, 0.0}, {100.0, 70.0, 2.0}};
    // Particle heading is ignored; the shared compass heading drives the
    // pose feature.
    const std::vector<double> s =
        pseudo_similarity(batch, base, 0.7, store, gw, PoseMode::full);
    CHECK(s[0] == s[1]);
  }

  SECTION("heading flips matter except in the pose-free mode") {
    const std::vector<ParticlePose> batch{{95.0, 65.0, 0.0}};
    const EmbedConfig none_cfg = [&] {
      EmbedConfig c = cfg;
      c.mode = PoseMode::none;
      return c;
    }();
    const SafaWeights gw_none = ground_weights(none_cfg);
    const SafaWeights gw_heading = [&] {
      EmbedConfig c = cfg;
      c.mode = PoseMode::heading_only;
      return ground_weights(c);
    }();

    const auto s_full = pseudo_similarity(batch, base, 0.4, store, gw, PoseMode::full);
    const auto s_full_flip =
        pseudo_similarity(batch, base, 0.4 + M_PI, store, gw, PoseMode::full);
    CHECK(s_full[0] != s_full_flip[0]);

    const auto s_heading =
        pseudo_similarity(batch, base, 0.4, store, gw_heading, PoseMode::heading_only);
    const auto s_heading_flip =
        pseudo_similarity(batch, base, 0.4 + M_PI, store, gw_heading, PoseMode::heading_only);
    CHECK(s_heading[0] != s_heading_flip[0]);

    const auto s_none = pseudo_similarity(batch, base, 0.4, store, gw_none, PoseMode::none);
    const auto s_none_flip =
        pseudo_similarity(batch, base, 0.4 + M_PI, store, gw_none, PoseMode::none);
    CHECK(s_none[0] == s_none_flip[0]);
  }
}

TEST_CASE("satellite store container format") {
  const GridSpec grid{0.0, 0.0, 60.0, 3, 2};
  const World world = checkerboard_world(8, grid);
  EmbedConfig cfg;
  cfg.positions = 4;
  cfg.channels = 5;
  cfg.heads = 2;
  cfg.hidden = 3;
  const SatStore store = precompute_sat_store(world, grid, cfg);
  const std::vector<unsigned char> bytes = serialize_store(store);

  SECTION("round trip preserves every byte") {
    const SatStore back = deserialize_store(bytes);
    CHECK(back.grid == store.grid);
    CHECK(back.K == store.K);
    CHECK(back.C == store.C);
    CHECK(back.data == store.data);
    CHECK(serialize_store(back) == bytes);

    const TempFile f("store.rwss");
    save_store(store, f.path);
    const SatStore from_file = load_store(f.path);
    CHECK(serialize_store(from_file) == bytes);
  }

  SECTION("damage is detected") {
    std::vector<unsigned char> bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(deserialize_store(bad), CorruptStoreError);

    bad = bytes;
    bad[4] = 0x7f;  // version field
    CHECK_THROWS_AS(deserialize_store(bad), VersionMismatchError);

    bad = bytes;
    bad[bytes.size() / 2] ^= 0x01;  // payload bit
    CHECK_THROWS_AS(deserialize_store(bad), CorruptStoreError);

    bad.assign(bytes.begin(), bytes.end() - 10);
    CHECK_THROWS_AS(deserialize_store(bad), CorruptStoreError);

    bad = bytes;
    bad.push_back(0);
    CHECK_THROWS_AS(deserialize_store(bad), CorruptStoreError);

    CHECK_THROWS_AS(deserialize_store({}), CorruptStoreError);
    CHECK_THROWS_AS(load_store("/tmp/rewag_definitely_missing.rwss"), IoError);
  }
}
