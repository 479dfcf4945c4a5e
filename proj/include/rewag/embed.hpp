#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rewag/binary_io.hpp"
#include "rewag/errors.hpp"
#include "rewag/geometry.hpp"
#include "rewag/parallel.hpp"
#include "rewag/rng.hpp"
#include "rewag/world.hpp"

namespace rewag {

/// Which pose components get appended to the ground branch. The ablation
/// baselines drop position (heading_only) or everything (none).
enum class PoseMode { full, heading_only, none };

inline int pose_feature_length(PoseMode mode) {
  switch (mode) {
    case PoseMode::full: return 4;
    case PoseMode::heading_only: return 2;
    case PoseMode::none: return 0;
  }
  return 0;
}

/// Pose components normalized for the attention MLP: displacements scaled
/// by half the tile spacing, heading as (sin, cos).
struct PoseFeature {
  PoseMode mode = PoseMode::none;
  double dx_n = 0.0;
  double dy_n = 0.0;
  double sin_psi = 0.0;
  double cos_psi = 1.0;

  int size() const { return pose_feature_length(mode); }

  /// Feature order: full -> (dx_n, dy_n, sin, cos); heading_only ->
  /// (sin, cos); none -> empty.
  void append_to(Eigen::VectorXd& u, int offset) const {
    switch (mode) {
      case PoseMode::full:
        u[offset] = dx_n;
        u[offset + 1] = dy_n;
        u[offset + 2] = sin_psi;
        u[offset + 3] = cos_psi;
        break;
      case PoseMode::heading_only:
        u[offset] = sin_psi;
        u[offset + 1] = cos_psi;
        break;
      case PoseMode::none: break;
    }
  }
};

inline PoseFeature pose_feature(double dx, double dy, double psi, const GridSpec& grid,
                                PoseMode mode) {
  const double half = grid.spacing / 2.0;
  if (!std::isfinite(dx) || !std::isfinite(dy)) {
    throw NonFiniteError("pose_feature: non-finite displacement");
  }
  if (std::abs(dx) > half || std::abs(dy) > half) {
    throw RangeError("pose_feature: displacement exceeds half-spacing");
  }
  const double w = wrap_heading(psi);  // also rejects non-finite psi
  PoseFeature pf;
  pf.mode = mode;
  pf.dx_n = dx / half;
  pf.dy_n = dy / half;
  pf.sin_psi = std::sin(w);
  pf.cos_psi = std::cos(w);
  return pf;
}

/// L positions x C channels feature map, the pose-independent part of the
/// ground embedding. Computed once per time step and shared by all
/// particles. source_id tags which lift produced it.
struct BaseEmbedding {
  Eigen::MatrixXd features;  // L x C
  std::uint64_t source_id = 0;

  bool is_zero() const { return features.size() == 0 || features.isZero(0.0); }
};

namespace instrument {

/// Counts base-embedding computations. The per-step reuse property is
/// asserted by reading this around a filter run.
inline std::atomic<std::uint64_t>& lift_calls() {
  static std::atomic<std::uint64_t> n{0};
  return n;
}

inline void reset_lift_calls() { lift_calls().store(0); }

}  // namespace instrument

/// Fixed random projection from descriptor space to an L x C feature map.
/// Stands in for a learned backbone: deterministic in lift_seed, linear in
/// the descriptor. Hold one instance to amortize the projection matrix.
class Lifter {
 public:
  Lifter(int L, int C, int descriptor_dim, std::uint64_t lift_seed) : L_(L), C_(C) {
    if (L < 1 || C < 1) throw ValidationError("lift dimensions must be >= 1");
    if (descriptor_dim < 1) throw ValidationError("descriptor_dim must be >= 1");
    proj_.resize(static_cast<Eigen::Index>(L) * C, descriptor_dim);
    SplitMix64 rng(derive_seed(lift_seed, streams::kLift));
    const double scale = 1.0 / std::sqrt(static_cast<double>(descriptor_dim));
    for (Eigen::Index r = 0; r < proj_.rows(); ++r) {
      for (Eigen::Index c = 0; c < proj_.cols(); ++c) {
        proj_(r, c) = rng.uniform(-scale, scale);
      }
    }
  }

  BaseEmbedding lift(const Eigen::VectorXd& descriptor) const {
    if (descriptor.size() != proj_.cols()) {
      throw ShapeMismatchError("lift: descriptor dimension mismatch");
    }
    const std::uint64_t id =
        instrument::lift_calls().fetch_add(1, std::memory_order_relaxed) + 1;
    const Eigen::VectorXd flat = proj_ * descriptor;
    BaseEmbedding base;
    base.source_id = id;
    base.features.resize(L_, C_);
    for (int i = 0; i < L_; ++i) {
      for (int c = 0; c < C_; ++c) {
        base.features(i, c) = flat[static_cast<Eigen::Index>(i) * C_ + c];
      }
    }
    return base;
  }

  BaseEmbedding lift(const GroundObservation& obs) const { return lift(obs.descriptor); }

  int positions() const { return L_; }
  int channels() const { return C_; }

 private:
  int L_;
  int C_;
  Eigen::MatrixXd proj_;
};

inline BaseEmbedding lift_ground(const GroundObservation& obs, int L, int C,
                                 std::uint64_t lift_seed) {
  return Lifter(L, C, static_cast<int>(obs.descriptor.size()), lift_seed).lift(obs);
}

/// Frozen per-head attention MLPs. W1: hidden x (L+P), W2: L x hidden.
struct SafaWeights {
  int K = 0;
  int L = 0;
  int P = 0;
  int hidden = 0;
  std::vector<Eigen::MatrixXd> w1;
  std::vector<Eigen::MatrixXd> w2;

  /// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)], deterministic in
  /// the seed. Weights are frozen after this; there is no training path.
  static SafaWeights seeded(int K, int L, int P, int hidden, std::uint64_t seed) {
    if (K < 1 || L < 1 || P < 0 || hidden < 1) {
      throw ValidationError("attention weight dimensions out of range");
    }
    SafaWeights w;
    w.K = K;
    w.L = L;
    w.P = P;
    w.hidden = hidden;
    w.w1.reserve(K);
    w.w2.reserve(K);
    SplitMix64 rng(seed);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(L + P));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (int k = 0; k < K; ++k) {
      Eigen::MatrixXd m1(hidden, L + P);
      for (Eigen::Index r = 0; r < m1.rows(); ++r) {
        for (Eigen::Index c = 0; c < m1.cols(); ++c) m1(r, c) = rng.uniform(-s1, s1);
      }
      Eigen::MatrixXd m2(L, hidden);
      for (Eigen::Index r = 0; r < m2.rows(); ++r) {
        for (Eigen::Index c = 0; c < m2.cols(); ++c) m2(r, c) = rng.uniform(-s2, s2);
      }
      w.w1.push_back(std::move(m1));
      w.w2.push_back(std::move(m2));
    }
    return w;
  }
};

/// Unit vector of dimension K*C, or a flagged zero embedding when the
/// observation carried no signal.
struct Embedding {
  Eigen::VectorXd v;
  bool zero = false;

  static Embedding zero_of(int dim) {
    Embedding e;
    e.v = Eigen::VectorXd::Zero(dim);
    e.zero = true;
    return e;
  }
};

/// Per head k: m = channel-max over positions; mask = W2_k tanh(W1_k
/// [m; pose]); head output = features^T mask. Heads concatenate and the
/// result is L2-normalized. An all-zero base short-circuits to the zero
/// embedding, as does a degenerate zero-norm output.
inline Embedding safa_forward(const BaseEmbedding& base, const PoseFeature& pf,
                              const SafaWeights& w) {
  if (base.features.rows() != w.L) throw ShapeMismatchError("safa_forward: position count");
  if (pf.size() != w.P) throw ShapeMismatchError("safa_forward: pose feature length");
  const int C = static_cast<int>(base.features.cols());
  const int dim = w.K * C;
  if (base.is_zero()) return Embedding::zero_of(dim);

  Eigen::VectorXd u(w.L + w.P);
  for (int i = 0; i < w.L; ++i) u[i] = base.features.row(i).maxCoeff();
  pf.append_to(u, w.L);

  Embedding out;
  out.v.resize(dim);
  for (int k = 0; k < w.K; ++k) {
    const Eigen::VectorXd mask = w.w2[k] * (w.w1[k] * u).array().tanh().matrix();
    out.v.segment(static_cast<Eigen::Index>(k) * C, C) = base.features.transpose() * mask;
  }
  const double n = out.v.norm();
  if (n < 1e-15) return Embedding::zero_of(dim);
  out.v /= n;
  return out;
}

/// Dot product clamped to [-1, 1]; zero embeddings are similar to nothing.
inline double similarity(const Embedding& a, const Embedding& b) {
  if (a.zero || b.zero) return 0.0;
  const double d = a.v.dot(b.v);
  return d > 1.0 ? 1.0 : (d < -1.0 ? -1.0 : d);
}

/// Precomputed per-tile satellite embeddings, stored as f32 row-major by
/// tile index (row * cols + col). Immutable and shareable across threads.
struct SatStore {
  GridSpec grid;
  int K = 0;
  int C = 0;
  std::vector<float> data;

  int embed_dim() const { return K * C; }

  Embedding at(const TileIndex& tile) const {
    if (!tile_valid(tile, grid)) throw OutOfBoundsError("SatStore::at: invalid tile");
    const std::size_t base =
        (static_cast<std::size_t>(tile.row) * grid.cols + tile.col) * embed_dim();
    Embedding e;
    e.v.resize(embed_dim());
    bool all_zero = true;
    for (int j = 0; j < embed_dim(); ++j) {
      e.v[j] = static_cast<double>(data[base + j]);
      all_zero = all_zero && data[base + j] == 0.0f;
    }
    e.zero = all_zero;
    return e;
  }

  /// Checksum of the serialized image (header + payload), the same value
  /// the container format stores after the payload.
  std::uint64_t checksum() const;
};

/// Ground- and satellite-branch embedding configuration. The two branches
/// share the lift projection; their attention weights come from sibling
/// streams of safa_seed. The satellite branch is pose-free.
struct EmbedConfig {
  int positions = 8;    // L
  int channels = 16;    // C
  int heads = 4;        // K
  int hidden = 8;
  std::uint64_t lift_seed = 0;
  std::uint64_t safa_seed = 0;
  PoseMode mode = PoseMode::full;

  void validate() const {
    if (positions < 1 || channels < 1 || heads < 1 || hidden < 1) {
      throw ValidationError("embed dimensions must be >= 1");
    }
  }
};

inline SafaWeights ground_weights(const EmbedConfig& cfg) {
  return SafaWeights::seeded(cfg.heads, cfg.positions, pose_feature_length(cfg.mode),
                             cfg.hidden, derive_seed(cfg.safa_seed, streams::kAttentionGround));
}

inline SafaWeights satellite_weights(const EmbedConfig& cfg) {
  return SafaWeights::seeded(cfg.heads, cfg.positions, 0, cfg.hidden,
                             derive_seed(cfg.safa_seed, streams::kAttentionSat));
}

inline SatStore precompute_sat_store(const World& world, const GridSpec& grid,
                                     const EmbedConfig& cfg) {
  if (!grid.valid()) throw ValidationError("precompute_sat_store: invalid grid");
  cfg.validate();
  SatStore store;
  store.grid = grid;
  store.K = cfg.heads;
  store.C = cfg.channels;
  store.data.assign(static_cast<std::size_t>(grid.tile_count()) * store.embed_dim(), 0.0f);
  const Lifter lifter(cfg.positions, cfg.channels, world.descriptor_dim(), cfg.lift_seed);
  const SafaWeights w = satellite_weights(cfg);
  const PoseFeature empty_pf{PoseMode::none};
  for (int row = 0; row < grid.rows; ++row) {
    for (int col = 0; col < grid.cols; ++col) {
      const Eigen::VectorXd d = satellite_descriptor(world, {col, row}, grid);
      const Embedding e = safa_forward(lifter.lift(d), empty_pf, w);
      const std::size_t base =
          (static_cast<std::size_t>(row) * grid.cols + col) * store.embed_dim();
      if (e.zero) continue;  // slots already zero
      for (int j = 0; j < store.embed_dim(); ++j) {
        store.data[base + j] = static_cast<float>(e.v[j]);
      }
    }
  }
  return store;
}

/// Scores every particle against its tile's stored satellite embedding.
/// The base embedding is computed once per step by the caller; only the
/// cheap pose-aware head runs per particle. Out-of-footprint particles
/// are scored at their clamped pose. Chunked parallelism writes disjoint
/// output slots, so results are bit-identical for any thread count and
/// exactly equal to a naive per-particle loop.
inline std::vector<double> pseudo_similarity(std::span<const ParticlePose> particles,
                                             const BaseEmbedding& base, double psi_meas,
                                             const SatStore& store, const SafaWeights& w,
                                             PoseMode mode, int threads = 1) {
  std::vector<double> scores(particles.size(), 0.0);
  parallel_for(particles.size(), threads, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const ParticlePose pose = clamp_to_footprint(particles[i], store.grid);
      const TileIndex tile = tile_of(pose, store.grid);
      const Displacement d = displacement_from_center(pose, tile, store.grid);
      const PoseFeature pf = pose_feature(d.dx, d.dy, psi_meas, store.grid, mode);
      scores[i] = similarity(safa_forward(base, pf, w), store.at(tile));
    }
  });
  return scores;
}

// Satellite store format: magic "RWSS", u16 version, grid header
// (origin_x, origin_y, spacing as f64; cols, rows as u32), u32 K, u32 C,
// payload of tile-major f32 embeddings, trailing CRC-64 of all prior
// bytes. Little-endian throughout.
inline constexpr char kStoreMagic[5] = "RWSS";
inline constexpr std::uint16_t kStoreVersion = 1;

namespace detail {

inline std::vector<unsigned char> store_image(const SatStore& s) {
  ByteWriter w;
  w.magic(kStoreMagic);
  w.u16(kStoreVersion);
  w.f64(s.grid.origin_x);
  w.f64(s.grid.origin_y);
  w.f64(s.grid.spacing);
  w.u32(static_cast<std::uint32_t>(s.grid.cols));
  w.u32(static_cast<std::uint32_t>(s.grid.rows));
  w.u32(static_cast<std::uint32_t>(s.K));
  w.u32(static_cast<std::uint32_t>(s.C));
  for (float f : s.data) w.f32(f);
  return w.data();
}

}  // namespace detail

inline std::uint64_t SatStore::checksum() const { return crc64(detail::store_image(*this)); }

inline std::vector<unsigned char> serialize_store(const SatStore& s) {
  std::vector<unsigned char> image = detail::store_image(s);
  const std::uint64_t crc = crc64(image);
  ByteWriter tail;
  tail.u64(crc);
  image.insert(image.end(), tail.data().begin(), tail.data().end());
  return image;
}

inline void save_store(const SatStore& s, const std::string& path) {
  write_file(path, serialize_store(s));
}

inline SatStore deserialize_store(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 8) throw CorruptStoreError("truncated store");
  // Verify the trailing checksum over everything before it first; any
  // corruption, truncation included, fails here before field parsing.
  std::vector<unsigned char> image(bytes.begin(), bytes.end() - 8);
  std::uint64_t stored_crc = 0;
  for (int i = 0; i < 8; ++i) {
    stored_crc |= static_cast<std::uint64_t>(bytes[bytes.size() - 8 + i]) << (8 * i);
  }
  ByteReader r(image);
  if (!r.check_magic(kStoreMagic)) throw CorruptStoreError("not a satellite store");
  const std::uint16_t version = r.u16();
  if (version != kStoreVersion) {
    throw VersionMismatchError("unsupported store version " + std::to_string(version));
  }
  if (crc64(image) != stored_crc) throw CorruptStoreError("store checksum mismatch");
  SatStore s;
  s.grid.origin_x = r.f64();
  s.grid.origin_y = r.f64();
  s.grid.spacing = r.f64();
  s.grid.cols = static_cast<int>(r.u32());
  s.grid.rows = static_cast<int>(r.u32());
  s.K = static_cast<int>(r.u32());
  s.C = static_cast<int>(r.u32());
  if (!s.grid.valid() || s.K < 1 || s.C < 1) {
    throw CorruptStoreError("store header out of range");
  }
  const std::size_t want =
      static_cast<std::size_t>(s.grid.tile_count()) * s.K * s.C * sizeof(float);
  if (r.remaining() != want) throw CorruptStoreError("store payload size mismatch");
  s.data.resize(want / sizeof(float));
  for (float& f : s.data) f = r.f32();
  return s;
}

inline SatStore load_store(const std::string& path) {
  return deserialize_store(read_file(path));
}

}  // namespace rewag
