#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "rewag/errors.hpp"
#include "rewag/geometry.hpp"

namespace rewag {

/// Overflow-safe log(1 + e^z). Exact identity: softplus(z) = max(z, 0) +
/// log1p(e^{-|z|}), so large |z| never overflows and softplus(0) = log(2).
inline double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

/// Overflow-safe logistic function, the derivative of softplus.
inline double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct TripletParams {
  double alpha = 10.0;
  // Default treats (d_pos, d_neg) as pair similarities: the loss is
  // softplus(-alpha (d_pos - d_neg)) and falls as d_pos rises above d_neg.
  // Set distances = true for the distance-based lineage, which flips the
  // exponent sign so the loss falls as d_pos shrinks below d_neg.
  bool distances = false;
};

/// Soft-margin triplet loss, log(1 + e^{sign * alpha (d_pos - d_neg)})
/// with sign -1 for similarities (default) and +1 for distances. At
/// d_pos == d_neg the value is exactly log(2) either way.
inline double triplet_loss(double d_pos, double d_neg, const TripletParams& p) {
  if (!(p.alpha > 0.0)) throw ValidationError("triplet alpha must be > 0");
  if (!std::isfinite(d_pos) || !std::isfinite(d_neg)) {
    throw NonFiniteError("triplet_loss: non-finite input");
  }
  const double sign = p.distances ? 1.0 : -1.0;
  return softplus(sign * p.alpha * (d_pos - d_neg));
}

struct TripletGrad {
  double d_dpos = 0.0;
  double d_dneg = 0.0;
};

inline TripletGrad triplet_grad(double d_pos, double d_neg, const TripletParams& p) {
  if (!(p.alpha > 0.0)) throw ValidationError("triplet alpha must be > 0");
  if (!std::isfinite(d_pos) || !std::isfinite(d_neg)) {
    throw NonFiniteError("triplet_grad: non-finite input");
  }
  const double sign = p.distances ? 1.0 : -1.0;
  const double s = sigmoid(sign * p.alpha * (d_pos - d_neg));
  return {sign * p.alpha * s, -sign * p.alpha * s};
}

/// Per-class scale and margin for the three-way similarity loss.
struct TrinomialParams {
  double alpha_p = 10.0;
  double alpha_n = 10.0;
  double alpha_semi = 10.0;
  double m_p = 0.6;
  double m_n = 0.3;
  double m_semi = 0.45;

  void validate() const {
    if (!(alpha_p > 0.0) || !(alpha_n > 0.0) || !(alpha_semi > 0.0)) {
      throw ValidationError("trinomial alphas must be > 0");
    }
    if (!std::isfinite(m_p) || !std::isfinite(m_n) || !std::isfinite(m_semi)) {
      throw ValidationError("trinomial margins must be finite");
    }
  }
};

/// Similarities of one anchor against its mined positive, semi-positive,
/// and negative sets. Counts are the list lengths.
struct MiningBatch {
  std::vector<double> s_pos;
  std::vector<double> s_semi;
  std::vector<double> s_neg;

  std::size_t total() const { return s_pos.size() + s_semi.size() + s_neg.size(); }
};

namespace detail {

inline void check_finite(const std::vector<double>& v, const char* what) {
  for (double s : v) {
    if (!std::isfinite(s)) throw NonFiniteError(std::string("trinomial: non-finite ") + what);
  }
}

/// One class term: mean over the list of softplus(sign * alpha * (s - m)),
/// scaled by 1/alpha. Elements accumulate in index order.
inline double class_term(const std::vector<double>& s, double alpha, double margin,
                         double sign) {
  if (s.empty()) return 0.0;
  double acc = 0.0;
  for (double v : s) acc += softplus(sign * alpha * (v - margin));
  return acc / (static_cast<double>(s.size()) * alpha);
}

inline void class_grad(const std::vector<double>& s, double alpha, double margin,
                       double sign, std::vector<double>& out) {
  out.resize(s.size());
  const double scale = sign / static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    out[i] = scale * sigmoid(sign * alpha * (s[i] - margin));
  }
}

}  // namespace detail

/// Three-way soft-margin loss over similarities: positives and
/// semi-positives are pushed above their margins (sign -1), negatives
/// below theirs (sign +1). Each class term is averaged over its list and
/// scaled by 1/alpha, so a single element sitting exactly on its margin
/// contributes log(2)/alpha.
inline double trinomial_loss(const MiningBatch& b, const TrinomialParams& p) {
  p.validate();
  if (b.total() == 0) throw EmptyBatchError("trinomial_loss: all class lists empty");
  detail::check_finite(b.s_pos, "positive similarity");
  detail::check_finite(b.s_semi, "semi-positive similarity");
  detail::check_finite(b.s_neg, "negative similarity");
  return detail::class_term(b.s_pos, p.alpha_p, p.m_p, -1.0) +
         detail::class_term(b.s_semi, p.alpha_semi, p.m_semi, -1.0) +
         detail::class_term(b.s_neg, p.alpha_n, p.m_n, 1.0);
}

struct TrinomialGrad {
  std::vector<double> d_pos;
  std::vector<double> d_semi;
  std::vector<double> d_neg;
};

inline TrinomialGrad trinomial_grad(const MiningBatch& b, const TrinomialParams& p) {
  p.validate();
  if (b.total() == 0) throw EmptyBatchError("trinomial_grad: all class lists empty");
  detail::check_finite(b.s_pos, "positive similarity");
  detail::check_finite(b.s_semi, "semi-positive similarity");
  detail::check_finite(b.s_neg, "negative similarity");
  TrinomialGrad g;
  detail::class_grad(b.s_pos, p.alpha_p, p.m_p, -1.0, g.d_pos);
  detail::class_grad(b.s_semi, p.alpha_semi, p.m_semi, -1.0, g.d_semi);
  detail::class_grad(b.s_neg, p.alpha_n, p.m_n, 1.0, g.d_neg);
  return g;
}

enum class PairClass { positive, semi_positive, negative };

/// Mining rule for a (ground pose, satellite tile) pair: the pose's own
/// tile is positive within r_pos of the tile center and semi-positive
/// elsewhere in it, the 8 surrounding tiles are semi-positive, everything
/// farther is negative.
inline PairClass classify_pair(const ParticlePose& ground, const TileIndex& tile,
                               const GridSpec& grid, double r_pos) {
  if (!tile_valid(tile, grid)) throw OutOfBoundsError("classify_pair: invalid tile");
  if (!(r_pos > 0.0)) throw ValidationError("r_pos must be > 0");
  const TileIndex own = tile_of(ground, grid);
  if (own == tile) {
    const ParticlePose c = tile_center(tile, grid);
    const double dx = ground.x - c.x;
    const double dy = ground.y - c.y;
    return std::sqrt(dx * dx + dy * dy) <= r_pos ? PairClass::positive
                                                 : PairClass::semi_positive;
  }
  if (std::abs(own.col - tile.col) <= 1 && std::abs(own.row - tile.row) <= 1) {
    return PairClass::semi_positive;
  }
  return PairClass::negative;
}

inline PairClass classify_pair(const ParticlePose& ground, const TileIndex& tile,
                               const GridSpec& grid) {
  return classify_pair(ground, tile, grid, grid.spacing / 4.0);
}

}  // namespace rewag
