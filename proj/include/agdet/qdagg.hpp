#pragma once

// Query-driven multi-level feature aggregation and the decoder stack.
//
// A See-Query token q_see produces level weights w = softmax(mlp(q_see)); the
// decoder's cross-attention reads F_agg = sum_i w_i F_i. The See-Query rides
// along as row 0 of the unified query set, so self-attention lets it exchange
// information with the object queries, and its updated row re-derives w for
// the next layer. The MLP parameters are shared by all layers; only the q_see
// activation evolves.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "agdet/core.hpp"
#include "agdet/nncore.hpp"

namespace agdet {

struct SeeQueryState {
  std::vector<double> q_see;
  MlpParams mlp;  // C -> H -> L

  std::size_t dim() const noexcept { return q_see.size(); }
  std::size_t levels() const noexcept { return mlp.out_dim(); }

  void validate() const {
    mlp.validate();
    if (mlp.in_dim() != q_see.size()) throw Error(ErrorCode::ShapeError, "See-Query MLP input dim != dim(q_see)");
    for (double v : q_see) {
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "q_see has a non-finite entry");
    }
  }
};

struct DecoderLayerParams {
  AttentionParams self_attn;
  AttentionParams cross_attn;
};

struct DecoderParams {
  std::vector<DecoderLayerParams> layers;

  std::size_t depth() const noexcept { return layers.size(); }
};

/// Class projection (C x num_classes) and box projection (C x 7).
struct HeadParams {
  Matrix cls;
  Matrix box;

  std::size_t num_classes() const noexcept { return cls.cols(); }

  void validate() const {
    if (cls.cols() == 0) throw Error(ErrorCode::ShapeError, "head needs at least one class");
    if (box.cols() != 7 || box.rows() != cls.rows()) {
      throw Error(ErrorCode::ShapeError, "box projection must be C x 7 with the class projection's C");
    }
  }
};

enum class Aggregation {
  LastLevel,    // only the deepest level feeds every layer
  Sequential,   // layer l reads level (l mod L), shallow to deep
  QueryDriven,  // See-Query weighted sum, re-derived per layer
};

// ---------------------------------------------------------------------------
// See-Query weights
// ---------------------------------------------------------------------------

/// softmax(mlp(q_see)); lies on the probability simplex.
inline std::vector<double> see_weights(const SeeQueryState& state) {
  state.validate();
  Matrix logits = mlp(Matrix::row_vector(state.q_see), state.mlp);
  softmax_inplace(logits.row(0));
  const auto r = logits.row(0);
  return {r.begin(), r.end()};
}

/// Analytical d w / d q_see as an (L x C) matrix:
///   (diag(w) - w w^T) * W2^T * diag(relu'(pre)) * W1^T
inline Matrix see_weights_jacobian(const SeeQueryState& state) {
  const std::vector<double> w = see_weights(state);
  const Matrix pre = mlp_hidden_pre(Matrix::row_vector(state.q_see), state.mlp);
  const std::size_t c = state.dim();
  const std::size_t h = state.mlp.hidden_dim();
  const std::size_t l = w.size();

  // d logits / d q: (L x C)
  Matrix dz(l, c);
  for (std::size_t k = 0; k < h; ++k) {
    if (!(pre(0, k) > 0.0)) continue;
    for (std::size_t out = 0; out < l; ++out) {
      const double w2 = state.mlp.w2(k, out);
      if (w2 == 0.0) continue;
      for (std::size_t in = 0; in < c; ++in) dz(out, in) += w2 * state.mlp.w1(in, k);
    }
  }

  Matrix softmax_jac(l, l);
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t j = 0; j < l; ++j) softmax_jac(i, j) = (i == j ? w[i] : 0.0) - w[i] * w[j];
  }
  return matmul(softmax_jac, dz);
}

/// Compares `see_weights_jacobian` with central finite differences of step
/// `step`. Returns max |analytic - numeric| / max(max |analytic|, max |numeric|),
/// or 0 when both Jacobians vanish.
inline double grad_check_weights(const SeeQueryState& state, double step = 1e-5) {
  const Matrix analytic = see_weights_jacobian(state);
  Matrix numeric(analytic.rows(), analytic.cols());
  SeeQueryState probe = state;
  for (std::size_t in = 0; in < state.dim(); ++in) {
    const double saved = probe.q_see[in];
    probe.q_see[in] = saved + step;
    const auto plus = see_weights(probe);
    probe.q_see[in] = saved - step;
    const auto minus = see_weights(probe);
    probe.q_see[in] = saved;
    for (std::size_t out = 0; out < plus.size(); ++out) numeric(out, in) = (plus[out] - minus[out]) / (2.0 * step);
  }

  double diff = 0.0;
  double scale = 0.0;
  const auto a = analytic.data();
  const auto n = numeric.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - n[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(n[i])});
  }
  return scale == 0.0 ? 0.0 : diff / scale;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// F_agg = sum_i w_i F_i.
inline Matrix aggregate(const FeatureLevels& levels, std::span<const double> w) {
  if (w.size() != levels.count()) {
    throw Error(ErrorCode::ShapeError, "weight count " + std::to_string(w.size()) + " != level count " +
                                           std::to_string(levels.count()));
  }
  Matrix out(levels.tokens(), levels.channels());
  auto o = out.data();
  for (std::size_t lvl = 0; lvl < levels.count(); ++lvl) {
    const double wl = w[lvl];
    const auto f = levels[lvl].data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += wl * f[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------

/// Residual self-attention followed by residual cross-attention against `memory`.
inline Matrix attend(const Matrix& queries, const Matrix& memory, const DecoderLayerParams& layer) {
  const Matrix after_self = add(queries, mha(queries, queries, queries, layer.self_attn));
  return add(after_self, mha(after_self, memory, memory, layer.cross_attn));
}

struct LayerOutput {
  Matrix queries;             // (K+1) x C, row 0 is the updated See-Query
  SeeQueryState state;        // q_see replaced by output row 0
  std::vector<double> weights;  // level weights used by this layer
};

/// One decoder layer over the unified query set; row 0 of `queries` must equal
/// `state.q_see`.
inline LayerOutput decoder_layer(const Matrix& queries, const FeatureLevels& levels, const SeeQueryState& state,
                                 const DecoderLayerParams& layer) {
  state.validate();
  if (queries.rows() == 0 || queries.cols() != state.dim()) {
    throw Error(ErrorCode::ShapeError, "unified queries must be (K+1) x " + std::to_string(state.dim()));
  }
  if (levels.channels() != state.dim()) throw Error(ErrorCode::ShapeError, "feature channels != query dim");
  if (state.levels() != levels.count()) throw Error(ErrorCode::ShapeError, "See-Query MLP output != level count");
  if (!std::ranges::equal(queries.row(0), state.q_see)) {
    throw Error(ErrorCode::InvalidArgument, "row 0 of the unified queries must be q_see");
  }

  std::vector<double> w = see_weights(state);
  const Matrix f_agg = aggregate(levels, w);
  Matrix out = attend(queries, f_agg, layer);

  SeeQueryState next = state;
  const auto row0 = out.row(0);
  next.q_see.assign(row0.begin(), row0.end());
  return {std::move(out), std::move(next), std::move(w)};
}

/// Stacks [q_see; object queries] into the unified (K+1) x C set.
inline Matrix unify_queries(const std::vector<double>& q_see, const Matrix& object_queries) {
  if (object_queries.rows() > 0 && object_queries.cols() != q_see.size()) {
    throw Error(ErrorCode::ShapeError, "object queries and q_see differ in dimension");
  }
  Matrix out(object_queries.rows() + 1, q_see.size());
  std::ranges::copy(q_see, out.row(0).begin());
  for (std::size_t i = 0; i < object_queries.rows(); ++i) std::ranges::copy(object_queries.row(i), out.row(i + 1).begin());
  return out;
}

inline Matrix drop_first_row(const Matrix& m) {
  Matrix out(m.rows() - 1, m.cols());
  for (std::size_t i = 1; i < m.rows(); ++i) std::ranges::copy(m.row(i), out.row(i - 1).begin());
  return out;
}

struct DecoderResult {
  Matrix queries;  // K x C, See-Query row dropped
  SeeQueryState final_state;
  std::vector<std::vector<double>> layer_weights;
};

inline DecoderResult decoder_forward(const Matrix& q0, const FeatureLevels& levels, const SeeQueryState& state,
                                     const DecoderParams& params) {
  state.validate();
  if (q0.rows() > 0 && q0.cols() != state.dim()) throw Error(ErrorCode::ShapeError, "q0 columns != query dim");
  DecoderResult result{q0, state, {}};
  if (params.layers.empty()) return result;

  Matrix unified = unify_queries(state.q_see, q0);
  SeeQueryState current = state;
  for (const DecoderLayerParams& layer : params.layers) {
    LayerOutput step = decoder_layer(unified, levels, current, layer);
    unified = std::move(step.queries);
    current = std::move(step.state);
    result.layer_weights.push_back(std::move(step.weights));
  }
  result.queries = drop_first_row(unified);
  result.final_state = std::move(current);
  return result;
}

/// Decoder without a See-Query, reading one fixed level per layer. Supports
/// the `LastLevel` and `Sequential` strategies.
inline Matrix decoder_forward_fixed(const Matrix& q0, const FeatureLevels& levels, const DecoderParams& params,
                                    Aggregation strategy) {
  if (strategy == Aggregation::QueryDriven) {
    throw Error(ErrorCode::InvalidArgument, "query-driven aggregation needs a See-Query state");
  }
  Matrix queries = q0;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const std::size_t lvl = strategy == Aggregation::LastLevel ? levels.count() - 1 : l % levels.count();
    queries = attend(queries, levels[lvl], params.layers[l]);
  }
  return queries;
}

// ---------------------------------------------------------------------------
// Detection head
// ---------------------------------------------------------------------------

/// Wraps an angle into [-pi, pi).
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = a - two_pi * std::floor((a + std::numbers::pi) / two_pi);
  if (r >= std::numbers::pi) r -= two_pi;
  if (r < -std::numbers::pi) r = -std::numbers::pi;
  return r;
}

inline DetectionSet detection_head(const Matrix& queries, const HeadParams& head) {
  head.validate();
  if (queries.cols() != head.cls.rows()) throw Error(ErrorCode::ShapeError, "query dim != head input dim");
  const Matrix probs = softmax_rows(matmul(queries, head.cls));
  const Matrix raw = matmul(queries, head.box);
  DetectionSet out;
  for (std::size_t i = 0; i < queries.rows(); ++i) {
    const auto p = probs.row(i);
    const auto best = std::ranges::max_element(p);
    const auto r = raw.row(i);
    Box3D box({r[0], r[1], r[2]}, {std::exp(r[3]), std::exp(r[4]), std::exp(r[5])}, wrap_angle(r[6]));
    out.push_back({box, static_cast<int>(best - p.begin()), std::min(*best, 1.0)});
  }
  return out;
}

}  // namespace agdet
