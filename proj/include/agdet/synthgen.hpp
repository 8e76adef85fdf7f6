#pragma once

// Deterministic synthetic indoor scenes: axis-aligned object boxes inside a
// room, uniform background points plus denser in-box clusters, and an
// attention field that is higher on object points.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "agdet/core.hpp"
#include "agdet/nncore.hpp"
#include "agdet/qdagg.hpp"
#include "agdet/random.hpp"

namespace agdet {

struct SceneSpec {
  Vec3 room{8.0, 8.0, 3.0};  // scene spans [0, room] on each axis
  std::size_t min_objects = 4;
  std::size_t max_objects = 8;
  Vec3 size_min{0.4, 0.4, 0.4};
  Vec3 size_max{1.6, 1.6, 1.2};
  std::size_t num_points = 10000;
  double object_point_fraction = 0.3;  // share of points placed inside boxes
  double attn_base = 0.2;
  double attn_bonus = 1.0;
  double attn_jitter = 0.15;
  int num_classes = 18;
  std::size_t max_retries = 200;  // placement attempts per object
  std::uint64_t seed = 0;

  void validate() const {
    for (int a = 0; a < 3; ++a) {
      if (!(room[a] > 0.0)) throw Error(ErrorCode::InvalidArgument, "room extents must be positive");
      if (!(size_min[a] > 0.0) || size_min[a] > size_max[a]) {
        throw Error(ErrorCode::InvalidArgument, "object size range must be positive and ordered");
      }
      if (size_max[a] > room[a]) throw Error(ErrorCode::InvalidArgument, "objects cannot exceed the room");
    }
    if (min_objects > max_objects) throw Error(ErrorCode::InvalidArgument, "object count range is inverted");
    if (num_points == 0) throw Error(ErrorCode::InvalidArgument, "scene needs at least one point");
    if (!(object_point_fraction >= 0.0 && object_point_fraction <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "object_point_fraction must lie in [0, 1]");
    }
    if (attn_base < 0.0 || attn_jitter < 0.0) throw Error(ErrorCode::InvalidArgument, "attention parameters must be nonnegative");
    if (!(attn_bonus > attn_jitter)) throw Error(ErrorCode::InvalidArgument, "attention bonus must exceed jitter std");
    if (num_classes < 1) throw Error(ErrorCode::InvalidArgument, "num_classes must be positive");
  }
};

namespace detail {

inline bool boxes_overlap(const Box3D& a, const Box3D& b) noexcept {
  const Vec3 alo = a.min_corner();
  const Vec3 ahi = a.max_corner();
  const Vec3 blo = b.min_corner();
  const Vec3 bhi = b.max_corner();
  for (int k = 0; k < 3; ++k) {
    if (ahi[k] <= blo[k] || bhi[k] <= alo[k]) return false;
  }
  return true;
}

enum Stream : std::uint64_t { kBoxes = 1, kPoints = 2, kAttention = 3, kShuffle = 4 };

}  // namespace detail

inline bool inside_any(const DetectionSet& boxes, const Vec3& p) noexcept {
  for (const auto& d : boxes) {
    if (d.box.contains(p)) return true;
  }
  return false;
}

inline Scene generate(const SceneSpec& spec) {
  spec.validate();
  RngStream box_rng(spec.seed, detail::kBoxes);
  const auto count = static_cast<std::size_t>(
      box_rng.integer(static_cast<std::int64_t>(spec.min_objects), static_cast<std::int64_t>(spec.max_objects)));

  std::vector<Detection> objects;
  for (std::size_t obj = 0; obj < count; ++obj) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < spec.max_retries && !placed; ++attempt) {
      Vec3 size{};
      Vec3 center{};
      for (int a = 0; a < 3; ++a) {
        size[a] = box_rng.uniform(spec.size_min[a], spec.size_max[a]);
        center[a] = box_rng.uniform(size[a] / 2, spec.room[a] - size[a] / 2);
      }
      Box3D candidate(center, size);
      bool clear = true;
      for (const auto& o : objects) {
        if (detail::boxes_overlap(candidate, o.box)) {
          clear = false;
          break;
        }
      }
      if (clear) {
        const int label = static_cast<int>(box_rng.integer(0, spec.num_classes - 1));
        objects.push_back({candidate, label, 1.0});
        placed = true;
      }
    }
    if (!placed) {
      throw Error(ErrorCode::PackingFailed, "could not place object " + std::to_string(obj) + " after " +
                                                std::to_string(spec.max_retries) + " attempts");
    }
  }
  DetectionSet gt(std::move(objects));

  RngStream pt_rng(spec.seed, detail::kPoints);
  const std::size_t in_object =
      gt.empty() ? 0 : static_cast<std::size_t>(std::llround(spec.object_point_fraction * spec.num_points));
  std::vector<Vec3> points;
  points.reserve(spec.num_points);
  for (std::size_t i = 0; i < spec.num_points - in_object; ++i) {
    points.push_back({pt_rng.uniform(0.0, spec.room[0]), pt_rng.uniform(0.0, spec.room[1]),
                      pt_rng.uniform(0.0, spec.room[2])});
  }
  for (std::size_t i = 0; i < in_object; ++i) {
    const Box3D& box = gt[i % gt.size()].box;
    const Vec3 lo = box.min_corner();
    const Vec3 hi = box.max_corner();
    points.push_back({pt_rng.uniform(lo[0], hi[0]), pt_rng.uniform(lo[1], hi[1]), pt_rng.uniform(lo[2], hi[2])});
  }

  // interleave background and object points
  RngStream shuffle_rng(spec.seed, detail::kShuffle);
  for (std::size_t i = points.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(shuffle_rng.integer(0, static_cast<std::int64_t>(i - 1)));
    std::swap(points[i - 1], points[j]);
  }

  const CounterRng attn_rng(spec.seed, detail::kAttention);
  std::vector<double> attention(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    double a = spec.attn_base + (inside_any(gt, points[i]) ? spec.attn_bonus : 0.0);
    if (spec.attn_jitter > 0.0) a += spec.attn_jitter * attn_rng.normal(i);
    attention[i] = std::max(a, 0.0);
  }

  PointCloud cloud(std::move(points));
  AttentionField field(cloud, std::move(attention));
  return Scene(std::move(cloud), std::move(field), std::move(gt));
}

/// Fraction of sampled points that lie inside any ground-truth box.
inline double concentration(const SampleSet& samples, const Scene& scene) {
  if (samples.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t idx : samples.indices()) {
    if (idx >= scene.cloud.size()) throw Error(ErrorCode::IndexOutOfRange, "sample index outside the scene");
    if (inside_any(scene.gt, scene.cloud[idx])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

// ---------------------------------------------------------------------------
// Seeded parameter and feature fixtures
// ---------------------------------------------------------------------------

inline Matrix random_matrix(std::size_t rows, std::size_t cols, RngStream& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = scale * rng.normal();
  return m;
}

inline std::vector<double> random_vector(std::size_t n, RngStream& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

/// Default encoder layer tags for four feature levels.
inline std::vector<int> default_level_ids() { return {4, 11, 17, 23}; }

inline FeatureLevels random_feature_levels(std::size_t tokens, std::size_t channels, std::size_t count,
                                           std::uint64_t seed, std::vector<int> level_ids = {}) {
  RngStream rng(seed, 10);
  std::vector<Matrix> levels;
  for (std::size_t l = 0; l < count; ++l) levels.push_back(random_matrix(tokens, channels, rng));
  if (level_ids.empty() && count == 4) level_ids = default_level_ids();
  return FeatureLevels(std::move(levels), std::move(level_ids));
}

/// Two-layer See-Query MLP with hidden width C.
inline SeeQueryState random_see_state(std::size_t dim, std::size_t levels, std::uint64_t seed, double scale = 0.5) {
  RngStream rng(seed, 11);
  SeeQueryState s;
  s.q_see = random_vector(dim, rng);
  s.mlp = MlpParams{random_matrix(dim, dim, rng, scale), random_vector(dim, rng, scale),
                    random_matrix(dim, levels, rng, scale), random_vector(levels, rng, scale)};
  return s;
}

inline AttentionParams random_attention_params(std::size_t dim, std::size_t heads, RngStream& rng) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  AttentionParams p{random_matrix(dim, dim, rng, scale), random_matrix(dim, dim, rng, scale),
                    random_matrix(dim, dim, rng, scale), random_matrix(dim, dim, rng, scale), heads};
  p.validate();
  return p;
}

inline DecoderParams random_decoder_params(std::size_t dim, std::size_t heads, std::size_t depth, std::uint64_t seed) {
  RngStream rng(seed, 12);
  DecoderParams params;
  for (std::size_t l = 0; l < depth; ++l) {
    DecoderLayerParams layer{random_attention_params(dim, heads, rng), random_attention_params(dim, heads, rng)};
    params.layers.push_back(std::move(layer));
  }
  return params;
}

inline HeadParams random_head_params(std::size_t dim, std::size_t num_classes, std::uint64_t seed) {
  RngStream rng(seed, 13);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  return HeadParams{random_matrix(dim, num_classes, rng, scale), random_matrix(dim, 7, rng, scale)};
}

}  // namespace agdet
