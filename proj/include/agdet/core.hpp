#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "agdet/error.hpp"
#include "agdet/matrix.hpp"

namespace agdet {

using Vec3 = std::array<double, 3>;

namespace detail {

inline bool finite3(const Vec3& v) noexcept {
  return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]);
}

}  // namespace detail

/// Euclidean distance. Every sampler path goes through this one function so
/// that incremental and from-scratch distance computations agree bit-for-bit.
inline double distance(const Vec3& a, const Vec3& b) noexcept {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// ---------------------------------------------------------------------------
// PointCloud
// ---------------------------------------------------------------------------

/// Non-empty set of finite 3D points.
class PointCloud {
 public:
  explicit PointCloud(std::vector<Vec3> points) : points_(std::move(points)) {
    if (points_.empty()) throw Error(ErrorCode::EmptyCloud, "point cloud has no points");
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (!detail::finite3(points_[i])) {
        throw Error(ErrorCode::NonFinite, "point " + std::to_string(i) + " has a non-finite coordinate");
      }
    }
  }

  std::size_t size() const noexcept { return points_.size(); }
  std::span<const Vec3> points() const noexcept { return points_; }
  const Vec3& operator[](std::size_t i) const { return points_[i]; }

  friend bool operator==(const PointCloud&, const PointCloud&) = default;

 private:
  std::vector<Vec3> points_;
};

/// Per-point nonnegative-by-convention scalar weights, index-aligned with a cloud.
class AttentionField {
 public:
  explicit AttentionField(std::vector<double> weights) : weights_(std::move(weights)) {
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      if (!std::isfinite(weights_[i])) {
        throw Error(ErrorCode::NonFinite, "attention weight " + std::to_string(i) + " is not finite");
      }
    }
  }

  AttentionField(const PointCloud& cloud, std::vector<double> weights) : AttentionField(std::move(weights)) {
    check_paired(cloud);
  }

  void check_paired(const PointCloud& cloud) const {
    if (weights_.size() != cloud.size()) {
      throw Error(ErrorCode::ShapeError, "attention has " + std::to_string(weights_.size()) +
                                             " weights but cloud has " + std::to_string(cloud.size()) +
                                             " points");
    }
  }

  std::size_t size() const noexcept { return weights_.size(); }
  std::span<const double> weights() const noexcept { return weights_; }
  double operator[](std::size_t i) const { return weights_[i]; }

  friend bool operator==(const AttentionField&, const AttentionField&) = default;

 private:
  std::vector<double> weights_;
};

/// Global max coordinate minus global min coordinate over all axes and points.
inline double bounding_range(std::span<const Vec3> points) {
  if (points.empty()) throw Error(ErrorCode::EmptyCloud, "bounding_range of an empty cloud");
  double lo = points[0][0];
  double hi = points[0][0];
  for (const Vec3& p : points) {
    for (double c : p) {
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
  }
  return hi - lo;
}

inline double bounding_range(const PointCloud& cloud) { return bounding_range(cloud.points()); }

// ---------------------------------------------------------------------------
// Sampling configuration and results
// ---------------------------------------------------------------------------

struct ArgmaxAttention {
  friend bool operator==(const ArgmaxAttention&, const ArgmaxAttention&) = default;
};

struct FixedIndex {
  std::size_t index = 0;
  friend bool operator==(const FixedIndex&, const FixedIndex&) = default;
};

using StartRule = std::variant<ArgmaxAttention, FixedIndex>;

inline constexpr double kDefaultEpsilon = 1e-8;
inline constexpr double kDefaultLambdaDist = 0.8;
inline constexpr std::size_t kDefaultQueryCount = 256;

struct SamplerConfig {
  std::size_t k = kDefaultQueryCount;
  double lambda_dist = kDefaultLambdaDist;
  double epsilon = kDefaultEpsilon;
  StartRule start_rule = ArgmaxAttention{};

  void validate() const {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
    if (!(lambda_dist >= 0.0 && lambda_dist <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "lambda_dist must lie in [0, 1]");
    }
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
      throw Error(ErrorCode::InvalidArgument, "epsilon must be a positive finite number");
    }
  }

  void validate_for(std::size_t n) const {
    validate();
    if (k > n) {
      throw Error(ErrorCode::NotEnoughPoints,
                  "requested " + std::to_string(k) + " samples from " + std::to_string(n) + " points");
    }
    if (const auto* fixed = std::get_if<FixedIndex>(&start_rule); fixed != nullptr && fixed->index >= n) {
      throw Error(ErrorCode::IndexOutOfRange, "start index " + std::to_string(fixed->index) + " out of range");
    }
  }
};

/// Ordered, duplicate-free selection of indices into a cloud of size `universe`.
class SampleSet {
 public:
  SampleSet(std::vector<std::size_t> indices, std::size_t universe) : indices_(std::move(indices)) {
    std::unordered_set<std::size_t> seen;
    seen.reserve(indices_.size());
    for (std::size_t idx : indices_) {
      if (idx >= universe) {
        throw Error(ErrorCode::IndexOutOfRange,
                    "index " + std::to_string(idx) + " >= " + std::to_string(universe));
      }
      if (!seen.insert(idx).second) {
        throw Error(ErrorCode::DuplicateIndex, "index " + std::to_string(idx) + " selected twice");
      }
    }
  }

  std::size_t size() const noexcept { return indices_.size(); }
  std::span<const std::size_t> indices() const noexcept { return indices_; }
  std::size_t operator[](std::size_t i) const { return indices_[i]; }

  friend bool operator==(const SampleSet&, const SampleSet&) = default;

 private:
  std::vector<std::size_t> indices_;
};

// ---------------------------------------------------------------------------
// FeatureLevels
// ---------------------------------------------------------------------------

/// L token feature maps sharing one (N_tok, C) shape. `level_ids` are tags,
/// e.g. the encoder layer each map came from.
class FeatureLevels {
 public:
  FeatureLevels(std::vector<Matrix> levels, std::vector<int> level_ids = {})
      : levels_(std::move(levels)), level_ids_(std::move(level_ids)) {
    if (levels_.empty()) throw Error(ErrorCode::ShapeError, "at least one feature level is required");
    for (const Matrix& m : levels_) {
      if (!m.same_shape(levels_.front())) {
        throw Error(ErrorCode::ShapeError, "feature levels disagree in shape: " + shape_string(m) + " vs " +
                                               shape_string(levels_.front()));
      }
      if (!m.all_finite()) throw Error(ErrorCode::NonFinite, "feature level has a non-finite entry");
    }
    if (level_ids_.empty()) {
      for (std::size_t i = 0; i < levels_.size(); ++i) level_ids_.push_back(static_cast<int>(i));
    }
    if (level_ids_.size() != levels_.size()) {
      throw Error(ErrorCode::ShapeError, "level_ids length does not match level count");
    }
  }

  std::size_t count() const noexcept { return levels_.size(); }
  std::size_t tokens() const noexcept { return levels_.front().rows(); }
  std::size_t channels() const noexcept { return levels_.front().cols(); }
  const Matrix& operator[](std::size_t i) const { return levels_[i]; }
  std::span<const Matrix> levels() const noexcept { return levels_; }
  std::span<const int> level_ids() const noexcept { return level_ids_; }

 private:
  std::vector<Matrix> levels_;
  std::vector<int> level_ids_;
};

/// Row-wise concatenation of per-view token maps: V maps of (M x C) become one
/// (V*M x C) map.
inline Matrix concat_tokens(std::span<const Matrix> views) {
  if (views.empty()) throw Error(ErrorCode::ShapeError, "no views to concatenate");
  const std::size_t cols = views.front().cols();
  std::size_t rows = 0;
  for (const Matrix& v : views) {
    if (v.cols() != cols) throw Error(ErrorCode::ShapeError, "views disagree in token dimension");
    rows += v.rows();
  }
  Matrix out(rows, cols);
  std::size_t r = 0;
  for (const Matrix& v : views) {
    for (std::size_t i = 0; i < v.rows(); ++i, ++r) std::ranges::copy(v.row(i), out.row(r).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Boxes and detections
// ---------------------------------------------------------------------------

class Box3D {
 public:
  Box3D(Vec3 center, Vec3 size, double yaw = 0.0) : center_(center), size_(size), yaw_(yaw) {
    if (!detail::finite3(center_) || !detail::finite3(size_) || !std::isfinite(yaw_)) {
      throw Error(ErrorCode::NonFinite, "box has a non-finite field");
    }
    for (double s : size_) {
      if (!(s > 0.0)) throw Error(ErrorCode::InvalidArgument, "box size components must be positive");
    }
    if (yaw_ < -std::numbers::pi || yaw_ >= std::numbers::pi) {
      throw Error(ErrorCode::InvalidArgument, "yaw must lie in [-pi, pi)");
    }
  }

  const Vec3& center() const noexcept { return center_; }
  const Vec3& size() const noexcept { return size_; }
  double yaw() const noexcept { return yaw_; }

  Vec3 min_corner() const noexcept {
    return {center_[0] - size_[0] / 2, center_[1] - size_[1] / 2, center_[2] - size_[2] / 2};
  }
  Vec3 max_corner() const noexcept {
    return {center_[0] + size_[0] / 2, center_[1] + size_[1] / 2, center_[2] + size_[2] / 2};
  }

  /// Closed containment test; treats the box as axis-aligned.
  bool contains(const Vec3& p) const noexcept {
    const Vec3 lo = min_corner();
    const Vec3 hi = max_corner();
    for (int a = 0; a < 3; ++a) {
      if (p[a] < lo[a] || p[a] > hi[a]) return false;
    }
    return true;
  }

  friend bool operator==(const Box3D&, const Box3D&) = default;

 private:
  Vec3 center_;
  Vec3 size_;
  double yaw_;
};

struct Detection {
  Box3D box;
  int label = 0;
  double score = 1.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Boxes with labels and confidences. Stored as records, so the box/label/score
/// columns always have equal length.
class DetectionSet {
 public:
  DetectionSet() = default;
  explicit DetectionSet(std::vector<Detection> items) : items_(std::move(items)) {
    for (const Detection& d : items_) check(d);
  }

  void push_back(Detection d) {
    check(d);
    items_.push_back(std::move(d));
  }

  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  const Detection& operator[](std::size_t i) const { return items_[i]; }
  std::span<const Detection> items() const noexcept { return items_; }
  auto begin() const noexcept { return items_.begin(); }
  auto end() const noexcept { return items_.end(); }

  /// Subset with the given label, order preserved.
  DetectionSet with_label(int label) const {
    DetectionSet out;
    for (const Detection& d : items_) {
      if (d.label == label) out.items_.push_back(d);
    }
    return out;
  }

  friend bool operator==(const DetectionSet&, const DetectionSet&) = default;

 private:
  static void check(const Detection& d) {
    if (!std::isfinite(d.score) || d.score < 0.0 || d.score > 1.0) {
      throw Error(ErrorCode::InvalidArgument, "detection score must lie in [0, 1]");
    }
    if (d.label < 0) throw Error(ErrorCode::InvalidArgument, "detection label must be nonnegative");
  }

  std::vector<Detection> items_;
};

struct Scene {
  PointCloud cloud;
  AttentionField attention;
  DetectionSet gt;
  std::optional<FeatureLevels> features;

  Scene(PointCloud c, AttentionField a, DetectionSet g, std::optional<FeatureLevels> f = std::nullopt)
      : cloud(std::move(c)), attention(std::move(a)), gt(std::move(g)), features(std::move(f)) {
    attention.check_paired(cloud);
  }
};

}  // namespace agdet
