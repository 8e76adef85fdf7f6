#pragma once

// Farthest point sampling and attention-guided query sampling.
//
// Attention-guided sampling selects k indices one at a time. The first index is
// the argmax of the min-max normalized attention (or a fixed index). Every
// later index maximizes
//
//     priority[i] = a_norm[i] + lambda_dist * d_norm[i]      over i not yet selected
//
// where d_min[i] is the distance from point i to its nearest selected point and
// d_norm is d_min min-max normalized over *all* points (selected points have
// d_min = 0, so the minimum is 0 from the second pick on). Every argmax breaks
// ties toward the lowest index.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <span>
#include <variant>
#include <vector>

#include "agdet/core.hpp"

namespace agdet {

/// (A - min A) / (max A - min A + epsilon). Outputs lie in [0, 1).
inline std::vector<double> normalize_attention(std::span<const double> attention, double epsilon) {
  if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be positive");
  std::vector<double> out(attention.size());
  if (attention.empty()) return out;
  const auto [lo_it, hi_it] = std::ranges::minmax_element(attention);
  const double lo = *lo_it;
  const double denom = *hi_it - lo + epsilon;
  for (std::size_t i = 0; i < attention.size(); ++i) out[i] = (attention[i] - lo) / denom;
  return out;
}

inline std::vector<double> normalize_attention(const AttentionField& field, double epsilon) {
  return normalize_attention(field.weights(), epsilon);
}

/// Current nearest-selected distances and their normalized form.
struct WorkingDistances {
  std::vector<double> d_min;
  std::vector<double> d_norm;
};

/// Plain farthest point sampling with Euclidean distances; ties go to the
/// lowest index.
inline SampleSet fps(const PointCloud& cloud, std::size_t k, std::size_t start_index = 0) {
  const std::size_t n = cloud.size();
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
  if (k > n) {
    throw Error(ErrorCode::NotEnoughPoints,
                "requested " + std::to_string(k) + " samples from " + std::to_string(n) + " points");
  }
  if (start_index >= n) throw Error(ErrorCode::IndexOutOfRange, "start index out of range");

  const auto pts = cloud.points();
  std::vector<double> d_min(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  std::vector<std::size_t> order;
  order.reserve(k);

  std::size_t current = start_index;
  for (std::size_t step = 0; step < k; ++step) {
    order.push_back(current);
    taken[current] = 1;
    d_min[current] = 0.0;
    if (step + 1 == k) break;

    const Vec3 anchor = pts[current];
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double d = std::min(d_min[i], distance(pts[i], anchor));
      d_min[i] = d;
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    current = best;
  }
  return SampleSet(std::move(order), n);
}

/// Incremental attention-guided sampler. Each call to `select_next` costs O(N):
/// one pass folds the newest selection into d_min, a second pass scores the
/// unselected points.
class AgSampler {
 public:
  AgSampler(const PointCloud& cloud, const AttentionField& attention, const SamplerConfig& config)
      : cloud_(cloud), config_(config) {
    attention.check_paired(cloud);
    config_.validate();
    if (const auto* fixed = std::get_if<FixedIndex>(&config_.start_rule);
        fixed != nullptr && fixed->index >= cloud.size()) {
      throw Error(ErrorCode::IndexOutOfRange, "start index out of range");
    }
    a_norm_ = normalize_attention(attention, config_.epsilon);
    const std::size_t n = cloud.size();
    work_.d_min.assign(n, std::numeric_limits<double>::infinity());
    work_.d_norm.assign(n, 0.0);
    taken_.assign(n, 0);
  }

  std::size_t size() const noexcept { return cloud_.size(); }
  bool exhausted() const noexcept { return order_.size() == cloud_.size(); }
  std::span<const std::size_t> selected() const noexcept { return order_; }
  std::span<const double> normalized_attention() const noexcept { return a_norm_; }
  const WorkingDistances& working() const noexcept { return work_; }

  std::size_t select_next() {
    const std::size_t n = cloud_.size();
    if (exhausted()) throw Error(ErrorCode::NotEnoughPoints, "every point has already been selected");

    std::size_t pick = 0;
    if (order_.empty()) {
      if (const auto* fixed = std::get_if<FixedIndex>(&config_.start_rule)) {
        pick = fixed->index;
      } else {
        pick = static_cast<std::size_t>(std::ranges::max_element(a_norm_) - a_norm_.begin());
      }
    } else {
      const double denom = d_hi_ - d_lo_ + config_.epsilon;
      const double lambda = config_.lambda_dist;
      double best = -std::numeric_limits<double>::infinity();
      pick = n;
      for (std::size_t i = 0; i < n; ++i) {
        const double dn = (work_.d_min[i] - d_lo_) / denom;
        work_.d_norm[i] = dn;
        if (taken_[i]) continue;
        const double priority = a_norm_[i] + lambda * dn;
        if (priority > best) {
          best = priority;
          pick = i;
        }
      }
    }
    commit(pick);
    return pick;
  }

 private:
  void commit(std::size_t pick) {
    order_.push_back(pick);
    taken_[pick] = 1;
    const auto pts = cloud_.points();
    const Vec3 anchor = pts[pick];
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double d = work_.d_min[i];
      if (i == pick) {
        d = 0.0;
      } else if (!taken_[i]) {
        d = std::min(d, distance(pts[i], anchor));
      }
      work_.d_min[i] = d;
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
    d_lo_ = lo;
    d_hi_ = hi;
  }

  const PointCloud& cloud_;
  SamplerConfig config_;
  std::vector<double> a_norm_;
  WorkingDistances work_;
  std::vector<char> taken_;
  std::vector<std::size_t> order_;
  double d_lo_ = 0.0;
  double d_hi_ = 0.0;
};

/// Attention-guided sampling, incremental O(N k) path.
inline SampleSet ag_sample(const PointCloud& cloud, const AttentionField& attention, const SamplerConfig& config) {
  config.validate_for(cloud.size());
  AgSampler sampler(cloud, attention, config);
  for (std::size_t i = 0; i < config.k; ++i) sampler.select_next();
  const auto sel = sampler.selected();
  return SampleSet(std::vector<std::size_t>(sel.begin(), sel.end()), cloud.size());
}

/// Reference attention-guided sampling. Recomputes every point's distance to
/// every selected point on each iteration, O(N k^2). Kept deliberately naive
/// so it can serve as the cross-check for `ag_sample`.
inline SampleSet ag_sample_oracle(const PointCloud& cloud, const AttentionField& attention,
                                  const SamplerConfig& config) {
  config.validate_for(cloud.size());
  attention.check_paired(cloud);
  const std::size_t n = cloud.size();
  const auto pts = cloud.points();
  const auto a = attention.weights();

  double a_lo = a[0];
  double a_hi = a[0];
  for (double v : a) {
    if (v < a_lo) a_lo = v;
    if (v > a_hi) a_hi = v;
  }
  std::vector<double> a_norm(n);
  for (std::size_t i = 0; i < n; ++i) a_norm[i] = (a[i] - a_lo) / (a_hi - a_lo + config.epsilon);

  std::vector<std::size_t> chosen;
  std::size_t first = 0;
  if (const auto* fixed = std::get_if<FixedIndex>(&config.start_rule)) {
    first = fixed->index;
  } else {
    for (std::size_t i = 1; i < n; ++i) {
      if (a_norm[i] > a_norm[first]) first = i;
    }
  }
  chosen.push_back(first);

  std::vector<double> d(n);
  while (chosen.size() < config.k) {
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t s : chosen) best = std::min(best, distance(pts[i], pts[s]));
      d[i] = best;
    }
    double d_lo = d[0];
    double d_hi = d[0];
    for (double v : d) {
      if (v < d_lo) d_lo = v;
      if (v > d_hi) d_hi = v;
    }
    std::size_t pick = n;
    double best_priority = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::ranges::find(chosen, i) != chosen.end()) continue;
      const double priority = a_norm[i] + config.lambda_dist * ((d[i] - d_lo) / (d_hi - d_lo + config.epsilon));
      if (pick == n || priority > best_priority) {
        pick = i;
        best_priority = priority;
      }
    }
    chosen.push_back(pick);
  }
  return SampleSet(std::move(chosen), n);
}

}  // namespace agdet
