#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agdet/core.hpp"

namespace agdet {

inline constexpr double kDefaultIouThreshold = 0.25;

/// ScanNet 18-class list in the usual reporting order.
inline std::vector<std::string> scannet18_classes() {
  return {"cab",  "bed",  "chair", "sofa",  "tabl", "door", "wind", "bkshf", "pic",
          "cntr", "desk", "curt",  "fridg", "showr", "toil", "sink", "bath",  "ofurn"};
}

struct EvalConfig {
  double iou_threshold = kDefaultIouThreshold;
  std::vector<std::string> class_names;  // optional; label i -> class_names[i]

  void validate() const {
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "iou threshold must lie in (0, 1)");
    }
  }

  std::string class_name(int label) const {
    if (label >= 0 && static_cast<std::size_t>(label) < class_names.size()) return class_names[label];
    return std::to_string(label);
  }
};

/// Axis-aligned IoU. Both boxes must have zero yaw.
inline double iou_aabb(const Box3D& a, const Box3D& b) {
  if (a.yaw() != 0.0 || b.yaw() != 0.0) {
    throw Error(ErrorCode::RotatedBoxUnsupported, "IoU is only defined here for zero-yaw boxes");
  }
  const Vec3 alo = a.min_corner();
  const Vec3 ahi = a.max_corner();
  const Vec3 blo = b.min_corner();
  const Vec3 bhi = b.max_corner();
  // volumes come from the same corner differences as the overlap, so
  // identical boxes give exactly 1
  double inter = 1.0;
  double vol_a = 1.0;
  double vol_b = 1.0;
  for (int k = 0; k < 3; ++k) {
    const double overlap = std::min(ahi[k], bhi[k]) - std::max(alo[k], blo[k]);
    if (overlap <= 0.0) return 0.0;
    inter *= overlap;
    vol_a *= ahi[k] - alo[k];
    vol_b *= bhi[k] - blo[k];
  }
  return std::clamp(inter / (vol_a + vol_b - inter), 0.0, 1.0);
}

namespace detail {

struct RankedPrediction {
  std::size_t scene;
  std::size_t index;
  double score;
};

}  // namespace detail

/// Per-prediction match outcome in ranked order: true positives and false
/// positives, plus the ground-truth total. Labels are ignored; callers pass a
/// single-class subset.
struct MatchResult {
  std::vector<bool> is_tp;      // in descending-score order
  std::vector<double> scores;   // same order
  std::size_t num_gt = 0;
};

inline MatchResult match_detections(std::span<const DetectionSet> preds, std::span<const DetectionSet> gts,
                                    double iou_threshold) {
  if (preds.size() != gts.size()) throw Error(ErrorCode::ShapeError, "prediction/ground-truth scene counts differ");
  std::vector<detail::RankedPrediction> ranked;
  MatchResult out;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    out.num_gt += gts[s].size();
    for (std::size_t i = 0; i < preds[s].size(); ++i) ranked.push_back({s, i, preds[s][i].score});
  }
  // stable: equal scores keep (scene, index) order
  std::ranges::stable_sort(ranked, [](const auto& a, const auto& b) { return a.score > b.score; });

  std::vector<std::vector<bool>> used(gts.size());
  for (std::size_t s = 0; s < gts.size(); ++s) used[s].assign(gts[s].size(), false);

  for (const auto& r : ranked) {
    const Box3D& box = preds[r.scene][r.index].box;
    double best_iou = -1.0;
    std::size_t best = gts[r.scene].size();
    for (std::size_t g = 0; g < gts[r.scene].size(); ++g) {
      if (used[r.scene][g]) continue;
      const double iou = iou_aabb(box, gts[r.scene][g].box);
      if (iou >= iou_threshold && iou > best_iou) {
        best_iou = iou;
        best = g;
      }
    }
    const bool tp = best < gts[r.scene].size();
    if (tp) used[r.scene][best] = true;
    out.is_tp.push_back(tp);
    out.scores.push_back(r.score);
  }
  return out;
}

/// All-point interpolated AP from a ranked match list: area under the
/// monotone max-envelope of precision over recall.
inline double ap_from_matches(const MatchResult& m) {
  if (m.num_gt == 0) return 0.0;
  const std::size_t n = m.is_tp.size();
  std::vector<double> precision(n);
  std::vector<double> recall(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (m.is_tp[i]) ++tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / static_cast<double>(m.num_gt);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (recall[i] > prev_recall) {
      ap += (recall[i] - prev_recall) * precision[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

/// AP of one class subset pooled over scenes; nullopt when the class has
/// neither predictions nor ground truth.
inline std::optional<double> class_ap(std::span<const DetectionSet> preds, std::span<const DetectionSet> gts,
                                      const EvalConfig& cfg) {
  cfg.validate();
  const MatchResult m = match_detections(preds, gts, cfg.iou_threshold);
  if (m.num_gt == 0 && m.is_tp.empty()) return std::nullopt;
  return ap_from_matches(m);
}

/// AP for a single scene whose detections all belong to one class.
inline double average_precision(const DetectionSet& preds, const DetectionSet& gts, const EvalConfig& cfg) {
  return class_ap(std::span(&preds, 1), std::span(&gts, 1), cfg).value_or(0.0);
}

struct MapResult {
  std::map<int, double> per_class;  // every class seen in predictions or ground truth
  std::map<int, std::size_t> gt_counts;
  double mean = 0.0;                // over classes with ground truth
};

inline MapResult mean_ap(std::span<const DetectionSet> preds, std::span<const DetectionSet> gts,
                         const EvalConfig& cfg) {
  cfg.validate();
  if (preds.size() != gts.size()) throw Error(ErrorCode::ShapeError, "prediction/ground-truth scene counts differ");
  MapResult result;
  std::map<int, bool> labels;
  for (const auto& set : gts) {
    for (const auto& d : set) {
      labels[d.label] = true;
      ++result.gt_counts[d.label];
    }
  }
  for (const auto& set : preds) {
    for (const auto& d : set) labels.try_emplace(d.label, false);
  }

  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& [label, has_gt] : labels) {
    std::vector<DetectionSet> p;
    std::vector<DetectionSet> g;
    for (std::size_t s = 0; s < preds.size(); ++s) {
      p.push_back(preds[s].with_label(label));
      g.push_back(gts[s].with_label(label));
    }
    const double ap = class_ap(p, g, cfg).value_or(0.0);
    result.per_class[label] = ap;
    if (has_gt) {
      total += ap;
      ++counted;
    }
  }
  result.mean = counted == 0 ? 0.0 : total / static_cast<double>(counted);
  return result;
}

}  // namespace agdet
