#pragma once

// Evaluation metrics: CorLoc for boxes; max F-beta, IoU and accuracy for saliency masks;
// Jaccard index for video masks. Binary masks count a pixel as foreground when >= 0.5.

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ncutseg/error.hpp"
#include "ncutseg/types.hpp"

namespace ncutseg {

inline constexpr double kDefaultBetaSq = 0.3;
inline constexpr double kCorlocThreshold = 0.5;
inline constexpr int kFBetaThresholds = 255;

enum class CorlocMode { strict, inclusive };

inline double box_iou(const DetectionBox& a, const DetectionBox& b) {
  const std::int64_t iw = std::max<std::int64_t>(0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const std::int64_t ih = std::max<std::int64_t>(0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const std::int64_t inter = iw * ih;
  const std::int64_t uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

/// 1 when the best IoU against any ground-truth box exceeds 0.5 (or reaches it, inclusive mode).
inline int corloc(const DetectionBox& pred, std::span<const DetectionBox> gts, CorlocMode mode = CorlocMode::strict) {
  if (gts.empty()) throw DomainError("CorLoc needs at least one ground-truth box");
  double best = 0.0;
  for (const auto& gt : gts) best = std::max(best, box_iou(pred, gt));
  return mode == CorlocMode::strict ? (best > kCorlocThreshold) : (best >= kCorlocThreshold);
}

namespace detail {

inline void require_same_dims(const PixelMask& a, const PixelMask& b) {
  if (a.height != b.height || a.width != b.width || a.size() != b.size()) {
    throw ValidationError("mask dimensions differ: " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                          " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

inline bool on(double v) { return v >= 0.5; }

}  // namespace detail

/// |pred & gt| / |pred | gt|; 1 when both are empty.
inline double mask_iou(const PixelMask& pred, const PixelMask& gt) {
  detail::require_same_dims(pred, gt);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = detail::on(pred.values[i]), g = detail::on(gt.values[i]);
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline double jaccard(const PixelMask& pred, const PixelMask& gt) { return mask_iou(pred, gt); }

inline double pixel_accuracy(const PixelMask& pred, const PixelMask& gt) {
  detail::require_same_dims(pred, gt);
  if (pred.size() == 0) throw DomainError("accuracy of an empty mask");
  std::size_t agree = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) agree += detail::on(pred.values[i]) == detail::on(gt.values[i]);
  return static_cast<double>(agree) / static_cast<double>(pred.size());
}

inline double f_beta(double precision, double recall, double beta_sq) {
  const double denom = beta_sq * precision + recall;
  return denom > 0.0 ? (1.0 + beta_sq) * precision * recall / denom : 0.0;
}

/// Maximum F-beta over the thresholds k/255, k = 1..255. Precision is 1 when nothing is predicted.
inline double f_beta_max(const PixelMask& pred_soft, const PixelMask& gt, double beta_sq = kDefaultBetaSq) {
  detail::require_same_dims(pred_soft, gt);
  std::size_t positives = 0;
  for (double g : gt.values) positives += detail::on(g);
  if (positives == 0) throw DomainError("F-beta with an empty ground-truth mask");
  double best = 0.0;
  for (int k = 1; k <= kFBetaThresholds; ++k) {
    const double t = static_cast<double>(k) / kFBetaThresholds;
    std::size_t tp = 0, predicted = 0;
    for (std::size_t i = 0; i < pred_soft.size(); ++i) {
      if (pred_soft.values[i] >= t) {
        ++predicted;
        tp += detail::on(gt.values[i]);
      }
    }
    const double precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 1.0;
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    best = std::max(best, f_beta(precision, recall, beta_sq));
  }
  return best;
}

struct EvalRecord {
  std::string id;
  std::map<std::string, double> metrics;
};

/// Arithmetic mean of one metric over the records.
inline double aggregate(std::span<const EvalRecord> records, const std::string& metric) {
  if (records.empty()) throw DomainError("aggregate over no records");
  double sum = 0.0;
  for (const auto& r : records) {
    const auto it = r.metrics.find(metric);
    if (it == r.metrics.end()) throw ValidationError("record " + r.id + " has no metric " + metric);
    sum += it->second;
  }
  return sum / static_cast<double>(records.size());
}

}  // namespace ncutseg
