// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sfda/box.hpp"
#include "sfda/detector.hpp"
#include "sfda/world.hpp"

namespace sfda {

struct ScoredBox {
  BBox box;
  int class_id = 0;
  double score = 0.0;
};

struct GroundTruthBox {
  BBox box;
  int class_id = 0;
};

using ImageDetections = std::vector<ScoredBox>;
using ImageTruth = std::vector<GroundTruthBox>;

inline constexpr double kDefaultIou = 0.5;
inline const std::vector<double> kFpiPoints = {0.05, 0.3, 0.5, 1.0};

struct ApResult {
  double map = 0.0;
  std::vector<double> per_class_ap;   // 0 for classes without ground truth
  std::vector<bool> has_ground_truth;
};

// Per class: detections sorted by score (ties by image, then detection
// index), each greedily matched to the unmatched same-class ground truth of
// highest IoU >= threshold. AP is the exact area under the precision
// envelope. mAP averages classes with at least one ground-truth box.
ApResult map_at_iou(std::span<const ImageDetections> dets, std::span<const ImageTruth> truth,
                    int num_classes, double iou_threshold = kDefaultIou);

// Recall at each false-positives-per-image budget: the best recall over all
// score thresholds whose FP / images stays within the budget.
std::map<double, double> froc(std::span<const ImageDetections> dets,
                              std::span<const ImageTruth> truth,
                              std::span<const double> fpi_points = kFpiPoints,
                              double iou_threshold = kDefaultIou);

struct F1Auc {
  double f1 = 0.0;
  std::optional<double> auc;  // nullopt when no positive or no negative images
};

// Best F1 over score thresholds on pooled matches; image-level ROC AUC using
// the max detection score per image.
F1Auc f1_auc(std::span<const ImageDetections> dets, std::span<const ImageTruth> truth,
             double iou_threshold = kDefaultIou);

struct EvalResult {
  double map50 = 0.0;
  std::vector<double> per_class_ap;
  std::map<double, double> recall_at_fpi;
  double f1 = 0.0;
  std::optional<double> auc;

  std::string to_json() const;
};

// One scored box per proposal: best foreground class and its score.
ImageDetections to_scored(std::span<const Detection> dets);
ImageTruth to_truth(const DetectionSample& sample);

EvalResult evaluate(const ModelParams& params, std::span<const DetectionSample> data);

}  // namespace sfda
