// SPDX-License-Identifier: Apache-2.0
#include "sfda/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include <nlohmann/json.hpp>

#include "sfda/errors.hpp"

namespace sfda {
namespace {

struct RankedDet {
  double score;
  std::size_t image;
  std::size_t index;
  bool true_positive = false;
};

bool ranked_before(const RankedDet& a, const RankedDet& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.image != b.image) return a.image < b.image;
  return a.index < b.index;
}

void check_sizes(std::span<const ImageDetections> dets, std::span<const ImageTruth> truth) {
  if (dets.size() != truth.size()) throw DimensionError("eval: detections and truth differ in image count");
}

// Score-ordered greedy matching of one class. Returns that class's
// detections in rank order with their TP flags.
std::vector<RankedDet> match_class(std::span<const ImageDetections> dets,
                                   std::span<const ImageTruth> truth, int class_id,
                                   double iou_threshold) {
  std::vector<RankedDet> ranked;
  for (std::size_t img = 0; img < dets.size(); ++img)
    for (std::size_t k = 0; k < dets[img].size(); ++k)
      if (dets[img][k].class_id == class_id) ranked.push_back({dets[img][k].score, img, k});
  std::sort(ranked.begin(), ranked.end(), ranked_before);

  std::vector<std::vector<bool>> used(truth.size());
  for (std::size_t img = 0; img < truth.size(); ++img) used[img].assign(truth[img].size(), false);

  for (RankedDet& r : ranked) {
    const BBox& box = dets[r.image][r.index].box;
    const ImageTruth& gts = truth[r.image];
    double best = -1.0;
    std::size_t best_g = 0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].class_id != class_id || used[r.image][g]) continue;
      const double v = iou(box, gts[g].box);
      if (v >= iou_threshold && v > best) {
        best = v;
        best_g = g;
      }
    }
    if (best >= 0.0) {
      used[r.image][best_g] = true;
      r.true_positive = true;
    }
  }
  return ranked;
}

// Exact area under the precision envelope of a ranked TP/FP list.
double average_precision(const std::vector<RankedDet>& ranked, std::size_t npos) {
  if (npos == 0 || ranked.empty()) return 0.0;
  const std::size_t n = ranked.size();
  std::vector<double> recall(n), precision(n);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (ranked[k].true_positive) ++tp;
    recall[k] = static_cast<double>(tp) / static_cast<double>(npos);
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
  }
  for (std::size_t k = n - 1; k > 0; --k) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (recall[k] > prev_recall) {
      ap += (recall[k] - prev_recall) * precision[k];
      prev_recall = recall[k];
    }
  }
  return ap;
}

struct OperatingPoint {
  std::size_t tp = 0;
  std::size_t fp = 0;
};

// Cumulative TP/FP at every distinct score threshold, pooled over classes,
// starting from the empty selection.
std::vector<OperatingPoint> pooled_curve(std::span<const ImageDetections> dets,
                                         std::span<const ImageTruth> truth, double iou_threshold) {
  int max_class = -1;
  for (const auto& img : dets)
    for (const auto& d : img) max_class = std::max(max_class, d.class_id);
  std::vector<RankedDet> pooled;
  for (int c = 0; c <= max_class; ++c) {
    auto ranked = match_class(dets, truth, c, iou_threshold);
    pooled.insert(pooled.end(), ranked.begin(), ranked.end());
  }
  std::sort(pooled.begin(), pooled.end(), ranked_before);

  std::vector<OperatingPoint> curve{{0, 0}};
  OperatingPoint cur;
  for (std::size_t k = 0; k < pooled.size(); ++k) {
    (pooled[k].true_positive ? cur.tp : cur.fp) += 1;
    if (k + 1 == pooled.size() || pooled[k + 1].score != pooled[k].score) curve.push_back(cur);
  }
  return curve;
}

std::size_t count_truth(std::span<const ImageTruth> truth) {
  std::size_t n = 0;
  for (const auto& img : truth) n += img.size();
  return n;
}

}  // namespace

ApResult map_at_iou(std::span<const ImageDetections> dets, std::span<const ImageTruth> truth,
                    int num_classes, double iou_threshold) {
  check_sizes(dets, truth);
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0))
    throw ConfigError("map_at_iou: threshold must be in (0, 1)");
  ApResult out;
  out.per_class_ap.assign(static_cast<std::size_t>(num_classes), 0.0);
  out.has_ground_truth.assign(static_cast<std::size_t>(num_classes), false);
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < num_classes; ++c) {
    std::size_t npos = 0;
    for (const auto& img : truth)
      for (const auto& g : img) npos += g.class_id == c ? 1 : 0;
    if (npos == 0) continue;
    const double ap = average_precision(match_class(dets, truth, c, iou_threshold), npos);
    out.per_class_ap[static_cast<std::size_t>(c)] = ap;
    out.has_ground_truth[static_cast<std::size_t>(c)] = true;
    sum += ap;
    ++counted;
  }
  out.map = counted ? sum / counted : 0.0;
  return out;
}

std::map<double, double> froc(std::span<const ImageDetections> dets,
                              std::span<const ImageTruth> truth, std::span<const double> fpi_points,
                              double iou_threshold) {
  check_sizes(dets, truth);
  std::map<double, double> out;
  const std::size_t npos = count_truth(truth);
  const double n_images = static_cast<double>(std::max<std::size_t>(1, dets.size()));
  const auto curve = pooled_curve(dets, truth, iou_threshold);
  for (double budget : fpi_points) {
    double best = 0.0;
    if (npos > 0) {
      for (const auto& pt : curve)
        if (static_cast<double>(pt.fp) / n_images <= budget)
          best = std::max(best, static_cast<double>(pt.tp) / static_cast<double>(npos));
    }
    out[budget] = best;
  }
  return out;
}

F1Auc f1_auc(std::span<const ImageDetections> dets, std::span<const ImageTruth> truth,
             double iou_threshold) {
  check_sizes(dets, truth);
  F1Auc out;
  const std::size_t npos = count_truth(truth);
  for (const auto& pt : pooled_curve(dets, truth, iou_threshold)) {
    const double denom = 2.0 * static_cast<double>(pt.tp) + static_cast<double>(pt.fp) +
                         static_cast<double>(npos - pt.tp);
    if (pt.tp > 0) out.f1 = std::max(out.f1, 2.0 * static_cast<double>(pt.tp) / denom);
  }

  std::vector<double> pos, neg;
  for (std::size_t img = 0; img < dets.size(); ++img) {
    double s = 0.0;
    for (const auto& d : dets[img]) s = std::max(s, d.score);
    (truth[img].empty() ? neg : pos).push_back(s);
  }
  if (!pos.empty() && !neg.empty()) {
    std::sort(neg.begin(), neg.end());
    double wins = 0.0;
    for (double p : pos) {
      const auto lo = std::lower_bound(neg.begin(), neg.end(), p);
      const auto hi = std::upper_bound(neg.begin(), neg.end(), p);
      wins += static_cast<double>(lo - neg.begin()) + 0.5 * static_cast<double>(hi - lo);
    }
    out.auc = wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
  }
  return out;
}

std::string EvalResult::to_json() const {
  nlohmann::ordered_json js;
  js["map50"] = map50;
  js["per_class_ap"] = per_class_ap;
  nlohmann::ordered_json recall = nlohmann::ordered_json::object();
  for (const auto& [budget, r] : recall_at_fpi) {
    char key[32];
    std::snprintf(key, sizeof key, "%g", budget);
    recall[key] = r;
  }
  js["recall_at_fpi"] = std::move(recall);
  js["f1"] = f1;
  if (auc)
    js["auc"] = *auc;
  else
    js["auc"] = "not-applicable";
  return js.dump(2);
}

ImageDetections to_scored(std::span<const Detection> dets) {
  ImageDetections out;
  out.reserve(dets.size());
  for (const auto& d : dets) {
    const int c = d.best_foreground();
    out.push_back({d.box, c, d.scores[c]});
  }
  return out;
}

ImageTruth to_truth(const DetectionSample& sample) {
  ImageTruth out;
  out.reserve(sample.objects.size());
  for (const auto& o : sample.objects) out.push_back({o.box, o.class_id});
  return out;
}

EvalResult evaluate(const ModelParams& params, std::span<const DetectionSample> data) {
  std::vector<ImageDetections> dets;
  std::vector<ImageTruth> truth;
  dets.reserve(data.size());
  truth.reserve(data.size());
  for (const auto& s : data) {
    dets.push_back(to_scored(forward(params, s)));
    truth.push_back(to_truth(s));
  }
  EvalResult out;
  const ApResult ap = map_at_iou(dets, truth, params.num_classes());
  out.map50 = ap.map;
  out.per_class_ap = ap.per_class_ap;
  out.recall_at_fpi = froc(dets, truth);
  const F1Auc fa = f1_auc(dets, truth);
  out.f1 = fa.f1;
  out.auc = fa.auc;
  return out;
}

}  // namespace sfda
