// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sfda/box.hpp"
#include "sfda/rng.hpp"
#include "sfda/world.hpp"

namespace sfda {

// Trainable tensors of the toy detector. The same layout holds gradients.
//
//   h      = adapter_w * f + adapter_b          (D x D feature adapter)
//   h'     = dropout(h)                          (inverted scaling)
//   logits = cls_w * h' + cls_b                  ((C+1) x D, background last)
//   deltas = reg_w * h' + reg_b                  (4 x D box refinement)
struct Weights {
  Eigen::MatrixXd adapter_w;
  Eigen::VectorXd adapter_b;
  Eigen::MatrixXd cls_w;
  Eigen::VectorXd cls_b;
  Eigen::MatrixXd reg_w;
  Eigen::VectorXd reg_b;

  static Weights zeros(int num_classes, int feature_dim);

  int num_classes() const { return static_cast<int>(cls_w.rows()) - 1; }
  int feature_dim() const { return static_cast<int>(cls_w.cols()); }

  bool same_shape(const Weights& other) const;
  bool all_finite() const;
  double squared_norm() const;

  Weights& operator+=(const Weights& other);
  Weights& operator-=(const Weights& other);
  Weights& operator*=(double s);
  bool operator==(const Weights& other) const;

  // Visits each tensor as a flat span, in declaration order.
  template <typename Fn>
  void for_each(Fn&& fn) {
    fn(adapter_w.reshaped());
    fn(adapter_b.reshaped());
    fn(cls_w.reshaped());
    fn(cls_b.reshaped());
    fn(reg_w.reshaped());
    fn(reg_b.reshaped());
  }
  std::size_t size() const;
  // Flattened view for numerical checks; order matches for_each.
  Eigen::VectorXd flatten() const;
  void assign_flat(const Eigen::VectorXd& flat);
};

struct ModelParams {
  Weights w;
  double dropout_rate = 0.0;

  int num_classes() const { return w.num_classes(); }
  int feature_dim() const { return w.feature_dim(); }

  // Identity adapter, zero heads.
  static ModelParams zeros(int num_classes, int feature_dim, double dropout_rate = 0.0);
  // Identity adapter, heads drawn from N(0, scale^2).
  static ModelParams random(int num_classes, int feature_dim, double dropout_rate, Rng& rng,
                            double scale = 0.01);

  void validate() const;
  bool operator==(const ModelParams& other) const = default;
};

struct GradientSet {
  Weights d;
  double loss = 0.0;

  static GradientSet zeros_like(const ModelParams& params);
  GradientSet& operator+=(const GradientSet& other);
  GradientSet& operator*=(double s);
};

struct Detection {
  std::size_t proposal_index = 0;
  BBox box;                      // refined
  Eigen::VectorXd scores;        // softmax over C foreground classes + background
  std::optional<int> class_id;   // best foreground class when its score clears the threshold

  int best_foreground() const;   // ties toward the lower class index
  double foreground_score() const;
};

inline constexpr double kDetectionThreshold = 0.5;
inline constexpr double kSmoothL1Beta = 1.0;
inline constexpr double kMaxLogScale = 4.0;

// One detection per proposal in proposal order. Without a dropout seed the
// pass is deterministic and dropout is off.
std::vector<Detection> forward(const ModelParams& params, const DetectionSample& sample,
                               std::optional<std::uint64_t> dropout_seed = std::nullopt);

// Decodes (dx, dy, dlogw, dlogh) deltas against a proposal box.
BBox apply_deltas(const BBox& proposal, const Eigen::Vector4d& deltas);

double smooth_l1(double x, double beta = kSmoothL1Beta);

// A supervised instance: box target plus a class distribution over the C
// foreground classes (one-hot or soft).
struct LabelTarget {
  BBox box;
  Eigen::VectorXd class_vector;
};

// Index of the proposal with the highest IoU against `box`, ties to the
// lowest index.
std::size_t match_proposal(const DetectionSample& sample, const BBox& box);

enum class BackgroundTargets {
  kAllUnmatched,  // every proposal without a label is background
  kExplicit,      // only LossOptions::background
  kNone,
};

struct LossOptions {
  double box_weight = 1.0;   // smooth-L1 on corner residuals in units of proposal size
  double giou_weight = 1.0;  // (1 - GIoU)
  double cls_weight = 1.0;   // weighted cross-entropy
  BackgroundTargets background_mode = BackgroundTargets::kAllUnmatched;
  std::vector<std::size_t> background;
};

struct LossParts {
  double box = 0.0;
  double giou = 0.0;
  double cls = 0.0;
};

struct LossResult {
  double loss = 0.0;
  LossParts parts;  // unweighted terms
  GradientSet grads;
};

// Box, GIoU and weighted cross-entropy terms with exact analytic gradients.
// Box terms are averaged over labels; the classification term averages
// weight * CE over labels plus background targets (weight 1).
LossResult detection_loss(const ModelParams& params, const DetectionSample& sample,
                          std::span<const LabelTarget> labels, std::span<const double> weights,
                          const LossOptions& options = {});

// params - gamma * grads. Throws TrainingError on non-finite gradients.
ModelParams sgd_step(const ModelParams& params, const GradientSet& grads, double gamma);

std::string params_to_json(const ModelParams& params);
ModelParams params_from_json(const std::string& text);

}  // namespace sfda
