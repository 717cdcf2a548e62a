// SPDX-License-Identifier: Apache-2.0
#include "sfda/expert.hpp"

#include <algorithm>
#include <array>

#include "sfda/errors.hpp"

namespace sfda {

void ExpertSpec::validate() const {
  if (!(miss_rate >= 0.0 && miss_rate <= 1.0)) throw ConfigError("expert: miss_rate must be in [0, 1]");
  if (!(flip_rate >= 0.0 && flip_rate <= 1.0)) throw ConfigError("expert: flip_rate must be in [0, 1]");
  if (!(box_jitter >= 0.0 && box_jitter < 0.5)) throw ConfigError("expert: box_jitter must be in [0, 0.5)");
  if (!(score_confidence > 0.0 && score_confidence <= 1.0))
    throw ConfigError("expert: score_confidence must be in (0, 1]");
}

std::vector<ExpertLabel> expert_predict(const ExpertSpec& spec, const DetectionSample& sample,
                                        int num_classes, Rng& rng) {
  spec.validate();
  std::vector<ExpertLabel> out;
  for (const ObjectInstance& obj : sample.objects) {
    // Fixed draw count per object keeps streams aligned whatever the outcome.
    const double u_miss = uniform01(rng);
    const double u_flip = uniform01(rng);
    const double u_class = uniform01(rng);
    std::array<double, 4> u{};
    for (double& v : u) v = 2.0 * uniform01(rng) - 1.0;
    if (u_miss < spec.miss_rate) continue;

    ExpertLabel label;
    label.class_id = obj.class_id;
    if (num_classes > 1 && u_flip < spec.flip_rate) {
      int other = std::min(num_classes - 2, static_cast<int>(u_class * (num_classes - 1)));
      if (other >= obj.class_id) ++other;
      label.class_id = other;
    }
    const double sx = spec.box_jitter * obj.box.width();
    const double sy = spec.box_jitter * obj.box.height();
    label.box = {obj.box.x1 + u[0] * sx, obj.box.y1 + u[1] * sy, obj.box.x2 + u[2] * sx,
                 obj.box.y2 + u[3] * sy};
    label.class_vector = Eigen::VectorXd::Zero(num_classes);
    label.class_vector[label.class_id] = 1.0;
    label.confidence = spec.score_confidence;
    out.push_back(std::move(label));
  }
  return out;
}

LossResult expert_loss(const ModelParams& student, const DetectionSample& sample,
                       std::span<const ExpertLabel> labels, double lambda_cls, double lambda_reg,
                       std::span<const double> sal_weights) {
  if (!sal_weights.empty() && sal_weights.size() != labels.size())
    throw DimensionError("expert_loss: weights and labels differ in length");
  std::vector<LabelTarget> targets;
  std::vector<double> weights;
  targets.reserve(labels.size());
  weights.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    targets.push_back({labels[i].box, labels[i].class_vector});
    weights.push_back((sal_weights.empty() ? 1.0 : sal_weights[i]) * labels[i].confidence);
  }
  LossOptions options;
  options.box_weight = lambda_reg;
  options.giou_weight = 0.0;
  options.cls_weight = lambda_cls;
  options.background_mode = BackgroundTargets::kNone;
  return detection_loss(student, sample, targets, weights, options);
}

}  // namespace sfda
