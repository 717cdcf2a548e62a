// SPDX-License-Identifier: Apache-2.0
#include "sfda/teacher.hpp"

#include <cmath>

#include "sfda/errors.hpp"

namespace sfda {

int PseudoLabel::class_id() const {
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < class_vector.size(); ++k)
    if (class_vector[k] > class_vector[best]) best = k;
  return static_cast<int>(best);
}

void TeacherState::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("teacher state: alpha must be in [0, 1]");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("teacher state: tau must be in (0, 1]");
  if (!teacher.w.same_shape(student.w)) throw DimensionError("teacher state: shape mismatch");
}

std::vector<PseudoLabel> pseudo_label(std::span<const Detection> teacher_dets, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("pseudo_label: tau must be in (0, 1]");
  std::vector<PseudoLabel> out;
  for (const Detection& d : teacher_dets) {
    const int c = d.best_foreground();
    const double score = d.scores[c];
    if (score < tau) continue;
    PseudoLabel label;
    label.proposal_index = d.proposal_index;
    label.box = d.box;
    label.class_vector = Eigen::VectorXd::Zero(d.scores.size() - 1);
    label.class_vector[c] = 1.0;
    label.confidence = score;
    out.push_back(std::move(label));
  }
  return out;
}

std::vector<PseudoLabel> pseudo_label(const ModelParams& teacher, const DetectionSample& sample,
                                      double tau) {
  const auto dets = forward(teacher, sample);
  return pseudo_label(dets, tau);
}

std::vector<std::size_t> background_targets(std::span<const Detection> teacher_dets, double bar) {
  std::vector<std::size_t> out;
  for (const Detection& d : teacher_dets)
    if (d.foreground_score() < bar) out.push_back(d.proposal_index);
  return out;
}

ModelParams ema_update(const ModelParams& teacher, const ModelParams& student, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("ema_update: alpha must be in [0, 1]");
  if (!teacher.w.same_shape(student.w)) throw DimensionError("ema_update: shape mismatch");
  ModelParams out = teacher;
  if (alpha == 1.0) return out;
  if (alpha == 0.0) {
    out.w = student.w;
    return out;
  }
  Weights blended = teacher.w;
  blended *= alpha;
  Weights s = student.w;
  s *= 1.0 - alpha;
  blended += s;
  out.w = std::move(blended);
  return out;
}

std::vector<LabelTarget> to_targets(std::span<const PseudoLabel> labels) {
  std::vector<LabelTarget> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back({l.box, l.class_vector});
  return out;
}

TeacherState student_step(const TeacherState& state, const DetectionSample& sample,
                          std::span<const PseudoLabel> pseudo, std::span<const double> weights,
                          double gamma, std::span<const std::size_t> background) {
  state.validate();
  LossOptions options;
  options.background_mode = BackgroundTargets::kExplicit;
  options.background.assign(background.begin(), background.end());
  const auto targets = to_targets(pseudo);
  const LossResult loss = detection_loss(state.student, sample, targets, weights, options);
  TeacherState next = state;
  next.student = sgd_step(state.student, loss.grads, gamma);
  return next;
}

}  // namespace sfda
