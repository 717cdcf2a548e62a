// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sfda/detector.hpp"

namespace sfda {

// A confident teacher detection promoted to a training label. The class
// vector is one-hot when created; relation-guided MixUp may soften it.
struct PseudoLabel {
  std::size_t proposal_index = 0;
  BBox box;
  Eigen::VectorXd class_vector;  // length C
  double confidence = 0.0;
  bool augmented = false;

  int class_id() const;  // argmax of class_vector, ties to the lower index
};

struct TeacherState {
  ModelParams teacher;
  ModelParams student;
  double alpha = 0.999;
  double tau = 0.8;

  void validate() const;
};

// Proposals whose best foreground score reaches tau. Throws ConfigError when
// tau is outside (0, 1].
std::vector<PseudoLabel> pseudo_label(const ModelParams& teacher, const DetectionSample& sample,
                                      double tau);
std::vector<PseudoLabel> pseudo_label(std::span<const Detection> teacher_dets, double tau);

// Proposals the teacher considers background: best foreground score below `bar`.
std::vector<std::size_t> background_targets(std::span<const Detection> teacher_dets,
                                            double bar = 0.1);

// alpha * teacher + (1 - alpha) * student, elementwise.
ModelParams ema_update(const ModelParams& teacher, const ModelParams& student, double alpha);

std::vector<LabelTarget> to_targets(std::span<const PseudoLabel> labels);

// One SGD step of the student on the pseudo-label loss. The teacher is
// untouched. `background` lists proposals supervised as background.
TeacherState student_step(const TeacherState& state, const DetectionSample& sample,
                          std::span<const PseudoLabel> pseudo, std::span<const double> weights,
                          double gamma, std::span<const std::size_t> background = {});

}  // namespace sfda
