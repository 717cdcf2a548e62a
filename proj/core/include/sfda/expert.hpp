// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sfda/detector.hpp"
#include "sfda/rng.hpp"
#include "sfda/world.hpp"

namespace sfda {

// Fidelity of the simulated frozen expert.
struct ExpertSpec {
  double miss_rate = 0.1;
  double flip_rate = 0.05;
  double box_jitter = 0.05;       // relative to box size
  double score_confidence = 1.0;  // scales each expert label's class-loss weight

  void validate() const;
};

struct ExpertLabel {
  BBox box;
  int class_id = 0;
  Eigen::VectorXd class_vector;  // one-hot, length C
  double confidence = 1.0;
};

// Perturbed ground truth: objects dropped with miss_rate, classes flipped to
// a uniformly chosen other class with flip_rate, corners jittered.
std::vector<ExpertLabel> expert_predict(const ExpertSpec& spec, const DetectionSample& sample,
                                        int num_classes, Rng& rng);

// lambda_cls * weighted CE + lambda_reg * smooth-L1 on proposals matched to
// the expert boxes. `sal_weights` aligns with `labels`; empty means 1.
LossResult expert_loss(const ModelParams& student, const DetectionSample& sample,
                       std::span<const ExpertLabel> labels, double lambda_cls, double lambda_reg,
                       std::span<const double> sal_weights = {});

}  // namespace sfda
