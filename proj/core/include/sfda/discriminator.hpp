// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sfda/subset.hpp"

namespace sfda {

// Linear logistic probe predicting the subset of a feature vector.
struct DiscriminatorParams {
  Eigen::VectorXd w;
  double b = 0.0;

  static DiscriminatorParams zeros(int feature_dim);
};

struct DiscriminatorLoss {
  double loss = 0.0;
  DiscriminatorParams grads;
  // -dL/dh per feature: the gradient-reversal signal for the feature producer.
  std::vector<Eigen::VectorXd> feature_grads_reversed;
  bool skipped = false;  // batch held a single subset
};

// Mean logistic loss with target 1 for source-similar features.
DiscriminatorLoss discriminator_loss(const DiscriminatorParams& disc,
                                     std::span<const Eigen::VectorXd> features,
                                     std::span<const Subset> tags);

double probe_accuracy(const DiscriminatorParams& disc, std::span<const Eigen::VectorXd> features,
                      std::span<const Subset> tags);

}  // namespace sfda
