// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sfda/rcm.hpp"

namespace sfda {

inline constexpr double kDiagonalFloor = 1e-6;

// sqrt(1 - R(c,c)) for a correct prediction, sqrt(R(c,x) / R(c,c))
// otherwise. R(c,c) is clamped below at kDiagonalFloor in the ratio.
double instance_weight(const RelationMatrix& r, int c, int x);

// Diagonal-only variant: sqrt(1 - R(c,c)) whatever the prediction.
double class_level_weight(const RelationMatrix& r, int c);

// Scales foreground weights to mean 1, the constant background weight.
// Throws DegenerateBatchError when empty or when the mean is not positive.
std::vector<double> normalize_foreground(std::span<const double> weights);

// (w + lambda_l) / (1 + lambda_l), elementwise.
std::vector<double> regularize(std::span<const double> weights, double lambda_l);

// (1/N) sum_i w_i * CE(target_i, scores_i), scores already normalized.
double weighted_ce(std::span<const Eigen::VectorXd> scores, std::span<const int> targets,
                   std::span<const double> weights);

enum class WeightStrategy {
  kUniform,
  kSemanticAware,
  kClassLevel,
};

struct WeightBatch {
  std::vector<double> foreground;
  double background = 1.0;
  double lambda_l = 0.0;
  bool fell_back = false;  // degenerate raw weights replaced by uniform ones
};

// Full weighting pipeline for a batch of (reference, predicted) foreground
// pairs: raw weights, mean normalization, regularization.
WeightBatch semantic_weights(const RelationMatrix& r, std::span<const ClassPair> pairs,
                             double lambda_l, WeightStrategy strategy = WeightStrategy::kSemanticAware);

}  // namespace sfda
