// SPDX-License-Identifier: Apache-2.0
#include "sfda/sal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sfda/errors.hpp"

namespace sfda {
namespace {

void check_class(const RelationMatrix& r, int c) {
  if (c < 0 || c >= r.num_classes()) throw IndexError("sal: class id out of range");
}

}  // namespace

double instance_weight(const RelationMatrix& r, int c, int x) {
  check_class(r, c);
  check_class(r, x);
  if (c == x) return std::sqrt(std::max(0.0, 1.0 - r(c, c)));
  const double denom = std::max(r(c, c), kDiagonalFloor);
  return std::sqrt(std::max(0.0, r(c, x)) / denom);
}

double class_level_weight(const RelationMatrix& r, int c) {
  check_class(r, c);
  return std::sqrt(std::max(0.0, 1.0 - r(c, c)));
}

std::vector<double> normalize_foreground(std::span<const double> weights) {
  if (weights.empty()) throw DegenerateBatchError("normalize_foreground: empty batch");
  const double mean =
      std::accumulate(weights.begin(), weights.end(), 0.0) / static_cast<double>(weights.size());
  if (!(mean > 0.0) || !std::isfinite(mean))
    throw DegenerateBatchError("normalize_foreground: mean weight is not positive");
  std::vector<double> out(weights.begin(), weights.end());
  for (double& w : out) w /= mean;
  return out;
}

std::vector<double> regularize(std::span<const double> weights, double lambda_l) {
  if (!(lambda_l >= 0.0)) throw ConfigError("regularize: lambda_l must be >= 0");
  std::vector<double> out(weights.begin(), weights.end());
  if (lambda_l == 0.0) return out;
  for (double& w : out) w = (w + lambda_l) / (1.0 + lambda_l);
  return out;
}

double weighted_ce(std::span<const Eigen::VectorXd> scores, std::span<const int> targets,
                   std::span<const double> weights) {
  if (scores.size() != targets.size() || scores.size() != weights.size())
    throw DimensionError("weighted_ce: length mismatch");
  if (scores.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (targets[i] < 0 || targets[i] >= scores[i].size())
      throw IndexError("weighted_ce: target out of range");
    total += -weights[i] * std::log(scores[i][targets[i]]);
  }
  return total / static_cast<double>(scores.size());
}

WeightBatch semantic_weights(const RelationMatrix& r, std::span<const ClassPair> pairs,
                             double lambda_l, WeightStrategy strategy) {
  WeightBatch batch;
  batch.lambda_l = lambda_l;
  if (pairs.empty()) return batch;
  if (strategy == WeightStrategy::kUniform) {
    batch.foreground.assign(pairs.size(), 1.0);
    return batch;
  }
  std::vector<double> raw;
  raw.reserve(pairs.size());
  for (const auto& [c, x] : pairs)
    raw.push_back(strategy == WeightStrategy::kClassLevel ? class_level_weight(r, c)
                                                          : instance_weight(r, c, x));
  std::vector<double> normalized;
  try {
    normalized = normalize_foreground(raw);
  } catch (const DegenerateBatchError&) {
    normalized.assign(pairs.size(), 1.0);
    batch.fell_back = true;
  }
  batch.foreground = regularize(normalized, lambda_l);
  return batch;
}

}  // namespace sfda
