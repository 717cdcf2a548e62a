// SPDX-License-Identifier: Apache-2.0
#include "sfda/discriminator.hpp"

#include <algorithm>
#include <cmath>

#include "sfda/errors.hpp"

namespace sfda {
namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

DiscriminatorParams DiscriminatorParams::zeros(int feature_dim) {
  return {Eigen::VectorXd::Zero(feature_dim), 0.0};
}

DiscriminatorLoss discriminator_loss(const DiscriminatorParams& disc,
                                     std::span<const Eigen::VectorXd> features,
                                     std::span<const Subset> tags) {
  if (features.size() != tags.size()) throw DimensionError("discriminator: length mismatch");
  DiscriminatorLoss out;
  out.grads = DiscriminatorParams::zeros(static_cast<int>(disc.w.size()));
  out.feature_grads_reversed.assign(features.size(), Eigen::VectorXd::Zero(disc.w.size()));
  const bool has_similar = std::any_of(tags.begin(), tags.end(),
                                       [](Subset s) { return s == Subset::kSourceSimilar; });
  const bool has_dissimilar = std::any_of(tags.begin(), tags.end(),
                                          [](Subset s) { return s == Subset::kSourceDissimilar; });
  if (!has_similar || !has_dissimilar) {
    out.skipped = true;
    return out;
  }
  const double inv_n = 1.0 / static_cast<double>(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != disc.w.size()) throw DimensionError("discriminator: feature dimension");
    const double z = disc.w.dot(features[i]) + disc.b;
    const double y = tags[i] == Subset::kSourceSimilar ? 1.0 : 0.0;
    // -[y log s(z) + (1 - y) log(1 - s(z))]
    out.loss += inv_n * (y > 0.5 ? softplus(-z) : softplus(z));
    const double dz = inv_n * (sigmoid(z) - y);
    out.grads.w += dz * features[i];
    out.grads.b += dz;
    out.feature_grads_reversed[i] = -dz * disc.w;
  }
  return out;
}

double probe_accuracy(const DiscriminatorParams& disc, std::span<const Eigen::VectorXd> features,
                      std::span<const Subset> tags) {
  if (features.size() != tags.size()) throw DimensionError("discriminator: length mismatch");
  if (features.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const bool predicted_similar = disc.w.dot(features[i]) + disc.b > 0.0;
    if (predicted_similar == (tags[i] == Subset::kSourceSimilar)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(features.size());
}

}  // namespace sfda
