// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "sfda/detector.hpp"
#include "sfda/rng.hpp"
#include "sfda/world.hpp"

namespace fixture {

// Small world spec with well separated classes.
inline sfda::DomainSpec small_spec(int num_classes = 3, int feature_dim = 6, int num_samples = 20) {
  sfda::WorldConfig w;
  w.num_classes = num_classes;
  w.feature_dim = feature_dim;
  w.source_frequency.assign(static_cast<std::size_t>(num_classes), 1.0 / num_classes);
  w.confusion_pairs.clear();
  w.num_source = num_samples;
  return sfda::make_source_spec(w);
}

inline sfda::DetectionSample random_sample(int num_classes, int feature_dim, std::uint64_t seed) {
  auto spec = small_spec(num_classes, feature_dim, 1);
  auto data = sfda::generate_domain(spec, seed);
  return data.front();
}

inline sfda::ModelParams random_params(int num_classes, int feature_dim, std::uint64_t seed,
                                       double scale = 0.3, double dropout = 0.0) {
  sfda::Rng rng = sfda::make_rng(seed, "test.params");
  return sfda::ModelParams::random(num_classes, feature_dim, dropout, rng, scale);
}

}  // namespace fixture
