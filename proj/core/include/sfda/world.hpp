// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sfda/box.hpp"

namespace sfda {

using Feature = Eigen::VectorXd;

struct ObjectInstance {
  BBox box;
  int class_id = 0;
  Feature feature;
};

// A candidate region with its feature vector; the detector classifies and
// refines each proposal independently.
struct Proposal {
  BBox box;
  Feature feature;
};

// One synthetic "image". Proposal order is fixed at generation time and is
// the correspondence key across stochastic forward passes.
struct DetectionSample {
  int id = 0;
  std::vector<Proposal> proposals;
  std::vector<ObjectInstance> objects;  // ground truth, hidden during adaptation
};

using Dataset = std::vector<DetectionSample>;

// Generative description of one domain. Index num_classes of `means` and
// `cov_scales` is the background distribution.
struct DomainSpec {
  int num_classes = 5;
  int feature_dim = 16;
  std::vector<Feature> means;
  std::vector<double> cov_scales;
  std::vector<double> frequency;  // per foreground class, sums to 1
  double background_rate = 4.0;   // Poisson mean of background proposals per sample
  double box_jitter = 0.1;        // proposal corner noise, relative to box size
  int num_samples = 500;
  int max_objects = 3;            // objects per sample ~ U{1..max_objects}
  double image_size = 64.0;
  double min_box = 8.0;
  double max_box = 24.0;
  // The last min(4, D) feature dimensions of an object proposal carry its
  // normalized corner jitter times this gain, so box refinement is learnable.
  double geometry_gain = 1.0;
  double iou_floor = 0.5;

  // Throws ConfigError.
  void validate() const;

  bool operator==(const DomainSpec&) const;
};

// Compact recipe for a source/target world pair.
struct WorldConfig {
  int num_classes = 5;
  int feature_dim = 16;
  std::vector<double> source_frequency = {0.40, 0.30, 0.15, 0.10, 0.05};
  std::vector<double> target_frequency;  // empty: same as source
  double class_separation = 3.0;         // norm of each class mean
  double cov_scale = 1.0;
  double background_cov_scale = 1.0;
  double background_rate = 4.0;
  double box_jitter = 0.1;
  int max_objects = 3;
  double geometry_gain = 1.0;
  double shift_magnitude = 1.0;          // norm of the common target mean shift
  double target_cov_scale = 1.0;         // multiplies every target covariance scale
  // Target-domain confusion: class `from` moves its mean toward class `to` by
  // `confusion_pull` of the distance between them.
  std::vector<std::pair<int, int>> confusion_pairs = {{4, 0}, {3, 1}};
  double confusion_pull = 0.3;
  int num_source = 500;
  int num_target = 500;
  int num_eval = 500;
  std::uint64_t world_seed = 7;

  void validate() const;
};

DomainSpec make_source_spec(const WorldConfig& world);
DomainSpec make_target_spec(const WorldConfig& world);

// Draws spec.num_samples samples. A pure function of (spec, seed).
Dataset generate_domain(const DomainSpec& spec, std::uint64_t seed);

// Returns `base` with every mean (background included) displaced by
// `mean_shift`, and the class frequency replaced when an override is given.
DomainSpec shift_domain(const DomainSpec& base, const Feature& mean_shift,
                        const std::optional<std::vector<double>>& freq_override = std::nullopt);

std::string dataset_to_json(const DomainSpec& spec, const Dataset& data);
std::pair<DomainSpec, Dataset> dataset_from_json(const std::string& text);

}  // namespace sfda
