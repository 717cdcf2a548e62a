// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "sfda/rcm.hpp"
#include "sfda/rng.hpp"
#include "sfda/subset.hpp"
#include "sfda/teacher.hpp"
#include "sfda/world.hpp"

namespace sfda {

struct CropEntry {
  Feature feature;
  Eigen::VectorXd class_vector;  // length C, on the simplex
  double width = 0.0;
  double height = 0.0;
};

// Per (subset, class) FIFO buffers of instance crops.
class Cropbank {
 public:
  Cropbank(int num_classes, std::size_t capacity = 64);

  int num_classes() const { return num_classes_; }
  std::size_t capacity() const { return capacity_; }

  // Appends; evicts the oldest entry when the buffer is full.
  void push(Subset subset, int class_id, CropEntry entry);

  const std::deque<CropEntry>& buffer(Subset subset, int class_id) const;
  std::size_t total_size() const;

 private:
  std::deque<CropEntry>& slot(Subset subset, int class_id);

  int num_classes_;
  std::size_t capacity_;
  std::array<std::vector<std::deque<CropEntry>>, 2> buffers_;
};

struct AugmentPolicy {
  double p_aug = 0.5;
  double beta_mix = 0.7;
  // Source-similar samples draw partners from both subsets' buffers.
  bool similar_draws_both = true;
  // Minority base instances in source-dissimilar samples are left intact.
  bool protect_dissimilar_minority = true;

  void validate() const;
};

// Partner-class weights: column R(:,c) with the self entry zeroed for a
// majority base, row R(c,:) unmasked for a minority base.
Eigen::VectorXd pairing_weights(const RelationMatrix& r, int base_class, bool is_majority);

// Draws a MixUp partner. The partner class is sampled from pairing_weights
// restricted to classes with an available crop; the crop is then uniform
// over the candidate buffer. Source-dissimilar preference uses the
// dissimilar buffer and falls back to the similar one only when it is
// empty. Returns nullopt when no candidate exists.
std::optional<CropEntry> sample_pair(const RelationMatrix& r, int base_class, bool is_majority,
                                     const Cropbank& bank, Subset preference, Rng& rng,
                                     bool similar_draws_both = true);

// beta * base + (1 - beta) * pair on features and class vectors; keeps the
// base box size.
CropEntry mixup(const CropEntry& base, const CropEntry& pair, double beta_mix);

struct LabeledSample {
  DetectionSample sample;
  std::vector<PseudoLabel> labels;
};

// Relation-guided MixUp over the labeled instances of one sample. Augmented
// instances get blended proposal features and soft class vectors.
LabeledSample augment_sample(LabeledSample input, const ClassSplit& split, const RelationMatrix& r,
                             const Cropbank& bank, const AugmentPolicy& policy, Subset subset,
                             Rng& rng);

}  // namespace sfda
