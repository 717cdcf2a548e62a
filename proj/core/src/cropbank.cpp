// SPDX-License-Identifier: Apache-2.0
#include "sfda/cropbank.hpp"

#include <algorithm>
#include <cmath>

#include "sfda/errors.hpp"

namespace sfda {
namespace {

std::size_t index_of(Subset s) { return s == Subset::kSourceSimilar ? 0 : 1; }

// The buffers a partner of class k is drawn from, in draw order.
std::vector<const std::deque<CropEntry>*> candidate_buffers(const Cropbank& bank, int k,
                                                            Subset preference,
                                                            bool similar_draws_both) {
  const auto& similar = bank.buffer(Subset::kSourceSimilar, k);
  const auto& dissimilar = bank.buffer(Subset::kSourceDissimilar, k);
  if (preference == Subset::kSourceSimilar) {
    if (similar_draws_both) return {&similar, &dissimilar};
    return {&similar};
  }
  if (!dissimilar.empty()) return {&dissimilar};
  return {&similar};
}

}  // namespace

Cropbank::Cropbank(int num_classes, std::size_t capacity)
    : num_classes_(num_classes), capacity_(capacity) {
  if (num_classes < 1) throw ConfigError("cropbank: num_classes must be >= 1");
  if (capacity < 1) throw ConfigError("cropbank: capacity must be >= 1");
  for (auto& per_subset : buffers_) per_subset.resize(static_cast<std::size_t>(num_classes));
}

std::deque<CropEntry>& Cropbank::slot(Subset subset, int class_id) {
  if (class_id < 0 || class_id >= num_classes_) throw IndexError("cropbank: class id out of range");
  return buffers_[index_of(subset)][static_cast<std::size_t>(class_id)];
}

const std::deque<CropEntry>& Cropbank::buffer(Subset subset, int class_id) const {
  if (class_id < 0 || class_id >= num_classes_) throw IndexError("cropbank: class id out of range");
  return buffers_[index_of(subset)][static_cast<std::size_t>(class_id)];
}

void Cropbank::push(Subset subset, int class_id, CropEntry entry) {
  if (entry.class_vector.size() != num_classes_)
    throw DimensionError("cropbank: class vector length must equal num_classes");
  auto& buf = slot(subset, class_id);
  buf.push_back(std::move(entry));
  while (buf.size() > capacity_) buf.pop_front();
}

std::size_t Cropbank::total_size() const {
  std::size_t n = 0;
  for (const auto& per_subset : buffers_)
    for (const auto& buf : per_subset) n += buf.size();
  return n;
}

void AugmentPolicy::validate() const {
  if (!(p_aug >= 0.0 && p_aug <= 1.0)) throw ConfigError("augment policy: p_aug must be in [0, 1]");
  if (!(beta_mix > 0.0 && beta_mix <= 1.0))
    throw ConfigError("augment policy: beta_mix must be in (0, 1]");
}

Eigen::VectorXd pairing_weights(const RelationMatrix& r, int base_class, bool is_majority) {
  if (base_class < 0 || base_class >= r.num_classes())
    throw IndexError("pairing_weights: class id out of range");
  if (is_majority) {
    Eigen::VectorXd col = r.matrix().col(base_class);
    col[base_class] = 0.0;
    return col;
  }
  return r.matrix().row(base_class).transpose();
}

std::optional<CropEntry> sample_pair(const RelationMatrix& r, int base_class, bool is_majority,
                                     const Cropbank& bank, Subset preference, Rng& rng,
                                     bool similar_draws_both) {
  if (bank.num_classes() != r.num_classes())
    throw DimensionError("sample_pair: bank and relation matrix disagree on class count");
  const Eigen::VectorXd base_weights = pairing_weights(r, base_class, is_majority);
  const int n = r.num_classes();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  std::vector<std::vector<const std::deque<CropEntry>*>> sources(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    sources[k] = candidate_buffers(bank, k, preference, similar_draws_both);
    std::size_t available = 0;
    for (const auto* buf : sources[k]) available += buf->size();
    if (available > 0) w[k] = std::max(0.0, base_weights[k]);
  }
  const double total = w.sum();
  if (!(total > 0.0)) return std::nullopt;

  const double u = uniform01(rng) * total;
  int chosen = -1;
  double cum = 0.0;
  for (int k = 0; k < n; ++k) {
    if (w[k] <= 0.0) continue;
    chosen = k;
    cum += w[k];
    if (u < cum) break;
  }

  std::size_t count = 0;
  for (const auto* buf : sources[chosen]) count += buf->size();
  auto pick = std::min(count - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(count)));
  for (const auto* buf : sources[chosen]) {
    if (pick < buf->size()) return (*buf)[pick];
    pick -= buf->size();
  }
  return std::nullopt;
}

CropEntry mixup(const CropEntry& base, const CropEntry& pair, double beta_mix) {
  if (base.feature.size() != pair.feature.size() ||
      base.class_vector.size() != pair.class_vector.size())
    throw DimensionError("mixup: crop dimensions differ");
  CropEntry out;
  out.feature = beta_mix * base.feature + (1.0 - beta_mix) * pair.feature;
  out.class_vector = beta_mix * base.class_vector + (1.0 - beta_mix) * pair.class_vector;
  out.width = base.width;
  out.height = base.height;
  return out;
}

LabeledSample augment_sample(LabeledSample input, const ClassSplit& split, const RelationMatrix& r,
                             const Cropbank& bank, const AugmentPolicy& policy, Subset subset,
                             Rng& rng) {
  policy.validate();
  for (PseudoLabel& label : input.labels) {
    const int c = label.class_id();
    const bool majority = split.is_majority(c);
    if (subset == Subset::kSourceDissimilar && !majority && policy.protect_dissimilar_minority)
      continue;
    if (!(uniform01(rng) < policy.p_aug)) continue;
    const auto pair = sample_pair(r, c, majority, bank, subset, rng, policy.similar_draws_both);
    if (!pair) continue;
    Proposal& prop = input.sample.proposals.at(label.proposal_index);
    const CropEntry base{prop.feature, label.class_vector, prop.box.width(), prop.box.height()};
    CropEntry mixed = mixup(base, *pair, policy.beta_mix);
    prop.feature = std::move(mixed.feature);
    label.class_vector = std::move(mixed.class_vector);
    label.augmented = true;
  }
  return input;
}

}  // namespace sfda
