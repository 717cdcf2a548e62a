// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "sfda/detector.hpp"
#include "sfda/rng.hpp"
#include "sfda/subset.hpp"
#include "sfda/world.hpp"

namespace sfda {

using PassSet = std::vector<std::vector<Detection>>;

// M forward passes with independent dropout masks. Throws ConfigError for M < 2.
PassSet mc_passes(const ModelParams& params, const DetectionSample& sample, int passes, Rng& rng);

// (1 / (M N)) sum_j sum_m |b_j^m - mean_m b_j^m|^2 over refined box corners.
double box_variance(const PassSet& passes);
// Same estimator over score vectors.
double cls_variance(const PassSet& passes);

struct VarianceRecord {
  int sample_id = 0;
  double v_box = 0.0;
  double v_cls = 0.0;
  double v = 0.0;
  int rank = 0;        // 1 = smallest variance
  double level = 0.0;  // rank / N
  Subset subset = Subset::kSourceDissimilar;
};

struct VarianceReport {
  std::vector<VarianceRecord> records;  // in input order

  void write_csv(std::ostream& os) const;
};

struct Partition {
  std::vector<int> similar;     // sample ids
  std::vector<int> dissimilar;
  VarianceReport report;

  Subset subset_of(int sample_id) const;
};

// Ranks ascending by v (ties by sample id) and tags level >= sigma as
// source-similar. Throws ConfigError unless sigma is in (0, 1) and N >= 2.
Partition rank_partition(std::span<const int> sample_ids, std::span<const double> v_box,
                         std::span<const double> v_cls, double sigma);

// MC-dropout variance of `params` on every sample, then rank_partition.
// Per-sample dropout streams derive from `seed` and the sample id.
Partition partition(std::span<const DetectionSample> data, const ModelParams& params, int passes,
                    double sigma, std::uint64_t seed);

}  // namespace sfda
