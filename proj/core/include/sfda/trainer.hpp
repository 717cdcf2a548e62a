// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sfda/cropbank.hpp"
#include "sfda/detector.hpp"
#include "sfda/discriminator.hpp"
#include "sfda/eval.hpp"
#include "sfda/expert.hpp"
#include "sfda/rcm.hpp"
#include "sfda/sal.hpp"
#include "sfda/variance.hpp"
#include "sfda/world.hpp"

namespace sfda {

// Every hyperparameter of a run. Defaults are the documented ones; the JSON
// form lists every field.
struct AdaptationConfig {
  // mean teacher
  double tau = 0.5;
  double alpha = 0.999;
  double gamma = 0.05;
  double background_bar = 0.1;
  double strong_noise = 1.5;  // std of Gaussian feature noise on the student view
  // partition
  double sigma = 0.5;
  int mc_passes = 10;
  double dropout_rate = 0.3;
  // relation matrix, augmentation, weighting
  double beta_ema = 0.99;
  double beta_mix = 0.7;
  double p_aug = 0.5;
  int bank_capacity = 64;
  double lambda_l = 0.5;
  WeightStrategy weight_strategy = WeightStrategy::kSemanticAware;
  // objective
  double lambda_u = 1.0;
  double lambda_d0 = 0.1;
  double lambda_cls = 1.0;
  double lambda_reg = 1.0;
  bool decay_lambda_d = true;
  bool decay_lambda_u = false;
  // schedule
  int epochs = 50;
  int batch_size = 16;
  int pretrain_epochs = 30;
  double pretrain_gamma = 0.05;
  std::uint64_t seed = 0;
  // ablation switches
  bool enable_sa = true;
  bool enable_sal = true;
  bool enable_expert = true;
  bool enable_dis = true;

  ExpertSpec expert;
  WorldConfig world;

  // Throws ConfigError.
  void validate() const;

  std::string to_json() const;
  // Missing fields keep their defaults; unknown fields are a ConfigError.
  static AdaptationConfig from_json(const std::string& text);
};

// Source data behind a handle that is sealed once pretraining ends. Reading a
// sealed handle throws SourceAccessError.
class SourceDataset {
 public:
  explicit SourceDataset(Dataset data);

  std::span<const DetectionSample> samples() const;
  void seal();
  bool sealed() const { return sealed_; }

 private:
  Dataset data_;
  bool sealed_ = false;
};

// Supervised training on the source data, then seals the handle.
ModelParams pretrain_source(const AdaptationConfig& config, SourceDataset& source);

// lambda_d0 * (1 - epoch / total_epochs), clamped to [0, lambda_d0].
double decay_lambda_d(double lambda_d0, int epoch, int total_epochs);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double student_map = 0.0;
  double teacher_map = 0.0;
  std::vector<double> teacher_class_ap;
  double loss_stu = 0.0;
  double loss_expert = 0.0;
  double loss_dis = 0.0;
  double lambda_d = 0.0;
  Eigen::MatrixXd rcm;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  void write_csv(std::ostream& os) const;
};

struct AdaptResult {
  ModelParams teacher;
  ModelParams student;
  TrainHistory history;
  RelationMatrix rcm{1};
  Partition partition;
  DiscriminatorParams discriminator;
};

using EpochObserver = std::function<void(const EpochRecord&, const ModelParams& teacher,
                                         const ModelParams& student, const RelationMatrix&)>;

// Source-free adaptation on unlabeled `target` data; `eval` (with ground
// truth) is only used for the per-epoch history. Throws TrainingError on a
// non-finite loss.
AdaptResult adapt(const ModelParams& source_params, std::span<const DetectionSample> target,
                  std::span<const DetectionSample> eval, const AdaptationConfig& config,
                  const EpochObserver& observer = {});

struct AblationArm {
  std::string name;
  AdaptationConfig config;
};

// Base (discriminator only), +SA, +SAL and Full, sharing every other field
// of `base`.
std::vector<AblationArm> ablation_arms(const AdaptationConfig& base);

// Plain mean-teacher self-training: every optional component off.
AdaptationConfig plain_mean_teacher(AdaptationConfig config);

struct ExperimentData {
  DomainSpec source_spec;
  DomainSpec target_spec;
  SourceDataset source;
  Dataset target;
  Dataset eval;
};

// Source, unlabeled target and held-out target sets for a config. Dataset
// seeds derive from config.seed.
ExperimentData make_experiment_data(const AdaptationConfig& config);

}  // namespace sfda
