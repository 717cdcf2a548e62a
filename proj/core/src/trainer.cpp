// SPDX-License-Identifier: Apache-2.0
#include "sfda/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <unordered_map>

#include "sfda/errors.hpp"
#include "sfda/teacher.hpp"

namespace sfda {

SourceDataset::SourceDataset(Dataset data) : data_(std::move(data)) {}

std::span<const DetectionSample> SourceDataset::samples() const {
  if (sealed_) throw SourceAccessError("source data is sealed after pretraining");
  return data_;
}

void SourceDataset::seal() {
  sealed_ = true;
  data_.clear();
  data_.shrink_to_fit();
}

namespace {

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<LabelTarget> ground_truth_targets(const DetectionSample& sample, int num_classes) {
  std::vector<LabelTarget> out;
  out.reserve(sample.objects.size());
  for (const auto& obj : sample.objects) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(num_classes);
    v[obj.class_id] = 1.0;
    out.push_back({obj.box, std::move(v)});
  }
  return out;
}

void require_finite(double loss, const char* what) {
  if (!std::isfinite(loss)) throw TrainingError(std::string(what) + ": non-finite loss");
}

DetectionSample with_noise(const DetectionSample& sample, double std_dev, Rng& rng) {
  DetectionSample out = sample;
  if (std_dev <= 0.0) return out;
  std::normal_distribution<double> noise(0.0, std_dev);
  for (auto& p : out.proposals)
    for (Eigen::Index k = 0; k < p.feature.size(); ++k) p.feature[k] += noise(rng);
  return out;
}

// Pairs of (reference class, student prediction) for the labels of a sample.
std::vector<ClassPair> class_pairs(std::span<const PseudoLabel> labels,
                                   std::span<const Detection> student_dets) {
  std::vector<ClassPair> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.emplace_back(l.class_id(), student_dets[l.proposal_index].best_foreground());
  return out;
}

struct BatchItem {
  const DetectionSample* sample = nullptr;
  Subset subset = Subset::kSourceSimilar;
  std::vector<PseudoLabel> pseudo;
  std::vector<std::size_t> background;
  DetectionSample strong;
  LabeledSample labeled;
  std::vector<ExpertLabel> expert;
};

}  // namespace

ModelParams pretrain_source(const AdaptationConfig& config, SourceDataset& source) {
  config.validate();
  const auto samples = source.samples();
  const int c = config.world.num_classes;
  const int d = config.world.feature_dim;
  Rng init = make_rng(config.seed, "pretrain.init");
  ModelParams params = ModelParams::random(c, d, config.dropout_rate, init);

  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    Rng order_rng = make_rng(config.seed, "pretrain.order", static_cast<std::uint64_t>(epoch));
    const auto order = shuffled(samples.size(), order_rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      GradientSet grads = GradientSet::zeros_like(params);
      for (std::size_t k = start; k < end; ++k) {
        const auto& sample = samples[order[k]];
        const auto targets = ground_truth_targets(sample, c);
        auto res = detection_loss(params, sample, targets, {});
        require_finite(res.loss, "pretrain");
        grads += res.grads;
      }
      grads *= 1.0 / static_cast<double>(end - start);
      params = sgd_step(params, grads, config.pretrain_gamma);
    }
  }
  source.seal();
  return params;
}

double decay_lambda_d(double lambda_d0, int epoch, int total_epochs) {
  if (total_epochs <= 0) return lambda_d0;
  const double t = std::clamp(static_cast<double>(epoch) / total_epochs, 0.0, 1.0);
  return lambda_d0 * (1.0 - t);
}

void TrainHistory::write_csv(std::ostream& os) const {
  const std::size_t classes = epochs.empty() ? 0 : epochs.front().teacher_class_ap.size();
  os << "epoch,student_map,teacher_map";
  for (std::size_t c = 0; c < classes; ++c) os << ",ap_class_" << c;
  os << ",loss_stu,loss_expert,loss_dis,lambda_d\n";
  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << ',' << buf;
  };
  for (const auto& e : epochs) {
    os << e.epoch;
    num(e.student_map);
    num(e.teacher_map);
    for (double ap : e.teacher_class_ap) num(ap);
    num(e.loss_stu);
    num(e.loss_expert);
    num(e.loss_dis);
    num(e.lambda_d);
    os << '\n';
  }
}

AdaptResult adapt(const ModelParams& source_params, std::span<const DetectionSample> target,
                  std::span<const DetectionSample> eval, const AdaptationConfig& config,
                  const EpochObserver& observer) {
  config.validate();
  source_params.validate();
  const int c = source_params.num_classes();
  const int d = source_params.feature_dim();

  AdaptResult out;
  out.teacher = source_params;
  out.student = source_params;
  out.rcm = RelationMatrix(c, config.beta_ema);
  out.discriminator = DiscriminatorParams::zeros(d);
  out.partition = partition(target, source_params, config.mc_passes, config.sigma,
                            derive_seed(config.seed, "dropout"));

  std::unordered_map<int, Subset> subset_of;
  for (int id : out.partition.similar) subset_of[id] = Subset::kSourceSimilar;
  for (int id : out.partition.dissimilar) subset_of[id] = Subset::kSourceDissimilar;

  Cropbank bank(c, static_cast<std::size_t>(config.bank_capacity));
  AugmentPolicy policy;
  policy.p_aug = config.p_aug;
  policy.beta_mix = config.beta_mix;

  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto ep = static_cast<std::uint64_t>(epoch);
    const double lambda_d =
        config.decay_lambda_d ? decay_lambda_d(config.lambda_d0, epoch, config.epochs) : config.lambda_d0;
    const double lambda_u =
        config.decay_lambda_u ? decay_lambda_d(config.lambda_u, epoch, config.epochs) : config.lambda_u;

    Rng order_rng = make_rng(config.seed, "adapt.order", ep);
    const auto order = shuffled(target.size(), order_rng);
    double sum_stu = 0.0, sum_expert = 0.0, sum_dis = 0.0;
    std::size_t dis_batches = 0;

    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      GradientSet grads = GradientSet::zeros_like(out.student);
      const bool sal_ready = out.rcm.ready();
      std::optional<ClassSplit> split;
      if (config.enable_sa && sal_ready) split = majority_minority_split(out.rcm);

      // Gather views, labels and predictions for the whole batch first so the
      // semantic weights are normalized over the batch.
      std::vector<BatchItem> items;
      items.reserve(end - start);
      std::vector<ClassPair> stu_pairs, expert_pairs, rcm_pairs;
      for (std::size_t k = start; k < end; ++k) {
        const DetectionSample& sample = target[order[k]];
        const auto sid = static_cast<std::uint64_t>(sample.id);
        BatchItem item;
        item.sample = &sample;
        item.subset = subset_of.at(sample.id);

        const auto tdets = forward(out.teacher, sample);
        item.pseudo = pseudo_label(tdets, config.tau);
        item.background = background_targets(tdets, config.background_bar);

        Rng noise_rng = make_rng(config.seed, "adapt.noise", ep, sid);
        item.strong = with_noise(sample, config.strong_noise, noise_rng);
        const auto sdets = forward(out.student, item.strong);

        item.labeled = LabeledSample{item.strong, item.pseudo};
        if (split) {
          Rng aug_rng = make_rng(config.seed, "adapt.augment", ep, sid);
          item.labeled = augment_sample(std::move(item.labeled), *split, out.rcm, bank, policy, item.subset, aug_rng);
        }
        const bool augmented = std::any_of(item.labeled.labels.begin(), item.labeled.labels.end(),
                                           [](const auto& l) { return l.augmented; });
        const auto adets = augmented ? forward(out.student, item.labeled.sample) : sdets;
        for (const auto& pair : class_pairs(item.labeled.labels, adets)) stu_pairs.push_back(pair);

        if (config.enable_expert) {
          Rng expert_rng = make_rng(config.seed, "adapt.expert", ep, sid);
          item.expert = expert_predict(config.expert, sample, c, expert_rng);
          for (const auto& l : item.expert)
            expert_pairs.emplace_back(l.class_id, sdets[match_proposal(item.strong, l.box)].best_foreground());
        }
        for (const auto& pair : class_pairs(item.pseudo, sdets)) rcm_pairs.push_back(pair);
        items.push_back(std::move(item));
      }

      const bool weighted = config.enable_sal && sal_ready;
      std::vector<double> stu_weights, expert_weights;
      if (weighted) {
        stu_weights = semantic_weights(out.rcm, stu_pairs, config.lambda_l, config.weight_strategy).foreground;
        expert_weights = semantic_weights(out.rcm, expert_pairs, config.lambda_l, config.weight_strategy).foreground;
      }

      std::vector<Eigen::VectorXd> dis_features, dis_inputs;
      std::vector<Subset> dis_tags;
      std::size_t stu_offset = 0, expert_offset = 0;
      for (const auto& item : items) {
        const std::size_t n_stu = item.labeled.labels.size();
        const std::span<const double> sw =
            weighted ? std::span<const double>(stu_weights).subspan(stu_offset, n_stu) : std::span<const double>();
        stu_offset += n_stu;
        LossOptions stu_options;
        stu_options.background_mode = BackgroundTargets::kExplicit;
        stu_options.background = item.background;
        const auto targets = to_targets(item.labeled.labels);
        auto stu = detection_loss(out.student, item.labeled.sample, targets, sw, stu_options);
        require_finite(stu.loss, "student loss");
        sum_stu += stu.loss;
        if (lambda_u > 0.0) {
          stu.grads *= lambda_u;
          grads += stu.grads;
        }

        if (config.enable_expert) {
          const std::size_t n_ex = item.expert.size();
          const std::span<const double> ew = weighted
                                                 ? std::span<const double>(expert_weights).subspan(expert_offset, n_ex)
                                                 : std::span<const double>();
          expert_offset += n_ex;
          auto ex = expert_loss(out.student, item.strong, item.expert, config.lambda_cls, config.lambda_reg, ew);
          require_finite(ex.loss, "expert loss");
          sum_expert += ex.loss;
          grads += ex.grads;
        }

        if (config.enable_dis) {
          const auto& w = out.student.w;
          for (const auto& p : item.strong.proposals) {
            dis_inputs.push_back(p.feature);
            dis_features.push_back(w.adapter_w * p.feature + w.adapter_b);
            dis_tags.push_back(item.subset);
          }
        }
      }

      if (config.enable_dis && !dis_features.empty()) {
        const auto dl = discriminator_loss(out.discriminator, dis_features, dis_tags);
        if (!dl.skipped) {
          require_finite(dl.loss, "discriminator loss");
          sum_dis += dl.loss;
          ++dis_batches;
          if (lambda_d > 0.0) {
            // Reversed gradients flow into the feature adapter, scaled by the
            // batch size so they sit on the per-sample scale of the other terms.
            const double scale = lambda_d * static_cast<double>(end - start);
            for (std::size_t i = 0; i < dis_features.size(); ++i) {
              grads.d.adapter_w.noalias() += scale * dl.feature_grads_reversed[i] * dis_inputs[i].transpose();
              grads.d.adapter_b += scale * dl.feature_grads_reversed[i];
            }
          }
          out.discriminator.w -= config.gamma * dl.grads.w;
          out.discriminator.b -= config.gamma * dl.grads.b;
        }
      }

      grads *= 1.0 / static_cast<double>(end - start);
      out.student = sgd_step(out.student, grads, config.gamma);
      out.teacher = ema_update(out.teacher, out.student, config.alpha);
      out.rcm.update(batch_confusion(c, rcm_pairs));

      for (const auto& item : items) {
        for (const auto& l : item.pseudo) {
          const auto& prop = item.sample->proposals[l.proposal_index];
          bank.push(item.subset, l.class_id(), CropEntry{prop.feature, l.class_vector, l.box.width(), l.box.height()});
        }
      }
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    const auto student_eval = evaluate(out.student, eval);
    const auto teacher_eval = evaluate(out.teacher, eval);
    rec.student_map = student_eval.map50;
    rec.teacher_map = teacher_eval.map50;
    rec.teacher_class_ap = teacher_eval.per_class_ap;
    const double n = std::max<std::size_t>(1, target.size());
    rec.loss_stu = sum_stu / n;
    rec.loss_expert = sum_expert / n;
    rec.loss_dis = dis_batches ? sum_dis / dis_batches : 0.0;
    rec.lambda_d = lambda_d;
    rec.rcm = out.rcm.matrix();
    out.history.epochs.push_back(rec);
    if (observer) observer(rec, out.teacher, out.student, out.rcm);
  }
  return out;
}

std::vector<AblationArm> ablation_arms(const AdaptationConfig& base) {
  auto arm = [&](std::string name, bool sa, bool sal, bool expert) {
    AdaptationConfig c = base;
    c.enable_dis = true;
    c.enable_sa = sa;
    c.enable_sal = sal;
    c.enable_expert = expert;
    return AblationArm{std::move(name), std::move(c)};
  };
  return {arm("base", false, false, false), arm("sa", true, false, false),
          arm("sal", false, true, false), arm("full", true, true, true)};
}

AdaptationConfig plain_mean_teacher(AdaptationConfig config) {
  config.enable_sa = false;
  config.enable_sal = false;
  config.enable_expert = false;
  config.enable_dis = false;
  return config;
}

ExperimentData make_experiment_data(const AdaptationConfig& config) {
  config.validate();
  const DomainSpec source_spec = make_source_spec(config.world);
  const DomainSpec target_spec = make_target_spec(config.world);
  DomainSpec eval_spec = target_spec;
  eval_spec.num_samples = config.world.num_eval;
  return ExperimentData{
      source_spec,
      target_spec,
      SourceDataset(generate_domain(source_spec, derive_seed(config.seed, "data.source"))),
      generate_domain(target_spec, derive_seed(config.seed, "data.target")),
      generate_domain(eval_spec, derive_seed(config.seed, "data.eval")),
  };
}

}  // namespace sfda
