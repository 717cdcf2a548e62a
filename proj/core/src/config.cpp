// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "sfda/errors.hpp"
#include "sfda/trainer.hpp"

namespace sfda {
namespace {

using ojson = nlohmann::ordered_json;

std::string_view strategy_name(WeightStrategy s) {
  switch (s) {
    case WeightStrategy::kUniform:
      return "uniform";
    case WeightStrategy::kClassLevel:
      return "class-level";
    case WeightStrategy::kSemanticAware:
      break;
  }
  return "semantic-aware";
}

WeightStrategy strategy_from(const std::string& name) {
  if (name == "uniform") return WeightStrategy::kUniform;
  if (name == "class-level") return WeightStrategy::kClassLevel;
  if (name == "semantic-aware") return WeightStrategy::kSemanticAware;
  throw ConfigError("config: unknown weight_strategy '" + name + "'");
}

// Reads `key` into `out` when present and records it as consumed.
template <typename T>
void read(const ojson& js, const char* key, T& out, std::set<std::string>& seen) {
  seen.insert(key);
  if (!js.contains(key)) return;
  try {
    out = js.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: field '") + key + "': " + e.what());
  }
}

void reject_unknown(const ojson& js, const std::set<std::string>& seen, const std::string& where) {
  for (const auto& [key, value] : js.items())
    if (!seen.count(key)) throw ConfigError("config: unknown field '" + where + key + "'");
}

ojson world_json(const WorldConfig& w) {
  ojson js;
  js["num_classes"] = w.num_classes;
  js["feature_dim"] = w.feature_dim;
  js["source_frequency"] = w.source_frequency;
  js["target_frequency"] = w.target_frequency;
  js["class_separation"] = w.class_separation;
  js["cov_scale"] = w.cov_scale;
  js["background_cov_scale"] = w.background_cov_scale;
  js["background_rate"] = w.background_rate;
  js["box_jitter"] = w.box_jitter;
  js["max_objects"] = w.max_objects;
  js["geometry_gain"] = w.geometry_gain;
  js["shift_magnitude"] = w.shift_magnitude;
  js["target_cov_scale"] = w.target_cov_scale;
  ojson pairs = ojson::array();
  for (const auto& [from, to] : w.confusion_pairs) pairs.push_back(ojson::array({from, to}));
  js["confusion_pairs"] = std::move(pairs);
  js["confusion_pull"] = w.confusion_pull;
  js["num_source"] = w.num_source;
  js["num_target"] = w.num_target;
  js["num_eval"] = w.num_eval;
  js["world_seed"] = w.world_seed;
  return js;
}

WorldConfig world_from(const ojson& js) {
  WorldConfig w;
  std::set<std::string> seen;
  read(js, "num_classes", w.num_classes, seen);
  read(js, "feature_dim", w.feature_dim, seen);
  read(js, "source_frequency", w.source_frequency, seen);
  read(js, "target_frequency", w.target_frequency, seen);
  read(js, "class_separation", w.class_separation, seen);
  read(js, "cov_scale", w.cov_scale, seen);
  read(js, "background_cov_scale", w.background_cov_scale, seen);
  read(js, "background_rate", w.background_rate, seen);
  read(js, "box_jitter", w.box_jitter, seen);
  read(js, "max_objects", w.max_objects, seen);
  read(js, "geometry_gain", w.geometry_gain, seen);
  read(js, "shift_magnitude", w.shift_magnitude, seen);
  read(js, "target_cov_scale", w.target_cov_scale, seen);
  std::vector<std::vector<int>> pairs;
  bool has_pairs = js.contains("confusion_pairs");
  read(js, "confusion_pairs", pairs, seen);
  if (has_pairs) {
    w.confusion_pairs.clear();
    for (const auto& p : pairs) {
      if (p.size() != 2) throw ConfigError("config: confusion_pairs entries must be [from, to]");
      w.confusion_pairs.emplace_back(p[0], p[1]);
    }
  }
  read(js, "confusion_pull", w.confusion_pull, seen);
  read(js, "num_source", w.num_source, seen);
  read(js, "num_target", w.num_target, seen);
  read(js, "num_eval", w.num_eval, seen);
  read(js, "world_seed", w.world_seed, seen);
  reject_unknown(js, seen, "world.");
  return w;
}

ojson expert_json(const ExpertSpec& e) {
  ojson js;
  js["miss_rate"] = e.miss_rate;
  js["flip_rate"] = e.flip_rate;
  js["box_jitter"] = e.box_jitter;
  js["score_confidence"] = e.score_confidence;
  return js;
}

ExpertSpec expert_from(const ojson& js) {
  ExpertSpec e;
  std::set<std::string> seen;
  read(js, "miss_rate", e.miss_rate, seen);
  read(js, "flip_rate", e.flip_rate, seen);
  read(js, "box_jitter", e.box_jitter, seen);
  read(js, "score_confidence", e.score_confidence, seen);
  reject_unknown(js, seen, "expert.");
  return e;
}

void require(bool ok, const char* message) {
  if (!ok) throw ConfigError(std::string("config: ") + message);
}

bool unit(double v) { return v >= 0.0 && v <= 1.0; }

}  // namespace

void AdaptationConfig::validate() const {
  require(tau > 0.0 && tau <= 1.0, "tau must be in (0, 1]");
  require(unit(alpha), "alpha must be in [0, 1]");
  require(gamma >= 0.0 && std::isfinite(gamma), "gamma must be >= 0");
  require(unit(background_bar), "background_bar must be in [0, 1]");
  require(strong_noise >= 0.0, "strong_noise must be >= 0");
  require(sigma > 0.0 && sigma < 1.0, "sigma must be in (0, 1)");
  require(mc_passes >= 2, "mc_passes must be >= 2");
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout_rate must be in [0, 1)");
  require(unit(beta_ema), "beta_ema must be in [0, 1]");
  require(beta_mix > 0.0 && beta_mix <= 1.0, "beta_mix must be in (0, 1]");
  require(unit(p_aug), "p_aug must be in [0, 1]");
  require(bank_capacity >= 1, "bank_capacity must be >= 1");
  require(lambda_l >= 0.0, "lambda_l must be >= 0");
  require(lambda_u >= 0.0 && lambda_d0 >= 0.0, "lambda_u and lambda_d0 must be >= 0");
  require(lambda_cls >= 0.0 && lambda_reg >= 0.0, "lambda_cls and lambda_reg must be >= 0");
  require(epochs >= 0 && pretrain_epochs >= 0, "epoch counts must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(pretrain_gamma >= 0.0, "pretrain_gamma must be >= 0");
  expert.validate();
  world.validate();
}

std::string AdaptationConfig::to_json() const {
  ojson js;
  js["tau"] = tau;
  js["alpha"] = alpha;
  js["gamma"] = gamma;
  js["background_bar"] = background_bar;
  js["strong_noise"] = strong_noise;
  js["sigma"] = sigma;
  js["mc_passes"] = mc_passes;
  js["dropout_rate"] = dropout_rate;
  js["beta_ema"] = beta_ema;
  js["beta_mix"] = beta_mix;
  js["p_aug"] = p_aug;
  js["bank_capacity"] = bank_capacity;
  js["lambda_l"] = lambda_l;
  js["weight_strategy"] = strategy_name(weight_strategy);
  js["lambda_u"] = lambda_u;
  js["lambda_d0"] = lambda_d0;
  js["lambda_cls"] = lambda_cls;
  js["lambda_reg"] = lambda_reg;
  js["decay_lambda_d"] = decay_lambda_d;
  js["decay_lambda_u"] = decay_lambda_u;
  js["epochs"] = epochs;
  js["batch_size"] = batch_size;
  js["pretrain_epochs"] = pretrain_epochs;
  js["pretrain_gamma"] = pretrain_gamma;
  js["seed"] = seed;
  js["enable_sa"] = enable_sa;
  js["enable_sal"] = enable_sal;
  js["enable_expert"] = enable_expert;
  js["enable_dis"] = enable_dis;
  js["expert"] = expert_json(expert);
  js["world"] = world_json(world);
  return js.dump(2);
}

AdaptationConfig AdaptationConfig::from_json(const std::string& text) {
  ojson js;
  try {
    js = ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!js.is_object()) throw ConfigError("config: top level must be an object");
  AdaptationConfig c;
  std::set<std::string> seen;
  read(js, "tau", c.tau, seen);
  read(js, "alpha", c.alpha, seen);
  read(js, "gamma", c.gamma, seen);
  read(js, "background_bar", c.background_bar, seen);
  read(js, "strong_noise", c.strong_noise, seen);
  read(js, "sigma", c.sigma, seen);
  read(js, "mc_passes", c.mc_passes, seen);
  read(js, "dropout_rate", c.dropout_rate, seen);
  read(js, "beta_ema", c.beta_ema, seen);
  read(js, "beta_mix", c.beta_mix, seen);
  read(js, "p_aug", c.p_aug, seen);
  read(js, "bank_capacity", c.bank_capacity, seen);
  read(js, "lambda_l", c.lambda_l, seen);
  std::string strategy(strategy_name(c.weight_strategy));
  read(js, "weight_strategy", strategy, seen);
  c.weight_strategy = strategy_from(strategy);
  read(js, "lambda_u", c.lambda_u, seen);
  read(js, "lambda_d0", c.lambda_d0, seen);
  read(js, "lambda_cls", c.lambda_cls, seen);
  read(js, "lambda_reg", c.lambda_reg, seen);
  read(js, "decay_lambda_d", c.decay_lambda_d, seen);
  read(js, "decay_lambda_u", c.decay_lambda_u, seen);
  read(js, "epochs", c.epochs, seen);
  read(js, "batch_size", c.batch_size, seen);
  read(js, "pretrain_epochs", c.pretrain_epochs, seen);
  read(js, "pretrain_gamma", c.pretrain_gamma, seen);
  read(js, "seed", c.seed, seen);
  read(js, "enable_sa", c.enable_sa, seen);
  read(js, "enable_sal", c.enable_sal, seen);
  read(js, "enable_expert", c.enable_expert, seen);
  read(js, "enable_dis", c.enable_dis, seen);
  seen.insert("expert");
  if (js.contains("expert")) c.expert = expert_from(js.at("expert"));
  seen.insert("world");
  if (js.contains("world")) c.world = world_from(js.at("world"));
  reject_unknown(js, seen, "");
  c.validate();
  return c;
}

}  // namespace sfda
