// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <sstream>

#include "sfda/errors.hpp"
#include "sfda/trainer.hpp"

using namespace sfda;

namespace {

AdaptationConfig tiny_config() {
  AdaptationConfig c;
  c.world.num_source = 80;
  c.world.num_target = 40;
  c.world.num_eval = 40;
  c.pretrain_epochs = 5;
  c.epochs = 3;
  c.batch_size = 8;
  c.mc_passes = 3;
  return c;
}

std::string history_csv(const AdaptResult& r) {
  std::ostringstream os;
  r.history.write_csv(os);
  return os.str();
}

}  // namespace

TEST_CASE("decay_lambda_d") {
  CHECK(decay_lambda_d(0.1, 0, 50) == 0.1);
  CHECK(decay_lambda_d(0.1, 50, 50) == 0.0);
  CHECK(decay_lambda_d(1.0, 25, 50) == doctest::Approx(0.5));
}

TEST_CASE("config json round trip and validation") {
  AdaptationConfig c = tiny_config();
  c.weight_strategy = WeightStrategy::kClassLevel;
  c.world.confusion_pairs = {{2, 1}};
  const auto back = AdaptationConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(AdaptationConfig::from_json("{}").to_json() == AdaptationConfig{}.to_json());
  CHECK_THROWS_AS(AdaptationConfig::from_json(R"({"tua": 0.5})"), ConfigError);
  CHECK_THROWS_AS(AdaptationConfig::from_json(R"({"tau": 0})"), ConfigError);
  CHECK_THROWS_AS(AdaptationConfig::from_json(R"({"tau": "high"})"), ConfigError);
  CHECK_THROWS_AS(AdaptationConfig::from_json(R"({"world": {"num_classes": 2}})"), ConfigError);
  CHECK_THROWS_AS(AdaptationConfig::from_json("[1, 2"), ConfigError);
}

TEST_CASE("pretraining seals the source and beats a random model") {
  auto cfg = tiny_config();
  cfg.world.num_source = 200;
  cfg.pretrain_epochs = 15;
  auto data = make_experiment_data(cfg);
  AdaptationConfig none = cfg;
  none.pretrain_epochs = 0;
  SourceDataset copy(Dataset(data.source.samples().begin(), data.source.samples().end()));
  const auto random_model = pretrain_source(none, copy);
  const auto source_check = generate_domain(data.source_spec, 1234);
  const auto trained = pretrain_source(cfg, data.source);
  CHECK(data.source.sealed());
  CHECK_THROWS_AS(data.source.samples(), SourceAccessError);
  CHECK(evaluate(trained, source_check).map50 > evaluate(random_model, source_check).map50);

  // Zero epochs returns the seeded random initialisation.
  Rng init = make_rng(cfg.seed, "pretrain.init");
  CHECK(random_model == ModelParams::random(cfg.world.num_classes, cfg.world.feature_dim, cfg.dropout_rate, init));
}

TEST_CASE("adapt edge cases") {
  auto cfg = tiny_config();
  auto data = make_experiment_data(cfg);
  const auto source = pretrain_source(cfg, data.source);
  SUBCASE("zero epochs") {
    cfg.epochs = 0;
    const auto r = adapt(source, data.target, data.eval, cfg);
    CHECK(r.teacher == source);
    CHECK(r.history.epochs.empty());
  }
  SUBCASE("all objectives off leaves the parameters unchanged") {
    cfg.lambda_u = 0.0;
    cfg.lambda_d0 = 0.0;
    cfg.enable_expert = false;
    const auto r = adapt(source, data.target, data.eval, cfg);
    CHECK(r.student == source);
    CHECK(r.teacher == source);
    CHECK(r.history.epochs.size() == 3);
  }
  SUBCASE("history is deterministic and well formed") {
    const auto a = adapt(source, data.target, data.eval, cfg);
    const auto b = adapt(source, data.target, data.eval, cfg);
    CHECK(history_csv(a) == history_csv(b));
    const auto csv = history_csv(a);
    CHECK(csv.rfind("epoch,student_map,teacher_map,ap_class_0,ap_class_1,ap_class_2,ap_class_3,ap_class_4,"
                    "loss_stu,loss_expert,loss_dis,lambda_d\n", 0) == 0);
    CHECK(a.history.epochs.back().epoch == 3);
    CHECK(a.history.epochs[0].lambda_d == doctest::Approx(cfg.lambda_d0));
    CHECK(a.partition.similar.size() + a.partition.dissimilar.size() == data.target.size());
  }
  SUBCASE("observer sees every epoch") {
    int calls = 0;
    adapt(source, data.target, data.eval, cfg,
          [&](const EpochRecord& rec, const ModelParams&, const ModelParams&, const RelationMatrix& r) {
            ++calls;
            CHECK(rec.epoch == calls);
            CHECK(r.num_classes() == cfg.world.num_classes);
          });
    CHECK(calls == 3);
  }
  SUBCASE("invalid config") {
    cfg.batch_size = 0;
    CHECK_THROWS_AS(adapt(source, data.target, data.eval, cfg), ConfigError);
  }
}

TEST_CASE("ablation arms") {
  const auto arms = ablation_arms(AdaptationConfig{});
  REQUIRE(arms.size() == 4);
  CHECK(arms[0].name == "base");
  CHECK(arms[0].config.enable_dis);
  CHECK_FALSE(arms[0].config.enable_sa);
  CHECK_FALSE(arms[0].config.enable_sal);
  CHECK_FALSE(arms[0].config.enable_expert);
  CHECK(arms[1].config.enable_sa);
  CHECK(arms[2].config.enable_sal);
  CHECK(arms[3].config.enable_expert);
  const auto plain = plain_mean_teacher(AdaptationConfig{});
  CHECK_FALSE(plain.enable_dis);
  CHECK_FALSE(plain.enable_expert);
}
