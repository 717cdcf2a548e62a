// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "sfda/errors.hpp"
#include "sfda/expert.hpp"

using namespace sfda;

TEST_CASE("perfect expert reproduces ground truth") {
  const auto spec = fixture::small_spec(3, 6, 10);
  ExpertSpec perfect{0.0, 0.0, 0.0, 1.0};
  Rng rng = make_rng(1, "test.expert");
  for (const auto& s : generate_domain(spec, 4)) {
    const auto labels = expert_predict(perfect, s, 3, rng);
    REQUIRE(labels.size() == s.objects.size());
    for (std::size_t k = 0; k < labels.size(); ++k) {
      CHECK(labels[k].box == s.objects[k].box);
      CHECK(labels[k].class_id == s.objects[k].class_id);
      CHECK(labels[k].class_vector[labels[k].class_id] == 1.0);
    }
  }
}

TEST_CASE("expert miss and flip rates") {
  const auto spec = fixture::small_spec(3, 4, 4000);
  const auto data = generate_domain(spec, 8);
  Rng rng = make_rng(2, "test.expert");
  ExpertSpec blind{1.0, 0.0, 0.0, 1.0};
  for (std::size_t i = 0; i < 20; ++i) CHECK(expert_predict(blind, data[i], 3, rng).empty());

  ExpertSpec flipper{0.0, 0.5, 0.0, 1.0};
  std::size_t flipped = 0, total = 0;
  for (const auto& s : data) {
    const auto labels = expert_predict(flipper, s, 3, rng);
    for (std::size_t k = 0; k < labels.size(); ++k) {
      flipped += labels[k].class_id != s.objects[k].class_id;
      ++total;
    }
  }
  REQUIRE(total >= 4000);
  CHECK(std::abs(static_cast<double>(flipped) / total - 0.5) <= 0.02);

  ExpertSpec bad{1.5, 0.0, 0.0, 1.0};
  CHECK_THROWS_AS(expert_predict(bad, data[0], 3, rng), ConfigError);
}

TEST_CASE("expert_loss") {
  const auto sample = fixture::random_sample(3, 5, 3);
  const auto student = fixture::random_params(3, 5, 3);
  Rng rng = make_rng(3, "test.expert");
  const auto labels = expert_predict(ExpertSpec{0.0, 0.0, 0.05, 1.0}, sample, 3, rng);

  SUBCASE("zero weights") {
    const auto r = expert_loss(student, sample, labels, 0.0, 0.0);
    CHECK(r.loss == 0.0);
    CHECK(r.grads.d.squared_norm() == 0.0);
  }
  SUBCASE("empty labels") { CHECK(expert_loss(student, sample, {}, 1.0, 1.0).loss == 0.0); }
  SUBCASE("perfect student") {
    auto perfect = ModelParams::zeros(3, 5);
    std::vector<ExpertLabel> exact;
    for (const auto& o : sample.objects) {
      ExpertLabel l;
      l.box = sample.proposals[match_proposal(sample, o.box)].box;
      l.class_id = 0;
      l.class_vector = Eigen::VectorXd::Unit(3, 0);
      exact.push_back(l);
    }
    perfect.w.cls_b[0] = 40.0;
    const auto r = expert_loss(perfect, sample, exact, 1.0, 1.0);
    CHECK(r.parts.box < 1e-20);
    CHECK(r.parts.cls < 1e-12);
  }
  SUBCASE("gradient matches finite differences") {
    std::vector<double> sal(labels.size());
    for (std::size_t k = 0; k < sal.size(); ++k) sal[k] = 0.5 + 0.25 * static_cast<double>(k);
    auto f = [&](const ModelParams& p) { return expert_loss(p, sample, labels, 0.7, 1.3, sal).loss; };
    const auto analytic = expert_loss(student, sample, labels, 0.7, 1.3, sal).grads.d.flatten();
    CHECK(oracle::max_relative_error(analytic, oracle::numeric_gradient(student, f)) < 1e-4);
  }
}
