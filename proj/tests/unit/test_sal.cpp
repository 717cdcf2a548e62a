// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "sfda/errors.hpp"
#include "sfda/sal.hpp"

using namespace sfda;

namespace {

RelationMatrix two_class(double r00, double r01, double r10, double r11) {
  Eigen::MatrixXd m(2, 2);
  m << r00, r01, r10, r11;
  return RelationMatrix::from_rows(m);
}

}  // namespace

TEST_CASE("instance weights") {
  CHECK(instance_weight(two_class(0.75, 0.25, 0, 1), 0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(instance_weight(two_class(1, 0, 0, 1), 0, 0) == 0.0);
  CHECK(instance_weight(two_class(0.8, 0.2, 0, 1), 0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  // A zero diagonal is floored rather than dividing by zero.
  CHECK(std::isfinite(instance_weight(two_class(0.0, 1.0, 0, 1), 0, 1)));
  CHECK_THROWS_AS(instance_weight(two_class(1, 0, 0, 1), 0, 2), IndexError);
}

TEST_CASE("class-level weights use the diagonal only") {
  const auto r = two_class(0.75, 0.25, 0.36, 0.64);
  CHECK(class_level_weight(r, 0) == doctest::Approx(0.5));
  CHECK(class_level_weight(r, 1) == doctest::Approx(0.6));
}

TEST_CASE("normalize_foreground") {
  const std::vector<double> a{1.0, 3.0};
  const auto na = normalize_foreground(a);
  CHECK(na[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(na[1] == doctest::Approx(1.5).epsilon(1e-12));
  const std::vector<double> b{0.2, 0.2};
  for (double v : normalize_foreground(b)) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  const std::vector<double> z{0.0};
  CHECK_THROWS_AS(normalize_foreground(z), DegenerateBatchError);
}

TEST_CASE("regularize") {
  const std::vector<double> zero{0.0};
  CHECK(regularize(zero, 0.5)[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  const std::vector<double> w{0.3, 1.7, 1.0};
  CHECK(regularize(w, 0.0) == w);
  for (double lambda : {0.1, 0.5, 3.0}) {
    const auto out = regularize(w, lambda);
    CHECK((out[0] + out[1] + out[2]) / 3.0 == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(regularize(w, -0.1), ConfigError);
}

TEST_CASE("weighted_ce") {
  Eigen::VectorXd sure(3);
  sure << 1.0, 0.0, 0.0;
  std::vector<Eigen::VectorXd> scores{sure};
  std::vector<int> targets{0};
  std::vector<double> ones{1.0};
  CHECK(weighted_ce(scores, targets, ones) == doctest::Approx(0.0));

  Eigen::VectorXd half(2), quarter(2);
  half << 0.5, 0.5;
  quarter << 0.25, 0.75;
  std::vector<Eigen::VectorXd> two{half, quarter};
  std::vector<int> t2{0, 0};
  std::vector<double> w2{2.0, 0.0};
  CHECK(std::abs(weighted_ce(two, t2, w2) - std::log(2.0)) < 1e-12);
  std::vector<double> unit{1.0, 1.0};
  CHECK(std::abs(weighted_ce(two, t2, unit) - 0.5 * (std::log(2.0) + std::log(4.0))) < 1e-12);
}

TEST_CASE("semantic_weights pipeline") {
  const auto r = two_class(0.75, 0.25, 0.2, 0.8);
  const std::vector<ClassPair> pairs{{0, 0}, {1, 0}, {1, 1}};
  const auto w = semantic_weights(r, pairs, 0.5);
  REQUIRE(w.foreground.size() == 3);
  CHECK((w.foreground[0] + w.foreground[1] + w.foreground[2]) / 3.0 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w.background == 1.0);
  CHECK_FALSE(w.fell_back);

  const auto perfect = two_class(1, 0, 0, 1);
  const std::vector<ClassPair> correct{{0, 0}, {1, 1}};
  const auto fb = semantic_weights(perfect, correct, 0.5);
  CHECK(fb.fell_back);
  for (double v : fb.foreground) CHECK(v == 1.0);

  const auto uniform = semantic_weights(r, pairs, 0.5, WeightStrategy::kUniform);
  for (double v : uniform.foreground) CHECK(v == 1.0);
  CHECK(semantic_weights(r, {}, 0.5).foreground.empty());
}

TEST_CASE("SAL-weighted classification gradient matches finite differences") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    CAPTURE(seed);
    const auto sample = fixture::random_sample(3, 4, 300 + seed);
    const auto params = fixture::random_params(3, 4, 400 + seed, 0.3);
    Eigen::MatrixXd m(3, 3);
    m << 0.7, 0.2, 0.1, 0.3, 0.6, 0.1, 0.05, 0.15, 0.8;
    const auto r = RelationMatrix::from_rows(m);
    std::vector<LabelTarget> labels;
    std::vector<ClassPair> pairs;
    const auto dets = forward(params, sample);
    for (const auto& o : sample.objects) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(3);
      v[o.class_id] = 1.0;
      labels.push_back({o.box, v});
      pairs.emplace_back(o.class_id, dets[match_proposal(sample, o.box)].best_foreground());
    }
    const auto weights = semantic_weights(r, pairs, 0.5).foreground;
    LossOptions opt;
    opt.box_weight = 0.0;
    opt.giou_weight = 0.0;
    auto f = [&](const ModelParams& p) { return detection_loss(p, sample, labels, weights, opt).loss; };
    const auto analytic = detection_loss(params, sample, labels, weights, opt).grads.d.flatten();
    CHECK(oracle::max_relative_error(analytic, oracle::numeric_gradient(params, f)) < 1e-4);
  }
}
