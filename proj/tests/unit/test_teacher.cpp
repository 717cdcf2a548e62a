// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "sfda/errors.hpp"
#include "sfda/teacher.hpp"
#include "sfda/trainer.hpp"

using namespace sfda;

TEST_CASE("pseudo_label thresholds") {
  const auto sample = fixture::random_sample(3, 6, 2);
  const auto params = fixture::random_params(3, 6, 2, 1.0);
  const auto dets = forward(params, sample);
  double top = 0.0;
  for (const auto& d : dets) top = std::max(top, d.foreground_score());

  CHECK(pseudo_label(params, sample, std::min(1.0, top + 1e-9)).empty());
  CHECK_THROWS_AS(pseudo_label(params, sample, 0.0), ConfigError);
  CHECK_THROWS_AS(pseudo_label(params, sample, 1.5), ConfigError);

  // Monotone set inclusion in tau.
  const auto loose = pseudo_label(dets, 0.3);
  const auto tight = pseudo_label(dets, 0.6);
  CHECK(tight.size() <= loose.size());
  for (const auto& t : tight) {
    bool found = false;
    for (const auto& l : loose) found = found || l.proposal_index == t.proposal_index;
    CHECK(found);
    CHECK(t.confidence >= 0.6);
    CHECK(t.class_vector.sum() == 1.0);
    CHECK_FALSE(t.augmented);
  }
}

TEST_CASE("pseudo_label with a tiny tau keeps every foreground-confident proposal") {
  const auto sample = fixture::random_sample(2, 4, 3);
  auto params = ModelParams::zeros(2, 4);
  params.w.cls_b << 5.0, 0.0, -5.0;  // class 0 dominant, background last
  const auto labels = pseudo_label(params, sample, 1e-9);
  CHECK(labels.size() == sample.proposals.size());
  for (const auto& l : labels) CHECK(l.class_id() == 0);
}

TEST_CASE("pseudo-label class ties go to the lower index") {
  Detection d;
  d.scores = Eigen::Vector3d(0.45, 0.45, 0.1);
  d.box = BBox{0, 0, 1, 1};
  const auto labels = pseudo_label(std::span<const Detection>(&d, 1), 0.4);
  REQUIRE(labels.size() == 1);
  CHECK(labels[0].class_id() == 0);
}

TEST_CASE("background_targets") {
  Detection a, b;
  a.scores = Eigen::Vector3d(0.02, 0.03, 0.95);
  b.scores = Eigen::Vector3d(0.6, 0.1, 0.3);
  b.proposal_index = 1;
  std::vector<Detection> dets{a, b};
  CHECK(background_targets(dets, 0.1) == std::vector<std::size_t>{0});
  CHECK(background_targets(dets, 0.7).size() == 2);
}

TEST_CASE("ema_update") {
  const auto t = fixture::random_params(2, 3, 1);
  const auto s = fixture::random_params(2, 3, 2);
  CHECK(ema_update(t, s, 0.0) == s);
  CHECK(ema_update(t, s, 1.0) == t);

  auto one = ModelParams::zeros(2, 3);
  one.w.cls_w(0, 0) = 1.0;
  const auto zero = ModelParams::zeros(2, 3);
  CHECK(ema_update(one, zero, 0.9).w.cls_w(0, 0) == doctest::Approx(0.9).epsilon(1e-12));

  // Closed-form geometric recursion with a fixed student.
  const double alpha = 0.97;
  auto teacher = t;
  for (int k = 1; k <= 60; ++k) {
    teacher = ema_update(teacher, s, alpha);
    if (k % 20 == 0) {
      const double a = std::pow(alpha, k);
      const Eigen::VectorXd expect = a * t.w.flatten() + (1.0 - a) * s.w.flatten();
      CHECK((teacher.w.flatten() - expect).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
  CHECK_THROWS_AS(ema_update(t, s, 1.5), ConfigError);
}

TEST_CASE("ema contracts the teacher-student distance") {
  const auto s = fixture::random_params(3, 4, 5);
  auto t = fixture::random_params(3, 4, 6);
  double prev = (t.w.flatten() - s.w.flatten()).norm();
  for (int k = 0; k < 10; ++k) {
    t = ema_update(t, s, 0.8);
    const double now = (t.w.flatten() - s.w.flatten()).norm();
    CHECK(now == doctest::Approx(0.8 * prev).epsilon(1e-9));
    prev = now;
  }
}

TEST_CASE("student_step") {
  const auto sample = fixture::random_sample(3, 5, 7);
  TeacherState state{fixture::random_params(3, 5, 1), fixture::random_params(3, 5, 2)};
  SUBCASE("empty pseudo labels and no background leave the student unchanged") {
    const auto next = student_step(state, sample, {}, {}, 0.1);
    CHECK(next.student == state.student);
    CHECK(next.teacher == state.teacher);
  }
  SUBCASE("gamma zero leaves the state unchanged") {
    const auto pseudo = pseudo_label(state.teacher, sample, 0.2);
    const auto next = student_step(state, sample, pseudo, {}, 0.0);
    CHECK(next.student == state.student);
  }
  SUBCASE("a step on pseudo labels changes only the student") {
    auto pseudo = pseudo_label(state.teacher, sample, 1e-6);
    REQUIRE_FALSE(pseudo.empty());
    const auto next = student_step(state, sample, pseudo, {}, 0.1);
    CHECK_FALSE(next.student == state.student);
    CHECK(next.teacher == state.teacher);
  }
}

TEST_CASE("teacher fit on a clean world labels objects correctly") {
  AdaptationConfig cfg;
  cfg.world.num_classes = 3;
  cfg.world.feature_dim = 8;
  cfg.world.source_frequency = {0.4, 0.3, 0.3};
  cfg.world.class_separation = 6.0;
  cfg.world.confusion_pairs.clear();
  cfg.world.num_source = 300;
  cfg.world.num_eval = 100;
  cfg.pretrain_epochs = 40;
  auto data = make_experiment_data(cfg);
  const auto teacher = pretrain_source(cfg, data.source);
  const auto clean = generate_domain(data.source_spec, 99);
  int matched = 0, agree = 0;
  for (const auto& s : clean) {
    const auto labels = pseudo_label(teacher, s, 0.5);
    for (const auto& o : s.objects) {
      const auto j = match_proposal(s, o.box);
      for (const auto& l : labels)
        if (l.proposal_index == j) {
          ++matched;
          agree += l.class_id() == o.class_id;
        }
    }
  }
  REQUIRE(matched > 50);
  CHECK(static_cast<double>(agree) / matched >= 0.95);
}
