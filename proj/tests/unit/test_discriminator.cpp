// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "sfda/discriminator.hpp"
#include "sfda/rng.hpp"

using namespace sfda;

TEST_CASE("discriminator at chance") {
  const auto disc = DiscriminatorParams::zeros(3);
  std::vector<Eigen::VectorXd> f{Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(1, 0, 0)};
  std::vector<Subset> tags{Subset::kSourceSimilar, Subset::kSourceDissimilar};
  const auto r = discriminator_loss(disc, f, tags);
  CHECK_FALSE(r.skipped);
  CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("single-subset batches are skipped") {
  const auto disc = DiscriminatorParams::zeros(2);
  std::vector<Eigen::VectorXd> f{Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)};
  std::vector<Subset> tags{Subset::kSourceSimilar, Subset::kSourceSimilar};
  const auto r = discriminator_loss(disc, f, tags);
  CHECK(r.skipped);
  CHECK(r.loss == 0.0);
  CHECK(r.feature_grads_reversed.size() == 2);
  for (const auto& g : r.feature_grads_reversed) CHECK(g.squaredNorm() == 0.0);
}

TEST_CASE("reversed feature gradients are the negated loss gradient") {
  DiscriminatorParams disc;
  disc.w = Eigen::Vector2d(0.7, -1.2);
  disc.b = 0.3;
  std::vector<Eigen::VectorXd> f{Eigen::Vector2d(0.4, 1.0), Eigen::Vector2d(-0.5, 0.2), Eigen::Vector2d(1.5, -0.3)};
  std::vector<Subset> tags{Subset::kSourceSimilar, Subset::kSourceDissimilar, Subset::kSourceDissimilar};
  const auto r = discriminator_loss(disc, f, tags);
  const double h = 1e-6;
  for (std::size_t i = 0; i < f.size(); ++i)
    for (int k = 0; k < 2; ++k) {
      auto up = f, down = f;
      up[i][k] += h;
      down[i][k] -= h;
      const double num = (discriminator_loss(disc, up, tags).loss - discriminator_loss(disc, down, tags).loss) / (2 * h);
      CHECK(r.feature_grads_reversed[i][k] == doctest::Approx(-num).epsilon(1e-6));
    }
  for (int k = 0; k < 2; ++k) {
    auto up = disc, down = disc;
    up.w[k] += h;
    down.w[k] -= h;
    const double num = (discriminator_loss(up, f, tags).loss - discriminator_loss(down, f, tags).loss) / (2 * h);
    CHECK(r.grads.w[k] == doctest::Approx(num).epsilon(1e-6));
  }
}

TEST_CASE("adversarial training drives probe accuracy toward chance") {
  // One-dimensional feature h = a . x; the subsets differ along x0 only.
  Rng rng = make_rng(5, "test.adv");
  std::normal_distribution<double> noise(0.0, 0.3);
  std::vector<Eigen::Vector2d> x;
  std::vector<Subset> tags;
  for (int i = 0; i < 200; ++i) {
    const bool similar = i % 2 == 0;
    x.emplace_back((similar ? 1.0 : -1.0) + noise(rng), noise(rng));
    tags.push_back(similar ? Subset::kSourceSimilar : Subset::kSourceDissimilar);
  }
  Eigen::RowVector2d a(1.0, 1.0);
  auto features = [&]() {
    std::vector<Eigen::VectorXd> h;
    for (const auto& v : x) h.push_back(Eigen::VectorXd::Constant(1, a.dot(v)));
    return h;
  };
  auto fit_probe = [&]() {
    auto probe = DiscriminatorParams::zeros(1);
    const auto h = features();
    for (int step = 0; step < 500; ++step) {
      const auto r = discriminator_loss(probe, h, tags);
      probe.w -= 0.5 * r.grads.w;
      probe.b -= 0.5 * r.grads.b;
    }
    return probe_accuracy(probe, h, tags);
  };
  CHECK(fit_probe() > 0.95);

  auto disc = DiscriminatorParams::zeros(1);
  for (int step = 0; step < 1000; ++step) {
    const auto h = features();
    const auto r = discriminator_loss(disc, h, tags);
    Eigen::RowVector2d ga = Eigen::RowVector2d::Zero();
    for (std::size_t i = 0; i < h.size(); ++i) ga += r.feature_grads_reversed[i](0) * x[i].transpose();
    a -= 0.1 * ga;  // descent on the reversed gradient ascends the probe loss
    disc.w -= 0.5 * r.grads.w;
    disc.b -= 0.5 * r.grads.b;
  }
  CHECK(probe_accuracy(disc, features(), tags) < 0.7);
  CHECK(fit_probe() < 0.7);
}
