// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "sfda/errors.hpp"
#include "sfda/eval.hpp"

using namespace sfda;

namespace {

std::vector<ImageDetections> perfect(const std::vector<ImageTruth>& truth) {
  std::vector<ImageDetections> out(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i)
    for (const auto& g : truth[i]) out[i].push_back({g.box, g.class_id, 1.0});
  return out;
}

std::vector<ImageTruth> simple_truth() {
  return {{{BBox{0, 0, 2, 2}, 0}, {BBox{3, 3, 5, 5}, 1}}, {{BBox{1, 1, 4, 4}, 1}}, {}};
}

}  // namespace

TEST_CASE("mAP trivial cases") {
  const auto truth = simple_truth();
  CHECK(map_at_iou(perfect(truth), truth, 2).map == doctest::Approx(1.0).epsilon(1e-12));
  const std::vector<ImageDetections> none(truth.size());
  CHECK(map_at_iou(none, truth, 2).map == 0.0);
  const auto r = map_at_iou(perfect(truth), truth, 3);
  CHECK_FALSE(r.has_ground_truth[2]);
  CHECK(r.per_class_ap[2] == 0.0);
  CHECK(r.map == doctest::Approx(1.0));
  CHECK_THROWS_AS(map_at_iou(none, truth, 2, 1.0), ConfigError);
  CHECK_THROWS_AS(map_at_iou(std::vector<ImageDetections>(1), truth, 2), DimensionError);
}

TEST_CASE("mAP on a 3-image, 2-class instance equals the enumeration oracle") {
  const auto truth = simple_truth();
  std::vector<ImageDetections> dets = {
      {{BBox{0, 0, 2, 2.2}, 0, 0.9}, {BBox{0, 0, 2, 2}, 0, 0.8}, {BBox{3, 3, 5, 5}, 0, 0.7}},
      {{BBox{1, 1, 4, 4}, 1, 0.6}, {BBox{1, 1, 3.9, 4}, 1, 0.95}},
      {{BBox{0, 0, 1, 1}, 1, 0.85}}};
  const double expect = oracle::map(dets, truth, 2, 0.5);
  CHECK(std::abs(map_at_iou(dets, truth, 2).map - expect) < 1e-12);
}

TEST_CASE("mAP and FROC match the brute-force oracles on random micro-instances") {
  Rng rng = make_rng(11, "test.micro");
  for (int trial = 0; trial < 150; ++trial) {
    CAPTURE(trial);
    const auto inst = oracle::random_micro_instance(rng);
    for (double thr : {0.5, 0.3}) {
      const double a = map_at_iou(inst.dets, inst.truth, inst.num_classes, thr).map;
      CHECK(std::abs(a - oracle::map(inst.dets, inst.truth, inst.num_classes, thr)) < 1e-9);
    }
    const auto f = froc(inst.dets, inst.truth);
    const auto o = oracle::froc(inst.dets, inst.truth, kFpiPoints, 0.5);
    for (double b : kFpiPoints) CHECK(std::abs(f.at(b) - o.at(b)) < 1e-9);
  }
}

TEST_CASE("adding a zero-score detection that matches nothing new keeps mAP") {
  Rng rng = make_rng(12, "test.zero");
  for (int trial = 0; trial < 50; ++trial) {
    auto inst = oracle::random_micro_instance(rng);
    const double before = map_at_iou(inst.dets, inst.truth, inst.num_classes).map;
    inst.dets.back().push_back({BBox{100, 100, 101, 101}, 0, 0.0});  // ranks last among ties
    CHECK(map_at_iou(inst.dets, inst.truth, inst.num_classes).map == doctest::Approx(before).epsilon(1e-12));
  }
}

TEST_CASE("FROC trivial cases and monotonicity") {
  const auto truth = simple_truth();
  for (const auto& [b, r] : froc(perfect(truth), truth)) CHECK(r == 1.0);
  for (const auto& [b, r] : froc(std::vector<ImageDetections>(truth.size()), truth)) CHECK(r == 0.0);
  Rng rng = make_rng(13, "test.froc");
  const std::vector<double> budgets{0.0, 0.05, 0.1, 0.3, 0.5, 1.0, 2.0, 5.0};
  for (int trial = 0; trial < 50; ++trial) {
    const auto inst = oracle::random_micro_instance(rng);
    const auto f = froc(inst.dets, inst.truth, budgets);
    double prev = 0.0;
    for (double b : budgets) {
      CHECK(f.at(b) >= prev);
      prev = f.at(b);
    }
  }
}

TEST_CASE("FROC on a 10-image instance equals the threshold sweep") {
  Rng rng = make_rng(14, "test.froc10");
  auto inst = oracle::random_micro_instance(rng, 10, 5);
  while (inst.dets.size() != 10) inst = oracle::random_micro_instance(rng, 10, 5);
  const auto f = froc(inst.dets, inst.truth);
  const auto o = oracle::froc(inst.dets, inst.truth, kFpiPoints, 0.5);
  for (double b : kFpiPoints) CHECK(std::abs(f.at(b) - o.at(b)) < 1e-12);
}

TEST_CASE("F1 and AUC") {
  const auto truth = simple_truth();
  {
    auto dets = perfect(truth);
    const auto r = f1_auc(dets, truth);
    CHECK(r.f1 == doctest::Approx(1.0));
    REQUIRE(r.auc);
    CHECK(*r.auc == doctest::Approx(1.0));
  }
  {
    const std::vector<ImageTruth> empty(3);
    const auto r = f1_auc(std::vector<ImageDetections>(3), empty);
    CHECK_FALSE(r.auc);
  }
  {
    // Random scores on balanced images: AUC near 0.5.
    Rng rng = make_rng(15, "test.auc");
    std::vector<ImageTruth> t(1000);
    std::vector<ImageDetections> d(1000);
    for (int i = 0; i < 1000; ++i) {
      if (i % 2 == 0) t[i].push_back({BBox{0, 0, 1, 1}, 0});
      d[i].push_back({BBox{5, 5, 6, 6}, 0, uniform01(rng)});
    }
    const auto r = f1_auc(d, t);
    REQUIRE(r.auc);
    CHECK(std::abs(*r.auc - 0.5) <= 0.05);
  }
}

TEST_CASE("evaluate and json") {
  const auto spec = fixture::small_spec(3, 6, 20);
  const auto data = generate_domain(spec, 3);
  const auto params = fixture::random_params(3, 6, 2, 0.5);
  const auto r = evaluate(params, data);
  CHECK(r.map50 >= 0.0);
  CHECK(r.map50 <= 1.0);
  CHECK(r.per_class_ap.size() == 3);
  CHECK(r.recall_at_fpi.size() == kFpiPoints.size());
  const auto js = nlohmann::json::parse(r.to_json());
  CHECK(js.contains("map50"));
  CHECK(js.contains("recall_at_fpi"));
  EvalResult na;
  CHECK(nlohmann::json::parse(na.to_json())["auc"] == "not-applicable");
}
