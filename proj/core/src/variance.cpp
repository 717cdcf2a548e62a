// SPDX-License-Identifier: Apache-2.0
#include "sfda/variance.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "sfda/errors.hpp"

namespace sfda {
namespace {

template <typename Extract>
double pass_variance(const PassSet& passes, Extract&& extract) {
  if (passes.empty()) return 0.0;
  const std::size_t n = passes.front().size();
  for (const auto& pass : passes)
    if (pass.size() != n) throw DimensionError("variance: passes disagree on detection count");
  if (n == 0) return 0.0;
  const double m = static_cast<double>(passes.size());
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    Eigen::VectorXd mean = extract(passes.front()[j]);
    mean.setZero();
    for (const auto& pass : passes) mean += extract(pass[j]);
    mean /= m;
    for (const auto& pass : passes) total += (extract(pass[j]) - mean).squaredNorm();
  }
  return total / (m * static_cast<double>(n));
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

PassSet mc_passes(const ModelParams& params, const DetectionSample& sample, int passes, Rng& rng) {
  if (passes < 2) throw ConfigError("mc_passes: need at least 2 passes");
  PassSet out;
  out.reserve(static_cast<std::size_t>(passes));
  for (int m = 0; m < passes; ++m) out.push_back(forward(params, sample, rng()));
  return out;
}

double box_variance(const PassSet& passes) {
  return pass_variance(passes, [](const Detection& d) {
    const auto c = d.box.coords();
    return Eigen::VectorXd(Eigen::Vector4d(c[0], c[1], c[2], c[3]));
  });
}

double cls_variance(const PassSet& passes) {
  return pass_variance(passes, [](const Detection& d) { return Eigen::VectorXd(d.scores); });
}

void VarianceReport::write_csv(std::ostream& os) const {
  os << "sample_id,v_b,v_c,v,rank,level,subset\n";
  for (const auto& r : records)
    os << r.sample_id << ',' << fmt_double(r.v_box) << ',' << fmt_double(r.v_cls) << ','
       << fmt_double(r.v) << ',' << r.rank << ',' << fmt_double(r.level) << ','
       << to_string(r.subset) << '\n';
}

Subset Partition::subset_of(int sample_id) const {
  if (std::find(similar.begin(), similar.end(), sample_id) != similar.end())
    return Subset::kSourceSimilar;
  if (std::find(dissimilar.begin(), dissimilar.end(), sample_id) != dissimilar.end())
    return Subset::kSourceDissimilar;
  throw IndexError("partition: unknown sample id " + std::to_string(sample_id));
}

Partition rank_partition(std::span<const int> sample_ids, std::span<const double> v_box,
                         std::span<const double> v_cls, double sigma) {
  if (!(sigma > 0.0 && sigma < 1.0)) throw ConfigError("partition: sigma must be in (0, 1)");
  const std::size_t n = sample_ids.size();
  if (v_box.size() != n || v_cls.size() != n) throw DimensionError("partition: length mismatch");
  if (n < 2) throw ConfigError("partition: need at least 2 samples");

  Partition part;
  part.report.records.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& rec = part.report.records[i];
    rec.sample_id = sample_ids[i];
    rec.v_box = v_box[i];
    rec.v_cls = v_cls[i];
    rec.v = v_box[i] * v_cls[i];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto& recs = part.report.records;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (recs[a].v != recs[b].v) return recs[a].v < recs[b].v;
    return recs[a].sample_id < recs[b].sample_id;
  });
  for (std::size_t k = 0; k < n; ++k) {
    auto& rec = part.report.records[order[k]];
    rec.rank = static_cast<int>(k + 1);
    rec.level = static_cast<double>(rec.rank) / static_cast<double>(n);
    rec.subset = rec.level >= sigma ? Subset::kSourceSimilar : Subset::kSourceDissimilar;
  }
  for (const auto& rec : part.report.records)
    (rec.subset == Subset::kSourceSimilar ? part.similar : part.dissimilar).push_back(rec.sample_id);
  return part;
}

Partition partition(std::span<const DetectionSample> data, const ModelParams& params, int passes,
                    double sigma, std::uint64_t seed) {
  std::vector<int> ids;
  std::vector<double> vb, vc;
  for (const auto& sample : data) {
    Rng rng = make_rng(seed, "dropout.partition", static_cast<std::uint64_t>(sample.id));
    const PassSet set = mc_passes(params, sample, passes, rng);
    ids.push_back(sample.id);
    vb.push_back(box_variance(set));
    vc.push_back(cls_variance(set));
  }
  return rank_partition(ids, vb, vc, sigma);
}

}  // namespace sfda
