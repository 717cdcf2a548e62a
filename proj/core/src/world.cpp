// SPDX-License-Identifier: Apache-2.0
#include "sfda/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "sfda/errors.hpp"
#include "sfda/rng.hpp"

namespace sfda {
namespace {

using ojson = nlohmann::ordered_json;

int draw_class(const std::vector<double>& freq, Rng& rng) {
  const double u = uniform01(rng);
  double cum = 0.0;
  int last_positive = 0;
  for (std::size_t k = 0; k < freq.size(); ++k) {
    if (freq[k] > 0.0) last_positive = static_cast<int>(k);
    cum += freq[k];
    if (freq[k] > 0.0 && u < cum) return static_cast<int>(k);
  }
  return last_positive;
}

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

BBox random_box(const DomainSpec& spec, Rng& rng) {
  const double w = uniform(rng, spec.min_box, spec.max_box);
  const double h = uniform(rng, spec.min_box, spec.max_box);
  const double x1 = uniform(rng, 0.0, std::max(0.0, spec.image_size - w));
  const double y1 = uniform(rng, 0.0, std::max(0.0, spec.image_size - h));
  return {x1, y1, x1 + w, y1 + h};
}

Feature gaussian_feature(const Feature& mean, double scale, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Feature f(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) f[i] = mean[i] + scale * normal(rng);
  return f;
}

void add_geometry(Feature& f, const std::array<double, 4>& u, double gain) {
  const Eigen::Index g = std::min<Eigen::Index>(4, f.size());
  for (Eigen::Index k = 0; k < g; ++k) f[f.size() - g + k] += gain * u[static_cast<std::size_t>(k)];
}

DetectionSample generate_sample(const DomainSpec& spec, std::uint64_t seed, int index) {
  Rng rng = make_rng(seed, "world.sample", static_cast<std::uint64_t>(index));
  DetectionSample s;
  s.id = index;
  const int n_obj =
      1 + std::min(spec.max_objects - 1, static_cast<int>(uniform01(rng) * spec.max_objects));
  for (int o = 0; o < n_obj; ++o) {
    ObjectInstance obj;
    obj.class_id = draw_class(spec.frequency, rng);
    obj.box = random_box(spec, rng);
    obj.feature = gaussian_feature(spec.means[obj.class_id], spec.cov_scales[obj.class_id], rng);

    std::array<double, 4> u{};
    BBox jittered = obj.box;
    bool accepted = false;
    for (int attempt = 0; attempt < 64 && !accepted; ++attempt) {
      for (double& v : u) v = uniform(rng, -1.0, 1.0);
      const double sx = spec.box_jitter * obj.box.width();
      const double sy = spec.box_jitter * obj.box.height();
      jittered = {obj.box.x1 + u[0] * sx, obj.box.y1 + u[1] * sy, obj.box.x2 + u[2] * sx,
                  obj.box.y2 + u[3] * sy};
      accepted = jittered.valid() && iou(jittered, obj.box) > spec.iou_floor;
    }
    if (!accepted) {
      u = {};
      jittered = obj.box;
    }
    Proposal p{jittered, obj.feature};
    add_geometry(p.feature, u, spec.geometry_gain);
    s.proposals.push_back(std::move(p));
    s.objects.push_back(std::move(obj));
  }

  std::poisson_distribution<int> bg_count(spec.background_rate);
  const int n_bg = spec.background_rate > 0.0 ? bg_count(rng) : 0;
  const int c_bg = spec.num_classes;
  for (int k = 0; k < n_bg; ++k) {
    Proposal p{random_box(spec, rng), gaussian_feature(spec.means[c_bg], spec.cov_scales[c_bg], rng)};
    std::array<double, 4> u{};
    for (double& v : u) v = uniform(rng, -1.0, 1.0);
    add_geometry(p.feature, u, spec.geometry_gain);
    s.proposals.push_back(std::move(p));
  }

  for (std::size_t i = s.proposals.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(s.proposals[i - 1], s.proposals[std::min(j, i - 1)]);
  }
  return s;
}

Feature random_direction(int dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Feature v(dim);
  for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  const double n = v.norm();
  return n > 0.0 ? Feature(v / n) : Feature(Feature::Zero(dim));
}

ojson vector_json(const Eigen::VectorXd& v) {
  ojson a = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vector_from(const ojson& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

ojson box_row(const BBox& b) { return ojson::array({b.x1, b.y1, b.x2, b.y2}); }

BBox box_from_row(const ojson& row) {
  return {row.at(0).get<double>(), row.at(1).get<double>(), row.at(2).get<double>(),
          row.at(3).get<double>()};
}

}  // namespace

void DomainSpec::validate() const {
  if (num_classes < 1) throw ConfigError("domain spec: num_classes must be >= 1");
  if (feature_dim < 1) throw ConfigError("domain spec: feature_dim must be >= 1");
  const auto expected = static_cast<std::size_t>(num_classes) + 1;
  if (means.size() != expected) throw ConfigError("domain spec: need num_classes + 1 means");
  for (const auto& m : means) {
    if (m.size() != feature_dim) throw ConfigError("domain spec: mean dimension mismatch");
    if (!m.allFinite()) throw ConfigError("domain spec: non-finite mean");
  }
  if (cov_scales.size() != expected) throw ConfigError("domain spec: need num_classes + 1 cov scales");
  for (double s : cov_scales)
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("domain spec: cov scales must be > 0");
  if (frequency.size() != static_cast<std::size_t>(num_classes))
    throw ConfigError("domain spec: frequency length must equal num_classes");
  double sum = 0.0;
  for (double f : frequency) {
    if (!(f >= 0.0)) throw ConfigError("domain spec: negative frequency");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("domain spec: frequency must sum to 1");
  if (!(background_rate >= 0.0)) throw ConfigError("domain spec: background_rate must be >= 0");
  if (!(box_jitter >= 0.0) || box_jitter >= 0.5)
    throw ConfigError("domain spec: box_jitter must be in [0, 0.5)");
  if (num_samples < 0) throw ConfigError("domain spec: num_samples must be >= 0");
  if (max_objects < 1) throw ConfigError("domain spec: max_objects must be >= 1");
  if (!(min_box > 0.0) || min_box > max_box || max_box > image_size)
    throw ConfigError("domain spec: need 0 < min_box <= max_box <= image_size");
  if (!(geometry_gain >= 0.0)) throw ConfigError("domain spec: geometry_gain must be >= 0");
  if (!(iou_floor >= 0.0 && iou_floor < 1.0)) throw ConfigError("domain spec: iou_floor in [0, 1)");
}

bool DomainSpec::operator==(const DomainSpec& o) const {
  if (means.size() != o.means.size()) return false;
  for (std::size_t i = 0; i < means.size(); ++i)
    if (means[i].size() != o.means[i].size() || means[i] != o.means[i]) return false;
  return num_classes == o.num_classes && feature_dim == o.feature_dim &&
         cov_scales == o.cov_scales && frequency == o.frequency &&
         background_rate == o.background_rate && box_jitter == o.box_jitter &&
         num_samples == o.num_samples && max_objects == o.max_objects &&
         image_size == o.image_size && min_box == o.min_box && max_box == o.max_box &&
         geometry_gain == o.geometry_gain && iou_floor == o.iou_floor;
}

void WorldConfig::validate() const {
  if (num_classes < 1 || feature_dim < 1) throw ConfigError("world: bad class count or dimension");
  if (source_frequency.size() != static_cast<std::size_t>(num_classes))
    throw ConfigError("world: source_frequency length must equal num_classes");
  if (!target_frequency.empty() && target_frequency.size() != static_cast<std::size_t>(num_classes))
    throw ConfigError("world: target_frequency length must equal num_classes");
  for (const auto& [from, to] : confusion_pairs)
    if (from < 0 || to < 0 || from >= num_classes || to >= num_classes)
      throw ConfigError("world: confusion pair out of range");
  if (!(class_separation >= 0.0) || !(shift_magnitude >= 0.0) || !(confusion_pull >= 0.0))
    throw ConfigError("world: separation, shift and pull must be >= 0");
  if (!(cov_scale > 0.0) || !(background_cov_scale > 0.0) || !(target_cov_scale > 0.0))
    throw ConfigError("world: covariance scales must be > 0");
  if (num_source < 0 || num_target < 0 || num_eval < 0)
    throw ConfigError("world: dataset sizes must be >= 0");
}

DomainSpec make_source_spec(const WorldConfig& world) {
  world.validate();
  Rng rng = make_rng(world.world_seed, "world.means");
  DomainSpec spec;
  spec.num_classes = world.num_classes;
  spec.feature_dim = world.feature_dim;
  for (int c = 0; c < world.num_classes; ++c)
    spec.means.push_back(world.class_separation * random_direction(world.feature_dim, rng));
  spec.means.push_back(Feature::Zero(world.feature_dim));
  spec.cov_scales.assign(static_cast<std::size_t>(world.num_classes), world.cov_scale);
  spec.cov_scales.push_back(world.background_cov_scale);
  spec.frequency = world.source_frequency;
  spec.background_rate = world.background_rate;
  spec.box_jitter = world.box_jitter;
  spec.num_samples = world.num_source;
  spec.max_objects = world.max_objects;
  spec.geometry_gain = world.geometry_gain;
  spec.validate();
  return spec;
}

DomainSpec make_target_spec(const WorldConfig& world) {
  DomainSpec spec = make_source_spec(world);
  const std::vector<Feature> base = spec.means;
  for (const auto& [from, to] : world.confusion_pairs)
    spec.means[from] += world.confusion_pull * (base[to] - base[from]);
  Rng rng = make_rng(world.world_seed, "world.shift");
  const Feature shift = world.shift_magnitude * random_direction(world.feature_dim, rng);
  std::optional<std::vector<double>> freq;
  if (!world.target_frequency.empty()) freq = world.target_frequency;
  spec = shift_domain(spec, shift, freq);
  for (double& s : spec.cov_scales) s *= world.target_cov_scale;
  spec.num_samples = world.num_target;
  spec.validate();
  return spec;
}

Dataset generate_domain(const DomainSpec& spec, std::uint64_t seed) {
  spec.validate();
  Dataset out;
  out.reserve(static_cast<std::size_t>(spec.num_samples));
  for (int i = 0; i < spec.num_samples; ++i) out.push_back(generate_sample(spec, seed, i));
  return out;
}

DomainSpec shift_domain(const DomainSpec& base, const Feature& mean_shift,
                        const std::optional<std::vector<double>>& freq_override) {
  if (mean_shift.size() != base.feature_dim)
    throw DimensionError("shift_domain: mean_shift has dimension " +
                         std::to_string(mean_shift.size()) + ", expected " +
                         std::to_string(base.feature_dim));
  DomainSpec out = base;
  for (auto& m : out.means) m += mean_shift;
  if (freq_override) {
    if (freq_override->size() != static_cast<std::size_t>(base.num_classes))
      throw DimensionError("shift_domain: frequency override length mismatch");
    out.frequency = *freq_override;
  }
  out.validate();
  return out;
}

std::string dataset_to_json(const DomainSpec& spec, const Dataset& data) {
  ojson js;
  js["num_classes"] = spec.num_classes;
  js["feature_dim"] = spec.feature_dim;
  ojson means = ojson::array();
  for (const auto& m : spec.means) means.push_back(vector_json(m));
  js["means"] = means;
  js["cov_scales"] = spec.cov_scales;
  js["frequency"] = spec.frequency;
  js["background_rate"] = spec.background_rate;
  js["box_jitter"] = spec.box_jitter;
  js["num_samples"] = spec.num_samples;
  js["max_objects"] = spec.max_objects;
  js["image_size"] = spec.image_size;
  js["min_box"] = spec.min_box;
  js["max_box"] = spec.max_box;
  js["geometry_gain"] = spec.geometry_gain;
  js["iou_floor"] = spec.iou_floor;

  ojson samples = ojson::array();
  for (const auto& s : data) {
    ojson sj;
    sj["id"] = s.id;
    ojson props = ojson::array();
    for (const auto& p : s.proposals) {
      ojson row = box_row(p.box);
      for (Eigen::Index i = 0; i < p.feature.size(); ++i) row.push_back(p.feature[i]);
      props.push_back(std::move(row));
    }
    sj["proposals"] = std::move(props);
    ojson objs = ojson::array();
    for (const auto& o : s.objects) {
      ojson row = box_row(o.box);
      row.push_back(o.class_id);
      for (Eigen::Index i = 0; i < o.feature.size(); ++i) row.push_back(o.feature[i]);
      objs.push_back(std::move(row));
    }
    sj["objects"] = std::move(objs);
    samples.push_back(std::move(sj));
  }
  ojson root;
  root["spec"] = std::move(js);
  root["samples"] = std::move(samples);
  return root.dump();
}

std::pair<DomainSpec, Dataset> dataset_from_json(const std::string& text) {
  ojson root;
  try {
    root = ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset: ") + e.what());
  }
  try {
    const ojson& js = root.at("spec");
    DomainSpec spec;
    spec.num_classes = js.at("num_classes").get<int>();
    spec.feature_dim = js.at("feature_dim").get<int>();
    for (const auto& m : js.at("means")) spec.means.push_back(vector_from(m));
    spec.cov_scales = js.at("cov_scales").get<std::vector<double>>();
    spec.frequency = js.at("frequency").get<std::vector<double>>();
    spec.background_rate = js.at("background_rate").get<double>();
    spec.box_jitter = js.at("box_jitter").get<double>();
    spec.num_samples = js.at("num_samples").get<int>();
    spec.max_objects = js.at("max_objects").get<int>();
    spec.image_size = js.at("image_size").get<double>();
    spec.min_box = js.at("min_box").get<double>();
    spec.max_box = js.at("max_box").get<double>();
    spec.geometry_gain = js.at("geometry_gain").get<double>();
    spec.iou_floor = js.at("iou_floor").get<double>();
    spec.validate();

    const auto d = static_cast<std::size_t>(spec.feature_dim);
    Dataset data;
    for (const auto& sj : root.at("samples")) {
      DetectionSample s;
      s.id = sj.at("id").get<int>();
      for (const auto& row : sj.at("proposals")) {
        if (row.size() != 4 + d) throw DimensionError("dataset: proposal row length mismatch");
        Proposal p{box_from_row(row), Feature(spec.feature_dim)};
        for (std::size_t i = 0; i < d; ++i) p.feature[static_cast<Eigen::Index>(i)] = row[4 + i].get<double>();
        s.proposals.push_back(std::move(p));
      }
      for (const auto& row : sj.at("objects")) {
        if (row.size() != 5 + d) throw DimensionError("dataset: object row length mismatch");
        ObjectInstance o{box_from_row(row), row[4].get<int>(), Feature(spec.feature_dim)};
        for (std::size_t i = 0; i < d; ++i) o.feature[static_cast<Eigen::Index>(i)] = row[5 + i].get<double>();
        s.objects.push_back(std::move(o));
      }
      data.push_back(std::move(s));
    }
    return {std::move(spec), std::move(data)};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset: ") + e.what());
  }
}

}  // namespace sfda
