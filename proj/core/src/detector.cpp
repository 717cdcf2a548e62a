// SPDX-License-Identifier: Apache-2.0
#include "sfda/detector.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "sfda/errors.hpp"

namespace sfda {
namespace {

using ojson = nlohmann::ordered_json;

Eigen::VectorXd log_softmax(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return (z.array() - lse).matrix();
}

double smooth_l1_grad(double x, double beta) {
  if (std::abs(x) < beta) return x / beta;
  return x > 0.0 ? 1.0 : -1.0;
}

// GIoU of `a` against fixed `t`, with the gradient w.r.t. a's corners.
double giou_with_grad(const BBox& a, const BBox& t, std::array<double, 4>& g) {
  const double iw_raw = std::min(a.x2, t.x2) - std::max(a.x1, t.x1);
  const double ih_raw = std::min(a.y2, t.y2) - std::max(a.y1, t.y1);
  const double iw = std::max(0.0, iw_raw);
  const double ih = std::max(0.0, ih_raw);
  const double inter = iw * ih;

  std::array<double, 4> diw{}, dih{};
  if (iw_raw > 0.0) {
    diw[0] = a.x1 > t.x1 ? -1.0 : 0.0;
    diw[2] = a.x2 < t.x2 ? 1.0 : 0.0;
  }
  if (ih_raw > 0.0) {
    dih[1] = a.y1 > t.y1 ? -1.0 : 0.0;
    dih[3] = a.y2 < t.y2 ? 1.0 : 0.0;
  }

  const double aw = a.width(), ah = a.height();
  const std::array<double, 4> darea{-ah, -aw, ah, aw};
  const double uni = a.area() + t.area() - inter;

  const double ew = std::max(a.x2, t.x2) - std::min(a.x1, t.x1);
  const double eh = std::max(a.y2, t.y2) - std::min(a.y1, t.y1);
  const std::array<double, 4> dew{a.x1 < t.x1 ? -1.0 : 0.0, 0.0, a.x2 > t.x2 ? 1.0 : 0.0, 0.0};
  const std::array<double, 4> deh{0.0, a.y1 < t.y1 ? -1.0 : 0.0, 0.0, a.y2 > t.y2 ? 1.0 : 0.0};
  const double encl = ew * eh;

  for (std::size_t k = 0; k < 4; ++k) {
    const double di = ih * diw[k] + iw * dih[k];
    const double du = darea[k] - di;
    const double de = eh * dew[k] + ew * deh[k];
    g[k] = di / uni - inter * du / (uni * uni) + du / encl - uni * de / (encl * encl);
  }
  return inter / uni - 1.0 + uni / encl;
}

double clamp_log_scale(double d) { return std::clamp(d, -kMaxLogScale, kMaxLogScale); }

// d(corners)/d(deltas) for apply_deltas, row k = corner, column = delta.
Eigen::Matrix4d delta_jacobian(const BBox& proposal, const Eigen::Vector4d& deltas) {
  const double w = proposal.width(), h = proposal.height();
  const bool free_w = std::abs(deltas[2]) < kMaxLogScale;
  const bool free_h = std::abs(deltas[3]) < kMaxLogScale;
  const double half_w = free_w ? 0.5 * w * std::exp(deltas[2]) : 0.0;
  const double half_h = free_h ? 0.5 * h * std::exp(deltas[3]) : 0.0;
  Eigen::Matrix4d j = Eigen::Matrix4d::Zero();
  j(0, 0) = w;
  j(0, 2) = -half_w;
  j(1, 1) = h;
  j(1, 3) = -half_h;
  j(2, 0) = w;
  j(2, 2) = half_w;
  j(3, 1) = h;
  j(3, 3) = half_h;
  return j;
}

struct ProposalState {
  Eigen::VectorXd hidden;  // adapter output (no dropout in the loss)
  Eigen::VectorXd log_p;
  Eigen::VectorXd p;
  Eigen::Vector4d deltas;
  BBox box;
};

ProposalState run_proposal(const Weights& w, const Proposal& prop) {
  ProposalState s;
  s.hidden = w.adapter_w * prop.feature + w.adapter_b;
  s.log_p = log_softmax(w.cls_w * s.hidden + w.cls_b);
  s.p = s.log_p.array().exp();
  s.deltas = w.reg_w * s.hidden + w.reg_b;
  s.box = apply_deltas(prop.box, s.deltas);
  return s;
}

void check_features(const ModelParams& params, const DetectionSample& sample) {
  for (const auto& p : sample.proposals)
    if (p.feature.size() != params.feature_dim())
      throw DimensionError("proposal feature dimension " + std::to_string(p.feature.size()) +
                           " does not match model dimension " +
                           std::to_string(params.feature_dim()));
}

ojson flat_json(const Eigen::MatrixXd& m) {
  ojson a = ojson::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
  return a;
}

Eigen::MatrixXd matrix_from(const ojson& a, Eigen::Index rows, Eigen::Index cols) {
  if (a.size() != static_cast<std::size_t>(rows * cols))
    throw DimensionError("params: array length does not match shape");
  Eigen::MatrixXd m(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = a[i++].get<double>();
  return m;
}

}  // namespace

Weights Weights::zeros(int num_classes, int feature_dim) {
  Weights w;
  w.adapter_w = Eigen::MatrixXd::Zero(feature_dim, feature_dim);
  w.adapter_b = Eigen::VectorXd::Zero(feature_dim);
  w.cls_w = Eigen::MatrixXd::Zero(num_classes + 1, feature_dim);
  w.cls_b = Eigen::VectorXd::Zero(num_classes + 1);
  w.reg_w = Eigen::MatrixXd::Zero(4, feature_dim);
  w.reg_b = Eigen::VectorXd::Zero(4);
  return w;
}

bool Weights::same_shape(const Weights& o) const {
  return adapter_w.rows() == o.adapter_w.rows() && adapter_w.cols() == o.adapter_w.cols() &&
         adapter_b.size() == o.adapter_b.size() && cls_w.rows() == o.cls_w.rows() &&
         cls_w.cols() == o.cls_w.cols() && cls_b.size() == o.cls_b.size() &&
         reg_w.rows() == o.reg_w.rows() && reg_w.cols() == o.reg_w.cols() &&
         reg_b.size() == o.reg_b.size();
}

bool Weights::all_finite() const {
  return adapter_w.allFinite() && adapter_b.allFinite() && cls_w.allFinite() &&
         cls_b.allFinite() && reg_w.allFinite() && reg_b.allFinite();
}

double Weights::squared_norm() const {
  return adapter_w.squaredNorm() + adapter_b.squaredNorm() + cls_w.squaredNorm() +
         cls_b.squaredNorm() + reg_w.squaredNorm() + reg_b.squaredNorm();
}

Weights& Weights::operator+=(const Weights& o) {
  if (!same_shape(o)) throw DimensionError("weights: shape mismatch");
  adapter_w += o.adapter_w;
  adapter_b += o.adapter_b;
  cls_w += o.cls_w;
  cls_b += o.cls_b;
  reg_w += o.reg_w;
  reg_b += o.reg_b;
  return *this;
}

Weights& Weights::operator-=(const Weights& o) {
  if (!same_shape(o)) throw DimensionError("weights: shape mismatch");
  adapter_w -= o.adapter_w;
  adapter_b -= o.adapter_b;
  cls_w -= o.cls_w;
  cls_b -= o.cls_b;
  reg_w -= o.reg_w;
  reg_b -= o.reg_b;
  return *this;
}

Weights& Weights::operator*=(double s) {
  adapter_w *= s;
  adapter_b *= s;
  cls_w *= s;
  cls_b *= s;
  reg_w *= s;
  reg_b *= s;
  return *this;
}

bool Weights::operator==(const Weights& o) const {
  return same_shape(o) && adapter_w == o.adapter_w && adapter_b == o.adapter_b &&
         cls_w == o.cls_w && cls_b == o.cls_b && reg_w == o.reg_w && reg_b == o.reg_b;
}

std::size_t Weights::size() const {
  return static_cast<std::size_t>(adapter_w.size() + adapter_b.size() + cls_w.size() +
                                  cls_b.size() + reg_w.size() + reg_b.size());
}

Eigen::VectorXd Weights::flatten() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
  Eigen::Index at = 0;
  auto put = [&](const auto& m) {
    out.segment(at, m.size()) = m.reshaped();
    at += m.size();
  };
  put(adapter_w);
  put(adapter_b);
  put(cls_w);
  put(cls_b);
  put(reg_w);
  put(reg_b);
  return out;
}

void Weights::assign_flat(const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(size())) throw DimensionError("weights: flat size mismatch");
  Eigen::Index at = 0;
  for_each([&](auto&& view) {
    view = flat.segment(at, view.size());
    at += view.size();
  });
}

ModelParams ModelParams::zeros(int num_classes, int feature_dim, double dropout_rate) {
  ModelParams p;
  p.w = Weights::zeros(num_classes, feature_dim);
  p.w.adapter_w.setIdentity();
  p.dropout_rate = dropout_rate;
  p.validate();
  return p;
}

ModelParams ModelParams::random(int num_classes, int feature_dim, double dropout_rate, Rng& rng,
                                double scale) {
  ModelParams p = zeros(num_classes, feature_dim, dropout_rate);
  std::normal_distribution<double> normal(0.0, scale);
  for (Eigen::Index i = 0; i < p.w.cls_w.size(); ++i) p.w.cls_w.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < p.w.reg_w.size(); ++i) p.w.reg_w.data()[i] = normal(rng);
  return p;
}

void ModelParams::validate() const {
  const int d = feature_dim();
  if (w.adapter_w.rows() != d || w.adapter_w.cols() != d || w.adapter_b.size() != d ||
      w.cls_b.size() != w.cls_w.rows() || w.reg_w.rows() != 4 || w.reg_w.cols() != d ||
      w.reg_b.size() != 4 || w.cls_w.rows() < 2)
    throw DimensionError("model params: inconsistent shapes");
  if (!w.all_finite()) throw TrainingError("model params: non-finite entries");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ConfigError("model params: dropout_rate must be in [0, 1)");
}

GradientSet GradientSet::zeros_like(const ModelParams& params) {
  return {Weights::zeros(params.num_classes(), params.feature_dim()), 0.0};
}

GradientSet& GradientSet::operator+=(const GradientSet& o) {
  d += o.d;
  loss += o.loss;
  return *this;
}

GradientSet& GradientSet::operator*=(double s) {
  d *= s;
  loss *= s;
  return *this;
}

int Detection::best_foreground() const {
  const Eigen::Index c = scores.size() - 1;
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < c; ++k)
    if (scores[k] > scores[best]) best = k;
  return static_cast<int>(best);
}

double Detection::foreground_score() const { return scores[best_foreground()]; }

BBox apply_deltas(const BBox& proposal, const Eigen::Vector4d& deltas) {
  const double w = proposal.width(), h = proposal.height();
  const double cx = proposal.center_x() + deltas[0] * w;
  const double cy = proposal.center_y() + deltas[1] * h;
  const double nw = w * std::exp(clamp_log_scale(deltas[2]));
  const double nh = h * std::exp(clamp_log_scale(deltas[3]));
  return {cx - 0.5 * nw, cy - 0.5 * nh, cx + 0.5 * nw, cy + 0.5 * nh};
}

double smooth_l1(double x, double beta) {
  const double a = std::abs(x);
  return a < beta ? 0.5 * x * x / beta : a - 0.5 * beta;
}

std::vector<Detection> forward(const ModelParams& params, const DetectionSample& sample,
                               std::optional<std::uint64_t> dropout_seed) {
  check_features(params, sample);
  const Weights& w = params.w;
  const bool drop = dropout_seed.has_value() && params.dropout_rate > 0.0;
  Rng rng(dropout_seed.value_or(0));
  const double keep_scale = 1.0 / (1.0 - params.dropout_rate);

  std::vector<Detection> out;
  out.reserve(sample.proposals.size());
  for (std::size_t j = 0; j < sample.proposals.size(); ++j) {
    const Proposal& prop = sample.proposals[j];
    Eigen::VectorXd h = w.adapter_w * prop.feature + w.adapter_b;
    if (drop) {
      for (Eigen::Index i = 0; i < h.size(); ++i)
        h[i] = uniform01(rng) < params.dropout_rate ? 0.0 : h[i] * keep_scale;
    }
    Detection d;
    d.proposal_index = j;
    d.scores = log_softmax(w.cls_w * h + w.cls_b).array().exp();
    d.scores /= d.scores.sum();
    const Eigen::Vector4d deltas = w.reg_w * h + w.reg_b;
    d.box = apply_deltas(prop.box, deltas);
    if (d.foreground_score() >= kDetectionThreshold) d.class_id = d.best_foreground();
    out.push_back(std::move(d));
  }
  return out;
}

std::size_t match_proposal(const DetectionSample& sample, const BBox& box) {
  if (sample.proposals.empty()) throw IndexError("match_proposal: sample has no proposals");
  std::size_t best = 0;
  double best_iou = -1.0;
  for (std::size_t j = 0; j < sample.proposals.size(); ++j) {
    const double v = iou(sample.proposals[j].box, box);
    if (v > best_iou) {
      best_iou = v;
      best = j;
    }
  }
  return best;
}

LossResult detection_loss(const ModelParams& params, const DetectionSample& sample,
                          std::span<const LabelTarget> labels, std::span<const double> weights,
                          const LossOptions& options) {
  check_features(params, sample);
  if (!weights.empty() && weights.size() != labels.size())
    throw DimensionError("detection_loss: weights and labels differ in length");
  const int num_classes = params.num_classes();
  const Weights& w = params.w;
  const std::size_t n_prop = sample.proposals.size();

  std::vector<std::size_t> matched;
  matched.reserve(labels.size());
  for (const auto& label : labels) {
    if (!label.box.valid()) throw ConfigError("detection_loss: invalid label box");
    if (label.class_vector.size() != num_classes)
      throw DimensionError("detection_loss: class vector length must equal num_classes");
    matched.push_back(match_proposal(sample, label.box));
  }

  std::vector<std::size_t> background;
  switch (options.background_mode) {
    case BackgroundTargets::kAllUnmatched: {
      std::vector<bool> used(n_prop, false);
      for (std::size_t j : matched) used[j] = true;
      for (std::size_t j = 0; j < n_prop; ++j)
        if (!used[j]) background.push_back(j);
      break;
    }
    case BackgroundTargets::kExplicit:
      for (std::size_t j : options.background) {
        if (j >= n_prop) throw IndexError("detection_loss: background index out of range");
        background.push_back(j);
      }
      break;
    case BackgroundTargets::kNone:
      break;
  }

  LossResult result;
  result.grads = GradientSet::zeros_like(params);
  const std::size_t n_inst = labels.size();
  const std::size_t n_cls = n_inst + background.size();
  if (n_cls == 0) return result;

  // Lazily evaluated per-proposal forward state and accumulated output grads.
  std::vector<std::optional<ProposalState>> states(n_prop);
  std::vector<Eigen::VectorXd> dlogits(n_prop);
  std::vector<Eigen::Vector4d> ddeltas(n_prop);
  auto state = [&](std::size_t j) -> ProposalState& {
    if (!states[j]) {
      states[j] = run_proposal(w, sample.proposals[j]);
      dlogits[j] = Eigen::VectorXd::Zero(num_classes + 1);
      ddeltas[j].setZero();
    }
    return *states[j];
  };

  const double cls_scale = options.cls_weight / static_cast<double>(n_cls);
  const double box_scale = n_inst ? options.box_weight / static_cast<double>(n_inst) : 0.0;
  const double giou_scale = n_inst ? options.giou_weight / static_cast<double>(n_inst) : 0.0;

  double box_sum = 0.0, giou_sum = 0.0, ce_sum = 0.0;
  for (std::size_t i = 0; i < n_inst; ++i) {
    const std::size_t j = matched[i];
    ProposalState& s = state(j);
    const BBox& target = labels[i].box;

    std::array<double, 4> dbox{};
    const auto pred = s.box.coords();
    const auto tgt = target.coords();
    if (options.box_weight != 0.0) {
      const BBox& prop = sample.proposals[j].box;
      const std::array<double, 4> unit{prop.width(), prop.height(), prop.width(), prop.height()};
      for (std::size_t k = 0; k < 4; ++k) {
        const double r = (pred[k] - tgt[k]) / unit[k];
        box_sum += smooth_l1(r);
        dbox[k] += box_scale * smooth_l1_grad(r, kSmoothL1Beta) / unit[k];
      }
    }
    if (options.giou_weight != 0.0) {
      std::array<double, 4> g{};
      giou_sum += 1.0 - giou_with_grad(s.box, target, g);
      for (std::size_t k = 0; k < 4; ++k) dbox[k] -= giou_scale * g[k];
    }
    const Eigen::Vector4d dcorner(dbox[0], dbox[1], dbox[2], dbox[3]);
    ddeltas[j] += delta_jacobian(sample.proposals[j].box, s.deltas).transpose() * dcorner;

    if (options.cls_weight != 0.0) {
      const double wi = weights.empty() ? 1.0 : weights[i];
      Eigen::VectorXd q = Eigen::VectorXd::Zero(num_classes + 1);
      q.head(num_classes) = labels[i].class_vector;
      ce_sum += -wi * q.dot(s.log_p);
      dlogits[j] += cls_scale * wi * (q.sum() * s.p - q);
    }
  }
  if (options.cls_weight != 0.0) {
    for (std::size_t j : background) {
      ProposalState& s = state(j);
      ce_sum += -s.log_p[num_classes];
      Eigen::VectorXd g = s.p;
      g[num_classes] -= 1.0;
      dlogits[j] += cls_scale * g;
    }
  }

  Weights& g = result.grads.d;
  for (std::size_t j = 0; j < n_prop; ++j) {
    if (!states[j]) continue;
    const ProposalState& s = *states[j];
    g.cls_w.noalias() += dlogits[j] * s.hidden.transpose();
    g.cls_b += dlogits[j];
    g.reg_w.noalias() += ddeltas[j] * s.hidden.transpose();
    g.reg_b += ddeltas[j];
    const Eigen::VectorXd dh = w.cls_w.transpose() * dlogits[j] + w.reg_w.transpose() * ddeltas[j];
    g.adapter_w.noalias() += dh * sample.proposals[j].feature.transpose();
    g.adapter_b += dh;
  }

  result.parts.box = n_inst ? box_sum / static_cast<double>(n_inst) : 0.0;
  result.parts.giou = n_inst ? giou_sum / static_cast<double>(n_inst) : 0.0;
  result.parts.cls = ce_sum / static_cast<double>(n_cls);
  result.loss = options.box_weight * result.parts.box + options.giou_weight * result.parts.giou +
                options.cls_weight * result.parts.cls;
  result.grads.loss = result.loss;
  return result;
}

ModelParams sgd_step(const ModelParams& params, const GradientSet& grads, double gamma) {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("sgd_step: gamma must be >= 0");
  if (!grads.d.all_finite() || !std::isfinite(grads.loss))
    throw TrainingError("sgd_step: non-finite gradients");
  ModelParams out = params;
  if (gamma == 0.0) return out;
  Weights step = grads.d;
  step *= gamma;
  out.w -= step;
  return out;
}

std::string params_to_json(const ModelParams& params) {
  ojson js;
  js["num_classes"] = params.num_classes();
  js["feature_dim"] = params.feature_dim();
  js["dropout_rate"] = params.dropout_rate;
  js["adapter_w"] = flat_json(params.w.adapter_w);
  js["adapter_b"] = flat_json(params.w.adapter_b);
  js["cls_w"] = flat_json(params.w.cls_w);
  js["cls_b"] = flat_json(params.w.cls_b);
  js["reg_w"] = flat_json(params.w.reg_w);
  js["reg_b"] = flat_json(params.w.reg_b);
  return js.dump();
}

ModelParams params_from_json(const std::string& text) {
  try {
    const ojson js = ojson::parse(text);
    const int c = js.at("num_classes").get<int>();
    const int d = js.at("feature_dim").get<int>();
    if (c < 1 || d < 1) throw ConfigError("params: bad shape");
    ModelParams p;
    p.dropout_rate = js.at("dropout_rate").get<double>();
    p.w.adapter_w = matrix_from(js.at("adapter_w"), d, d);
    p.w.adapter_b = matrix_from(js.at("adapter_b"), d, 1);
    p.w.cls_w = matrix_from(js.at("cls_w"), c + 1, d);
    p.w.cls_b = matrix_from(js.at("cls_b"), c + 1, 1);
    p.w.reg_w = matrix_from(js.at("reg_w"), 4, d);
    p.w.reg_b = matrix_from(js.at("reg_b"), 4, 1);
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("params: ") + e.what());
  }
}

}  // namespace sfda
