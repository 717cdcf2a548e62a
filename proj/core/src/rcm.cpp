// SPDX-License-Identifier: Apache-2.0
#include "sfda/rcm.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "sfda/errors.hpp"

namespace sfda {

Eigen::MatrixXi batch_confusion(int num_classes, std::span<const ClassPair> pairs) {
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(num_classes, num_classes);
  for (const auto& [c, x] : pairs) {
    if (c < 0 || x < 0 || c >= num_classes || x >= num_classes)
      throw IndexError("batch_confusion: class id out of range");
    counts(c, x) += 1;
  }
  return counts;
}

RelationMatrix::RelationMatrix(int num_classes, double beta_ema)
    : r_(Eigen::MatrixXd::Identity(num_classes, num_classes)),
      beta_(beta_ema),
      updates_(static_cast<std::size_t>(num_classes), 0) {
  if (num_classes < 1) throw ConfigError("relation matrix: num_classes must be >= 1");
  if (!(beta_ema >= 0.0 && beta_ema <= 1.0))
    throw ConfigError("relation matrix: beta_ema must be in [0, 1]");
}

RelationMatrix RelationMatrix::from_rows(const Eigen::MatrixXd& rows, double beta_ema) {
  if (rows.rows() != rows.cols()) throw DimensionError("relation matrix: must be square");
  RelationMatrix r(static_cast<int>(rows.rows()), beta_ema);
  r.r_ = rows;
  std::fill(r.updates_.begin(), r.updates_.end(), 1);
  return r;
}

bool RelationMatrix::ready() const {
  return std::all_of(updates_.begin(), updates_.end(), [](long n) { return n > 0; });
}

void RelationMatrix::update(const Eigen::MatrixXi& counts) {
  if (counts.rows() != r_.rows() || counts.cols() != r_.cols())
    throw DimensionError("relation matrix: count matrix shape mismatch");
  for (Eigen::Index c = 0; c < counts.rows(); ++c) {
    const long total = counts.row(c).cast<long>().sum();
    if (total <= 0) continue;
    const Eigen::RowVectorXd batch_row = counts.row(c).cast<double>() / static_cast<double>(total);
    r_.row(c) = beta_ * r_.row(c) + (1.0 - beta_) * batch_row;
    ++updates_[static_cast<std::size_t>(c)];
  }
}

std::string RelationMatrix::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index c = 0; c < r_.rows(); ++c) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index x = 0; x < r_.cols(); ++x) row.push_back(r_(c, x));
    rows.push_back(std::move(row));
  }
  return rows.dump();
}

RelationMatrix ema_update(RelationMatrix r, const Eigen::MatrixXi& counts) {
  r.update(counts);
  return r;
}

bool ClassSplit::is_majority(int c) const {
  return std::find(majority.begin(), majority.end(), c) != majority.end();
}

ClassSplit majority_minority_split(const RelationMatrix& r) {
  if (!r.ready()) throw NotReadyError("majority_minority_split: some rows were never updated");
  ClassSplit split;
  const Eigen::VectorXd diag = r.matrix().diagonal();
  split.rcm_avg = diag.mean();
  // Values within rounding distance of the mean count as equal to it.
  const double tol = 1e-12 * std::max(1.0, std::abs(split.rcm_avg));
  for (int c = 0; c < r.num_classes(); ++c) {
    if (diag[c] > split.rcm_avg + tol)
      split.majority.push_back(c);
    else
      split.minority.push_back(c);
  }
  return split;
}

}  // namespace sfda
