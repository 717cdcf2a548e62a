// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace sfda {

using ClassPair = std::pair<int, int>;  // (reference class, predicted class)

// Counts of (reference, predicted) pairs. Throws IndexError on ids outside
// [0, num_classes).
Eigen::MatrixXi batch_confusion(int num_classes, std::span<const ClassPair> pairs);

// Global class-relation matrix: an EMA of row-normalized batch confusion
// matrices. Starts as the identity; rows that have never received a count
// keep their initial value.
class RelationMatrix {
 public:
  explicit RelationMatrix(int num_classes, double beta_ema = 0.99);

  // A matrix with every row marked as updated once; for inspection and tests.
  static RelationMatrix from_rows(const Eigen::MatrixXd& rows, double beta_ema = 0.99);

  int num_classes() const { return static_cast<int>(r_.rows()); }
  double beta() const { return beta_; }
  const Eigen::MatrixXd& matrix() const { return r_; }
  double operator()(int c, int x) const { return r_(c, x); }
  const std::vector<long>& update_counts() const { return updates_; }

  // True once every row has been updated at least once.
  bool ready() const;

  // Rows of `counts` with a positive sum are normalized and blended in with
  // weight (1 - beta); zero rows are skipped.
  void update(const Eigen::MatrixXi& counts);

  std::string to_json() const;

 private:
  Eigen::MatrixXd r_;
  double beta_;
  std::vector<long> updates_;
};

RelationMatrix ema_update(RelationMatrix r, const Eigen::MatrixXi& counts);

struct ClassSplit {
  std::vector<int> majority;
  std::vector<int> minority;
  double rcm_avg = 0.0;

  bool is_majority(int c) const;
};

// Majority iff R(c,c) > mean of the diagonal; equality (to within 1e-12
// relative) counts as minority.
// Throws NotReadyError while any row is still at its initial value.
ClassSplit majority_minority_split(const RelationMatrix& r);

}  // namespace sfda
