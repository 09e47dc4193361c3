#pragma once

#include "minimax_iv/core.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace minimax_iv::rfiv {

struct TreeParams {
  int max_depth = 2;
  Eigen::Index min_leaf = 40;
  /// Features drawn (without replacement) as split candidates at each node;
  /// 0 means all features.
  int max_features = 0;

  void validate() const;
};

struct ForestParams {
  TreeParams tree;
  int n_trees = 40;
  bool bootstrap = true;

  void validate() const;
};

/// Axis-aligned binary tree. A node with feature < 0 is a leaf.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;  // go left when x[feature] <= threshold
  int left = -1;
  int right = -1;
  double value = 0.0;
};

class Tree {
 public:
  Tree() = default;
  explicit Tree(std::vector<TreeNode> nodes);

  double predict(const Eigen::Ref<const Vector>& x) const;
  Vector predict_rows(const Matrix& x) const;
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  int depth() const;
  std::vector<Eigen::Index> leaf_sizes(const Matrix& x) const;

 private:
  std::vector<TreeNode> nodes_;
};

/// Per-feature stable sort orders of a feature matrix, computed once and
/// shared by every tree grown on that matrix.
class SortedFeatures {
 public:
  explicit SortedFeatures(const Matrix& features);
  const Matrix& features() const { return *features_; }
  const std::vector<Eigen::Index>& order(Eigen::Index feature) const {
    return orders_[static_cast<std::size_t>(feature)];
  }

 private:
  const Matrix* features_;
  std::vector<std::vector<Eigen::Index>> orders_;
};

/// CART regression tree on rows with integer multiplicities (bootstrap counts).
/// Leaves hold the weighted mean target; every leaf holds >= min_leaf rows
/// counted with multiplicity.
/// `seed` drives per-node feature sampling and is unused when max_features is 0.
Tree fit_regression_tree(const SortedFeatures& sf, const Vector& targets, const std::vector<int>& counts,
                         const TreeParams& params, std::uint64_t seed = 0);

class RegressionForest {
 public:
  RegressionForest() = default;
  explicit RegressionForest(std::vector<Tree> trees);
  double predict(const Eigen::Ref<const Vector>& x) const;
  Vector predict_rows(const Matrix& x) const;
  const std::vector<Tree>& trees() const { return trees_; }

 private:
  std::vector<Tree> trees_;
};

/// Oracle_F: least-squares forest of u on z. Bootstrap draws come from `seed`.
RegressionForest regression_oracle(const SortedFeatures& z, const Vector& u, const ForestParams& params,
                                   std::uint64_t seed);
RegressionForest regression_oracle(const Matrix& z, const Vector& u, const ForestParams& params, std::uint64_t seed);

/// Leaf outputs of the learner's classification tree.
///   hard: +1 / -1 by weighted majority (0 on a tie); splits maximize
///         sum over leaves of |sum w (2v - 1)|, the exact greedy best response.
///   soft: weighted mean of 2v - 1 in the leaf; splits minimize weighted Gini
///         impurity. This is what probability-output classifiers return.
enum class LeafRule { hard, soft };

std::string to_string(LeafRule rule);
LeafRule leaf_rule_from_string(const std::string& name);

/// Oracle_H: weighted classification tree for the objective
/// sum_i w_i h(x_i) (2 v_i - 1), grown greedily.
Tree classification_oracle(const SortedFeatures& x, const std::vector<int>& labels, const Vector& weights,
                           const TreeParams& params, LeafRule rule = LeafRule::hard, std::uint64_t seed = 0);
Tree classification_oracle(const Matrix& x, const std::vector<int>& labels, const Vector& weights,
                           const TreeParams& params, LeafRule rule = LeafRule::hard, std::uint64_t seed = 0);

struct RfivConfig {
  ForestParams forest;       // Oracle_F
  TreeParams classifier;     // Oracle_H
  LeafRule leaf_rule = LeafRule::hard;
  /// Trees per learner round, all fitted to the same labels and weights and
  /// averaged; they differ only through feature sampling.
  int classifier_trees = 1;
  int iters = 200;           // T
  std::uint64_t seed = 0;

  void validate() const;
};

struct RoundDiagnostics {
  double adversary_loss = 0.0;     // (1/n) sum (u-target residual) at f_t, normalized scale
  double learner_objective = 0.0;  // (1/n) sum h_t(x_i) f_t(z_i)
};

/// h(x) = offset + scale * (1/T) sum_t h_t(x), with y rescaled to [-1, 1]
/// during training.
class EnsembleModel final : public Model {
 public:
  EnsembleModel() = default;
  EnsembleModel(std::vector<Tree> trees, double offset, double scale, Eigen::Index input_dim,
                Vector mean_adversary);

  Eigen::Index input_dim() const override { return input_dim_; }
  double predict(const Eigen::Ref<const Vector>& x) const override;
  Vector predict_rows(const Matrix& x) const override;
  /// Ensemble average before unscaling, in [-1, 1].
  Vector predict_normalized(const Matrix& x) const;

  const std::vector<Tree>& trees() const { return trees_; }
  double offset() const { return offset_; }
  double scale() const { return scale_; }
  /// Averaged adversary values (1/T) sum_t f_t(z_i) at the training rows.
  const Vector& mean_adversary() const { return mean_adversary_; }

  std::vector<RoundDiagnostics> rounds;

 private:
  std::vector<Tree> trees_;
  double offset_ = 0.0;
  double scale_ = 1.0;
  Eigen::Index input_dim_ = 0;
  Vector mean_adversary_;
};

/// Maps y to [-1, 1]: returns (offset, scale) with y_norm = (y - offset) / scale.
std::pair<double, double> normalization(const Vector& y);

EnsembleModel fit_rfiv(const Dataset& data, const RfivConfig& cfg);

/// Best-response gap of the game min_b max_a (1/n) sum (y_i - b_i) a_i - a_i^2
/// in normalized units, at (ensemble average, averaged adversary). Each best
/// response is one oracle call.
double minimax_gap(const EnsembleModel& model, const Dataset& data, const RfivConfig& cfg);

/// 8 (ln T + 1) / T.
double rfiv_bound(int iters);

}  // namespace minimax_iv::rfiv
