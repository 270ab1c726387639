#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace grpboost {

struct GradHess {
  double g = 0.0;
  double h = 0.0;
};

/// Per-row loss of a scalar boosted parameter. A row is whatever unit the
/// loss is separable over: a day for occurrence and dependence, a
/// (grid point, day) pair for intensity. Implementations are stateless after
/// construction.
class LossAdapter {
 public:
  virtual ~LossAdapter() = default;

  virtual std::size_t size() const = 0;
  virtual std::string name() const = 0;
  virtual double loss(std::size_t row, double theta) const = 0;
  virtual GradHess grad_hess(std::size_t row, double theta) const = 0;

  /// Cross-validation unit of a row; all rows sharing a group land in the
  /// same fold.
  virtual std::size_t group(std::size_t row) const { return row; }
};

/// Sum of row losses at the given per-row predictions (aligned with rows).
double total_loss(const LossAdapter& loss, std::span<const std::size_t> rows,
                  std::span<const double> predictions);

/// Squared-error loss 0.5 (y - theta)^2; used for tests and as a baseline.
class SquaredLoss final : public LossAdapter {
 public:
  explicit SquaredLoss(std::vector<double> y, std::vector<std::size_t> groups = {});
  std::size_t size() const override { return y_.size(); }
  std::string name() const override { return "squared"; }
  double loss(std::size_t row, double theta) const override;
  GradHess grad_hess(std::size_t row, double theta) const override;
  std::size_t group(std::size_t row) const override;

 private:
  std::vector<double> y_;
  std::vector<std::size_t> groups_;
};

/// Dense row-major predictor matrix; NaN marks a missing value.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<std::string> names = {});

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  const std::vector<std::string>& names() const { return names_; }
  void set_names(std::vector<std::string> names);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
  std::vector<std::string> names_;
};

struct TrainConfig {
  int n_trees = 100;
  int max_depth = 6;
  double learning_rate = 0.05;
  double lambda = 1.0;
  double gamma_complexity = 0.0;
  double min_child_hessian = 1.0;
  /// Leaf weights are clipped to [-max_delta_step, max_delta_step] before the
  /// learning rate applies; 0 disables clipping. Needed where the loss is not
  /// convex (the gradient score): floored hessians there give -G / lambda.
  double max_delta_step = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Floor applied to every row hessian before tree growth.
inline constexpr double kHessianFloor = 1e-6;

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  bool default_left = true;
  double weight = 0.0;  // leaf output
  double cover = 0.0;   // training rows reaching the node
  double gain = 0.0;

  bool is_leaf() const { return feature < 0; }
};

class RegressionTree {
 public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  /// Rows go left when x[feature] < threshold; NaN follows default_left.
  double predict(std::span<const double> x) const;
  int leaf_index(std::span<const double> x) const;
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::vector<TreeNode>& mutable_nodes() { return nodes_; }
  int depth() const;
  std::size_t n_leaves() const;

 private:
  std::vector<TreeNode> nodes_;
};

class TreeEnsemble {
 public:
  double base_score = 0.0;
  double learning_rate = 0.05;
  std::vector<std::string> feature_names;
  std::size_t n_features = 0;
  std::vector<RegressionTree> trees;

  /// base_score + learning_rate * (sum of tree outputs, left to right).
  double predict(std::span<const double> x) const;
  /// Same, restricted to the first n_trees trees.
  double predict(std::span<const double> x, std::size_t n_trees) const;

  nlohmann::json to_json() const;
  static TreeEnsemble from_json(const nlohmann::json& j);
};

/// Minimiser of the summed loss over a constant theta: damped Newton from 0,
/// falling back to bracketing bisection.
double init_estimate(const LossAdapter& loss, std::span<const std::size_t> rows);

/// Greedy depth-first growth of one tree on the second-order objective.
/// g and h are aligned with rows; h is floored at kHessianFloor.
RegressionTree fit_tree(std::span<const std::size_t> rows, const FeatureMatrix& x,
                        std::span<const double> g, std::span<const double> h,
                        const TrainConfig& config);

struct BoostTrace {
  std::vector<double> train_loss;                // index i: after i trees
  std::vector<std::size_t> loss_increases;       // iterations where loss went up
};

TreeEnsemble boost(std::span<const std::size_t> rows, const FeatureMatrix& x,
                   const LossAdapter& loss, const TrainConfig& config,
                   BoostTrace* trace = nullptr);

/// Convenience overload over all rows of the adapter.
TreeEnsemble boost(const FeatureMatrix& x, const LossAdapter& loss, const TrainConfig& config,
                   BoostTrace* trace = nullptr);

struct CvResult {
  std::size_t selected_n_trees = 0;
  std::size_t min_index = 0;
  std::vector<double> mean_loss;                // per tree count 0..n_trees
  std::vector<double> standard_error;           // per tree count
  std::vector<std::vector<double>> fold_loss;   // [fold][tree count]
};

/// K-fold CV over row groups (shuffled with config.seed) and one-standard-error
/// selection of the tree count. Validation losses are per-row means.
CvResult cross_validate(std::span<const std::size_t> rows, const FeatureMatrix& x,
                        const LossAdapter& loss, const TrainConfig& config,
                        std::size_t n_folds = 5);

std::vector<std::size_t> all_rows(std::size_t n);

}  // namespace grpboost
