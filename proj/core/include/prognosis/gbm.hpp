#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace prognosis {

/// Row-major feature matrix; NaN marks a missing value.
using FeatureMatrix = std::vector<std::vector<double>>;

struct GbmParams {
  double learning_rate = 0.1;
  std::size_t num_trees = 100;
  std::size_t max_leaves = 8;
  double l2 = 1.0;
  std::size_t min_samples_leaf = 5;
  double subsample = 1.0;  ///< fraction of rows drawn (without replacement) per tree
  std::uint64_t seed = 0;

  void validate() const;
};

struct TreeNode {
  int feature = -1;  ///< -1 marks a leaf
  double threshold = 0.0;
  bool default_left = true;
  int left = -1;
  int right = -1;
  double leaf_value = 0.0;
  bool is_leaf() const noexcept { return feature < 0; }
};

/// Split rule: x <= threshold goes left, NaN follows default_left.
struct Tree {
  std::vector<TreeNode> nodes;
  double predict(std::span<const double> x) const;
  std::size_t leaf_count() const;
};

struct GbmModel {
  std::size_t num_features = 0;
  double learning_rate = 0.1;
  double base_score = 0.0;  ///< prior log-odds
  std::vector<Tree> trees;
  std::string warning;  ///< set when fitting fell back to the prior

  /// base_score + learning_rate * sum of leaf values.
  double raw_score(std::span<const double> x) const;
  double predict(std::span<const double> x) const;
};

/// Leaf-wise boosting of logistic-loss regression trees with second-order gain
/// G^2 / (H + l2) and a learned default direction for missing values.
/// `loss_trace`, when given, receives the mean training log-loss after each round.
GbmModel fit_gbm(const FeatureMatrix& x, std::span<const int> y, const GbmParams& params,
                 std::vector<double>* loss_trace = nullptr);

/// Number of internal nodes splitting on each feature, summed over trees.
std::vector<std::size_t> feature_importance(const GbmModel& model);

/// (feature index, count) sorted by descending count, then index.
std::vector<std::pair<std::size_t, std::size_t>> ranked_importance(const GbmModel& model);

/// Text dump: a short header, then per tree one line per node:
/// node_id feature threshold default_direction left right leaf_value
void write_gbm(std::ostream& out, const GbmModel& model);
GbmModel read_gbm(std::istream& in);

struct LogRegParams {
  double l2 = 1e-3;
  std::size_t iterations = 500;
  double learning_rate = 0.5;
};

/// Logistic regression on mean-imputed, standardised features.
struct LogRegModel {
  std::vector<double> means;
  std::vector<double> scales;
  std::vector<double> weights;
  double bias = 0.0;
  std::string warning;

  double predict(std::span<const double> x) const;
};

LogRegModel fit_logreg(const FeatureMatrix& x, std::span<const int> y, const LogRegParams& params);
void write_logreg(std::ostream& out, const LogRegModel& model);
LogRegModel read_logreg(std::istream& in);

}  // namespace prognosis
