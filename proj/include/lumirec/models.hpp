#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lumirec/common.hpp"

namespace lumirec::models {

// Dense row-major design matrix with integer class labels.
struct Dataset {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> x;
  std::vector<int> y;
  std::vector<std::string> feature_names;
  int class_count = 0;

  double at(std::size_t i, std::size_t j) const { return x[i * cols + j]; }
  std::span<const double> row(std::size_t i) const { return {x.data() + i * cols, cols}; }
  Dataset subset(std::span<const std::size_t> indices) const;
  // Throws Error{kInvalidArgument} when an invariant is broken.
  void validate() const;
};

enum class Family { kKnn, kRandomForest, kGradientBoost };

std::string_view to_string(Family family);
Family parse_family(std::string_view text);

inline constexpr int kUnboundedDepth = -1;

struct ModelSpec {
  Family family = Family::kRandomForest;
  int n_trees = 100;
  int max_depth = kUnboundedDepth;
  int n_neighbors = 5;
  double learning_rate = 0.1;
  bool bootstrap = true;
  int min_leaf = 1;
  std::uint64_t seed = 0;

  bool operator==(const ModelSpec&) const = default;
};

// ---------------------------------------------------------------- trees

struct TreeNode {
  int feature = -1;  // -1 for a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int label = 0;       // classification leaves
  double value = 0.0;  // regression leaves
};

struct DecisionTree {
  std::vector<TreeNode> nodes;
  // Total weighted impurity decrease contributed by each feature.
  std::vector<double> importance;

  int leaf_of(std::span<const double> row) const;
  int predict_label(std::span<const double> row) const { return nodes[leaf_of(row)].label; }
  double predict_value(std::span<const double> row) const { return nodes[leaf_of(row)].value; }
  int depth() const;
};

struct TreeParams {
  int max_depth = kUnboundedDepth;
  int min_leaf = 1;
  // Candidate features per split; 0 means all features.
  int feature_subset = 0;
};

// Distinct-value binning of every column. Split thresholds fall at
// midpoints between consecutive distinct values present in a node.
struct BinnedColumns {
  std::vector<std::vector<std::uint32_t>> codes;  // [feature][row]
  std::vector<std::vector<double>> values;        // [feature][bin], ascending

  static BinnedColumns build(const Dataset& data);
};

// CART classification tree with Gini impurity. `weights` holds per-row
// multiplicities (bootstrap counts); empty means every row once.
DecisionTree tree_fit(const Dataset& data, const TreeParams& params, Rng& rng,
                      std::span<const std::uint32_t> weights = {});
DecisionTree tree_fit(const Dataset& data, const BinnedColumns& bins, const TreeParams& params,
                      Rng& rng, std::span<const std::uint32_t> weights = {});

// Least-squares regression tree on `target`; leaves hold the Newton step
// sum(target) / sum(hessian). `leaf_of_row` receives each row's leaf.
DecisionTree regression_tree_fit(const Dataset& data, const BinnedColumns& bins,
                                 std::span<const double> target, std::span<const double> hessian,
                                 const TreeParams& params, std::vector<int>* leaf_of_row = nullptr);

// ---------------------------------------------------------------- KNN

struct KnnModel {
  int k = 1;
  int class_count = 0;
  std::vector<std::size_t> kept_features;  // features with nonzero spread
  std::vector<double> mean;                // per kept feature
  std::vector<double> scale;               // per kept feature
  std::vector<double> train_x;             // standardized, row-major over kept features
  std::vector<int> train_y;
  std::vector<std::string> feature_names;
  std::size_t source_cols = 0;

  std::size_t train_rows() const { return train_y.size(); }
};

// Throws Error{kKTooLarge} when k is outside [1, n].
KnnModel knn_fit(const Dataset& train, int k);
std::vector<int> knn_predict(const KnnModel& model, const Dataset& data);
// Predictions for several k from one neighbor search; each k <= model.k.
std::vector<std::vector<int>> knn_predict_many(const KnnModel& model, const Dataset& data,
                                               std::span<const int> ks);

// ---------------------------------------------------------------- forest

struct ForestModel {
  ModelSpec spec;
  int class_count = 0;
  std::vector<std::string> feature_names;
  std::vector<DecisionTree> trees;
};

ForestModel rf_fit(const Dataset& train, const ModelSpec& spec);
// Majority vote over the first `tree_limit` trees (0 = all); ties go to the
// lowest class id.
std::vector<int> rf_predict(const ForestModel& model, const Dataset& data, int tree_limit = 0);

// ---------------------------------------------------------------- boosting

struct GbtModel {
  ModelSpec spec;
  int class_count = 0;
  std::vector<std::string> feature_names;
  std::vector<double> base_score;                 // log class priors
  std::vector<std::vector<DecisionTree>> rounds;  // rounds[m][class]
  std::vector<double> round_scale;                // learning rate after step halving
  std::vector<double> train_loss;                 // mean log-loss before round 0, then per round
};

GbtModel gbt_fit(const Dataset& train, const ModelSpec& spec);
std::vector<double> gbt_scores(const GbtModel& model, std::span<const double> row,
                               int round_limit = 0);
std::vector<int> gbt_predict(const GbtModel& model, const Dataset& data, int round_limit = 0);

// ---------------------------------------------------------------- generic

using TrainedModel = std::variant<KnnModel, ForestModel, GbtModel>;

TrainedModel fit(const ModelSpec& spec, const Dataset& train);
std::vector<int> predict(const TrainedModel& model, const Dataset& data);
ModelSpec spec_of(const TrainedModel& model);

double accuracy(std::span<const int> truth, std::span<const int> predicted);

// Fold id per row. Stratified round-robin within shuffled classes; falls
// back to a plain shuffled round-robin when some class has fewer rows than
// folds, reported through `stratified`.
std::vector<int> assign_folds(std::span<const int> labels, int folds, std::uint64_t seed,
                              bool* stratified = nullptr);

// ---------------------------------------------------------------- grid search

struct ParamGrid {
  std::vector<int> n_trees{50, 100, 200};
  std::vector<int> max_depth{4, 8, 16, kUnboundedDepth};
  std::vector<int> n_neighbors{3, 5, 11, 25};
  std::vector<double> learning_rate{0.1, 0.3};
};

struct CvRecord {
  std::size_t point = 0;
  int fold = 0;
  double accuracy = 0.0;
};

struct GridSearchOptions {
  int folds = 5;
  std::uint64_t seed = 0;
  // Seeded random subsample cap applied before cross-validation; 0 = no cap.
  std::size_t max_rows = 0;
};

struct GridSearchResult {
  std::vector<ModelSpec> points;
  std::vector<double> mean_accuracy;
  std::vector<CvRecord> table;  // points.size() * folds rows
  ModelSpec best;
  bool stratified = true;
  std::size_t rows_used = 0;
};

// Expands the lattice for a family in tie-break order: fewer trees, then
// smaller depth (unbounded last), then smaller k, then smaller learning rate.
std::vector<ModelSpec> expand_grid(Family family, const ParamGrid& grid, std::uint64_t seed);

GridSearchResult grid_search(Family family, const ParamGrid& grid, const Dataset& train,
                             const GridSearchOptions& options);

}  // namespace lumirec::models
