#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lumirec/features.hpp"
#include "lumirec/ingest.hpp"
#include "lumirec/models.hpp"

namespace lumirec::eval {

// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  int classes = 0;
  std::vector<std::int64_t> counts;
  std::int64_t n = 0;

  std::int64_t at(int truth, int predicted) const {
    return counts[static_cast<std::size_t>(truth) * classes + predicted];
  }
};

// Throws Error{kLengthMismatch} or Error{kInvalidArgument} for labels >= C.
ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred, int classes);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double specificity = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
  // Set when the value came from a 0/0 ratio and was reported as 0.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool specificity_undefined = false;
  bool f1_undefined = false;
};

struct MetricReport {
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  // Mean recall over classes present in the truth.
  double balanced_accuracy = 0.0;
  std::int64_t n = 0;
};

// One-vs-rest per-class metrics. Throws Error{kEmptyMatrix} when n = 0.
MetricReport metrics(const ConfusionMatrix& cm);

// Population-weighted mean of every scalar metric, per-class ones included.
// Throws Error{kInvalidArgument} for non-positive populations.
MetricReport weighted_cluster_aggregate(std::span<const std::pair<MetricReport, double>> reports);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// |test| = round(test_frac * n); both sides sorted.
Split split_rows(std::size_t n, double test_frac, std::uint64_t seed);
// Samples round(test_frac * H) households for the test side.
Split split_households(std::span<const std::string> household_of_row, double test_frac,
                       std::uint64_t seed);

struct CvResult {
  double mean = 0.0;
  double std = 0.0;  // population std over folds
  std::vector<double> fold_accuracy;
  bool stratified = true;
};

CvResult cross_validate(const models::ModelSpec& spec, const models::Dataset& data, int folds,
                        std::uint64_t seed);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};
MeanStd mean_std(std::span<const double> values);

// ---------------------------------------------------------------- experiments

struct FamilyResult {
  models::ModelSpec spec;
  MetricReport report;
  std::vector<int> truth;
  std::vector<int> predicted;
};

struct PooledReport {
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  std::vector<FamilyResult> families;
};

// The row split every experiment draws from `seed`.
Split experiment_split(std::size_t n, double test_frac, std::uint64_t seed);

// 90/10 row split shared by every spec; one model per spec.
PooledReport run_pooled_experiment(const std::vector<features::FeatureRow>& rows, int class_count,
                                   std::span<const models::ModelSpec> specs, std::uint64_t seed,
                                   double test_frac = 0.1);

// Scores already trained models on the test side of experiment_split.
PooledReport evaluate_pooled(const std::vector<features::FeatureRow>& rows, int class_count,
                             std::span<const models::TrainedModel> trained, std::uint64_t seed,
                             double test_frac = 0.1);

struct ClusterResult {
  int cluster = 0;
  std::size_t rows = 0;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  MetricReport report;
};

struct ClusteredReport {
  models::ModelSpec spec;
  std::vector<ClusterResult> clusters;
  MetricReport weighted;  // weighted by cluster row count
  std::vector<int> skipped_clusters;  // no test rows after the split
};

using ClusterMap = std::map<ingest::EntityKey, int>;

// Rows whose entity is missing from the map are ignored.
ClusteredReport run_clustered_experiment(const std::vector<features::FeatureRow>& rows,
                                         int class_count, const ClusterMap& cluster_of,
                                         const models::ModelSpec& spec, std::uint64_t seed,
                                         double test_frac = 0.1);

struct ColdStartOptions {
  std::vector<double> scenarios{0.10, 0.25, 0.40};
  int iterations = 20;
  int folds = 5;
  bool clustered = false;
  std::uint64_t seed = 0;
  models::ModelSpec spec;
};

struct ColdStartIteration {
  double scenario = 0.0;
  int iteration = 0;
  std::size_t train_households = 0;
  std::size_t test_households = 0;
  double train_cv = 0.0;
  double test_cv = 0.0;
  double independent = 0.0;
};

struct ScenarioSummary {
  double scenario = 0.0;
  MeanStd train_cv;
  MeanStd test_cv;
  MeanStd independent;
};

struct ColdStartReport {
  bool clustered = false;
  std::string weighting = "rows";
  std::vector<ColdStartIteration> iterations;
  std::vector<ScenarioSummary> scenarios;
};

// Household-disjoint splits per scenario and iteration. In the clustered
// variant every entity is routed by `assigned_cluster` (nearest centroid),
// one model is trained per cluster, and accuracies are row-weighted over
// clusters. Throws Error{kInsufficientHouseholds} when a scenario would need
// more households than exist.
ColdStartReport run_cold_start(const std::vector<features::FeatureRow>& rows, int class_count,
                               const ColdStartOptions& options,
                               const ClusterMap* assigned_cluster = nullptr);

}  // namespace lumirec::eval
