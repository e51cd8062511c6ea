#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "lumirec/common.hpp"
#include "lumirec/models.hpp"
#include "lumirec/routine.hpp"

namespace lumirec {

// Artifact locations, relative to the workspace root.
struct WorkspacePaths {
  std::string events = "data/events.ndjson";
  std::string ground_truth = "data/ground_truth.json";
  std::string state = "state";
  std::string routine = "routine";
  std::string features = "features";
  std::string clusters = "clusters";
  std::string models = "models";
  std::string reports = "reports";
  std::string manifests = "manifests";
};

struct ClusteringConfig {
  int k_min = 1;
  int k_max = 10;
  int n_init = 10;
  int max_iter = 300;
  double tol = 1e-6;
  double min_elbow_reduction = 0.8;
  double lower_quantile = 0.15;
  double upper_quantile = 0.85;
};

struct TrainingConfig {
  models::ParamGrid grid;
  int folds = 5;
  std::size_t grid_max_rows = 6000;
  double test_frac = 0.1;
};

struct ColdStartConfig {
  std::vector<double> scenarios{0.10, 0.25, 0.40};
  int iterations = 20;
  int folds = 5;
  // Model used inside every cold-start fit.
  models::ModelSpec spec{models::Family::kRandomForest, 20, 12, 5, 0.1, true, 1, 0};
};

struct WorkspaceConfig {
  WorkspacePaths paths;
  std::string personas;  // persona spec file; empty = built-in population
  std::string from = "2019-01-01";
  std::string to = "2019-12-31";
  int scene_count = 9;
  std::uint64_t seed = 7;
  routine::RoutineParams routine;
  ClusteringConfig clustering;
  TrainingConfig training;
  ColdStartConfig coldstart;
  unsigned threads = 0;  // 0 = all cores; not part of the hash

  DateRange window() const;
  // Throws Error{kInvalidArgument} for out-of-range values.
  void validate() const;
};

nlohmann::json to_json(const WorkspaceConfig& config);
// Missing keys keep their defaults. Throws Error{kInvalidArgument}.
WorkspaceConfig config_from_json(const nlohmann::json& j);
// FNV-1a of the canonical JSON without the thread cap and paths.
std::string config_hash(const WorkspaceConfig& config);

}  // namespace lumirec
