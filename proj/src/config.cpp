#include "lumirec/config.hpp"

#include "lumirec/model_io.hpp"

namespace lumirec {

using nlohmann::json;

DateRange WorkspaceConfig::window() const { return {parse_date(from), parse_date(to)}; }

void WorkspaceConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::kInvalidArgument, what); };
  if (window().empty()) fail("study window is empty");
  if (scene_count < 2) fail("scene_count must be >= 2");
  if (routine.merge_gap < 0 || routine.min_len < 1) fail("routine params out of range");
  const auto& c = clustering;
  if (c.k_min < 1 || c.k_max < c.k_min) fail("clustering k range invalid");
  if (c.n_init < 1 || c.max_iter < 1 || !(c.tol > 0)) fail("clustering params out of range");
  if (!(c.lower_quantile >= 0 && c.lower_quantile <= c.upper_quantile && c.upper_quantile <= 1)) {
    fail("winsorization quantiles out of range");
  }
  if (training.folds < 2) fail("training folds must be >= 2");
  if (!(training.test_frac > 0 && training.test_frac < 1)) fail("test_frac must be in (0, 1)");
  if (coldstart.iterations < 1 || coldstart.folds < 2) fail("cold start params out of range");
  for (double s : coldstart.scenarios) {
    if (!(s > 0 && s < 1)) fail("cold start scenario outside (0, 1)");
  }
}

namespace {

json grid_json(const models::ParamGrid& g) {
  return json{{"n_trees", g.n_trees},
              {"max_depth", g.max_depth},
              {"n_neighbors", g.n_neighbors},
              {"learning_rate", g.learning_rate}};
}

json paths_json(const WorkspacePaths& p) {
  return json{{"events", p.events},     {"ground_truth", p.ground_truth},
              {"state", p.state},       {"routine", p.routine},
              {"features", p.features}, {"clusters", p.clusters},
              {"models", p.models},     {"reports", p.reports},
              {"manifests", p.manifests}};
}

json hashed_json(const WorkspaceConfig& c) {
  return json{{"personas", c.personas},
              {"from", c.from},
              {"to", c.to},
              {"scene_count", c.scene_count},
              {"seed", c.seed},
              {"routine", {{"merge_gap", c.routine.merge_gap}, {"min_len", c.routine.min_len}}},
              {"clustering",
               {{"k_min", c.clustering.k_min},
                {"k_max", c.clustering.k_max},
                {"n_init", c.clustering.n_init},
                {"max_iter", c.clustering.max_iter},
                {"tol", c.clustering.tol},
                {"min_elbow_reduction", c.clustering.min_elbow_reduction},
                {"lower_quantile", c.clustering.lower_quantile},
                {"upper_quantile", c.clustering.upper_quantile}}},
              {"training",
               {{"grid", grid_json(c.training.grid)},
                {"folds", c.training.folds},
                {"grid_max_rows", c.training.grid_max_rows},
                {"test_frac", c.training.test_frac}}},
              {"coldstart",
               {{"scenarios", c.coldstart.scenarios},
                {"iterations", c.coldstart.iterations},
                {"folds", c.coldstart.folds},
                {"spec", models::spec_to_json(c.coldstart.spec)}}}};
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json to_json(const WorkspaceConfig& config) {
  json j = hashed_json(config);
  j["paths"] = paths_json(config.paths);
  j["threads"] = config.threads;
  return j;
}

WorkspaceConfig config_from_json(const json& j) {
  WorkspaceConfig c;
  try {
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      read(p, "events", c.paths.events);
      read(p, "ground_truth", c.paths.ground_truth);
      read(p, "state", c.paths.state);
      read(p, "routine", c.paths.routine);
      read(p, "features", c.paths.features);
      read(p, "clusters", c.paths.clusters);
      read(p, "models", c.paths.models);
      read(p, "reports", c.paths.reports);
      read(p, "manifests", c.paths.manifests);
    }
    read(j, "personas", c.personas);
    read(j, "from", c.from);
    read(j, "to", c.to);
    read(j, "scene_count", c.scene_count);
    read(j, "seed", c.seed);
    read(j, "threads", c.threads);
    if (j.contains("routine")) {
      read(j.at("routine"), "merge_gap", c.routine.merge_gap);
      read(j.at("routine"), "min_len", c.routine.min_len);
    }
    if (j.contains("clustering")) {
      const auto& k = j.at("clustering");
      read(k, "k_min", c.clustering.k_min);
      read(k, "k_max", c.clustering.k_max);
      read(k, "n_init", c.clustering.n_init);
      read(k, "max_iter", c.clustering.max_iter);
      read(k, "tol", c.clustering.tol);
      read(k, "min_elbow_reduction", c.clustering.min_elbow_reduction);
      read(k, "lower_quantile", c.clustering.lower_quantile);
      read(k, "upper_quantile", c.clustering.upper_quantile);
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      if (t.contains("grid")) {
        const auto& g = t.at("grid");
        read(g, "n_trees", c.training.grid.n_trees);
        read(g, "max_depth", c.training.grid.max_depth);
        read(g, "n_neighbors", c.training.grid.n_neighbors);
        read(g, "learning_rate", c.training.grid.learning_rate);
      }
      read(t, "folds", c.training.folds);
      read(t, "grid_max_rows", c.training.grid_max_rows);
      read(t, "test_frac", c.training.test_frac);
    }
    if (j.contains("coldstart")) {
      const auto& s = j.at("coldstart");
      read(s, "scenarios", c.coldstart.scenarios);
      read(s, "iterations", c.coldstart.iterations);
      read(s, "folds", c.coldstart.folds);
      if (s.contains("spec")) c.coldstart.spec = models::spec_from_json(s.at("spec"));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidArgument, std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string config_hash(const WorkspaceConfig& config) {
  return fnv1a_hex(hashed_json(config).dump());
}

}  // namespace lumirec
