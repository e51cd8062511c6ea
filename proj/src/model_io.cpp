#include "lumirec/model_io.hpp"

namespace lumirec::models {

using nlohmann::json;

json spec_to_json(const ModelSpec& spec) {
  return json{{"family", std::string(to_string(spec.family))},
              {"n_trees", spec.n_trees},
              {"max_depth", spec.max_depth},
              {"n_neighbors", spec.n_neighbors},
              {"learning_rate", spec.learning_rate},
              {"bootstrap", spec.bootstrap},
              {"min_leaf", spec.min_leaf},
              {"seed", spec.seed}};
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec s;
  s.family = parse_family(j.at("family").get<std::string>());
  s.n_trees = j.value("n_trees", s.n_trees);
  s.max_depth = j.value("max_depth", s.max_depth);
  s.n_neighbors = j.value("n_neighbors", s.n_neighbors);
  s.learning_rate = j.value("learning_rate", s.learning_rate);
  s.bootstrap = j.value("bootstrap", s.bootstrap);
  s.min_leaf = j.value("min_leaf", s.min_leaf);
  s.seed = j.value("seed", s.seed);
  return s;
}

namespace {

json tree_to_json(const DecisionTree& tree, bool regression) {
  json feature = json::array(), threshold = json::array(), left = json::array(),
       right = json::array(), leaf = json::array();
  for (const auto& n : tree.nodes) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    if (regression) {
      leaf.push_back(n.value);
    } else {
      leaf.push_back(n.label);
    }
  }
  return json{{"feature", feature},   {"threshold", threshold},
              {"left", left},         {"right", right},
              {regression ? "value" : "label", leaf}, {"importance", tree.importance}};
}

DecisionTree tree_from_json(const json& j, bool regression) {
  DecisionTree t;
  const auto& feature = j.at("feature");
  const auto& threshold = j.at("threshold");
  const auto& left = j.at("left");
  const auto& right = j.at("right");
  const auto& leaf = j.at(regression ? "value" : "label");
  const std::size_t n = feature.size();
  if (threshold.size() != n || left.size() != n || right.size() != n || leaf.size() != n || n == 0) {
    throw Error(ErrorKind::kInvalidArgument, "malformed tree in model artifact");
  }
  t.nodes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& node = t.nodes[i];
    node.feature = feature[i].get<int>();
    node.threshold = threshold[i].get<double>();
    node.left = left[i].get<int>();
    node.right = right[i].get<int>();
    if (regression) {
      node.value = leaf[i].get<double>();
    } else {
      node.label = leaf[i].get<int>();
      node.value = node.label;
    }
    if (node.feature >= 0 &&
        (node.left <= static_cast<int>(i) || node.right <= static_cast<int>(i) ||
         node.left >= static_cast<int>(n) || node.right >= static_cast<int>(n))) {
      throw Error(ErrorKind::kInvalidArgument, "tree child index out of range");
    }
  }
  t.importance = j.value("importance", std::vector<double>{});
  return t;
}

}  // namespace

json model_to_json(const TrainedModel& model, const json& encoders) {
  json j;
  j["format_version"] = kModelFormatVersion;
  const ModelSpec spec = spec_of(model);
  j["family"] = std::string(to_string(spec.family));
  j["params"] = spec_to_json(spec);
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        j["class_count"] = m.class_count;
        j["feature_names"] = m.feature_names;
        if constexpr (std::is_same_v<T, KnnModel>) {
          j["train_summary"] = json{{"source_cols", m.source_cols},
                                    {"kept_features", m.kept_features},
                                    {"mean", m.mean},
                                    {"scale", m.scale},
                                    {"train_x", m.train_x},
                                    {"train_y", m.train_y}};
        } else if constexpr (std::is_same_v<T, ForestModel>) {
          json trees = json::array();
          for (const auto& t : m.trees) trees.push_back(tree_to_json(t, false));
          j["trees"] = std::move(trees);
        } else {
          json rounds = json::array();
          for (const auto& round : m.rounds) {
            json per_class = json::array();
            for (const auto& t : round) per_class.push_back(tree_to_json(t, true));
            rounds.push_back(std::move(per_class));
          }
          j["base_score"] = m.base_score;
          j["round_scale"] = m.round_scale;
          j["train_loss"] = m.train_loss;
          j["trees"] = std::move(rounds);
        }
      },
      model);
  j["encoders"] = encoders;
  return j;
}

TrainedModel model_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion) {
      throw Error(ErrorKind::kInvalidArgument, "unsupported model format_version");
    }
    const ModelSpec spec = spec_from_json(j.at("params"));
    const int classes = j.at("class_count").get<int>();
    const auto names = j.at("feature_names").get<std::vector<std::string>>();
    switch (spec.family) {
      case Family::kKnn: {
        KnnModel m;
        const auto& s = j.at("train_summary");
        m.k = spec.n_neighbors;
        m.class_count = classes;
        m.feature_names = names;
        m.source_cols = s.at("source_cols").get<std::size_t>();
        m.kept_features = s.at("kept_features").get<std::vector<std::size_t>>();
        m.mean = s.at("mean").get<std::vector<double>>();
        m.scale = s.at("scale").get<std::vector<double>>();
        m.train_x = s.at("train_x").get<std::vector<double>>();
        m.train_y = s.at("train_y").get<std::vector<int>>();
        if (m.train_x.size() != m.train_y.size() * m.kept_features.size()) {
          throw Error(ErrorKind::kInvalidArgument, "malformed knn training summary");
        }
        return m;
      }
      case Family::kRandomForest: {
        ForestModel m;
        m.spec = spec;
        m.class_count = classes;
        m.feature_names = names;
        for (const auto& t : j.at("trees")) m.trees.push_back(tree_from_json(t, false));
        return m;
      }
      case Family::kGradientBoost: {
        GbtModel m;
        m.spec = spec;
        m.class_count = classes;
        m.feature_names = names;
        m.base_score = j.at("base_score").get<std::vector<double>>();
        m.round_scale = j.at("round_scale").get<std::vector<double>>();
        m.train_loss = j.value("train_loss", std::vector<double>{});
        for (const auto& round : j.at("trees")) {
          std::vector<DecisionTree> per_class;
          for (const auto& t : round) per_class.push_back(tree_from_json(t, true));
          m.rounds.push_back(std::move(per_class));
        }
        if (m.rounds.size() != m.round_scale.size()) {
          throw Error(ErrorKind::kInvalidArgument, "gbt round count mismatch");
        }
        return m;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInvalidArgument, std::string("malformed model artifact: ") + e.what());
  }
  throw Error(ErrorKind::kInternal, "unreachable");
}

}  // namespace lumirec::models
