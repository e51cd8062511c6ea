#include <algorithm>
#include <cmath>

#include "lumirec/models.hpp"

namespace lumirec::models {

ForestModel rf_fit(const Dataset& train, const ModelSpec& spec) {
  train.validate();
  if (spec.n_trees < 1) throw Error(ErrorKind::kInvalidArgument, "n_trees must be >= 1");
  ForestModel model;
  model.spec = spec;
  model.spec.family = Family::kRandomForest;
  model.class_count = train.class_count;
  model.feature_names = train.feature_names;
  model.trees.resize(static_cast<std::size_t>(spec.n_trees));

  const BinnedColumns bins = BinnedColumns::build(train);
  TreeParams params;
  params.max_depth = spec.max_depth;
  params.min_leaf = spec.min_leaf;
  params.feature_subset =
      static_cast<int>(std::ceil(std::sqrt(static_cast<double>(train.cols))));

  parallel_for(model.trees.size(), [&](std::size_t t) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(t)));
    std::vector<std::uint32_t> weights;
    if (spec.bootstrap) {
      weights.assign(train.rows, 0);
      std::uniform_int_distribution<std::size_t> draw(0, train.rows - 1);
      for (std::size_t i = 0; i < train.rows; ++i) ++weights[draw(rng)];
    }
    model.trees[t] = tree_fit(train, bins, params, rng, weights);
  });
  return model;
}

std::vector<int> rf_predict(const ForestModel& model, const Dataset& data, int tree_limit) {
  if (model.trees.empty()) throw Error(ErrorKind::kUntrainedModel, "forest is not trained");
  if (!model.feature_names.empty() && data.cols != model.feature_names.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "forest query has wrong column count");
  }
  const std::size_t used =
      tree_limit > 0 ? std::min<std::size_t>(tree_limit, model.trees.size()) : model.trees.size();
  const std::size_t classes = static_cast<std::size_t>(std::max(model.class_count, 1));
  std::vector<int> out(data.rows, 0);
  const std::size_t chunk = 1024;
  parallel_for((data.rows + chunk - 1) / chunk, [&](std::size_t c) {
    std::vector<int> votes(classes);
    const std::size_t end = std::min(data.rows, (c + 1) * chunk);
    for (std::size_t i = c * chunk; i < end; ++i) {
      std::fill(votes.begin(), votes.end(), 0);
      const auto row = data.row(i);
      for (std::size_t t = 0; t < used; ++t) ++votes[model.trees[t].predict_label(row)];
      out[i] = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    }
  });
  return out;
}

}  // namespace lumirec::models
