#include <algorithm>
#include <map>
#include <numeric>

#include "lumirec/models.hpp"

namespace lumirec::models {

TrainedModel fit(const ModelSpec& spec, const Dataset& train) {
  switch (spec.family) {
    case Family::kKnn: return knn_fit(train, spec.n_neighbors);
    case Family::kRandomForest: return rf_fit(train, spec);
    case Family::kGradientBoost: return gbt_fit(train, spec);
  }
  throw Error(ErrorKind::kInternal, "unknown family");
}

std::vector<int> predict(const TrainedModel& model, const Dataset& data) {
  return std::visit(
      [&](const auto& m) -> std::vector<int> {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, KnnModel>) {
          return knn_predict(m, data);
        } else if constexpr (std::is_same_v<T, ForestModel>) {
          return rf_predict(m, data);
        } else {
          return gbt_predict(m, data);
        }
      },
      model);
}

ModelSpec spec_of(const TrainedModel& model) {
  return std::visit(
      [](const auto& m) -> ModelSpec {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, KnnModel>) {
          ModelSpec s;
          s.family = Family::kKnn;
          s.n_neighbors = m.k;
          return s;
        } else {
          return m.spec;
        }
      },
      model);
}

namespace {

bool depth_less(int a, int b) {
  if (a == b) return false;
  if (a == kUnboundedDepth) return false;
  if (b == kUnboundedDepth) return true;
  return a < b;
}

template <typename T, typename Less>
std::vector<T> sorted_unique(std::vector<T> v, Less less) {
  std::sort(v.begin(), v.end(), less);
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

std::vector<ModelSpec> expand_grid(Family family, const ParamGrid& grid, std::uint64_t seed) {
  std::vector<ModelSpec> out;
  ModelSpec base;
  base.family = family;
  base.seed = seed;
  if (family == Family::kKnn) {
    for (int k : sorted_unique(grid.n_neighbors, std::less<>())) {
      if (k < 1) throw Error(ErrorKind::kInvalidArgument, "n_neighbors must be >= 1");
      ModelSpec s = base;
      s.n_neighbors = k;
      out.push_back(s);
    }
  } else {
    const auto trees = sorted_unique(grid.n_trees, std::less<>());
    const auto depths = sorted_unique(grid.max_depth, depth_less);
    std::vector<double> rates{0.1};
    if (family == Family::kGradientBoost) rates = sorted_unique(grid.learning_rate, std::less<>());
    for (int t : trees) {
      if (t < 1) throw Error(ErrorKind::kInvalidArgument, "n_trees must be >= 1");
      for (int d : depths) {
        for (double lr : rates) {
          ModelSpec s = base;
          s.n_trees = t;
          s.max_depth = d;
          s.learning_rate = lr;
          out.push_back(s);
        }
      }
    }
  }
  if (out.empty()) throw Error(ErrorKind::kInvalidArgument, "empty parameter grid");
  return out;
}

GridSearchResult grid_search(Family family, const ParamGrid& grid, const Dataset& train,
                             const GridSearchOptions& options) {
  train.validate();
  GridSearchResult result;
  result.points = expand_grid(family, grid, derive_seed(options.seed, "model"));

  Dataset data;
  const Dataset* used = &train;
  if (options.max_rows > 0 && train.rows > options.max_rows) {
    std::vector<std::size_t> order(train.rows);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(options.seed, "subsample"));
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(options.max_rows);
    std::sort(order.begin(), order.end());
    data = train.subset(order);
    used = &data;
  }
  result.rows_used = used->rows;
  const int folds = options.folds;
  const std::vector<int> fold_of =
      assign_folds(used->y, folds, derive_seed(options.seed, "folds"), &result.stratified);

  // Points sharing everything but the staged parameter (trees or k) share one fit.
  std::map<std::pair<int, double>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < result.points.size(); ++i) {
    const ModelSpec& s = result.points[i];
    const auto key = family == Family::kKnn ? std::pair<int, double>{0, 0.0}
                                            : std::pair<int, double>{s.max_depth, s.learning_rate};
    groups[key].push_back(i);
  }
  std::vector<std::vector<std::size_t>> group_list;
  for (auto& [key, members] : groups) group_list.push_back(members);

  const std::size_t tasks = group_list.size() * static_cast<std::size_t>(folds);
  std::vector<std::vector<double>> task_acc(tasks);
  parallel_for(tasks, [&](std::size_t task) {
    const auto& members = group_list[task / folds];
    const int fold = static_cast<int>(task % folds);
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < used->rows; ++i) (fold_of[i] == fold ? te : tr).push_back(i);
    const Dataset dtr = used->subset(tr);
    const Dataset dte = used->subset(te);
    auto& acc = task_acc[task];
    acc.resize(members.size());
    if (family == Family::kKnn) {
      std::vector<int> ks;
      for (std::size_t m : members) {
        ks.push_back(std::min<int>(result.points[m].n_neighbors, static_cast<int>(dtr.rows)));
      }
      const KnnModel model = knn_fit(dtr, *std::max_element(ks.begin(), ks.end()));
      const auto preds = knn_predict_many(model, dte, ks);
      for (std::size_t j = 0; j < members.size(); ++j) acc[j] = accuracy(dte.y, preds[j]);
      return;
    }
    ModelSpec spec = result.points[members.front()];
    for (std::size_t m : members) spec.n_trees = std::max(spec.n_trees, result.points[m].n_trees);
    if (family == Family::kRandomForest) {
      const ForestModel model = rf_fit(dtr, spec);
      for (std::size_t j = 0; j < members.size(); ++j) {
        acc[j] = accuracy(dte.y, rf_predict(model, dte, result.points[members[j]].n_trees));
      }
    } else {
      const GbtModel model = gbt_fit(dtr, spec);
      for (std::size_t j = 0; j < members.size(); ++j) {
        acc[j] = accuracy(dte.y, gbt_predict(model, dte, result.points[members[j]].n_trees));
      }
    }
  });

  result.mean_accuracy.assign(result.points.size(), 0.0);
  std::vector<std::vector<double>> per_point(result.points.size(),
                                             std::vector<double>(folds, 0.0));
  for (std::size_t task = 0; task < tasks; ++task) {
    const auto& members = group_list[task / folds];
    const int fold = static_cast<int>(task % folds);
    for (std::size_t j = 0; j < members.size(); ++j) per_point[members[j]][fold] = task_acc[task][j];
  }
  for (std::size_t p = 0; p < result.points.size(); ++p) {
    double sum = 0.0;
    for (int f = 0; f < folds; ++f) {
      result.table.push_back({p, f, per_point[p][f]});
      sum += per_point[p][f];
    }
    result.mean_accuracy[p] = sum / folds;
  }
  std::size_t best = 0;
  for (std::size_t p = 1; p < result.points.size(); ++p) {
    if (result.mean_accuracy[p] > result.mean_accuracy[best]) best = p;
  }
  result.best = result.points[best];
  return result;
}

}  // namespace lumirec::models
