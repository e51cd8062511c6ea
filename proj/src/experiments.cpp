#include <algorithm>
#include <cmath>
#include <set>

#include "lumirec/eval.hpp"

namespace lumirec::eval {

using features::FeatureRow;

namespace {

MetricReport score(const models::TrainedModel& model, const models::Dataset& test,
                   int class_count, std::vector<int>* predicted = nullptr) {
  std::vector<int> pred = models::predict(model, test);
  MetricReport r = metrics(confusion(test.y, pred, class_count));
  if (predicted) *predicted = std::move(pred);
  return r;
}

std::vector<std::size_t> pick(std::span<const std::size_t> base, std::span<const std::size_t> local) {
  std::vector<std::size_t> out;
  out.reserve(local.size());
  for (std::size_t i : local) out.push_back(base[i]);
  return out;
}

}  // namespace

Split experiment_split(std::size_t n, double test_frac, std::uint64_t seed) {
  return split_rows(n, test_frac, derive_seed(seed, "split"));
}

PooledReport run_pooled_experiment(const std::vector<FeatureRow>& rows, int class_count,
                                   std::span<const models::ModelSpec> specs, std::uint64_t seed,
                                   double test_frac) {
  if (rows.empty()) throw Error(ErrorKind::kEmptyMatrix, "no feature rows");
  const Split split = experiment_split(rows.size(), test_frac, seed);
  if (split.test.empty() || split.train.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "split leaves an empty side");
  }
  const models::Dataset train = features::to_dataset(rows, split.train, class_count);
  const models::Dataset test = features::to_dataset(rows, split.test, class_count);
  PooledReport out;
  out.train_rows = train.rows;
  out.test_rows = test.rows;
  out.families.resize(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    FamilyResult& fr = out.families[i];
    fr.spec = specs[i];
    const auto model = models::fit(specs[i], train);
    fr.truth = test.y;
    fr.report = score(model, test, class_count, &fr.predicted);
  }
  return out;
}

PooledReport evaluate_pooled(const std::vector<FeatureRow>& rows, int class_count,
                             std::span<const models::TrainedModel> trained, std::uint64_t seed,
                             double test_frac) {
  if (rows.empty()) throw Error(ErrorKind::kEmptyMatrix, "no feature rows");
  const Split split = experiment_split(rows.size(), test_frac, seed);
  if (split.test.empty()) throw Error(ErrorKind::kInvalidArgument, "split leaves no test rows");
  const models::Dataset test = features::to_dataset(rows, split.test, class_count);
  PooledReport out;
  out.train_rows = split.train.size();
  out.test_rows = test.rows;
  for (const auto& model : trained) {
    FamilyResult fr;
    fr.spec = models::spec_of(model);
    fr.truth = test.y;
    fr.report = score(model, test, class_count, &fr.predicted);
    out.families.push_back(std::move(fr));
  }
  return out;
}

ClusteredReport run_clustered_experiment(const std::vector<FeatureRow>& rows, int class_count,
                                         const ClusterMap& cluster_of,
                                         const models::ModelSpec& spec, std::uint64_t seed,
                                         double test_frac) {
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto it = cluster_of.find({rows[i].household, rows[i].room});
    if (it != cluster_of.end()) members[it->second].push_back(i);
  }
  ClusteredReport out;
  out.spec = spec;
  std::vector<std::pair<MetricReport, double>> weighted;
  for (const auto& [cluster, idx] : members) {
    const Split split = experiment_split(idx.size(), test_frac, seed);
    if (split.test.empty() || split.train.empty()) {
      out.skipped_clusters.push_back(cluster);
      continue;
    }
    const models::Dataset train = features::to_dataset(rows, pick(idx, split.train), class_count);
    const models::Dataset test = features::to_dataset(rows, pick(idx, split.test), class_count);
    ClusterResult cr;
    cr.cluster = cluster;
    cr.rows = idx.size();
    cr.train_rows = train.rows;
    cr.test_rows = test.rows;
    cr.report = score(models::fit(spec, train), test, class_count);
    weighted.emplace_back(cr.report, static_cast<double>(cr.rows));
    out.clusters.push_back(std::move(cr));
  }
  if (weighted.empty()) throw Error(ErrorKind::kInvalidArgument, "no cluster could be evaluated");
  out.weighted = weighted_cluster_aggregate(weighted);
  return out;
}

namespace {

struct Accumulator {
  double sum = 0.0;
  double weight = 0.0;

  void add(double value, double w) {
    sum += value * w;
    weight += w;
  }
  double mean() const { return weight > 0 ? sum / weight : 0.0; }
};

void evaluate_part(const std::vector<FeatureRow>& rows, int class_count,
                   const ColdStartOptions& options, std::uint64_t seed,
                   const std::vector<std::size_t>& train_idx,
                   const std::vector<std::size_t>& test_idx, Accumulator& train_cv,
                   Accumulator& test_cv, Accumulator& independent) {
  const std::size_t folds = static_cast<std::size_t>(options.folds);
  models::Dataset train, test;
  if (!train_idx.empty()) train = features::to_dataset(rows, train_idx, class_count);
  if (!test_idx.empty()) test = features::to_dataset(rows, test_idx, class_count);
  if (train.rows >= folds) {
    train_cv.add(cross_validate(options.spec, train, options.folds,
                                derive_seed(seed, "train-cv")).mean,
                 static_cast<double>(train.rows));
  }
  if (test.rows >= folds) {
    test_cv.add(cross_validate(options.spec, test, options.folds,
                               derive_seed(seed, "test-cv")).mean,
                static_cast<double>(test.rows));
  }
  if (train.rows > 0 && test.rows > 0) {
    models::ModelSpec s = options.spec;
    if (s.family == models::Family::kKnn) {
      s.n_neighbors = std::min<int>(s.n_neighbors, static_cast<int>(train.rows));
    }
    const auto model = models::fit(s, train);
    independent.add(models::accuracy(test.y, models::predict(model, test)),
                    static_cast<double>(test.rows));
  }
}

}  // namespace

ColdStartReport run_cold_start(const std::vector<FeatureRow>& rows, int class_count,
                               const ColdStartOptions& options,
                               const ClusterMap* assigned_cluster) {
  if (options.clustered && assigned_cluster == nullptr) {
    throw Error(ErrorKind::kInvalidArgument, "clustered cold start needs cluster assignments");
  }
  if (options.iterations < 1 || options.scenarios.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "cold start needs scenarios and iterations");
  }
  std::vector<std::string> household_of_row(rows.size());
  std::set<std::string> households;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    household_of_row[i] = rows[i].household;
    households.insert(rows[i].household);
  }
  for (double s : options.scenarios) {
    if (!(s > 0.0 && s < 1.0)) throw Error(ErrorKind::kInvalidArgument, "scenario outside (0, 1)");
    if (static_cast<double>(households.size()) < std::ceil(1.0 / s)) {
      throw Error(ErrorKind::kInsufficientHouseholds, "too few households for the test share");
    }
  }
  std::vector<int> cluster_of_row(rows.size(), -1);
  if (options.clustered) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto it = assigned_cluster->find({rows[i].household, rows[i].room});
      if (it != assigned_cluster->end()) cluster_of_row[i] = it->second;
    }
  }

  ColdStartReport out;
  out.clustered = options.clustered;
  const std::size_t per = static_cast<std::size_t>(options.iterations);
  out.iterations.resize(options.scenarios.size() * per);
  parallel_for(out.iterations.size(), [&](std::size_t task) {
    const std::size_t s_idx = task / per;
    const int iteration = static_cast<int>(task % per);
    const std::uint64_t seed =
        derive_seed(derive_seed(options.seed, static_cast<std::uint64_t>(s_idx)),
                    static_cast<std::uint64_t>(iteration));
    const Split split = split_households(household_of_row, options.scenarios[s_idx], seed);
    ColdStartIteration& it = out.iterations[task];
    it.scenario = options.scenarios[s_idx];
    it.iteration = iteration;
    {
      std::set<std::string> tr, te;
      for (std::size_t i : split.train) tr.insert(rows[i].household);
      for (std::size_t i : split.test) te.insert(rows[i].household);
      for (const auto& h : te) {
        if (tr.count(h)) throw Error(ErrorKind::kInternal, "household on both sides of a split");
      }
      it.train_households = tr.size();
      it.test_households = te.size();
    }
    Accumulator train_cv, test_cv, independent;
    if (!options.clustered) {
      evaluate_part(rows, class_count, options, seed, split.train, split.test, train_cv, test_cv,
                    independent);
    } else {
      std::map<int, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> parts;
      for (std::size_t i : split.train) {
        if (cluster_of_row[i] >= 0) parts[cluster_of_row[i]].first.push_back(i);
      }
      for (std::size_t i : split.test) {
        if (cluster_of_row[i] >= 0) parts[cluster_of_row[i]].second.push_back(i);
      }
      for (const auto& [cluster, part] : parts) {
        evaluate_part(rows, class_count, options,
                      derive_seed(seed, static_cast<std::uint64_t>(cluster)), part.first,
                      part.second, train_cv, test_cv, independent);
      }
    }
    it.train_cv = train_cv.mean();
    it.test_cv = test_cv.mean();
    it.independent = independent.mean();
  });

  for (std::size_t s_idx = 0; s_idx < options.scenarios.size(); ++s_idx) {
    std::vector<double> a, b, c;
    for (std::size_t i = 0; i < per; ++i) {
      const auto& it = out.iterations[s_idx * per + i];
      a.push_back(it.train_cv);
      b.push_back(it.test_cv);
      c.push_back(it.independent);
    }
    out.scenarios.push_back({options.scenarios[s_idx], mean_std(a), mean_std(b), mean_std(c)});
  }
  return out;
}

}  // namespace lumirec::eval
