#include <algorithm>
#include <cmath>

#include "lumirec/models.hpp"

namespace lumirec::models {

namespace {

// Mean softmax cross-entropy of scores (row-major n x k) against labels.
double mean_log_loss(const std::vector<double>& scores, std::span<const int> y, std::size_t k) {
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double* s = scores.data() + i * k;
    const double mx = *std::max_element(s, s + k);
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(s[c] - mx);
    total += mx + std::log(z) - s[y[i]];
  }
  return y.empty() ? 0.0 : total / static_cast<double>(y.size());
}

}  // namespace

GbtModel gbt_fit(const Dataset& train, const ModelSpec& spec) {
  train.validate();
  if (spec.n_trees < 1) throw Error(ErrorKind::kInvalidArgument, "n_trees must be >= 1");
  if (spec.learning_rate < 0) throw Error(ErrorKind::kInvalidArgument, "negative learning rate");
  GbtModel model;
  model.spec = spec;
  model.spec.family = Family::kGradientBoost;
  model.class_count = train.class_count;
  model.feature_names = train.feature_names;

  const std::size_t n = train.rows;
  const std::size_t k = static_cast<std::size_t>(std::max(train.class_count, 1));
  std::vector<double> prior(k, 0.0);
  for (int label : train.y) prior[label] += 1.0;
  model.base_score.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    model.base_score[c] = std::log(std::max(prior[c] / static_cast<double>(n), 1e-12));
  }

  const BinnedColumns bins = BinnedColumns::build(train);
  TreeParams params;
  params.max_depth = spec.max_depth;
  params.min_leaf = spec.min_leaf;

  std::vector<double> scores(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(model.base_score.begin(), model.base_score.end(), scores.begin() + i * k);
  }
  double loss = mean_log_loss(scores, train.y, k);
  model.train_loss.push_back(loss);

  std::vector<double> prob(n * k);
  std::vector<double> delta(n * k);
  std::vector<double> candidate(n * k);
  for (int round = 0; round < spec.n_trees; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* s = scores.data() + i * k;
      double* p = prob.data() + i * k;
      const double mx = *std::max_element(s, s + k);
      double z = 0.0;
      for (std::size_t c = 0; c < k; ++c) z += (p[c] = std::exp(s[c] - mx));
      for (std::size_t c = 0; c < k; ++c) p[c] /= z;
    }
    std::vector<DecisionTree> trees(k);
    parallel_for(k, [&](std::size_t c) {
      std::vector<double> residual(n), hessian(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double p = prob[i * k + c];
        residual[i] = (train.y[i] == static_cast<int>(c) ? 1.0 : 0.0) - p;
        hessian[i] = p * (1.0 - p);
      }
      std::vector<int> leaf;
      trees[c] = regression_tree_fit(train, bins, residual, hessian, params, &leaf);
      for (std::size_t i = 0; i < n; ++i) delta[i * k + c] = trees[c].nodes[leaf[i]].value;
    });

    // Halve the step until the training loss does not increase.
    double scale = spec.learning_rate;
    double next_loss = loss;
    for (int attempt = 0; attempt < 60 && scale > 0.0; ++attempt) {
      for (std::size_t j = 0; j < n * k; ++j) candidate[j] = scores[j] + scale * delta[j];
      next_loss = mean_log_loss(candidate, train.y, k);
      if (next_loss <= loss) break;
      scale *= 0.5;
    }
    if (!(next_loss <= loss)) scale = 0.0;
    if (scale > 0.0) {
      scores.swap(candidate);
      loss = next_loss;
    }
    model.rounds.push_back(std::move(trees));
    model.round_scale.push_back(scale);
    model.train_loss.push_back(loss);
  }
  return model;
}

std::vector<double> gbt_scores(const GbtModel& model, std::span<const double> row,
                               int round_limit) {
  std::vector<double> s = model.base_score;
  const std::size_t used = round_limit > 0
                               ? std::min<std::size_t>(round_limit, model.rounds.size())
                               : model.rounds.size();
  for (std::size_t m = 0; m < used; ++m) {
    const double scale = model.round_scale[m];
    if (scale == 0.0) continue;
    for (std::size_t c = 0; c < s.size(); ++c) {
      s[c] += scale * model.rounds[m][c].predict_value(row);
    }
  }
  return s;
}

std::vector<int> gbt_predict(const GbtModel& model, const Dataset& data, int round_limit) {
  if (model.base_score.empty()) throw Error(ErrorKind::kUntrainedModel, "gbt model is not trained");
  if (!model.feature_names.empty() && data.cols != model.feature_names.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "gbt query has wrong column count");
  }
  std::vector<int> out(data.rows, 0);
  const std::size_t chunk = 1024;
  parallel_for((data.rows + chunk - 1) / chunk, [&](std::size_t c) {
    const std::size_t end = std::min(data.rows, (c + 1) * chunk);
    for (std::size_t i = c * chunk; i < end; ++i) {
      const auto s = gbt_scores(model, data.row(i), round_limit);
      out[i] = static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
    }
  });
  return out;
}

}  // namespace lumirec::models
