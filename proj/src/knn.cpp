#include <algorithm>
#include <cmath>

#include "lumirec/models.hpp"

namespace lumirec::models {

KnnModel knn_fit(const Dataset& train, int k) {
  train.validate();
  if (k < 1 || static_cast<std::size_t>(k) > train.rows) {
    throw Error(ErrorKind::kKTooLarge, "k must lie in [1, n]");
  }
  KnnModel m;
  m.k = k;
  m.class_count = train.class_count;
  m.feature_names = train.feature_names;
  m.source_cols = train.cols;
  const double n = static_cast<double>(train.rows);
  for (std::size_t j = 0; j < train.cols; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < train.rows; ++i) mean += train.at(i, j);
    mean /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < train.rows; ++i) {
      const double d = train.at(i, j) - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / n);
    if (!(sd > 1e-12)) continue;
    m.kept_features.push_back(j);
    m.mean.push_back(mean);
    m.scale.push_back(sd);
  }
  const std::size_t d = m.kept_features.size();
  m.train_x.resize(train.rows * d);
  for (std::size_t i = 0; i < train.rows; ++i) {
    for (std::size_t f = 0; f < d; ++f) {
      m.train_x[i * d + f] = (train.at(i, m.kept_features[f]) - m.mean[f]) / m.scale[f];
    }
  }
  m.train_y = train.y;
  return m;
}

namespace {

void check_query(const KnnModel& model, const Dataset& data) {
  if (model.train_y.empty()) throw Error(ErrorKind::kUntrainedModel, "knn model is not trained");
  if (data.cols != model.source_cols) {
    throw Error(ErrorKind::kDimensionMismatch, "knn query has wrong column count");
  }
}

}  // namespace

std::vector<std::vector<int>> knn_predict_many(const KnnModel& model, const Dataset& data,
                                               std::span<const int> ks) {
  check_query(model, data);
  for (int k : ks) {
    if (k < 1 || k > model.k) throw Error(ErrorKind::kKTooLarge, "requested k exceeds fitted k");
  }
  const std::size_t d = model.kept_features.size();
  const std::size_t n_train = model.train_rows();
  const std::size_t k_max = static_cast<std::size_t>(model.k);
  const std::size_t classes = static_cast<std::size_t>(std::max(model.class_count, 1));
  std::vector<std::vector<int>> out(ks.size(), std::vector<int>(data.rows, 0));

  const std::size_t chunk = 256;
  const std::size_t chunks = (data.rows + chunk - 1) / chunk;
  parallel_for(chunks, [&](std::size_t c) {
    std::vector<double> q(d);
    // Sorted by (distance, row); ties keep the lower training row.
    std::vector<std::pair<double, std::size_t>> best;
    best.reserve(k_max + 1);
    std::vector<int> votes(classes);
    const std::size_t end = std::min(data.rows, (c + 1) * chunk);
    for (std::size_t i = c * chunk; i < end; ++i) {
      for (std::size_t f = 0; f < d; ++f) {
        q[f] = (data.at(i, model.kept_features[f]) - model.mean[f]) / model.scale[f];
      }
      best.clear();
      for (std::size_t t = 0; t < n_train; ++t) {
        const double* row = model.train_x.data() + t * d;
        double dist = 0.0;
        for (std::size_t f = 0; f < d; ++f) {
          const double diff = row[f] - q[f];
          dist += diff * diff;
        }
        if (best.size() == k_max && !(dist < best.back().first)) continue;
        auto pos = std::upper_bound(best.begin(), best.end(), std::make_pair(dist, t));
        best.insert(pos, {dist, t});
        if (best.size() > k_max) best.pop_back();
      }
      for (std::size_t r = 0; r < ks.size(); ++r) {
        std::fill(votes.begin(), votes.end(), 0);
        const std::size_t k = static_cast<std::size_t>(ks[r]);
        for (std::size_t j = 0; j < k; ++j) ++votes[model.train_y[best[j].second]];
        out[r][i] = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
      }
    }
  });
  return out;
}

std::vector<int> knn_predict(const KnnModel& model, const Dataset& data) {
  const int k = model.k;
  return std::move(knn_predict_many(model, data, std::span<const int>(&k, 1)).front());
}

}  // namespace lumirec::models
