#include <algorithm>
#include <cmath>
#include <numeric>

#include "lumirec/models.hpp"

namespace lumirec::models {

int DecisionTree::leaf_of(std::span<const double> row) const {
  int node = 0;
  while (nodes[node].feature >= 0) {
    const TreeNode& n = nodes[node];
    node = row[n.feature] <= n.threshold ? n.left : n.right;
  }
  return node;
}

int DecisionTree::depth() const {
  if (nodes.empty()) return 0;
  int best = 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [node, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    if (nodes[node].feature >= 0) {
      stack.push_back({nodes[node].left, d + 1});
      stack.push_back({nodes[node].right, d + 1});
    }
  }
  return best;
}

BinnedColumns BinnedColumns::build(const Dataset& data) {
  BinnedColumns b;
  b.codes.resize(data.cols);
  b.values.resize(data.cols);
  std::vector<double> column(data.rows);
  for (std::size_t j = 0; j < data.cols; ++j) {
    for (std::size_t i = 0; i < data.rows; ++i) column[i] = data.at(i, j);
    std::vector<double> distinct = column;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    auto& codes = b.codes[j];
    codes.resize(data.rows);
    for (std::size_t i = 0; i < data.rows; ++i) {
      codes[i] = static_cast<std::uint32_t>(
          std::lower_bound(distinct.begin(), distinct.end(), column[i]) - distinct.begin());
    }
    b.values[j] = std::move(distinct);
  }
  return b;
}

namespace {

double split_threshold(const std::vector<double>& values, std::uint32_t left_bin,
                       std::uint32_t right_bin) {
  const double lo = values[left_bin];
  const double hi = values[right_bin];
  double mid = lo + (hi - lo) / 2.0;
  if (!(mid < hi)) mid = lo;
  return mid;
}

struct SplitChoice {
  bool found = false;
  int feature = -1;
  std::uint32_t left_bin = 0;  // rows with code <= left_bin go left
  double threshold = 0.0;
  double score = 0.0;
};

struct Task {
  int node;
  std::size_t lo;
  std::size_t hi;
  int depth;
};

// Partitions idx[lo, hi) so rows with code <= left_bin come first.
std::size_t partition_rows(std::vector<std::uint32_t>& idx, std::size_t lo, std::size_t hi,
                           const std::vector<std::uint32_t>& codes, std::uint32_t left_bin) {
  auto mid = std::stable_partition(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                                   idx.begin() + static_cast<std::ptrdiff_t>(hi),
                                   [&](std::uint32_t r) { return codes[r] <= left_bin; });
  return static_cast<std::size_t>(mid - idx.begin());
}

class ClassificationBuilder {
 public:
  ClassificationBuilder(const Dataset& data, const BinnedColumns& bins, const TreeParams& params,
                        Rng& rng, std::span<const std::uint32_t> weights)
      : data_(data), bins_(bins), params_(params), rng_(rng), weights_(weights),
        classes_(static_cast<std::size_t>(std::max(data.class_count, 1))) {
    std::size_t max_bins = 1;
    for (const auto& v : bins.values) max_bins = std::max(max_bins, v.size());
    hist_.assign(max_bins * classes_, 0);
    bin_total_.assign(max_bins, 0);
    features_.resize(data.cols);
    std::iota(features_.begin(), features_.end(), 0);
  }

  DecisionTree build() {
    DecisionTree tree;
    tree.importance.assign(data_.cols, 0.0);
    std::vector<std::uint32_t> idx;
    idx.reserve(data_.rows);
    for (std::size_t i = 0; i < data_.rows; ++i) {
      if (weight(i) > 0) idx.push_back(static_cast<std::uint32_t>(i));
    }
    tree.nodes.emplace_back();
    if (idx.empty()) return tree;
    double root_weight = 0.0;
    std::vector<Task> stack{{0, 0, idx.size(), 0}};
    std::vector<std::uint64_t> counts(classes_);
    while (!stack.empty()) {
      Task t = stack.back();
      stack.pop_back();
      std::fill(counts.begin(), counts.end(), 0);
      std::uint64_t total = 0;
      for (std::size_t r = t.lo; r < t.hi; ++r) {
        const std::uint32_t w = weight(idx[r]);
        counts[data_.y[idx[r]]] += w;
        total += w;
      }
      if (t.node == 0) root_weight = static_cast<double>(total);
      int label = 0;
      int nonzero = 0;
      for (std::size_t c = 0; c < classes_; ++c) {
        if (counts[c] > counts[label]) label = static_cast<int>(c);
        nonzero += counts[c] > 0;
      }
      tree.nodes[t.node].label = label;
      tree.nodes[t.node].value = static_cast<double>(label);
      const bool depth_reached = params_.max_depth >= 0 && t.depth >= params_.max_depth;
      const std::uint64_t min_leaf = static_cast<std::uint64_t>(std::max(params_.min_leaf, 1));
      if (nonzero <= 1 || depth_reached || total < 2 * min_leaf) continue;

      const SplitChoice split = find_split(idx, t.lo, t.hi, counts, total, min_leaf);
      if (!split.found) continue;

      double parent = 0.0;
      for (std::uint64_t c : counts) parent += static_cast<double>(c) * static_cast<double>(c);
      parent /= static_cast<double>(total);
      tree.importance[split.feature] += split.score - parent;

      const std::size_t mid =
          partition_rows(idx, t.lo, t.hi, bins_.codes[split.feature], split.left_bin);
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      TreeNode& node = tree.nodes[t.node];
      node.feature = split.feature;
      node.threshold = split.threshold;
      node.left = left;
      node.right = left + 1;
      stack.push_back({left + 1, mid, t.hi, t.depth + 1});
      stack.push_back({left, t.lo, mid, t.depth + 1});
    }
    if (root_weight > 0) {
      for (double& v : tree.importance) v /= root_weight;
    }
    return tree;
  }

 private:
  std::uint32_t weight(std::size_t i) const { return weights_.empty() ? 1u : weights_[i]; }

  SplitChoice find_split(const std::vector<std::uint32_t>& idx, std::size_t lo, std::size_t hi,
                         const std::vector<std::uint64_t>& counts, std::uint64_t total,
                         std::uint64_t min_leaf) {
    SplitChoice best;
    best.score = -1.0;
    const std::size_t p = features_.size();
    const bool subset = params_.feature_subset > 0 &&
                        static_cast<std::size_t>(params_.feature_subset) < p;
    if (subset) std::iota(features_.begin(), features_.end(), 0);
    for (std::size_t i = 0; i < p; ++i) {
      if (subset) {
        if (best.found && i >= static_cast<std::size_t>(params_.feature_subset)) break;
        std::uniform_int_distribution<std::size_t> pick(i, p - 1);
        std::swap(features_[i], features_[pick(rng_)]);
      }
      evaluate_feature(static_cast<int>(features_[i]), idx, lo, hi, counts, total, min_leaf, best);
    }
    return best;
  }

  void evaluate_feature(int f, const std::vector<std::uint32_t>& idx, std::size_t lo,
                        std::size_t hi, const std::vector<std::uint64_t>& counts,
                        std::uint64_t total, std::uint64_t min_leaf, SplitChoice& best) {
    const auto& codes = bins_.codes[f];
    if (bins_.values[f].size() < 2) return;
    touched_.clear();
    for (std::size_t r = lo; r < hi; ++r) {
      const std::uint32_t row = idx[r];
      const std::uint32_t code = codes[row];
      const std::uint32_t w = weight(row);
      if (bin_total_[code] == 0) touched_.push_back(code);
      bin_total_[code] += w;
      hist_[code * classes_ + data_.y[row]] += w;
    }
    if (touched_.size() >= 2) {
      std::sort(touched_.begin(), touched_.end());
      left_.assign(classes_, 0);
      std::uint64_t n_left = 0;
      for (std::size_t t = 0; t + 1 < touched_.size(); ++t) {
        const std::uint32_t b = touched_[t];
        for (std::size_t c = 0; c < classes_; ++c) left_[c] += hist_[b * classes_ + c];
        n_left += bin_total_[b];
        const std::uint64_t n_right = total - n_left;
        if (n_left < min_leaf) continue;
        if (n_right < min_leaf) break;
        double sq_left = 0.0, sq_right = 0.0;
        for (std::size_t c = 0; c < classes_; ++c) {
          const double l = static_cast<double>(left_[c]);
          const double r = static_cast<double>(counts[c] - left_[c]);
          sq_left += l * l;
          sq_right += r * r;
        }
        const double score =
            sq_left / static_cast<double>(n_left) + sq_right / static_cast<double>(n_right);
        if (score > best.score) {
          best.found = true;
          best.score = score;
          best.feature = f;
          best.left_bin = b;
          best.threshold = split_threshold(bins_.values[f], b, touched_[t + 1]);
        }
      }
    }
    for (std::uint32_t b : touched_) {
      bin_total_[b] = 0;
      std::fill_n(hist_.begin() + static_cast<std::ptrdiff_t>(b * classes_), classes_, 0);
    }
  }

  const Dataset& data_;
  const BinnedColumns& bins_;
  const TreeParams& params_;
  Rng& rng_;
  std::span<const std::uint32_t> weights_;
  std::size_t classes_;
  std::vector<std::uint64_t> hist_;
  std::vector<std::uint64_t> bin_total_;
  std::vector<std::uint32_t> touched_;
  std::vector<std::uint64_t> left_;
  std::vector<std::size_t> features_;
};

class RegressionBuilder {
 public:
  RegressionBuilder(const Dataset& data, const BinnedColumns& bins, std::span<const double> target,
                    std::span<const double> hessian, const TreeParams& params)
      : data_(data), bins_(bins), target_(target), hessian_(hessian), params_(params) {
    std::size_t max_bins = 1;
    for (const auto& v : bins.values) max_bins = std::max(max_bins, v.size());
    sum_.assign(max_bins, 0.0);
    count_.assign(max_bins, 0);
  }

  DecisionTree build(std::vector<int>* leaf_of_row) {
    DecisionTree tree;
    tree.importance.assign(data_.cols, 0.0);
    std::vector<std::uint32_t> idx(data_.rows);
    std::iota(idx.begin(), idx.end(), 0u);
    if (leaf_of_row) leaf_of_row->assign(data_.rows, 0);
    tree.nodes.emplace_back();
    if (idx.empty()) return tree;
    std::vector<Task> stack{{0, 0, idx.size(), 0}};
    const std::size_t min_leaf = static_cast<std::size_t>(std::max(params_.min_leaf, 1));
    while (!stack.empty()) {
      Task t = stack.back();
      stack.pop_back();
      double s = 0.0, h = 0.0;
      for (std::size_t r = t.lo; r < t.hi; ++r) {
        s += target_[idx[r]];
        h += hessian_[idx[r]];
      }
      const std::size_t n = t.hi - t.lo;
      tree.nodes[t.node].value = s / std::max(h, 1e-12);
      const bool depth_reached = params_.max_depth >= 0 && t.depth >= params_.max_depth;
      SplitChoice split;
      if (!depth_reached && n >= 2 * min_leaf) split = find_split(idx, t.lo, t.hi, s, n, min_leaf);
      const double parent = s * s / static_cast<double>(n);
      if (!split.found || !(split.score - parent > 1e-12)) {
        if (leaf_of_row) {
          for (std::size_t r = t.lo; r < t.hi; ++r) (*leaf_of_row)[idx[r]] = t.node;
        }
        continue;
      }
      tree.importance[split.feature] += split.score - parent;
      const std::size_t mid =
          partition_rows(idx, t.lo, t.hi, bins_.codes[split.feature], split.left_bin);
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      TreeNode& node = tree.nodes[t.node];
      node.feature = split.feature;
      node.threshold = split.threshold;
      node.left = left;
      node.right = left + 1;
      stack.push_back({left + 1, mid, t.hi, t.depth + 1});
      stack.push_back({left, t.lo, mid, t.depth + 1});
    }
    return tree;
  }

 private:
  SplitChoice find_split(const std::vector<std::uint32_t>& idx, std::size_t lo, std::size_t hi,
                         double total_sum, std::size_t total, std::size_t min_leaf) {
    SplitChoice best;
    best.score = -std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < data_.cols; ++f) {
      if (bins_.values[f].size() < 2) continue;
      const auto& codes = bins_.codes[f];
      touched_.clear();
      for (std::size_t r = lo; r < hi; ++r) {
        const std::uint32_t row = idx[r];
        const std::uint32_t code = codes[row];
        if (count_[code] == 0) touched_.push_back(code);
        ++count_[code];
        sum_[code] += target_[row];
      }
      if (touched_.size() >= 2) {
        std::sort(touched_.begin(), touched_.end());
        double s_left = 0.0;
        std::size_t n_left = 0;
        for (std::size_t t = 0; t + 1 < touched_.size(); ++t) {
          const std::uint32_t b = touched_[t];
          s_left += sum_[b];
          n_left += count_[b];
          const std::size_t n_right = total - n_left;
          if (n_left < min_leaf) continue;
          if (n_right < min_leaf) break;
          const double s_right = total_sum - s_left;
          const double score = s_left * s_left / static_cast<double>(n_left) +
                               s_right * s_right / static_cast<double>(n_right);
          if (score > best.score) {
            best.found = true;
            best.score = score;
            best.feature = static_cast<int>(f);
            best.left_bin = b;
            best.threshold = split_threshold(bins_.values[f], b, touched_[t + 1]);
          }
        }
      }
      for (std::uint32_t b : touched_) {
        count_[b] = 0;
        sum_[b] = 0.0;
      }
    }
    return best;
  }

  const Dataset& data_;
  const BinnedColumns& bins_;
  std::span<const double> target_;
  std::span<const double> hessian_;
  const TreeParams& params_;
  std::vector<double> sum_;
  std::vector<std::size_t> count_;
  std::vector<std::uint32_t> touched_;
};

}  // namespace

DecisionTree tree_fit(const Dataset& data, const BinnedColumns& bins, const TreeParams& params,
                      Rng& rng, std::span<const std::uint32_t> weights) {
  if (data.rows == 0) throw Error(ErrorKind::kEmptyMatrix, "tree_fit: no rows");
  if (!weights.empty() && weights.size() != data.rows) {
    throw Error(ErrorKind::kLengthMismatch, "tree_fit: weight count does not match rows");
  }
  ClassificationBuilder builder(data, bins, params, rng, weights);
  return builder.build();
}

DecisionTree tree_fit(const Dataset& data, const TreeParams& params, Rng& rng,
                      std::span<const std::uint32_t> weights) {
  const BinnedColumns bins = BinnedColumns::build(data);
  return tree_fit(data, bins, params, rng, weights);
}

DecisionTree regression_tree_fit(const Dataset& data, const BinnedColumns& bins,
                                 std::span<const double> target, std::span<const double> hessian,
                                 const TreeParams& params, std::vector<int>* leaf_of_row) {
  if (target.size() != data.rows || hessian.size() != data.rows) {
    throw Error(ErrorKind::kLengthMismatch, "regression_tree_fit: target length mismatch");
  }
  RegressionBuilder builder(data, bins, target, hessian, params);
  return builder.build(leaf_of_row);
}

}  // namespace lumirec::models
