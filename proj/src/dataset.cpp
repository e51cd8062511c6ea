#include <algorithm>
#include <cmath>
#include <numeric>

#include "lumirec/models.hpp"

namespace lumirec::models {

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.rows = indices.size();
  out.cols = cols;
  out.feature_names = feature_names;
  out.class_count = class_count;
  out.x.resize(out.rows * cols);
  out.y.resize(out.rows);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(i * cols), cols,
                out.x.begin() + static_cast<std::ptrdiff_t>(r * cols));
    out.y[r] = y[i];
  }
  return out;
}

void Dataset::validate() const {
  if (rows == 0) throw Error(ErrorKind::kEmptyMatrix, "dataset has no rows");
  if (x.size() != rows * cols || y.size() != rows) {
    throw Error(ErrorKind::kLengthMismatch, "dataset shape does not match its storage");
  }
  if (!feature_names.empty() && feature_names.size() != cols) {
    throw Error(ErrorKind::kInvalidArgument, "feature name count does not match columns");
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kInvalidArgument, "non-finite feature value");
  }
  for (int label : y) {
    if (label < 0 || label >= class_count) {
      throw Error(ErrorKind::kInvalidArgument, "label outside [0, class_count)");
    }
  }
}

std::string_view to_string(Family family) {
  switch (family) {
    case Family::kKnn: return "knn";
    case Family::kRandomForest: return "rf";
    case Family::kGradientBoost: return "gbt";
  }
  return "unknown";
}

Family parse_family(std::string_view text) {
  if (text == "knn") return Family::kKnn;
  if (text == "rf") return Family::kRandomForest;
  if (text == "gbt") return Family::kGradientBoost;
  throw Error(ErrorKind::kInvalidArgument, "unknown model family: " + std::string(text));
}

double accuracy(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) {
    throw Error(ErrorKind::kLengthMismatch, "accuracy: length mismatch");
  }
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == predicted[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

std::vector<int> assign_folds(std::span<const int> labels, int folds, std::uint64_t seed,
                              bool* stratified) {
  if (folds < 2) throw Error(ErrorKind::kInvalidArgument, "folds must be >= 2");
  const std::size_t n = labels.size();
  if (n < static_cast<std::size_t>(folds)) {
    throw Error(ErrorKind::kInvalidArgument, "fewer rows than folds");
  }
  Rng rng(seed);
  std::vector<int> fold(n, 0);
  const int max_label = n ? *std::max_element(labels.begin(), labels.end()) : 0;
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(max_label) + 1);
  for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
  bool can_stratify = true;
  for (const auto& members : by_class) {
    if (!members.empty() && members.size() < static_cast<std::size_t>(folds)) can_stratify = false;
  }
  if (stratified) *stratified = can_stratify;
  if (can_stratify) {
    // Continue the round-robin across classes so fold sizes stay balanced.
    std::size_t next = 0;
    for (auto& members : by_class) {
      std::shuffle(members.begin(), members.end(), rng);
      for (std::size_t i : members) fold[i] = static_cast<int>(next++ % folds);
    }
  } else {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t r = 0; r < n; ++r) fold[order[r]] = static_cast<int>(r % folds);
  }
  return fold;
}

}  // namespace lumirec::models
