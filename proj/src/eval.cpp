#include "lumirec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace lumirec::eval {

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred, int classes) {
  if (y_true.size() != y_pred.size()) {
    throw Error(ErrorKind::kLengthMismatch, "truth and prediction lengths differ");
  }
  if (classes < 1) throw Error(ErrorKind::kInvalidArgument, "class count must be >= 1");
  ConfusionMatrix cm;
  cm.classes = classes;
  cm.counts.assign(static_cast<std::size_t>(classes) * classes, 0);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_true[i] >= classes || y_pred[i] < 0 || y_pred[i] >= classes) {
      throw Error(ErrorKind::kInvalidArgument, "label outside [0, C)");
    }
    ++cm.counts[static_cast<std::size_t>(y_true[i]) * classes + y_pred[i]];
  }
  cm.n = static_cast<std::int64_t>(y_true.size());
  return cm;
}

namespace {

double ratio(std::int64_t num, std::int64_t den, bool& undefined) {
  if (den == 0) {
    undefined = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricReport metrics(const ConfusionMatrix& cm) {
  if (cm.n <= 0) throw Error(ErrorKind::kEmptyMatrix, "confusion matrix is empty");
  const int c_count = cm.classes;
  MetricReport r;
  r.n = cm.n;
  r.per_class.resize(static_cast<std::size_t>(c_count));
  std::vector<std::int64_t> row_sum(c_count, 0), col_sum(c_count, 0);
  std::int64_t trace = 0;
  for (int i = 0; i < c_count; ++i) {
    for (int j = 0; j < c_count; ++j) {
      row_sum[i] += cm.at(i, j);
      col_sum[j] += cm.at(i, j);
    }
    trace += cm.at(i, i);
  }
  double recall_sum = 0.0;
  int present = 0;
  for (int c = 0; c < c_count; ++c) {
    const std::int64_t tp = cm.at(c, c);
    const std::int64_t fn = row_sum[c] - tp;
    const std::int64_t fp = col_sum[c] - tp;
    const std::int64_t tn = cm.n - tp - fn - fp;
    ClassMetrics& m = r.per_class[c];
    m.support = row_sum[c];
    m.precision = ratio(tp, tp + fp, m.precision_undefined);
    m.recall = ratio(tp, tp + fn, m.recall_undefined);
    m.specificity = ratio(tn, tn + fp, m.specificity_undefined);
    if (m.precision + m.recall > 0.0) {
      m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    } else {
      m.f1 = 0.0;
      m.f1_undefined = true;
    }
    if (m.support > 0) {
      recall_sum += m.recall;
      ++present;
    }
  }
  r.accuracy = static_cast<double>(trace) / static_cast<double>(cm.n);
  r.balanced_accuracy = present > 0 ? recall_sum / present : 0.0;
  return r;
}

MetricReport weighted_cluster_aggregate(std::span<const std::pair<MetricReport, double>> reports) {
  if (reports.empty()) throw Error(ErrorKind::kInvalidArgument, "no reports to aggregate");
  std::size_t classes = 0;
  double total = 0.0;
  for (const auto& [report, pop] : reports) {
    if (!(pop > 0.0)) throw Error(ErrorKind::kInvalidArgument, "population must be positive");
    classes = std::max(classes, report.per_class.size());
    total += pop;
  }
  MetricReport out;
  out.per_class.resize(classes);
  for (const auto& [report, pop] : reports) {
    const double w = pop / total;
    out.accuracy += w * report.accuracy;
    out.balanced_accuracy += w * report.balanced_accuracy;
    out.n += report.n;
    for (std::size_t c = 0; c < report.per_class.size(); ++c) {
      const ClassMetrics& src = report.per_class[c];
      ClassMetrics& dst = out.per_class[c];
      dst.precision += w * src.precision;
      dst.recall += w * src.recall;
      dst.specificity += w * src.specificity;
      dst.f1 += w * src.f1;
      dst.support += src.support;
      dst.precision_undefined = dst.precision_undefined || src.precision_undefined;
      dst.recall_undefined = dst.recall_undefined || src.recall_undefined;
      dst.specificity_undefined = dst.specificity_undefined || src.specificity_undefined;
      dst.f1_undefined = dst.f1_undefined || src.f1_undefined;
    }
  }
  return out;
}

namespace {

std::size_t test_count(std::size_t n, double test_frac) {
  if (!(test_frac >= 0.0 && test_frac <= 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "test fraction outside [0, 1]");
  }
  return static_cast<std::size_t>(std::llround(test_frac * static_cast<double>(n)));
}

}  // namespace

Split split_rows(std::size_t n, double test_frac, std::uint64_t seed) {
  const std::size_t n_test = test_count(n, test_frac);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  Split s;
  s.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

Split split_households(std::span<const std::string> household_of_row, double test_frac,
                       std::uint64_t seed) {
  std::vector<std::string> households(household_of_row.begin(), household_of_row.end());
  std::sort(households.begin(), households.end());
  households.erase(std::unique(households.begin(), households.end()), households.end());
  const std::size_t n_test = test_count(households.size(), test_frac);
  Rng rng(seed);
  std::shuffle(households.begin(), households.end(), rng);
  const std::set<std::string> test(households.begin(),
                                   households.begin() + static_cast<std::ptrdiff_t>(n_test));
  Split s;
  for (std::size_t i = 0; i < household_of_row.size(); ++i) {
    (test.count(household_of_row[i]) ? s.test : s.train).push_back(i);
  }
  return s;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  for (double v : values) out.mean += v;
  out.mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(var / n);
  return out;
}

CvResult cross_validate(const models::ModelSpec& spec, const models::Dataset& data, int folds,
                        std::uint64_t seed) {
  data.validate();
  CvResult out;
  const std::vector<int> fold_of = models::assign_folds(data.y, folds, seed, &out.stratified);
  out.fold_accuracy.assign(static_cast<std::size_t>(folds), 0.0);
  parallel_for(static_cast<std::size_t>(folds), [&](std::size_t f) {
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < data.rows; ++i) {
      (fold_of[i] == static_cast<int>(f) ? te : tr).push_back(i);
    }
    const models::Dataset dtr = data.subset(tr);
    const models::Dataset dte = data.subset(te);
    models::ModelSpec s = spec;
    if (s.family == models::Family::kKnn) {
      s.n_neighbors = std::min<int>(s.n_neighbors, static_cast<int>(dtr.rows));
    }
    const auto model = models::fit(s, dtr);
    out.fold_accuracy[f] = models::accuracy(dte.y, models::predict(model, dte));
  });
  const MeanStd ms = mean_std(out.fold_accuracy);
  out.mean = ms.mean;
  out.std = ms.std;
  return out;
}

}  // namespace lumirec::eval
