#include "lumirec/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace lumirec::clustering {

double empirical_quantile(std::span<const double> values, double q) {
  if (values.empty()) throw Error(ErrorKind::kInvalidArgument, "quantile of empty vector");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + (v[hi] - v[lo]) * frac;
}

std::vector<double> ClusterVector::flatten() const {
  std::vector<double> out(usage);
  out.insert(out.end(), country_onehot.begin(), country_onehot.end());
  out.insert(out.end(), room_onehot.begin(), room_onehot.end());
  return out;
}

ClusterVector build_cluster_vector(const routine::FrequencyProfile& profile, int country_code,
                                   int country_cardinality, double lower_q, double upper_q) {
  if (country_cardinality < 1 || country_code < 0 || country_code >= country_cardinality) {
    throw Error(ErrorKind::kInvalidArgument, "country code outside its table");
  }
  ClusterVector v;
  v.entity = {profile.household, profile.room};
  const double lo = empirical_quantile(profile.values, lower_q);
  const double hi = empirical_quantile(profile.values, upper_q);
  v.usage.resize(profile.values.size());
  for (std::size_t i = 0; i < profile.values.size(); ++i) {
    v.usage[i] = std::clamp(profile.values[i], lo, hi);
  }
  v.country_onehot.assign(static_cast<std::size_t>(country_cardinality), 0.0);
  v.country_onehot[static_cast<std::size_t>(country_code)] = 1.0;
  v.room_onehot[static_cast<std::size_t>(profile.room)] = 1.0;
  return v;
}

PointSet PointSet::from_rows(const std::vector<std::vector<double>>& rows) {
  PointSet p;
  p.n = rows.size();
  p.dim = rows.empty() ? 0 : rows.front().size();
  p.x.reserve(p.n * p.dim);
  for (const auto& r : rows) {
    if (r.size() != p.dim) throw Error(ErrorKind::kDimensionMismatch, "ragged point set");
    p.x.insert(p.x.end(), r.begin(), r.end());
  }
  return p;
}

namespace {

double squared_distance(const double* a, const double* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

// Nearest centroid for every point; returns the inertia.
double assign_all(const PointSet& points, const std::vector<double>& centroids, int k,
                  std::vector<int>& labels, std::vector<double>& dist) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < points.n; ++i) {
    const double* p = points.x.data() + i * points.dim;
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const double d = squared_distance(p, centroids.data() + c * points.dim, points.dim);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    labels[i] = best;
    dist[i] = best_d;
    inertia += best_d;
  }
  return inertia;
}

std::vector<double> plus_plus_init(const PointSet& points, int k, Rng& rng) {
  const std::size_t dim = points.dim;
  std::vector<double> centroids(static_cast<std::size_t>(k) * dim);
  std::uniform_int_distribution<std::size_t> first(0, points.n - 1);
  std::size_t chosen = first(rng);
  std::copy_n(points.x.begin() + chosen * dim, dim, centroids.begin());
  std::vector<double> d2(points.n);
  for (std::size_t i = 0; i < points.n; ++i) {
    d2[i] = squared_distance(points.x.data() + i * dim, centroids.data(), dim);
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      chosen = points.n - 1;
      for (std::size_t i = 0; i < points.n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
      while (d2[chosen] == 0.0 && chosen > 0) --chosen;
    } else {
      chosen = first(rng);
    }
    double* dst = centroids.data() + static_cast<std::size_t>(c) * dim;
    std::copy_n(points.x.begin() + chosen * dim, dim, dst);
    for (std::size_t i = 0; i < points.n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points.x.data() + i * dim, dst, dim));
    }
  }
  return centroids;
}

KMeansModel lloyd(const PointSet& points, int k, std::uint64_t seed, const KMeansParams& params) {
  Rng rng(seed);
  KMeansModel m;
  m.k = k;
  m.dim = points.dim;
  m.seed = seed;
  m.centroids = plus_plus_init(points, k, rng);
  const std::size_t dim = points.dim;
  std::vector<int> labels(points.n);
  std::vector<double> dist(points.n);
  std::vector<double> next(m.centroids.size());
  std::vector<std::size_t> counts(static_cast<std::size_t>(k));
  double previous = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < params.max_iter; ++iter) {
    double inertia = assign_all(points, m.centroids, k, labels, dist);
    std::fill(counts.begin(), counts.end(), 0);
    for (int l : labels) ++counts[l];
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      std::size_t far = points.n;
      for (std::size_t i = 0; i < points.n; ++i) {
        if (counts[labels[i]] < 2) continue;
        if (far == points.n || dist[i] > dist[far]) far = i;
      }
      if (far == points.n) break;
      --counts[labels[far]];
      inertia -= dist[far];
      labels[far] = c;
      dist[far] = 0.0;
      counts[c] = 1;
      std::copy_n(points.x.begin() + far * dim, dim, m.centroids.begin() + c * dim);
    }
    if (inertia > previous * (1.0 + 1e-12) + 1e-12) {
      throw Error(ErrorKind::kInternal, "k-means inertia increased between iterations");
    }
    previous = inertia;
    m.inertia_trace.push_back(inertia);

    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < points.n; ++i) {
      double* dst = next.data() + static_cast<std::size_t>(labels[i]) * dim;
      const double* src = points.x.data() + i * dim;
      for (std::size_t j = 0; j < dim; ++j) dst[j] += src[j];
    }
    double shift = 0.0;
    for (int c = 0; c < k; ++c) {
      double* dst = next.data() + static_cast<std::size_t>(c) * dim;
      if (counts[c] == 0) {
        std::copy_n(m.centroids.begin() + c * dim, dim, dst);
        continue;
      }
      for (std::size_t j = 0; j < dim; ++j) dst[j] /= static_cast<double>(counts[c]);
      shift += squared_distance(dst, m.centroids.data() + c * dim, dim);
    }
    m.centroids.swap(next);
    m.iterations_run = iter + 1;
    if (std::sqrt(shift) < params.tol) break;
  }
  m.labels.assign(points.n, 0);
  m.inertia = assign_all(points, m.centroids, k, m.labels, dist);
  return m;
}

}  // namespace

KMeansModel kmeans_fit(const PointSet& points, int k, std::uint64_t seed,
                       const KMeansParams& params) {
  if (k < 1) throw Error(ErrorKind::kInvalidArgument, "k must be >= 1");
  if (points.n < static_cast<std::size_t>(k)) {
    throw Error(ErrorKind::kTooFewPoints, "fewer points than clusters");
  }
  if (params.n_init < 1 || params.max_iter < 1) {
    throw Error(ErrorKind::kInvalidArgument, "n_init and max_iter must be >= 1");
  }
  std::vector<KMeansModel> runs(static_cast<std::size_t>(params.n_init));
  parallel_for(runs.size(), [&](std::size_t r) {
    runs[r] = lloyd(points, k, derive_seed(seed, static_cast<std::uint64_t>(r)), params);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].inertia < runs[best].inertia) best = r;
  }
  KMeansModel out = std::move(runs[best]);
  out.best_restart = static_cast<int>(best);
  out.seed = seed;
  return out;
}

int assign_cluster(const KMeansModel& model, std::span<const double> vector) {
  if (model.k < 1) throw Error(ErrorKind::kUntrainedModel, "k-means model is not fitted");
  if (vector.size() != model.dim) {
    throw Error(ErrorKind::kDimensionMismatch, "vector dimension does not match centroids");
  }
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < model.k; ++c) {
    const double d = squared_distance(vector.data(), model.centroid(c).data(), model.dim);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

SelectKResult select_k(const PointSet& points, std::span<const int> k_range, std::uint64_t seed,
                       const SelectKOptions& options) {
  if (k_range.empty()) throw Error(ErrorKind::kInvalidArgument, "empty k range");
  SelectKResult out;
  out.ks.assign(k_range.begin(), k_range.end());
  std::sort(out.ks.begin(), out.ks.end());
  out.ks.erase(std::unique(out.ks.begin(), out.ks.end()), out.ks.end());
  for (int k : out.ks) {
    if (k < 1 || static_cast<std::size_t>(k) > points.n) {
      throw Error(ErrorKind::kTooFewPoints, "k range exceeds the number of points");
    }
  }
  out.models.resize(out.ks.size());
  parallel_for(out.ks.size(), [&](std::size_t i) {
    out.models[i] = kmeans_fit(points, out.ks[i],
                               derive_seed(seed, static_cast<std::uint64_t>(out.ks[i])),
                               options.kmeans);
  });
  for (const auto& m : out.models) out.inertia.push_back(m.inertia);
  out.k_star = out.ks.front();
  if (out.ks.size() == 1) return out;
  const routine::Knee knee = routine::curve_knee(out.inertia);
  const double first = out.inertia.front();
  const double reduction = first > 0.0 ? 1.0 - out.inertia[knee.index] / first : 0.0;
  if (knee.degenerate || knee.above_chord || reduction < options.min_elbow_reduction) {
    out.fallback = true;
    return out;
  }
  out.k_star = out.ks[knee.index];
  return out;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::kLengthMismatch, "partition lengths differ");
  const std::size_t n = a.size();
  if (n < 2) return 1.0;
  std::map<std::pair<int, int>, std::int64_t> table;
  std::map<int, std::int64_t> rows, cols;
  for (std::size_t i = 0; i < n; ++i) {
    ++table[{a[i], b[i]}];
    ++rows[a[i]];
    ++cols[b[i]];
  }
  auto comb2 = [](std::int64_t x) { return static_cast<double>(x) * static_cast<double>(x - 1) / 2.0; };
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [key, c] : table) index += comb2(c);
  for (const auto& [key, c] : rows) sum_a += comb2(c);
  for (const auto& [key, c] : cols) sum_b += comb2(c);
  const double expected = sum_a * sum_b / comb2(static_cast<std::int64_t>(n));
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return index == expected ? 1.0 : 0.0;
  return (index - expected) / (max_index - expected);
}

std::vector<double> cdf_abscissae(int points) {
  if (points < 2) throw Error(ErrorKind::kInvalidArgument, "need at least two abscissae");
  std::vector<double> x(static_cast<std::size_t>(points));
  for (int j = 0; j < points; ++j) x[j] = static_cast<double>(j) / (points - 1);
  return x;
}

std::vector<double> empirical_cdf(std::span<const double> values, std::span<const double> at) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> f(at.size(), 0.0);
  if (sorted.empty()) return f;
  for (std::size_t j = 0; j < at.size(); ++j) {
    const auto count = std::upper_bound(sorted.begin(), sorted.end(), at[j]) - sorted.begin();
    f[j] = static_cast<double>(count) / static_cast<double>(sorted.size());
  }
  return f;
}

double ks_distance(std::span<const double> cdf_a, std::span<const double> cdf_b) {
  if (cdf_a.size() != cdf_b.size()) throw Error(ErrorKind::kLengthMismatch, "cdf lengths differ");
  double d = 0.0;
  for (std::size_t j = 0; j < cdf_a.size(); ++j) d = std::max(d, std::abs(cdf_a[j] - cdf_b[j]));
  return d;
}

void write_cdf_csv(std::ostream& out, const std::vector<CdfEntry>& entries,
                   std::span<const double> abscissae) {
  out << "household,room,cluster,x,F\n";
  for (const auto& e : entries) {
    for (std::size_t j = 0; j < abscissae.size(); ++j) {
      out << e.entity.household << ',' << to_string(e.entity.room) << ',' << e.cluster << ','
          << format_double(abscissae[j]) << ',' << format_double(e.cdf[j]) << '\n';
    }
  }
}

}  // namespace lumirec::clustering
