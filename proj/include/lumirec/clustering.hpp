#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lumirec/common.hpp"
#include "lumirec/ingest.hpp"
#include "lumirec/routine.hpp"

namespace lumirec::clustering {

// Linear interpolation between order statistics, position q * (n - 1).
double empirical_quantile(std::span<const double> values, double q);

struct ClusterVector {
  ingest::EntityKey entity;
  std::vector<double> usage;           // 1440 winsorized frequencies
  std::vector<double> country_onehot;  // slot 0 is the unknown code
  std::array<double, 2> room_onehot{};

  std::vector<double> flatten() const;
};

// Clamps the profile to its own 0.15 / 0.85 quantiles and appends one-hots
// for the country code (0..country_cardinality-1) and the room.
ClusterVector build_cluster_vector(const routine::FrequencyProfile& profile, int country_code,
                                   int country_cardinality, double lower_q = 0.15,
                                   double upper_q = 0.85);

// Row-major point cloud.
struct PointSet {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<double> x;

  std::span<const double> row(std::size_t i) const { return {x.data() + i * dim, dim}; }
  static PointSet from_rows(const std::vector<std::vector<double>>& rows);
};

struct KMeansParams {
  int max_iter = 300;
  double tol = 1e-6;
  int n_init = 10;
};

struct KMeansModel {
  int k = 0;
  std::size_t dim = 0;
  std::vector<double> centroids;  // k x dim
  double inertia = 0.0;
  std::uint64_t seed = 0;
  int iterations_run = 0;
  int best_restart = 0;
  std::vector<int> labels;             // fit assignment of each point
  std::vector<double> inertia_trace;   // per Lloyd iteration of the kept restart

  std::span<const double> centroid(int c) const {
    return {centroids.data() + static_cast<std::size_t>(c) * dim, dim};
  }
};

// k-means++ seeding, Lloyd iterations until the centroid shift drops below
// tol, best of n_init restarts (ties to the lowest restart). Empty clusters
// are reseeded at the point farthest from its centroid. Throws
// Error{kTooFewPoints} when there are fewer points than k.
KMeansModel kmeans_fit(const PointSet& points, int k, std::uint64_t seed,
                       const KMeansParams& params = {});

// Nearest centroid, ties to the lowest id. Throws Error{kDimensionMismatch}.
int assign_cluster(const KMeansModel& model, std::span<const double> vector);

struct SelectKResult {
  int k_star = 0;
  bool fallback = false;  // no usable elbow; k_star is the smallest k
  std::vector<int> ks;
  std::vector<double> inertia;
  std::vector<KMeansModel> models;  // one per k, same order as ks
};

struct SelectKOptions {
  KMeansParams kmeans;
  // The elbow must remove at least this share of the first k's inertia.
  double min_elbow_reduction = 0.8;
};

// Fits every k and takes the knee of the inertia-vs-k curve.
SelectKResult select_k(const PointSet& points, std::span<const int> k_range, std::uint64_t seed,
                       const SelectKOptions& options = {});

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

// x_j = j / (points - 1).
std::vector<double> cdf_abscissae(int points = 100);
// F(x) = share of values <= x, at each abscissa.
std::vector<double> empirical_cdf(std::span<const double> values, std::span<const double> at);
double ks_distance(std::span<const double> cdf_a, std::span<const double> cdf_b);

struct CdfEntry {
  ingest::EntityKey entity;
  int cluster = 0;
  std::vector<double> cdf;
};

// Header household,room,cluster,x,F; one row per entity and abscissa.
void write_cdf_csv(std::ostream& out, const std::vector<CdfEntry>& entries,
                   std::span<const double> abscissae);

}  // namespace lumirec::clustering
