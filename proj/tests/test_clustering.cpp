#include <algorithm>
#include <map>
#include <sstream>

#include "doctest.h"
#include "lumirec/clustering.hpp"
#include "lumirec/synth.hpp"
#include "test_util.hpp"

using namespace lumirec;
using namespace lumirec::clustering;

namespace {

PointSet points_of(const models::Dataset& d) {
  PointSet p;
  p.n = d.rows;
  p.dim = d.cols;
  p.x = d.x;
  return p;
}

routine::FrequencyProfile profile(std::vector<double> values, Room room = Room::kRoom1) {
  routine::FrequencyProfile p;
  p.household = "h1";
  p.room = room;
  p.values = std::move(values);
  p.day_count = 1;
  return p;
}

// Hubert-Arabie pair-count form.
double ari_by_pairs(const std::vector<int>& a, const std::vector<int>& b) {
  double ss = 0, sd = 0, ds = 0, dd = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const bool sa = a[i] == a[j];
      const bool sb = b[i] == b[j];
      if (sa && sb) ++ss;
      else if (sa) ++sd;
      else if (sb) ++ds;
      else ++dd;
    }
  }
  const double denom = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd);
  return denom == 0.0 ? 1.0 : 2.0 * (ss * dd - sd * ds) / denom;
}

const std::vector<std::vector<double>> kCenters{{0.0, 0.0}, {10.0, 0.0}, {0.0, 10.0}};

}  // namespace

TEST_SUITE("clustering") {

TEST_CASE("quantiles interpolate between order statistics") {
  const std::vector<double> v{4.0, 1.0, 3.0, 2.0};
  CHECK(empirical_quantile(v, 0.0) == 1.0);
  CHECK(empirical_quantile(v, 1.0) == 4.0);
  CHECK(empirical_quantile(v, 0.15) == doctest::Approx(1.45));
  CHECK(empirical_quantile(v, 0.85) == doctest::Approx(3.55));
  CHECK(empirical_quantile(v, 0.5) == doctest::Approx(2.5));
  CHECK_THROWS_AS(empirical_quantile(std::vector<double>{}, 0.5), Error);

  Rng rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(2 + rng() % 50);
    for (double& e : x) e = u(rng);
    const double q = u(rng);
    auto s = x;
    std::sort(s.begin(), s.end());
    // 1-based position h = (n - 1) q + 1.
    const double h = (static_cast<double>(s.size()) - 1.0) * q + 1.0;
    const auto lo = static_cast<std::size_t>(h);
    const double expect =
        lo >= s.size() ? s.back() : s[lo - 1] + (h - static_cast<double>(lo)) * (s[lo] - s[lo - 1]);
    CHECK(empirical_quantile(x, q) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("cluster vectors winsorize usage and append one-hots") {
  const auto flat = build_cluster_vector(profile(std::vector<double>(kMinutesPerDay, 0.4)), 2, 4);
  CHECK(std::all_of(flat.usage.begin(), flat.usage.end(), [](double v) { return v == 0.4; }));
  CHECK(flat.country_onehot == std::vector<double>{0, 0, 1, 0});
  CHECK(flat.room_onehot == std::array<double, 2>{1, 0});
  CHECK(flat.flatten().size() == kMinutesPerDay + 4 + 2);

  std::vector<double> spike(kMinutesPerDay, 0.0);
  spike[700] = 1.0;
  const auto clamped = build_cluster_vector(profile(spike, Room::kRoom2), 0, 1);
  CHECK(clamped.usage[700] == 0.0);
  CHECK(clamped.room_onehot == std::array<double, 2>{0, 1});
  CHECK(clamped.country_onehot == std::vector<double>{1});

  CHECK_THROWS_AS(build_cluster_vector(profile(spike), 3, 3), Error);
}

TEST_CASE("winsorized usage stays inside the profile's quantile band") {
  Rng rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(kMinutesPerDay);
  for (double& e : v) e = u(rng) * u(rng);
  const auto c = build_cluster_vector(profile(v), 1, 2);
  const double lo = empirical_quantile(v, 0.15);
  const double hi = empirical_quantile(v, 0.85);
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(c.usage[i] >= lo);
    CHECK(c.usage[i] <= hi);
    if (v[i] >= lo && v[i] <= hi) CHECK(c.usage[i] == v[i]);
  }
}

TEST_CASE("one cluster sits at the mean") {
  const auto p = PointSet::from_rows({{0.0, 0.0}, {2.0, 0.0}, {0.0, 4.0}, {2.0, 4.0}});
  const auto m = kmeans_fit(p, 1, 3);
  CHECK(m.centroid(0)[0] == doctest::Approx(1.0));
  CHECK(m.centroid(0)[1] == doctest::Approx(2.0));
  CHECK(m.inertia == doctest::Approx(4 * (1.0 + 4.0)));
}

TEST_CASE("as many clusters as distinct points leaves no inertia") {
  const auto p = PointSet::from_rows({{0.0}, {1.0}, {5.0}, {9.0}, {20.0}});
  const auto m = kmeans_fit(p, 5, 11);
  CHECK(m.inertia == doctest::Approx(0.0));
  std::vector<int> sorted = m.labels;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4});
}

TEST_CASE("separated blobs are recovered exactly") {
  const auto d = testing::blobs(kCenters, 40, 0.5, 2);
  const auto m = kmeans_fit(points_of(d), 3, 9);
  CHECK(adjusted_rand_index(m.labels, d.y) == doctest::Approx(1.0));
  for (std::size_t i = 0; i < d.rows; ++i) CHECK(assign_cluster(m, d.row(i)) == m.labels[i]);
}

TEST_CASE("fewer points than clusters is rejected") {
  const auto p = PointSet::from_rows({{0.0}, {1.0}});
  CHECK_THROWS_AS(kmeans_fit(p, 3, 1), Error);
  const std::vector<int> ks{1, 2, 3};
  CHECK_THROWS_AS(select_k(p, ks, 1), Error);
  CHECK_THROWS_AS(PointSet::from_rows({{0.0}, {1.0, 2.0}}), Error);
}

TEST_CASE("the inertia elbow picks the planted cluster count") {
  const auto d = testing::blobs(kCenters, 50, 0.6, 7);
  const std::vector<int> ks{1, 2, 3, 4, 5, 6, 7, 8};
  const auto r = select_k(points_of(d), ks, 5);
  CHECK(r.k_star == 3);
  CHECK_FALSE(r.fallback);
  CHECK(r.ks == ks);
  for (std::size_t i = 1; i < r.inertia.size(); ++i) CHECK(r.inertia[i] <= r.inertia[i - 1] + 1e-9);
}

TEST_CASE("a single blob has no elbow and keeps the smallest k") {
  const auto d = testing::blobs({{0.0, 0.0}}, 150, 1.0, 8);
  const std::vector<int> ks{1, 2, 3, 4, 5, 6};
  const auto r = select_k(points_of(d), ks, 5);
  CHECK(r.k_star == 1);
  CHECK(r.fallback);
}

TEST_CASE("a one-point k range returns that k") {
  const auto d = testing::blobs(kCenters, 10, 0.6, 7);
  const std::vector<int> ks{2};
  const auto r = select_k(points_of(d), ks, 1);
  CHECK(r.k_star == 2);
  CHECK(r.models.size() == 1);
}

TEST_CASE("assignment breaks distance ties toward the lower id") {
  KMeansModel m;
  m.k = 2;
  m.dim = 1;
  m.centroids = {-1.0, 1.0};
  const std::vector<double> mid{0.0};
  CHECK(assign_cluster(m, mid) == 0);
  const std::vector<double> right{0.5};
  CHECK(assign_cluster(m, right) == 1);
  const std::vector<double> wrong{0.0, 0.0};
  CHECK_THROWS_AS(assign_cluster(m, wrong), Error);
  CHECK_THROWS_AS(assign_cluster(KMeansModel{}, mid), Error);
}

TEST_CASE("adjusted rand index agrees with the pair-count form") {
  CHECK(adjusted_rand_index(std::vector<int>{0, 0, 1, 1}, std::vector<int>{5, 5, 2, 2}) == 1.0);
  CHECK_THROWS_AS(adjusted_rand_index(std::vector<int>{0}, std::vector<int>{0, 1}), Error);
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + rng() % 60;
    std::vector<int> a(n), b(n);
    const int ka = 1 + static_cast<int>(rng() % 5);
    const int kb = 1 + static_cast<int>(rng() % 5);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<int>(rng() % ka);
      b[i] = static_cast<int>(rng() % kb);
    }
    const double pairs = ari_by_pairs(a, b);
    const double fast = adjusted_rand_index(a, b);
    // Both forms agree except in the all-same degenerate cases.
    const bool a_single = std::all_of(a.begin(), a.end(), [&](int v) { return v == a[0]; });
    const bool b_single = std::all_of(b.begin(), b.end(), [&](int v) { return v == b[0]; });
    if (a_single || b_single) continue;
    CHECK(fast == doctest::Approx(pairs).epsilon(1e-9));
  }
}

TEST_CASE("empirical cdf steps at sample values") {
  const auto x = cdf_abscissae(5);
  CHECK(x == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
  const std::vector<double> values{0.0, 0.5, 0.5, 1.0};
  CHECK(empirical_cdf(values, x) == std::vector<double>{0.25, 0.25, 0.75, 0.75, 1.0});
  std::vector<double> uniform(1001);
  for (int i = 0; i <= 1000; ++i) uniform[i] = i / 1000.0;
  const auto f = empirical_cdf(uniform, cdf_abscissae(11));
  for (int j = 0; j <= 10; ++j) CHECK(f[j] == doctest::Approx(j / 10.0).epsilon(0.01));
  CHECK(ks_distance(f, f) == 0.0);
  CHECK(ks_distance(std::vector<double>{0.0, 1.0}, std::vector<double>{0.5, 1.0}) == 0.5);
  CHECK_THROWS_AS(cdf_abscissae(1), Error);
}

TEST_CASE("cdf csv has one row per entity and abscissa") {
  const auto x = cdf_abscissae(3);
  std::vector<CdfEntry> entries{{{"h1", Room::kRoom1}, 0, {0.1, 0.5, 1.0}},
                                {{"h2", Room::kRoom2}, 1, {0.0, 0.0, 1.0}}};
  std::stringstream out;
  write_cdf_csv(out, entries, x);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(out, line)) lines.push_back(line);
  REQUIRE(lines.size() == 7);
  CHECK(lines[0] == "household,room,cluster,x,F");
  CHECK(lines[1] == "h1,room1,0,0,0.1");
  CHECK(lines[6] == "h2,room2,1,1,1");
}

TEST_CASE("profiles within a persona are closer in cdf than across personas") {
  auto pop = synth::default_population(4);
  for (auto& p : pop.personas) p.households = 6;
  const auto truth = synth::plan_households(pop, 4);
  const DateRange range{parse_date("2019-01-01"), parse_date("2019-03-31")};
  const auto st = synth::synthesize_states(pop, truth, range, 4);
  std::map<std::string, std::size_t> persona;
  for (const auto& t : truth) persona[t.household] = t.persona_index;
  const auto x = cdf_abscissae();
  std::vector<std::pair<std::size_t, std::vector<double>>> cdfs;
  for (const auto& [key, s] : st.states) {
    if (key.room != Room::kRoom1) continue;
    cdfs.emplace_back(persona.at(key.household), empirical_cdf(routine::frequency_profile(s).values, x));
  }
  double within = 0, between = 0;
  int nw = 0, nb = 0;
  for (std::size_t i = 0; i < cdfs.size(); ++i) {
    for (std::size_t j = i + 1; j < cdfs.size(); ++j) {
      const double d = ks_distance(cdfs[i].second, cdfs[j].second);
      if (cdfs[i].first == cdfs[j].first) within += d, ++nw;
      else between += d, ++nb;
    }
  }
  REQUIRE(nw > 0);
  REQUIRE(nb > 0);
  CHECK(within / nw < between / nb);
}

TEST_CASE("fits do not depend on the thread cap") {
  const auto d = testing::blobs(kCenters, 60, 2.0, 3);
  const std::vector<int> ks{1, 2, 3, 4, 5};
  set_max_threads(1);
  const auto a = select_k(points_of(d), ks, 21);
  set_max_threads(4);
  const auto b = select_k(points_of(d), ks, 21);
  set_max_threads(0);
  CHECK(a.k_star == b.k_star);
  CHECK(a.inertia == b.inertia);
  for (std::size_t i = 0; i < a.models.size(); ++i) {
    CHECK(a.models[i].centroids == b.models[i].centroids);
    CHECK(a.models[i].labels == b.models[i].labels);
  }
}

}  // TEST_SUITE
