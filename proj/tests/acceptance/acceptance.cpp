// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "lumirec/cli.hpp"
#include "lumirec/clustering.hpp"
#include "lumirec/config.hpp"
#include "lumirec/eval.hpp"
#include "lumirec/features.hpp"
#include "lumirec/routine.hpp"
#include "lumirec/synth.hpp"

using namespace lumirec;
namespace fs = std::filesystem;
using json = nlohmann::json;
using clock_type = std::chrono::steady_clock;

namespace {

int failures = 0;

void verdict(int id, bool pass, const std::string& title, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << ": " << title << " | " << detail
            << std::endl;
}

double seconds_since(clock_type::time_point t) {
  return std::chrono::duration<double>(clock_type::now() - t).count();
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

DateRange full_year() { return {parse_date("2019-01-01"), parse_date("2019-12-31")}; }

// ------------------------------------------------------------------ 1
void metrics_oracle() {
  const auto t0 = clock_type::now();
  Rng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int C = 2 + static_cast<int>(rng() % 8);
    const std::size_t n = 1 + rng() % 200;
    std::vector<int> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(rng() % C);
      p[i] = rng() % 2 ? t[i] : static_cast<int>(rng() % C);
    }
    const auto r = eval::metrics(eval::confusion(t, p, C));
    double correct = 0, recall_sum = 0;
    int present = 0;
    for (int c = 0; c < C; ++c) {
      double tp = 0, fp = 0, fn = 0, tn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const bool yt = t[i] == c, yp = p[i] == c;
        if (yt && yp) ++tp;
        else if (yp) ++fp;
        else if (yt) ++fn;
        else ++tn;
      }
      const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
      const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
      const double spec = tn + fp > 0 ? tn / (tn + fp) : 0.0;
      const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
      const auto& m = r.per_class[c];
      for (double d : {m.precision - prec, m.recall - rec, m.specificity - spec, m.f1 - f1,
                       static_cast<double>(m.support) - (tp + fn)}) {
        worst = std::max(worst, std::abs(d));
      }
      if (tp + fn > 0) {
        recall_sum += rec;
        ++present;
      }
    }
    for (std::size_t i = 0; i < n; ++i) correct += t[i] == p[i];
    worst = std::max(worst, std::abs(r.accuracy - correct / static_cast<double>(n)));
    worst = std::max(worst, std::abs(r.balanced_accuracy - recall_sum / present));
  }
  const double secs = seconds_since(t0);
  verdict(1, worst <= 1e-12 && secs < 5.0, "metrics match a brute-force tally on 1000 pairs",
          "max abs diff " + std::to_string(worst) + ", " + fmt(secs, 2) + " s (limit 1e-12, 5 s)");
}

// ------------------------------------------------------------------ 2
void weighted_arithmetic() {
  auto report = [](double acc, double bacc) {
    eval::MetricReport r;
    r.accuracy = acc;
    r.balanced_accuracy = bacc;
    return r;
  };
  const std::vector<std::pair<eval::MetricReport, double>> rows{
      {report(0.987, 0.98), 133}, {report(0.972, 0.93), 259}, {report(0.965, 0.94), 263}};
  const auto w = eval::weighted_cluster_aggregate(rows);
  const std::string acc = fmt(w.accuracy, 3);
  const std::string bacc = fmt(w.balanced_accuracy, 3);
  verdict(2, acc == "0.972" && bacc == "0.944", "weighted aggregation of three clusters (133, 259, 263 rows)",
          "accuracy " + acc + " (want 0.972), balanced " + bacc + " (want 0.944)");
}

// ------------------------------------------------------------------ 3
void binary_equivalence() {
  Rng rng(202);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    eval::ConfusionMatrix cm;
    cm.classes = 2;
    const std::int64_t tp = 1 + static_cast<std::int64_t>(rng() % 500);
    const std::int64_t fn = static_cast<std::int64_t>(rng() % 500);
    const std::int64_t fp = static_cast<std::int64_t>(rng() % 500);
    const std::int64_t tn = 1 + static_cast<std::int64_t>(rng() % 500);
    cm.counts = {tn, fp, fn, tp};
    cm.n = tp + fn + fp + tn;
    const auto r = eval::metrics(cm);
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double specificity = static_cast<double>(tn) / static_cast<double>(tn + fp);
    if ((recall + specificity) / 2.0 != r.balanced_accuracy) ++mismatches;
  }
  verdict(3, mismatches == 0, "binary (recall + specificity) / 2 equals mean recall exactly",
          std::to_string(mismatches) + " mismatches in 1000 matrices");
}

// ------------------------------------------------------------------ shared synth world
struct World {
  synth::Population population;
  std::vector<synth::HouseholdTruth> truth;
  synth::SynthStates states;
  features::CategoryCodes codes;
  std::vector<routine::FrequencyProfile> profiles;  // state order
};

World make_world(std::uint64_t seed) {
  World w;
  w.population = synth::default_population(seed);
  w.truth = synth::plan_households(w.population, seed);
  w.states = synth::synthesize_states(w.population, w.truth, full_year(), seed);
  w.codes = features::fit_codes(w.states.geo);
  for (const auto& [key, s] : w.states.states) {
    if (s.on_minutes() > 0) w.profiles.push_back(routine::frequency_profile(s));
  }
  return w;
}

std::map<std::string, const synth::HouseholdTruth*> truth_index(const World& w) {
  std::map<std::string, const synth::HouseholdTruth*> out;
  for (const auto& t : w.truth) out[t.household] = &t;
  return out;
}

struct Clustering {
  clustering::SelectKResult selection;
  const clustering::KMeansModel* model = nullptr;
  std::vector<int> planted;
  eval::ClusterMap assigned;
};

Clustering cluster_world(const World& w, std::uint64_t seed) {
  const WorkspaceConfig defaults;
  const auto index = truth_index(w);
  std::vector<std::vector<double>> rows;
  std::vector<ingest::EntityKey> keys;
  Clustering c;
  for (const auto& p : w.profiles) {
    const int code = w.codes.country.code(w.states.geo.at(p.household).country);
    rows.push_back(clustering::build_cluster_vector(p, code, w.codes.country.cardinality(),
                                                    defaults.clustering.lower_quantile,
                                                    defaults.clustering.upper_quantile)
                       .flatten());
    keys.push_back({p.household, p.room});
    c.planted.push_back(static_cast<int>(index.at(p.household)->persona_index));
  }
  std::vector<int> ks;
  for (int k = defaults.clustering.k_min; k <= defaults.clustering.k_max; ++k) ks.push_back(k);
  clustering::SelectKOptions opt;
  opt.kmeans.n_init = defaults.clustering.n_init;
  opt.kmeans.max_iter = defaults.clustering.max_iter;
  opt.kmeans.tol = defaults.clustering.tol;
  opt.min_elbow_reduction = defaults.clustering.min_elbow_reduction;
  c.selection = clustering::select_k(clustering::PointSet::from_rows(rows), ks,
                                     derive_seed(seed, "cluster"), opt);
  for (std::size_t i = 0; i < c.selection.ks.size(); ++i) {
    if (c.selection.ks[i] == c.selection.k_star) c.model = &c.selection.models[i];
  }
  for (std::size_t i = 0; i < keys.size(); ++i) c.assigned[keys[i]] = c.model->labels[i];
  return c;
}

// ------------------------------------------------------------------ 4
void routine_recovery(const World& w, double synth_secs) {
  const auto t0 = clock_type::now();
  const WorkspaceConfig defaults;
  const auto index = truth_index(w);
  std::size_t ok = 0, total = 0;
  for (const auto& p : w.profiles) {
    const auto plan = routine::recommend_routine(p, defaults.routine);
    const auto& planted = index.at(p.household)->windows.at(p.room);
    bool good = plan.intervals.size() == planted.size();
    for (std::size_t i = 0; good && i < planted.size(); ++i) {
      good = std::abs(plan.intervals[i].start - planted[i].start) <= 10 &&
             std::abs(plan.intervals[i].end - planted[i].end) <= 10;
    }
    ok += good;
    ++total;
  }
  const double secs = synth_secs + seconds_since(t0);
  const double share = static_cast<double>(ok) / static_cast<double>(total);
  verdict(4, share >= 0.95 && secs < 120.0,
          "routine intervals recover planted windows within 10 minutes",
          std::to_string(ok) + "/" + std::to_string(total) + " entities = " + fmt(share) +
              " (need 0.95), states + routine " + fmt(secs, 1) + " s (limit 120 s)");
}

// ------------------------------------------------------------------ 5
void cluster_recovery(const Clustering& c) {
  std::vector<int> labels = c.model->labels;
  const double ari = clustering::adjusted_rand_index(c.planted, labels);
  verdict(5, c.selection.k_star == 3 && ari >= 0.9, "select_k finds 3 personas with ARI >= 0.9",
          "k* = " + std::to_string(c.selection.k_star) + ", ARI " + fmt(ari));
}

// ------------------------------------------------------------------ 6
void clustered_vs_pooled() {
  const std::vector<std::uint64_t> seeds{7, 11, 23, 42, 101};
  std::vector<double> pooled, clustered, margin;
  for (std::uint64_t seed : seeds) {
    const World w = make_world(seed);
    const Clustering c = cluster_world(w, seed);
    const auto rows = features::build_feature_rows(w.states.states, w.states.geo, w.codes);
    models::ModelSpec spec;
    spec.family = models::Family::kRandomForest;
    spec.n_trees = 100;
    spec.seed = derive_seed(seed, "model");
    const std::uint64_t split_seed = derive_seed(seed, "experiment");
    const auto p = eval::run_pooled_experiment(rows, 9, std::span(&spec, 1), split_seed);
    const auto k = eval::run_clustered_experiment(rows, 9, c.assigned, spec, split_seed);
    pooled.push_back(p.families[0].report.accuracy);
    clustered.push_back(k.weighted.accuracy);
    margin.push_back(clustered.back() - pooled.back());
  }
  const auto mp = eval::mean_std(pooled);
  const auto mc = eval::mean_std(clustered);
  const auto mm = eval::mean_std(margin);
  const double worst_std = std::max({mp.std, mc.std, mm.std});
  verdict(6, mm.mean > worst_std, "clustered weighted accuracy beats pooled beyond seed noise",
          "pooled " + fmt(mp.mean) + "+-" + fmt(mp.std) + ", clustered " + fmt(mc.mean) + "+-" +
              fmt(mc.std) + ", margin " + fmt(mm.mean) + "+-" + fmt(mm.std) +
              " over 5 seeds (need margin > largest std " + fmt(worst_std) + ")");
}

// ------------------------------------------------------------------ full pipeline
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct PipelineRun {
  bool ok = true;
  std::string failed_step;
  double seconds = 0.0;
  fs::path workspace;
};

PipelineRun run_pipeline(const fs::path& ws, const std::string& threads) {
  PipelineRun run;
  run.workspace = ws;
  fs::remove_all(ws);
  fs::create_directories(ws);
  const auto t0 = clock_type::now();
  for (std::vector<std::string> step : std::vector<std::vector<std::string>>{
           {"synth"}, {"ingest"}, {"routine"}, {"features"}, {"cluster"}, {"train"},
           {"eval-pooled"}, {"eval-clustered"}, {"coldstart"}, {"coldstart", "--clustered"},
           {"report"}}) {
    const std::string name = step.size() > 1 ? step[0] + " " + step[1] : step[0];
    step.insert(step.begin(), {"-w", ws.string(), "--threads", threads});
    std::ostringstream out, err;
    const auto ts = clock_type::now();
    const int code = cli::run(step, out, err);
    std::cout << "  [threads " << threads << "] " << name << " " << fmt(seconds_since(ts), 1) << " s"
              << std::endl;
    if (code != 0) {
      run.ok = false;
      run.failed_step = name + ": " + err.str();
      break;
    }
  }
  run.seconds = seconds_since(t0);
  return run;
}

// ------------------------------------------------------------------ 7
void cold_start(const json& results) {
  const auto& cs = results.at("coldstart");
  bool shape = true;
  std::string detail;
  std::map<std::string, std::vector<double>> stds, test_cv, independent;
  for (const char* variant : {"unclustered", "clustered"}) {
    const auto& v = cs.at(variant);
    shape = shape && v.at("scenarios").size() == 3 && v.at("iterations").size() == 60 &&
            v.at("iterations_per_scenario") == 20;
    for (const auto& s : v.at("scenarios")) {
      stds[variant].push_back(s.at("independent").at("std").get<double>());
      test_cv[variant].push_back(s.at("test_cv").at("mean").get<double>());
      independent[variant].push_back(s.at("independent").at("mean").get<double>());
    }
  }
  const auto& u = stds["unclustered"];
  const bool decreasing = u.size() == 3 && u[0] > u[1] && u[1] > u[2];
  bool direction = true;
  for (std::size_t i = 0; i < 3; ++i) {
    direction = direction && test_cv["clustered"][i] >= test_cv["unclustered"][i] &&
                independent["clustered"][i] >= independent["unclustered"][i];
  }
  auto triple = [](const std::vector<double>& v) {
    std::string s;
    for (double x : v) s += (s.empty() ? "" : "/") + fmt(x);
    return s;
  };
  detail = "shape " + std::string(shape ? "3x20 both variants" : "WRONG") +
           "; unclustered independent std at 10/25/40% test " + triple(u) +
           " (clustered " + triple(stds["clustered"]) + ")" + "; test-CV mean unclustered " +
           triple(test_cv["unclustered"]) + " vs clustered " + triple(test_cv["clustered"]) +
           "; independent mean unclustered " + triple(independent["unclustered"]) +
           " vs clustered " + triple(independent["clustered"]);
  verdict(7, shape && decreasing && direction,
          "cold start completes, std falls with test share, clustering does not hurt", detail);
}

// ------------------------------------------------------------------ 8
void classifier_sanity(const json& results) {
  std::string detail;
  bool pass = true;
  for (const auto& [fam, body] : results.at("pooled").at("families").items()) {
    const double acc = body.at("metrics").at("accuracy").get<double>();
    pass = pass && acc >= 0.85;
    detail += fam + " " + fmt(acc) + ", ";
  }
  pass = pass && results.at("pooled").at("families").size() == 3;
  bool monotone = results.at("training").at("families").at("gbt").at("train_loss_monotone").get<bool>();

  // Additional boosting fixtures: separable blobs, pure noise, and an aggressive step size.
  Rng rng(303);
  std::normal_distribution<double> g(0.0, 1.0);
  int fixtures = 1;
  for (double lr : {0.1, 1.0, 10.0}) {
    for (int kind = 0; kind < 2; ++kind) {
      models::Dataset d;
      d.rows = 300;
      d.cols = 4;
      d.class_count = 4;
      for (std::size_t i = 0; i < d.rows; ++i) {
        const int label = static_cast<int>(rng() % 4);
        for (std::size_t j = 0; j < d.cols; ++j) d.x.push_back(g(rng) + (kind == 0 ? 3.0 * label * (j == 0) : 0.0));
        d.y.push_back(label);
      }
      for (std::size_t j = 0; j < d.cols; ++j) d.feature_names.push_back("f" + std::to_string(j));
      models::ModelSpec spec;
      spec.family = models::Family::kGradientBoost;
      spec.n_trees = 25;
      spec.max_depth = 3;
      spec.learning_rate = lr;
      const auto m = models::gbt_fit(d, spec);
      for (std::size_t i = 1; i < m.train_loss.size(); ++i) {
        monotone = monotone && m.train_loss[i] <= m.train_loss[i - 1];
      }
      ++fixtures;
    }
  }
  verdict(8, pass && monotone, "every family reaches 0.85 and boosting loss never rises",
          detail + "GBT loss monotone on " + std::to_string(fixtures) + " fixtures: " +
              (monotone ? "yes" : "no"));
}

}  // namespace

int main() {
  std::cout << "lumirec acceptance" << std::endl;
  metrics_oracle();
  weighted_arithmetic();
  binary_equivalence();

  {
    const auto t0 = clock_type::now();
    const World w = make_world(7);
    const double synth_secs = seconds_since(t0);
    routine_recovery(w, synth_secs);
    cluster_recovery(cluster_world(w, 7));
  }
  clustered_vs_pooled();

  const fs::path root = fs::temp_directory_path() / "lumirec_acceptance";
  const PipelineRun a = run_pipeline(root / "run_a", "1");
  const PipelineRun b = a.ok ? run_pipeline(root / "run_b", "4") : PipelineRun{false, "skipped", 0, {}};
  if (!a.ok) {
    for (int id : {7, 8, 9}) verdict(id, false, "full pipeline", "run failed at " + a.failed_step);
  } else {
    const json results = json::parse(slurp(a.workspace / "reports/results.json"));
    cold_start(results);
    classifier_sanity(results);
    const bool same = b.ok && slurp(a.workspace / "reports/results.json") ==
                                  slurp(b.workspace / "reports/results.json");
    verdict(9, same, "identical results.json across runs at 1 and 4 threads",
            b.ok ? (same ? "byte-identical" : "results differ") : "second run failed at " + b.failed_step);
  }
  verdict(10, a.ok && a.seconds < 900.0, "full default pipeline under 15 minutes",
          fmt(a.seconds, 1) + " s on " + std::to_string(std::thread::hardware_concurrency()) +
              " hardware threads (limit 900 s)");

  std::error_code ec;
  fs::remove_all(root, ec);
  std::cout << (failures == 0 ? "ALL CRITERIA PASS" : std::to_string(failures) + " CRITERIA FAIL")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
