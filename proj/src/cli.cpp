#include "lumirec/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lumirec/clustering.hpp"
#include "lumirec/config.hpp"
#include "lumirec/eval.hpp"
#include "lumirec/features.hpp"
#include "lumirec/ingest.hpp"
#include "lumirec/model_io.hpp"
#include "lumirec/routine.hpp"
#include "lumirec/synth.hpp"

namespace lumirec::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using ingest::EntityKey;
using ingest::GeoInfo;
using ingest::StateSeries;

constexpr const char* kConfigFile = "lumirec.json";
constexpr const char* kFamilies[] = {"knn", "rf", "gbt"};

// ---------------------------------------------------------------- file io

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::kInvalidArgument, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_text(const fs::path& p, const std::string& text) {
  ensure_parent(p);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorKind::kInternal, "cannot write " + p.string());
}

json read_json(const fs::path& p) {
  try {
    return json::parse(read_text(p));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidArgument, p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

void require(const fs::path& p, const std::string& stage) {
  if (!fs::exists(p)) throw Error(ErrorKind::kMissingArtifact, stage);
}

std::string safe_name(std::string s) {
  for (char& ch : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.';
    if (!ok) ch = '_';
  }
  return s;
}

std::string num(double v) { return format_double(v); }

// ---------------------------------------------------------------- workspace

struct Context {
  fs::path root;
  WorkspaceConfig config;
  std::string hash;
  std::ostream* out = nullptr;

  fs::path at(const std::string& rel) const {
    fs::path p(rel);
    return p.is_absolute() ? p : root / p;
  }
  fs::path events() const { return at(config.paths.events); }
  fs::path ground_truth() const { return at(config.paths.ground_truth); }
  fs::path state(const char* name) const { return at(config.paths.state) / name; }
  fs::path routine(const std::string& name) const { return at(config.paths.routine) / name; }
  fs::path features(const char* name) const { return at(config.paths.features) / name; }
  fs::path clusters(const char* name) const { return at(config.paths.clusters) / name; }
  fs::path models(const std::string& name) const { return at(config.paths.models) / name; }
  fs::path reports(const std::string& name) const { return at(config.paths.reports) / name; }
  fs::path manifests() const { return at(config.paths.manifests); }

  std::string rel(const fs::path& p) const {
    const fs::path r = p.lexically_relative(root);
    return (r.empty() ? p : r).generic_string();
  }
  json stamp() const { return json{{"format_version", kArtifactFormatVersion}, {"config_hash", hash}}; }
  std::uint64_t experiment_seed() const { return derive_seed(config.seed, "experiment"); }
};

void write_manifest(const Context& c, const std::string& command, const std::vector<fs::path>& inputs,
                    const std::vector<fs::path>& outputs, json extra = json::object()) {
  json j = c.stamp();
  j["command"] = command;
  j["seed"] = c.config.seed;
  j["version"] = kVersion;
  j["inputs"] = json::array();
  for (const auto& p : inputs) j["inputs"].push_back(c.rel(p));
  j["outputs"] = json::array();
  for (const auto& p : outputs) j["outputs"].push_back(c.rel(p));
  for (auto& [k, v] : extra.items()) j[k] = v;
  write_json(c.manifests() / ("manifest_" + command + ".json"), j);
}

// ---------------------------------------------------------------- state

json state_to_json(const Context& c, const std::map<EntityKey, StateSeries>& states,
                   const std::map<std::string, GeoInfo>& geo) {
  json j = c.stamp();
  j["from"] = c.config.from;
  j["to"] = c.config.to;
  json g = json::object();
  for (const auto& [hh, info] : geo) g[hh] = json{{"city", info.city}, {"country", info.country}};
  j["geo"] = std::move(g);
  json entities = json::array();
  for (const auto& [key, s] : states) {
    std::vector<int> on, scenes;
    for (int d = 0; d < s.day_count(); ++d) {
      const auto& grid = s.grid[d];
      if (grid.none()) continue;
      int m = 0;
      while (m < kMinutesPerDay) {
        if (!grid[m]) {
          ++m;
          continue;
        }
        const int start = m;
        while (m < kMinutesPerDay && grid[m]) ++m;
        on.insert(on.end(), {d, start, m});
      }
      for (const auto& r : s.scene_runs[d]) scenes.insert(scenes.end(), {d, r.start, r.end, r.scene});
    }
    entities.push_back(json{{"household", key.household},
                            {"room", to_string(key.room)},
                            {"first_day", format_date(s.first_day)},
                            {"days", s.day_count()},
                            {"on", std::move(on)},
                            {"scenes", std::move(scenes)}});
  }
  j["entities"] = std::move(entities);
  return j;
}

struct LoadedState {
  std::map<EntityKey, StateSeries> states;
  std::map<std::string, GeoInfo> geo;
};

LoadedState load_state(const Context& c) {
  const fs::path p = c.state("state.json");
  require(p, "ingest");
  const json j = read_json(p);
  LoadedState out;
  try {
    for (const auto& [hh, info] : j.at("geo").items()) {
      out.geo[hh] = GeoInfo{info.at("city").get<std::string>(), info.at("country").get<std::string>()};
    }
    for (const auto& e : j.at("entities")) {
      StateSeries s;
      s.household = e.at("household").get<std::string>();
      if (!parse_room(e.at("room").get<std::string>(), s.room)) {
        throw Error(ErrorKind::kInvalidArgument, "state.json: bad room");
      }
      s.first_day = parse_date(e.at("first_day").get<std::string>());
      const int days = e.at("days").get<int>();
      if (days < 0) throw Error(ErrorKind::kInvalidArgument, "state.json: negative day count");
      s.grid.assign(static_cast<std::size_t>(days), {});
      s.scene_runs.assign(static_cast<std::size_t>(days), {});
      const auto on = e.at("on").get<std::vector<int>>();
      const auto scenes = e.at("scenes").get<std::vector<int>>();
      if (on.size() % 3 || scenes.size() % 4) {
        throw Error(ErrorKind::kInvalidArgument, "state.json: truncated run list");
      }
      auto check = [&](int d, int a, int b) {
        if (d < 0 || d >= days || a < 0 || b > kMinutesPerDay || a >= b) {
          throw Error(ErrorKind::kInvalidArgument, "state.json: run out of range");
        }
      };
      for (std::size_t i = 0; i < on.size(); i += 3) {
        check(on[i], on[i + 1], on[i + 2]);
        for (int m = on[i + 1]; m < on[i + 2]; ++m) s.grid[on[i]].set(m);
      }
      for (std::size_t i = 0; i < scenes.size(); i += 4) {
        check(scenes[i], scenes[i + 1], scenes[i + 2]);
        s.scene_runs[scenes[i]].push_back({static_cast<std::int16_t>(scenes[i + 1]),
                                           static_cast<std::int16_t>(scenes[i + 2]),
                                           static_cast<std::int16_t>(scenes[i + 3])});
      }
      EntityKey key{s.household, s.room};
      out.states.emplace(std::move(key), std::move(s));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidArgument, std::string("state.json: ") + e.what());
  }
  return out;
}

// ---------------------------------------------------------------- features, clusters

std::vector<features::FeatureRow> load_feature_rows(const Context& c) {
  const fs::path p = c.features("features.csv");
  require(p, "features");
  std::ifstream in(p);
  return features::read_csv(in);
}

features::CategoryCodes load_codes(const Context& c) {
  const fs::path p = c.features("codes.json");
  require(p, "features");
  return features::CategoryCodes::from_json(read_json(p));
}

struct EntityProfiles {
  std::vector<routine::FrequencyProfile> profiles;
  std::vector<clustering::ClusterVector> vectors;
};

EntityProfiles entity_profiles(const Context& c, const LoadedState& st,
                               const features::CategoryCodes& codes) {
  std::vector<const StateSeries*> used;
  for (const auto& [key, s] : st.states) {
    if (s.on_minutes() > 0) used.push_back(&s);
  }
  EntityProfiles out;
  out.profiles.resize(used.size());
  out.vectors.resize(used.size());
  parallel_for(used.size(), [&](std::size_t i) {
    out.profiles[i] = routine::frequency_profile(*used[i]);
    auto g = st.geo.find(used[i]->household);
    const int country = g == st.geo.end() ? 0 : codes.country.code(g->second.country);
    out.vectors[i] = clustering::build_cluster_vector(out.profiles[i], country,
                                                      codes.country.cardinality(),
                                                      c.config.clustering.lower_quantile,
                                                      c.config.clustering.upper_quantile);
  });
  return out;
}

struct LoadedClusters {
  clustering::KMeansModel model;
  eval::ClusterMap assignments;
  json raw;
};

LoadedClusters load_clusters(const Context& c) {
  const fs::path p = c.clusters("clusters.json");
  require(p, "cluster");
  LoadedClusters out;
  out.raw = read_json(p);
  try {
    out.model.k = out.raw.at("k").get<int>();
    out.model.dim = out.raw.at("dim").get<std::size_t>();
    for (const auto& row : out.raw.at("centroids")) {
      const auto v = row.get<std::vector<double>>();
      if (v.size() != out.model.dim) throw Error(ErrorKind::kInvalidArgument, "clusters.json: centroid size");
      out.model.centroids.insert(out.model.centroids.end(), v.begin(), v.end());
    }
    if (out.model.centroids.size() != out.model.dim * static_cast<std::size_t>(out.model.k)) {
      throw Error(ErrorKind::kInvalidArgument, "clusters.json: centroid count");
    }
    for (const auto& a : out.raw.at("assignments")) {
      EntityKey key;
      key.household = a.at("household").get<std::string>();
      if (!parse_room(a.at("room").get<std::string>(), key.room)) {
        throw Error(ErrorKind::kInvalidArgument, "clusters.json: bad room");
      }
      out.assignments[key] = a.at("cluster").get<int>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidArgument, std::string("clusters.json: ") + e.what());
  }
  return out;
}

// ---------------------------------------------------------------- results

json metric_json(const eval::MetricReport& r) {
  json per_class = json::array();
  for (std::size_t k = 0; k < r.per_class.size(); ++k) {
    const auto& m = r.per_class[k];
    json undefined = json::array();
    if (m.precision_undefined) undefined.push_back("precision");
    if (m.recall_undefined) undefined.push_back("recall");
    if (m.specificity_undefined) undefined.push_back("specificity");
    if (m.f1_undefined) undefined.push_back("f1");
    per_class.push_back(json{{"class", k},
                             {"precision", m.precision},
                             {"recall", m.recall},
                             {"specificity", m.specificity},
                             {"f1", m.f1},
                             {"support", m.support},
                             {"undefined", undefined}});
  }
  return json{{"n", r.n},
              {"accuracy", r.accuracy},
              {"balanced_accuracy", r.balanced_accuracy},
              {"per_class", per_class}};
}

json mean_std_json(const eval::MeanStd& m) { return json{{"mean", m.mean}, {"std", m.std}}; }

fs::path results_path(const Context& c) { return c.reports("results.json"); }

json load_results(const Context& c) {
  const fs::path p = results_path(c);
  if (fs::exists(p)) {
    json j = read_json(p);
    if (j.is_object() && j.value("config_hash", "") == c.hash) return j;
  }
  return c.stamp();
}

std::string depth_text(int depth) {
  return depth == models::kUnboundedDepth ? "unbounded" : std::to_string(depth);
}

// n_trees,max_depth,n_neighbors,learning_rate with cells the family ignores left empty.
std::string spec_cells(const json& spec) {
  const auto family = models::parse_family(spec.at("family").get<std::string>());
  if (family == models::Family::kKnn) {
    return ",," + std::to_string(spec.at("n_neighbors").get<int>()) + ",";
  }
  std::string out = std::to_string(spec.at("n_trees").get<int>()) + "," +
                    depth_text(spec.at("max_depth").get<int>()) + ",,";
  if (family == models::Family::kGradientBoost) out += num(spec.at("learning_rate").get<double>());
  return out;
}

// Table CSVs derived from whatever sections results.json holds.
std::vector<fs::path> write_tables(const Context& c, const json& results) {
  std::vector<fs::path> written;
  if (results.contains("pooled")) {
    std::ostringstream t2, t3;
    t2 << "family,class,precision,recall,specificity,f1,support\n";
    t3 << "family,n_trees,max_depth,n_neighbors,learning_rate,accuracy,balanced_accuracy,n\n";
    for (const char* fam : kFamilies) {
      if (!results["pooled"]["families"].contains(fam)) continue;
      const json& f = results["pooled"]["families"][fam];
      const json& m = f.at("metrics");
      for (const auto& pc : m.at("per_class")) {
        t2 << fam << ',' << pc.at("class").get<int>() << ',' << num(pc.at("precision").get<double>())
           << ',' << num(pc.at("recall").get<double>()) << ','
           << num(pc.at("specificity").get<double>()) << ',' << num(pc.at("f1").get<double>()) << ','
           << pc.at("support").get<std::int64_t>() << '\n';
      }
      t3 << fam << ',' << spec_cells(f.at("spec")) << ',' << num(m.at("accuracy").get<double>()) << ','
         << num(m.at("balanced_accuracy").get<double>()) << ',' << m.at("n").get<std::int64_t>()
         << '\n';
    }
    written.push_back(c.reports("table2_per_class.csv"));
    write_text(written.back(), t2.str());
    written.push_back(c.reports("table3_pooled.csv"));
    write_text(written.back(), t3.str());
  }
  if (results.contains("clustered")) {
    const json& cl = results["clustered"];
    std::ostringstream t4;
    t4 << "cluster,rows,train_rows,test_rows,accuracy,balanced_accuracy\n";
    std::int64_t total = 0;
    for (const auto& r : cl.at("clusters")) {
      total += r.at("rows").get<std::int64_t>();
      t4 << r.at("cluster").get<int>() << ',' << r.at("rows").get<std::int64_t>() << ','
         << r.at("train_rows").get<std::int64_t>() << ',' << r.at("test_rows").get<std::int64_t>()
         << ',' << num(r.at("accuracy").get<double>()) << ','
         << num(r.at("balanced_accuracy").get<double>()) << '\n';
    }
    t4 << "weighted_by_rows," << total << ",,," << num(cl.at("weighted").at("accuracy").get<double>())
       << ',' << num(cl.at("weighted").at("balanced_accuracy").get<double>()) << '\n';
    written.push_back(c.reports("table4_clustered.csv"));
    write_text(written.back(), t4.str());
  }
  if (results.contains("coldstart")) {
    std::ostringstream t5;
    t5 << "variant,test_share,train_cv_mean,train_cv_std,test_cv_mean,test_cv_std,"
          "independent_mean,independent_std\n";
    for (const char* variant : {"unclustered", "clustered"}) {
      if (!results["coldstart"].contains(variant)) continue;
      for (const auto& s : results["coldstart"][variant].at("scenarios")) {
        t5 << variant << ',' << num(s.at("test_share").get<double>());
        for (const char* part : {"train_cv", "test_cv", "independent"}) {
          t5 << ',' << num(s.at(part).at("mean").get<double>()) << ','
             << num(s.at(part).at("std").get<double>());
        }
        t5 << '\n';
      }
    }
    written.push_back(c.reports("table5_coldstart.csv"));
    write_text(written.back(), t5.str());
  }
  return written;
}

std::vector<fs::path> save_results(const Context& c, const json& results) {
  std::vector<fs::path> outputs{results_path(c)};
  write_json(results_path(c), results);
  for (auto& p : write_tables(c, results)) outputs.push_back(std::move(p));
  return outputs;
}

std::vector<models::TrainedModel> load_models(const Context& c, std::vector<fs::path>& inputs) {
  std::vector<models::TrainedModel> out;
  for (const char* fam : kFamilies) {
    const fs::path p = c.models(std::string(fam) + ".json");
    if (!fs::exists(p)) continue;
    out.push_back(models::model_from_json(read_json(p)));
    inputs.push_back(p);
  }
  if (out.empty()) throw Error(ErrorKind::kMissingArtifact, "train");
  return out;
}

// ---------------------------------------------------------------- commands

void cmd_synth(const Context& c) {
  synth::Population pop;
  if (c.config.personas.empty()) {
    pop = synth::default_population(c.config.seed);
  } else {
    pop = synth::population_from_json(read_json(c.at(c.config.personas)));
  }
  pop.options.scene_count = c.config.scene_count;
  synth::validate(pop);
  const auto truth = synth::plan_households(pop, c.config.seed);
  const DateRange range = c.config.window();

  const fs::path events = c.events();
  ensure_parent(events);
  std::size_t written = 0;
  {
    std::ofstream out(events, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kInternal, "cannot write " + events.string());
    written = synth::write_events(pop, truth, range, c.config.seed, out);
    if (!out) throw Error(ErrorKind::kInternal, "cannot write " + events.string());
  }
  json gt = c.stamp();
  gt["households"] = synth::ground_truth_json(truth);
  write_json(c.ground_truth(), gt);
  const fs::path population = c.ground_truth().parent_path() / "population.json";
  json pj = c.stamp();
  pj["population"] = synth::to_json(pop);
  write_json(population, pj);

  std::vector<fs::path> inputs;
  if (!c.config.personas.empty()) inputs.push_back(c.at(c.config.personas));
  write_manifest(c, "synth", inputs, {events, c.ground_truth(), population},
                 json{{"records", written}, {"households", truth.size()}});
  *c.out << "synth: " << truth.size() << " households, " << written << " records -> "
         << c.rel(events) << "\n";
}

void cmd_ingest(const Context& c) {
  const fs::path events = c.events();
  require(events, "synth");
  std::ifstream in(events, std::ios::binary);
  ingest::ParseOptions po;
  po.scene_count = c.config.scene_count;
  const auto result = ingest::ingest_stream(in, c.config.window(), po);
  const auto& r = result.report;

  json report = c.stamp();
  report["total"] = r.total;
  report["parsed"] = r.parsed;
  report["skipped"] = r.skipped();
  report["skipped_malformed"] = r.skipped_malformed;
  report["skipped_unknown_room"] = r.skipped_unknown_room;
  report["skipped_out_of_window"] = r.skipped_out_of_window;
  report["households"] = r.households;
  report["rooms"] = r.rooms;
  report["first_date"] = r.first_date ? json(format_date(*r.first_date)) : json(nullptr);
  report["last_date"] = r.last_date ? json(format_date(*r.last_date)) : json(nullptr);

  const fs::path state = c.state("state.json");
  const fs::path report_path = c.state("ingest_report.json");
  write_json(state, state_to_json(c, result.states, result.geo));
  write_json(report_path, report);
  write_manifest(c, "ingest", {events}, {state, report_path});
  *c.out << "ingest: " << r.parsed << " of " << r.total << " records, " << r.households
         << " households, " << result.states.size() << " rooms\n";
}

void cmd_routine(const Context& c) {
  const LoadedState st = load_state(c);
  std::vector<const StateSeries*> series;
  for (const auto& [key, s] : st.states) series.push_back(&s);
  std::vector<routine::FrequencyProfile> profiles(series.size());
  std::vector<routine::RoutinePlan> plans(series.size());
  parallel_for(series.size(), [&](std::size_t i) {
    profiles[i] = routine::frequency_profile(*series[i]);
    plans[i] = routine::recommend_routine(profiles[i], c.config.routine);
  });

  std::ostringstream csv;
  csv << "household,room,start_hhmm,end_hhmm,threshold\n";
  json entities = json::array();
  const fs::path profile_dir = c.routine("profiles");
  fs::create_directories(profile_dir);
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const auto& p = plans[i];
    json iv = json::array();
    for (const auto& in : p.intervals) {
      csv << p.household << ',' << to_string(p.room) << ',' << format_hhmm(in.start) << ','
          << format_hhmm(in.end) << ',' << num(p.threshold) << '\n';
      iv.push_back({in.start, in.end});
    }
    const std::string file = safe_name(p.household + "_" + std::string(to_string(p.room))) + ".csv";
    entities.push_back(json{{"household", p.household},
                            {"room", to_string(p.room)},
                            {"threshold", p.threshold},
                            {"fallback", p.fallback},
                            {"no_routine", p.no_routine},
                            {"intervals", iv},
                            {"profile", "profiles/" + file}});
    std::ostringstream prof;
    prof << "minute,hhmm,frequency\n";
    for (int m = 0; m < kMinutesPerDay; ++m) {
      prof << m << ',' << format_hhmm(m) << ',' << num(profiles[i].values[m]) << '\n';
    }
    write_text(profile_dir / file, prof.str());
  }
  json plans_json = c.stamp();
  plans_json["merge_gap"] = c.config.routine.merge_gap;
  plans_json["min_len"] = c.config.routine.min_len;
  plans_json["entities"] = std::move(entities);

  const fs::path routines = c.routine("routines.csv");
  const fs::path plans_path = c.routine("plans.json");
  write_text(routines, csv.str());
  write_json(plans_path, plans_json);
  write_manifest(c, "routine", {c.state("state.json")}, {routines, plans_path, profile_dir});
  *c.out << "routine: " << plans.size() << " rooms -> " << c.rel(routines) << "\n";
}

void cmd_features(const Context& c) {
  const LoadedState st = load_state(c);
  const auto codes = features::fit_codes(st.geo);
  const auto rows = features::build_feature_rows(st.states, st.geo, codes);
  const fs::path csv = c.features("features.csv");
  const fs::path codes_path = c.features("codes.json");
  ensure_parent(csv);
  {
    std::ofstream out(csv, std::ios::binary | std::ios::trunc);
    features::write_csv(out, rows);
    if (!out) throw Error(ErrorKind::kInternal, "cannot write " + csv.string());
  }
  json cj = codes.to_json();
  cj["config_hash"] = c.hash;
  write_json(codes_path, cj);
  write_manifest(c, "features", {c.state("state.json")}, {csv, codes_path},
                 json{{"rows", rows.size()}});
  *c.out << "features: " << rows.size() << " rows -> " << c.rel(csv) << "\n";
}

void cmd_cluster(const Context& c) {
  const auto codes = load_codes(c);
  const LoadedState st = load_state(c);
  const EntityProfiles ep = entity_profiles(c, st, codes);
  std::vector<std::vector<double>> rows;
  rows.reserve(ep.vectors.size());
  for (const auto& v : ep.vectors) rows.push_back(v.flatten());
  const auto points = clustering::PointSet::from_rows(rows);

  const auto& cc = c.config.clustering;
  std::vector<int> ks;
  for (int k = cc.k_min; k <= cc.k_max && static_cast<std::size_t>(k) <= points.n; ++k) ks.push_back(k);
  if (ks.empty()) throw Error(ErrorKind::kTooFewPoints, "fewer rooms with usage than k_min");
  clustering::SelectKOptions opt;
  opt.kmeans = {cc.max_iter, cc.tol, cc.n_init};
  opt.min_elbow_reduction = cc.min_elbow_reduction;
  const auto sel = clustering::select_k(points, ks, derive_seed(c.config.seed, "cluster"), opt);
  const auto& model = sel.models[static_cast<std::size_t>(sel.k_star - ks.front())];

  json j = c.stamp();
  j["k"] = sel.k_star;
  j["fallback"] = sel.fallback;
  j["dim"] = model.dim;
  j["country_cardinality"] = codes.country.cardinality();
  j["quantiles"] = {cc.lower_quantile, cc.upper_quantile};
  j["inertia"] = model.inertia;
  j["inertia_curve"] = json::array();
  for (std::size_t i = 0; i < sel.ks.size(); ++i) {
    j["inertia_curve"].push_back(json{{"k", sel.ks[i]}, {"inertia", sel.inertia[i]}});
  }
  j["centroids"] = json::array();
  for (int k = 0; k < model.k; ++k) {
    const auto cen = model.centroid(k);
    j["centroids"].push_back(std::vector<double>(cen.begin(), cen.end()));
  }
  j["assignments"] = json::array();
  std::vector<clustering::CdfEntry> cdf;
  const auto xs = clustering::cdf_abscissae();
  for (std::size_t i = 0; i < ep.vectors.size(); ++i) {
    const auto& key = ep.vectors[i].entity;
    j["assignments"].push_back(json{{"household", key.household},
                                    {"room", to_string(key.room)},
                                    {"cluster", model.labels[i]}});
    cdf.push_back({key, model.labels[i], clustering::empirical_cdf(ep.profiles[i].values, xs)});
  }
  const fs::path clusters = c.clusters("clusters.json");
  const fs::path cdf_path = c.clusters("cdf.csv");
  write_json(clusters, j);
  std::ostringstream cdf_csv;
  clustering::write_cdf_csv(cdf_csv, cdf, xs);
  write_text(cdf_path, cdf_csv.str());
  write_manifest(c, "cluster", {c.features("codes.json"), c.state("state.json")},
                 {clusters, cdf_path});
  *c.out << "cluster: k* = " << sel.k_star << (sel.fallback ? " (fallback)" : "") << " over "
         << points.n << " rooms -> " << c.rel(clusters) << "\n";
}

void cmd_train(const Context& c, const std::string& family) {
  const auto rows = load_feature_rows(c);
  const auto codes = load_codes(c);
  const int classes = c.config.scene_count;
  const auto split = eval::experiment_split(rows.size(), c.config.training.test_frac, c.experiment_seed());
  const auto train = features::to_dataset(rows, split.train, classes);

  std::vector<models::Family> families;
  if (family == "all") {
    families = {models::Family::kKnn, models::Family::kRandomForest, models::Family::kGradientBoost};
  } else {
    families = {models::parse_family(family)};
  }

  json results = load_results(c);
  json& training = results["training"];
  training["train_rows"] = split.train.size();
  training["test_rows"] = split.test.size();
  training["folds"] = c.config.training.folds;
  training["grid_max_rows"] = c.config.training.grid_max_rows;
  std::vector<fs::path> outputs;
  for (auto fam : families) {
    const std::string name(models::to_string(fam));
    models::GridSearchOptions go;
    go.folds = c.config.training.folds;
    go.seed = derive_seed(c.config.seed, "grid");
    go.max_rows = c.config.training.grid_max_rows;
    const auto gs = models::grid_search(fam, c.config.training.grid, train, go);
    const auto model = models::fit(gs.best, train);

    std::ostringstream grid;
    grid << "point,n_trees,max_depth,n_neighbors,learning_rate,fold,accuracy\n";
    for (const auto& r : gs.table) {
      grid << r.point << ',' << spec_cells(models::spec_to_json(gs.points[r.point])) << ','
           << r.fold << ',' << num(r.accuracy) << '\n';
    }
    std::size_t best = 0;
    for (std::size_t i = 0; i < gs.points.size(); ++i) {
      if (gs.points[i] == gs.best) best = i;
    }
    json fam_json{{"best", models::spec_to_json(gs.best)},
                  {"cv_accuracy", gs.mean_accuracy[best]},
                  {"grid_points", gs.points.size()},
                  {"rows_used", gs.rows_used},
                  {"stratified", gs.stratified}};
    if (const auto* g = std::get_if<models::GbtModel>(&model)) {
      bool monotone = true;
      for (std::size_t i = 1; i < g->train_loss.size(); ++i) {
        if (g->train_loss[i] > g->train_loss[i - 1]) monotone = false;
      }
      fam_json["train_loss"] = g->train_loss;
      fam_json["train_loss_monotone"] = monotone;
    }
    if (const auto* f = std::get_if<models::ForestModel>(&model)) {
      std::ostringstream imp;
      imp << "feature,importance\n";
      json list = json::array();
      for (const auto& [feature, value] : features::compute_feature_importance(*f)) {
        imp << feature << ',' << num(value) << '\n';
        list.push_back(json{{"feature", feature}, {"importance", value}});
      }
      training["feature_importance"] = list;
      outputs.push_back(c.models("feature_importance.csv"));
      write_text(outputs.back(), imp.str());
    }
    training["families"][name] = fam_json;

    json mj = models::model_to_json(model, codes.to_json());
    mj["config_hash"] = c.hash;
    outputs.push_back(c.models(name + ".json"));
    write_json(outputs.back(), mj);
    outputs.push_back(c.models("grid_" + name + ".csv"));
    write_text(outputs.back(), grid.str());
    *c.out << "train: " << name << " best cv accuracy " << num(gs.mean_accuracy[best]) << "\n";
  }
  for (auto& p : save_results(c, results)) outputs.push_back(std::move(p));
  write_manifest(c, "train", {c.features("features.csv"), c.features("codes.json")}, outputs);
}

void cmd_eval_pooled(const Context& c) {
  const auto rows = load_feature_rows(c);
  std::vector<fs::path> inputs{c.features("features.csv")};
  const auto trained = load_models(c, inputs);
  const auto report = eval::evaluate_pooled(rows, c.config.scene_count, trained,
                                            c.experiment_seed(), c.config.training.test_frac);
  json results = load_results(c);
  json pooled{{"train_rows", report.train_rows}, {"test_rows", report.test_rows}};
  for (const auto& f : report.families) {
    const std::string name(models::to_string(f.spec.family));
    pooled["families"][name] = json{{"spec", models::spec_to_json(f.spec)}, {"metrics", metric_json(f.report)}};
    *c.out << "eval-pooled: " << name << " accuracy " << num(f.report.accuracy) << "\n";
  }
  results["pooled"] = std::move(pooled);
  write_manifest(c, "eval-pooled", inputs, save_results(c, results));
}

void cmd_eval_clustered(const Context& c) {
  const auto rows = load_feature_rows(c);
  const auto clusters = load_clusters(c);
  const fs::path rf_path = c.models("rf.json");
  require(rf_path, "train");
  const auto spec = models::spec_of(models::model_from_json(read_json(rf_path)));
  const auto report = eval::run_clustered_experiment(rows, c.config.scene_count, clusters.assignments,
                                                     spec, c.experiment_seed(),
                                                     c.config.training.test_frac);
  json results = load_results(c);
  json cl{{"spec", models::spec_to_json(spec)}, {"weighting", "rows"}};
  cl["clusters"] = json::array();
  for (const auto& r : report.clusters) {
    cl["clusters"].push_back(json{{"cluster", r.cluster},
                                  {"rows", r.rows},
                                  {"train_rows", r.train_rows},
                                  {"test_rows", r.test_rows},
                                  {"accuracy", r.report.accuracy},
                                  {"balanced_accuracy", r.report.balanced_accuracy}});
  }
  cl["weighted"] = metric_json(report.weighted);
  cl["skipped_clusters"] = report.skipped_clusters;
  results["clustered"] = std::move(cl);
  write_manifest(c, "eval-clustered",
                 {c.features("features.csv"), c.clusters("clusters.json"), rf_path},
                 save_results(c, results));
  *c.out << "eval-clustered: weighted accuracy " << num(report.weighted.accuracy) << " over "
         << report.clusters.size() << " clusters\n";
}

struct ColdStartFlags {
  bool clustered = false;
  bool seed_given = false;
  std::uint64_t seed = 0;
};

void cmd_coldstart(const Context& c, const ColdStartFlags& flags) {
  const auto rows = load_feature_rows(c);
  std::vector<fs::path> inputs{c.features("features.csv")};
  eval::ColdStartOptions opt;
  opt.scenarios = c.config.coldstart.scenarios;
  opt.iterations = c.config.coldstart.iterations;
  opt.folds = c.config.coldstart.folds;
  opt.clustered = flags.clustered;
  opt.spec = c.config.coldstart.spec;
  opt.spec.seed = derive_seed(c.config.seed, "coldstart-model");
  const std::uint64_t base = flags.seed_given ? flags.seed : c.config.seed;
  opt.seed = derive_seed(base, "coldstart");

  eval::ClusterMap assigned;
  if (flags.clustered) {
    const auto clusters = load_clusters(c);
    const auto codes = load_codes(c);
    const LoadedState st = load_state(c);
    const EntityProfiles ep = entity_profiles(c, st, codes);
    std::vector<int> label(ep.vectors.size());
    parallel_for(ep.vectors.size(), [&](std::size_t i) {
      label[i] = clustering::assign_cluster(clusters.model, ep.vectors[i].flatten());
    });
    for (std::size_t i = 0; i < ep.vectors.size(); ++i) assigned[ep.vectors[i].entity] = label[i];
    inputs.push_back(c.clusters("clusters.json"));
    inputs.push_back(c.state("state.json"));
  }
  const auto report = eval::run_cold_start(rows, c.config.scene_count, opt,
                                           flags.clustered ? &assigned : nullptr);
  json variant{{"spec", models::spec_to_json(opt.spec)},
               {"weighting", report.weighting},
               {"folds", opt.folds},
               {"iterations_per_scenario", opt.iterations},
               {"seed", opt.seed}};
  variant["scenarios"] = json::array();
  for (const auto& s : report.scenarios) {
    variant["scenarios"].push_back(json{{"test_share", s.scenario},
                                        {"train_cv", mean_std_json(s.train_cv)},
                                        {"test_cv", mean_std_json(s.test_cv)},
                                        {"independent", mean_std_json(s.independent)}});
    *c.out << "coldstart" << (flags.clustered ? " (clustered)" : "") << ": test share "
           << num(s.scenario) << " independent " << num(s.independent.mean) << " +- "
           << num(s.independent.std) << "\n";
  }
  variant["iterations"] = json::array();
  for (const auto& it : report.iterations) {
    variant["iterations"].push_back(json{{"test_share", it.scenario},
                                         {"iteration", it.iteration},
                                         {"train_households", it.train_households},
                                         {"test_households", it.test_households},
                                         {"train_cv", it.train_cv},
                                         {"test_cv", it.test_cv},
                                         {"independent", it.independent}});
  }
  json results = load_results(c);
  results["coldstart"][flags.clustered ? "clustered" : "unclustered"] = std::move(variant);
  write_manifest(c, flags.clustered ? "coldstart-clustered" : "coldstart", inputs,
                 save_results(c, results));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

void check_hashes(const Context& c) {
  auto check = [&](const fs::path& p) {
    const json j = read_json(p);
    const std::string h = j.value("config_hash", "");
    if (h != c.hash) {
      throw Error(ErrorKind::kConfigMismatch, c.rel(p) + " has config hash " + h +
                                                  ", current config hash is " + c.hash);
    }
  };
  if (fs::exists(c.manifests())) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(c.manifests())) {
      if (e.path().extension() == ".json" && e.path().filename() != "manifest_report.json") {
        files.push_back(e.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& p : files) check(p);
  }
  check(results_path(c));
}

void cmd_report(const Context& c) {
  require(results_path(c), "eval-pooled");
  check_hashes(c);
  const json results = read_json(results_path(c));
  std::vector<fs::path> inputs{results_path(c)};
  std::vector<fs::path> outputs = write_tables(c, results);

  const fs::path plans = c.routine("plans.json");
  if (fs::exists(plans)) {
    const json pj = read_json(plans);
    std::ostringstream fig;
    fig << "household,room,minute,frequency,threshold,in_routine\n";
    std::size_t shown = 0;
    for (const auto& e : pj.at("entities")) {
      if (shown == 10) break;
      const fs::path prof = c.routine(e.at("profile").get<std::string>());
      if (!fs::exists(prof)) continue;
      ++shown;
      std::vector<char> in(kMinutesPerDay, 0);
      for (const auto& iv : e.at("intervals")) {
        for (int m = iv[0].get<int>(); m < iv[1].get<int>(); ++m) in[m] = 1;
      }
      std::istringstream lines(read_text(prof));
      std::string line;
      std::getline(lines, line);
      while (std::getline(lines, line)) {
        const auto cells = split_csv_line(line);
        if (cells.size() != 3) throw Error(ErrorKind::kInvalidArgument, c.rel(prof) + ": bad row");
        const int m = static_cast<int>(parse_int(cells[0]));
        if (m < 0 || m >= kMinutesPerDay) throw Error(ErrorKind::kInvalidArgument, c.rel(prof) + ": bad minute");
        fig << e.at("household").get<std::string>() << ',' << e.at("room").get<std::string>() << ','
            << m << ',' << cells[2] << ',' << num(e.at("threshold").get<double>()) << ','
            << int(in[m]) << '\n';
      }
      inputs.push_back(prof);
    }
    inputs.push_back(plans);
    outputs.push_back(c.reports("fig1_profiles.csv"));
    write_text(outputs.back(), fig.str());
  }
  const fs::path clusters = c.clusters("clusters.json");
  if (fs::exists(clusters)) {
    const json cj = read_json(clusters);
    std::ostringstream fig;
    fig << "k,inertia,selected\n";
    for (const auto& p : cj.at("inertia_curve")) {
      const int k = p.at("k").get<int>();
      fig << k << ',' << num(p.at("inertia").get<double>()) << ',' << int(k == cj.at("k").get<int>()) << '\n';
    }
    inputs.push_back(clusters);
    outputs.push_back(c.reports("fig3_inertia.csv"));
    write_text(outputs.back(), fig.str());
  }
  const fs::path cdf = c.clusters("cdf.csv");
  if (fs::exists(cdf)) {
    inputs.push_back(cdf);
    outputs.push_back(c.reports("fig4_cdf.csv"));
    write_text(outputs.back(), read_text(cdf));
  }
  if (results.contains("training") && results["training"].contains("feature_importance")) {
    std::ostringstream fig;
    fig << "feature,importance\n";
    for (const auto& f : results["training"]["feature_importance"]) {
      fig << f.at("feature").get<std::string>() << ',' << num(f.at("importance").get<double>()) << '\n';
    }
    outputs.push_back(c.reports("fig5_importance.csv"));
    write_text(outputs.back(), fig.str());
  }
  if (results.contains("coldstart")) {
    std::ostringstream fig;
    fig << "variant,test_share,iteration,train_cv,test_cv,independent\n";
    for (const char* variant : {"unclustered", "clustered"}) {
      if (!results["coldstart"].contains(variant)) continue;
      for (const auto& it : results["coldstart"][variant].at("iterations")) {
        fig << variant << ',' << num(it.at("test_share").get<double>()) << ','
            << it.at("iteration").get<int>() << ',' << num(it.at("train_cv").get<double>()) << ','
            << num(it.at("test_cv").get<double>()) << ',' << num(it.at("independent").get<double>())
            << '\n';
      }
    }
    outputs.push_back(c.reports("fig6_coldstart.csv"));
    write_text(outputs.back(), fig.str());
  }
  write_manifest(c, "report", inputs, outputs);
  *c.out << "report: " << outputs.size() << " files -> " << c.rel(c.reports("")) << "\n";
}

// ---------------------------------------------------------------- dispatch

void print_error(std::ostream& err, const Error& e) {
  if (e.kind() == ErrorKind::kMissingArtifact) {
    err << "error: MissingArtifact(\"" << e.what() << "\"): run `lumirec " << e.what()
        << "` first\n";
  } else {
    err << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
  }
}

int run_parsed(CLI::App& app, std::vector<std::string> args, std::ostream& out, std::ostream& err,
               const std::function<void()>& execute) {
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }
  try {
    execute();
  } catch (const Error& e) {
    print_error(err, e);
    return e.kind() == ErrorKind::kInternal ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Smart-lighting routine and scene recommendation pipeline", "lumirec"};
  app.fallthrough();
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", kVersion);

  std::string config_file, workspace = ".";
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string from, to;
  int scene_count = 0;
  app.add_option("--config", config_file, "JSON config file (default <workspace>/lumirec.json)");
  app.add_option("-w,--workspace", workspace, "Workspace directory")->capture_default_str();
  auto* seed_opt = app.add_option("--seed", seed, "Global seed");
  auto* threads_opt = app.add_option("--threads", threads, "Worker thread cap (0 = all cores)");
  auto* from_opt = app.add_option("--from", from, "First day of the study window (YYYY-MM-DD)");
  auto* to_opt = app.add_option("--to", to, "Last day of the study window (YYYY-MM-DD)");
  auto* scenes_opt = app.add_option("--scene-count", scene_count, "Number of scene classes C");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic event log with ground truth");
  std::string personas, synth_out;
  auto* personas_opt = synth->add_option("--personas", personas, "Persona spec JSON");
  auto* synth_out_opt = synth->add_option("--out", synth_out, "Output directory for the log");

  auto* ingest_cmd = app.add_subcommand("ingest", "Reconstruct per-room state from the event log");
  std::string events;
  auto* events_opt = ingest_cmd->add_option("--events", events, "NDJSON event log");

  auto* routine_cmd = app.add_subcommand("routine", "Recommend daily routines");
  int merge_gap = 0, min_len = 0;
  auto* gap_opt = routine_cmd->add_option("--merge-gap", merge_gap, "Merge gap in minutes");
  auto* len_opt = routine_cmd->add_option("--min-len", min_len, "Minimum interval length in minutes");

  app.add_subcommand("features", "Build the hourly feature table");

  auto* cluster_cmd = app.add_subcommand("cluster", "Cluster rooms by usage profile");
  int k_min = 0, k_max = 0, n_init = 0;
  auto* kmin_opt = cluster_cmd->add_option("--k-min", k_min, "Smallest k");
  auto* kmax_opt = cluster_cmd->add_option("--k-max", k_max, "Largest k");
  auto* ninit_opt = cluster_cmd->add_option("--n-init", n_init, "k-means restarts");

  auto* train_cmd = app.add_subcommand("train", "Grid-search and fit the scene classifiers");
  std::string family = "all";
  int folds = 0;
  std::size_t grid_rows = 0;
  train_cmd->add_option("--family", family, "knn | rf | gbt | all")
      ->check(CLI::IsMember({"all", "knn", "rf", "gbt"}));
  auto* folds_opt = train_cmd->add_option("--folds", folds, "Cross-validation folds");
  auto* grid_rows_opt = train_cmd->add_option("--grid-max-rows", grid_rows,
                                              "Row cap for grid search (0 = all)");

  app.add_subcommand("eval-pooled", "Evaluate the trained models on the held-out rows");
  app.add_subcommand("eval-clustered", "Per-cluster evaluation with a row-weighted average");

  auto* cold_cmd = app.add_subcommand("coldstart", "Household-disjoint cold-start evaluation");
  std::vector<double> scenarios;
  int iterations = 0;
  ColdStartFlags cold;
  auto* scen_opt = cold_cmd->add_option("--scenarios", scenarios, "Test household shares")->delimiter(',');
  auto* iter_opt = cold_cmd->add_option("--iterations", iterations, "Iterations per scenario");
  cold_cmd->add_flag("--clustered", cold.clustered, "Route rooms through the cluster model");
  auto* cold_seed_opt = cold_cmd->add_option("--seed", cold.seed, "Seed for the household splits");

  app.add_subcommand("report", "Emit table and figure CSVs");

  auto execute = [&]() {
    Context c;
    c.out = &out;
    c.root = fs::path(workspace);
    json j = json::object();
    if (!config_file.empty()) {
      if (!fs::exists(config_file)) throw Error(ErrorKind::kInvalidArgument, "config file not found: " + config_file);
      j = read_json(config_file);
    } else if (fs::exists(c.root / kConfigFile)) {
      j = read_json(c.root / kConfigFile);
    }
    WorkspaceConfig& cfg = c.config;
    cfg = config_from_json(j);
    if (*seed_opt) cfg.seed = seed;
    if (*threads_opt) cfg.threads = threads;
    if (*from_opt) cfg.from = from;
    if (*to_opt) cfg.to = to;
    if (*scenes_opt) cfg.scene_count = scene_count;
    if (*personas_opt) cfg.personas = personas;
    if (*synth_out_opt) {
      cfg.paths.events = (fs::path(synth_out) / "events.ndjson").generic_string();
      cfg.paths.ground_truth = (fs::path(synth_out) / "ground_truth.json").generic_string();
    }
    if (*events_opt) cfg.paths.events = events;
    if (*gap_opt) cfg.routine.merge_gap = merge_gap;
    if (*len_opt) cfg.routine.min_len = min_len;
    if (*kmin_opt) cfg.clustering.k_min = k_min;
    if (*kmax_opt) cfg.clustering.k_max = k_max;
    if (*ninit_opt) cfg.clustering.n_init = n_init;
    if (*folds_opt) cfg.training.folds = folds;
    if (*grid_rows_opt) cfg.training.grid_max_rows = grid_rows;
    if (*scen_opt) cfg.coldstart.scenarios = scenarios;
    if (*iter_opt) cfg.coldstart.iterations = iterations;
    cfg.validate();
    c.hash = config_hash(cfg);
    cold.seed_given = static_cast<bool>(*cold_seed_opt);
    set_max_threads(cfg.threads);

    fs::create_directories(c.root);
    const std::string persisted = to_json(cfg).dump(2) + "\n";
    const fs::path cfg_path = c.root / kConfigFile;
    if (!fs::exists(cfg_path) || read_text(cfg_path) != persisted) write_text(cfg_path, persisted);

    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "synth") cmd_synth(c);
    else if (cmd == "ingest") cmd_ingest(c);
    else if (cmd == "routine") cmd_routine(c);
    else if (cmd == "features") cmd_features(c);
    else if (cmd == "cluster") cmd_cluster(c);
    else if (cmd == "train") cmd_train(c, family);
    else if (cmd == "eval-pooled") cmd_eval_pooled(c);
    else if (cmd == "eval-clustered") cmd_eval_clustered(c);
    else if (cmd == "coldstart") cmd_coldstart(c, cold);
    else if (cmd == "report") cmd_report(c);
  };
  return run_parsed(app, args, out, err, execute);
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace lumirec::cli
