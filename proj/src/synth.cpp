#include "lumirec/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace lumirec::synth {

using nlohmann::json;

void validate(const Population& population) {
  const auto& o = population.options;
  auto fail = [](const std::string& what) { throw Error(ErrorKind::kInvalidSpec, what); };
  if (o.scene_count < 2 || o.scene_count > 32767) fail("scene_count must be in [2, 32767]");
  if (o.jitter_minutes < 0) fail("jitter_minutes must be >= 0");
  if (o.noise_min_minutes < 1 || o.noise_max_minutes < o.noise_min_minutes) {
    fail("noise session lengths must satisfy 1 <= min <= max");
  }
  if (population.personas.empty()) fail("no personas");
  std::set<std::string> ids;
  for (const auto& p : population.personas) {
    if (p.id.empty() || !ids.insert(p.id).second) fail("persona ids must be unique and non-empty");
    if (p.households < 0) fail("persona " + p.id + ": negative household count");
    if (p.locations.empty()) fail("persona " + p.id + ": no locations");
    if (p.rooms.empty()) fail("persona " + p.id + ": no rooms");
    if (!(p.noise_rate >= 0.0)) fail("persona " + p.id + ": negative noise rate");
    if (!(p.flip_probability >= 0.0 && p.flip_probability <= 1.0)) {
      fail("persona " + p.id + ": flip probability outside [0, 1]");
    }
    for (const auto& [key, scene] : p.scene_table) {
      if (scene < 0 || scene >= o.scene_count) fail("persona " + p.id + ": scene id >= C");
    }
    for (const auto& [room, windows] : p.active_windows) {
      if (std::find(p.rooms.begin(), p.rooms.end(), room) == p.rooms.end()) {
        fail("persona " + p.id + ": windows for a room it does not have");
      }
      if (windows.size() > 99) fail("persona " + p.id + ": too many windows");
      for (const auto& w : windows) {
        if (w.start < 0 || w.end > kMinutesPerDay || w.start >= w.end) {
          fail("persona " + p.id + ": window outside [0, 1440)");
        }
        if (!(w.daily_probability >= 0.0 && w.daily_probability <= 1.0)) {
          fail("persona " + p.id + ": daily probability outside [0, 1]");
        }
        if (!p.scene_table.count({room, period_of_hour(w.start / 60)})) {
          fail("persona " + p.id + ": no scene for a window's period");
        }
      }
    }
  }
}

namespace {

json windows_json(const std::map<Room, std::vector<Window>>& windows) {
  json out = json::object();
  for (const auto& [room, list] : windows) {
    json arr = json::array();
    for (const auto& w : list) {
      arr.push_back({{"start", format_hhmm(w.start)},
                     {"end", format_hhmm(w.end)},
                     {"daily_probability", w.daily_probability}});
    }
    out[std::string(to_string(room))] = std::move(arr);
  }
  return out;
}

json scene_table_json(const SceneTable& table) {
  json out = json::object();
  for (const auto& [key, scene] : table) {
    out[std::string(to_string(key.first))][std::string(to_string(key.second))] = scene;
  }
  return out;
}

int parse_minute(const json& j) {
  if (j.is_number_integer()) return j.get<int>();
  const std::string s = j.get<std::string>();
  int h = 0, m = 0;
  char tail = 0;
  if (std::sscanf(s.c_str(), "%d:%d%c", &h, &m, &tail) != 2 || h < 0 || m < 0 || m > 59) {
    throw Error(ErrorKind::kInvalidSpec, "bad HH:MM value: " + s);
  }
  return h * 60 + m;
}

Room room_of(const std::string& s) {
  Room r;
  if (!parse_room(s, r)) throw Error(ErrorKind::kInvalidSpec, "unknown room: " + s);
  return r;
}

}  // namespace

json to_json(const Population& population) {
  json personas = json::array();
  for (const auto& p : population.personas) {
    json locations = json::array();
    for (const auto& l : p.locations) locations.push_back({{"country", l.country}, {"city", l.city}});
    json rooms = json::array();
    for (Room r : p.rooms) rooms.push_back(std::string(to_string(r)));
    personas.push_back({{"id", p.id},
                        {"households", p.households},
                        {"locations", locations},
                        {"rooms", rooms},
                        {"active_windows", windows_json(p.active_windows)},
                        {"scene_table", scene_table_json(p.scene_table)},
                        {"noise_rate", p.noise_rate},
                        {"flip_probability", p.flip_probability}});
  }
  const auto& o = population.options;
  return json{{"scene_count", o.scene_count},
              {"jitter_minutes", o.jitter_minutes},
              {"noise_min_minutes", o.noise_min_minutes},
              {"noise_max_minutes", o.noise_max_minutes},
              {"personas", personas}};
}

Population population_from_json(const json& j) {
  Population pop;
  try {
    auto& o = pop.options;
    o.scene_count = j.value("scene_count", o.scene_count);
    o.jitter_minutes = j.value("jitter_minutes", o.jitter_minutes);
    o.noise_min_minutes = j.value("noise_min_minutes", o.noise_min_minutes);
    o.noise_max_minutes = j.value("noise_max_minutes", o.noise_max_minutes);
    for (const auto& pj : j.at("personas")) {
      PersonaSpec p;
      p.id = pj.at("id").get<std::string>();
      p.households = pj.at("households").get<int>();
      p.noise_rate = pj.value("noise_rate", p.noise_rate);
      p.flip_probability = pj.value("flip_probability", p.flip_probability);
      if (pj.contains("locations")) {
        for (const auto& l : pj.at("locations")) {
          p.locations.push_back({l.at("country").get<std::string>(), l.at("city").get<std::string>()});
        }
      } else {
        p.locations.push_back({pj.at("country").get<std::string>(), pj.at("city").get<std::string>()});
      }
      for (const auto& r : pj.at("rooms")) p.rooms.push_back(room_of(r.get<std::string>()));
      for (const auto& [room, list] : pj.at("active_windows").items()) {
        auto& windows = p.active_windows[room_of(room)];
        for (const auto& w : list) {
          windows.push_back({parse_minute(w.at("start")), parse_minute(w.at("end")),
                             w.value("daily_probability", 1.0)});
        }
      }
      for (const auto& [room, periods] : pj.at("scene_table").items()) {
        for (const auto& [period, scene] : periods.items()) {
          Period per;
          if (!parse_period(period, per)) {
            throw Error(ErrorKind::kInvalidSpec, "unknown period: " + period);
          }
          p.scene_table[{room_of(room), per}] = scene.get<int>();
        }
      }
      pop.personas.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidSpec, std::string("malformed persona spec: ") + e.what());
  }
  validate(pop);
  return pop;
}

Population default_population(std::uint64_t seed) {
  const std::vector<Location> locations{
      {"DE", "berlin"},   {"DE", "munich"}, {"JP", "osaka"},   {"JP", "tokyo"},
      {"NL", "amsterdam"}, {"NL", "utrecht"}, {"US", "boston"}, {"US", "denver"}};
  // Personas share the evening window and differ in their signature window's rate.
  auto persona = [&](std::string id, int start, int end, double rate, int s1, int e1, int s2,
                     int e2) {
    PersonaSpec p;
    p.id = std::move(id);
    p.locations = locations;
    p.rooms = {Room::kRoom1, Room::kRoom2};
    const Window signature{start, end, rate};
    const Window evening{19 * 60 + 30, 22 * 60 + 30, 0.9};
    const Period sig = period_of_hour(start / 60);
    for (Room r : p.rooms) p.active_windows[r] = {signature, evening};
    p.scene_table[{Room::kRoom1, sig}] = s1;
    p.scene_table[{Room::kRoom1, Period::kEvening}] = e1;
    p.scene_table[{Room::kRoom2, sig}] = s2;
    p.scene_table[{Room::kRoom2, Period::kEvening}] = e2;
    return p;
  };
  Population pop;
  pop.personas.push_back(persona("early", 6 * 60 + 30, 9 * 60 + 30, 0.95, 1, 4, 2, 5));
  pop.personas.push_back(persona("midday", 12 * 60, 15 * 60, 0.75, 3, 4, 6, 5));
  pop.personas.push_back(persona("late", 15 * 60 + 30, 18 * 60 + 30, 0.55, 7, 4, 8, 0));

  const int total = 600;
  std::vector<int> counts(pop.personas.size(), 0);
  Rng rng(derive_seed(seed, "population"));
  std::uniform_int_distribution<std::size_t> pick(0, pop.personas.size() - 1);
  const double share = static_cast<double>(total) / static_cast<double>(counts.size());
  auto balanced = [&] {
    return std::all_of(counts.begin(), counts.end(),
                       [&](int c) { return std::abs(c - share) <= 0.1 * share; });
  };
  do {
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < total; ++i) ++counts[pick(rng)];
  } while (!balanced());
  for (std::size_t i = 0; i < counts.size(); ++i) pop.personas[i].households = counts[i];
  return pop;
}

std::vector<HouseholdTruth> plan_households(const Population& population, std::uint64_t seed) {
  validate(population);
  std::vector<HouseholdTruth> out;
  Rng rng(derive_seed(seed, "locations"));
  for (std::size_t p = 0; p < population.personas.size(); ++p) {
    const PersonaSpec& spec = population.personas[p];
    std::uniform_int_distribution<std::size_t> pick(0, spec.locations.size() - 1);
    for (int h = 0; h < spec.households; ++h) {
      HouseholdTruth t;
      char id[32];
      std::snprintf(id, sizeof id, "h%04zu", out.size() + 1);
      t.household = id;
      t.persona_index = p;
      t.persona = spec.id;
      t.location = spec.locations[pick(rng)];
      t.windows = spec.active_windows;
      t.scene_table = spec.scene_table;
      out.push_back(std::move(t));
    }
  }
  return out;
}

json ground_truth_json(const std::vector<HouseholdTruth>& truth) {
  json households = json::array();
  for (const auto& t : truth) {
    households.push_back({{"household", t.household},
                          {"persona", t.persona},
                          {"persona_index", t.persona_index},
                          {"country", t.location.country},
                          {"city", t.location.city},
                          {"routine_intervals", windows_json(t.windows)},
                          {"scene_table", scene_table_json(t.scene_table)}});
  }
  return json{{"format_version", 1}, {"households", households}};
}

std::vector<SynthEvent> household_events(const Population& population,
                                         const HouseholdTruth& truth, std::uint32_t index,
                                         const DateRange& range, std::uint64_t seed) {
  const PersonaSpec& spec = population.personas.at(truth.persona_index);
  const auto& o = population.options;
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(index) + 1));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> jitter(-o.jitter_minutes * 60, o.jitter_minutes * 60);
  std::uniform_int_distribution<int> other_scene(0, o.scene_count - 2);
  std::poisson_distribution<int> noise_count(spec.noise_rate > 0 ? spec.noise_rate : 1.0);
  std::uniform_int_distribution<std::int64_t> noise_start(0, kSecondsPerDay - 1);
  std::uniform_int_distribution<int> noise_len(o.noise_min_minutes * 60, o.noise_max_minutes * 60);

  const std::int64_t w0 = range.start_epoch_seconds();
  const std::int64_t w1 = w0 + static_cast<std::int64_t>(range.day_count()) * kSecondsPerDay;
  std::vector<SynthEvent> events;
  auto emit = [&](std::int64_t ts, Room room, std::uint8_t light, ingest::Action action,
                  int scene) {
    if (ts < w0 || ts >= w1) return;
    events.push_back({ts, index, room, light, action, static_cast<std::int16_t>(scene)});
  };
  for (int d = 0; d < range.day_count(); ++d) {
    const std::int64_t day0 = w0 + static_cast<std::int64_t>(d) * kSecondsPerDay;
    for (Room room : spec.rooms) {
      auto it = truth.windows.find(room);
      if (it != truth.windows.end()) {
        for (std::size_t i = 0; i < it->second.size(); ++i) {
          const Window& w = it->second[i];
          if (!(unit(rng) < w.daily_probability)) continue;
          const std::int64_t start = day0 + w.start * 60 + jitter(rng);
          std::int64_t end = day0 + w.end * 60 + jitter(rng);
          if (end <= start) end = start + 60;
          int scene = truth.scene_table.at({room, period_of_hour(w.start / 60)});
          if (unit(rng) < spec.flip_probability) {
            const int other = other_scene(rng);
            scene = other >= scene ? other + 1 : other;
          }
          const auto light = static_cast<std::uint8_t>(i + 1);
          emit(start, room, light, ingest::Action::kOn, -1);
          emit(start, room, light, ingest::Action::kSceneSet, scene);
          emit(end, room, light, ingest::Action::kOff, -1);
        }
      }
      const int sessions = spec.noise_rate > 0 ? noise_count(rng) : 0;
      for (int s = 0; s < sessions; ++s) {
        const std::int64_t start = day0 + noise_start(rng);
        const std::int64_t end = start + noise_len(rng);
        emit(start, room, 0, ingest::Action::kOn, -1);
        emit(end, room, 0, ingest::Action::kOff, -1);
      }
    }
  }
  std::sort(events.begin(), events.end());
  return events;
}

std::string light_id(Room room, std::uint8_t light) {
  char buf[16];
  const int r = static_cast<int>(room) + 1;
  if (light == 0) {
    std::snprintf(buf, sizeof buf, "r%d-bg", r);
  } else {
    std::snprintf(buf, sizeof buf, "r%d-w%02d", r, light - 1);
  }
  return buf;
}

ingest::LightEvent to_light_event(const SynthEvent& e, const HouseholdTruth& truth) {
  ingest::LightEvent ev;
  ev.timestamp = e.timestamp;
  ev.hub_id = truth.household;
  ev.light_id = light_id(e.room, e.light);
  ev.room = e.room;
  ev.action = e.action;
  if (e.action == ingest::Action::kSceneSet) ev.scene_id = e.scene;
  ev.source = e.light == 0 ? ingest::Source::kSwitch : ingest::Source::kApp;
  ev.city = truth.location.city;
  ev.country = truth.location.country;
  return ev;
}

namespace {

std::vector<std::vector<SynthEvent>> generate_all(const Population& population,
                                                  const std::vector<HouseholdTruth>& truth,
                                                  const DateRange& range, std::uint64_t seed) {
  if (range.empty()) throw Error(ErrorKind::kEmptyWindow, "synth date range is empty");
  validate(population);
  std::vector<std::vector<SynthEvent>> per(truth.size());
  parallel_for(truth.size(), [&](std::size_t i) {
    per[i] = household_events(population, truth[i], static_cast<std::uint32_t>(i), range, seed);
  });
  return per;
}

}  // namespace

std::size_t write_events(const Population& population, const std::vector<HouseholdTruth>& truth,
                         const DateRange& range, std::uint64_t seed, std::ostream& out) {
  auto per = generate_all(population, truth, range, seed);
  std::vector<SynthEvent> all;
  std::size_t total = 0;
  for (const auto& v : per) total += v.size();
  all.reserve(total);
  for (auto& v : per) {
    all.insert(all.end(), v.begin(), v.end());
    v = {};
  }
  std::sort(all.begin(), all.end());
  for (const auto& e : all) out << ingest::format_event_record(to_light_event(e, truth[e.household])) << '\n';
  return all.size();
}

SynthStates synthesize_states(const Population& population,
                              const std::vector<HouseholdTruth>& truth, const DateRange& range,
                              std::uint64_t seed, const ingest::ReconstructOptions& options) {
  auto per = generate_all(population, truth, range, seed);
  SynthStates out;
  std::vector<std::vector<std::pair<Room, ingest::StateSeries>>> states(truth.size());
  parallel_for(truth.size(), [&](std::size_t i) {
    std::map<Room, std::vector<ingest::RoomEvent>> by_room;
    for (const auto& e : per[i]) {
      by_room[e.room].push_back({e.timestamp, e.light, e.action, e.scene});
    }
    for (auto& [room, events] : by_room) {
      states[i].emplace_back(room,
                             ingest::reconstruct_room(truth[i].household, room, events, range, options));
    }
  });
  for (std::size_t i = 0; i < truth.size(); ++i) {
    out.events += per[i].size();
    if (!states[i].empty()) out.geo[truth[i].household] = {truth[i].location.city, truth[i].location.country};
    for (auto& [room, series] : states[i]) {
      out.states.emplace(ingest::EntityKey{truth[i].household, room}, std::move(series));
    }
  }
  return out;
}

}  // namespace lumirec::synth
