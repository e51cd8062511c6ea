#include "lumirec/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <unordered_map>

#include "json.hpp"

namespace lumirec::ingest {

namespace {

using nlohmann::json;

bool read_digits(std::string_view s, std::size_t pos, std::size_t count, int& out) {
  if (pos + count > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + count; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}

std::string_view to_string(Action a) {
  switch (a) {
    case Action::kOn: return "on";
    case Action::kOff: return "off";
    case Action::kSceneSet: return "scene";
  }
  return "on";
}

std::string_view to_string(Source s) {
  switch (s) {
    case Source::kApp: return "app";
    case Source::kButton: return "button";
    case Source::kSwitch: return "switch";
    case Source::kOther: return "other";
  }
  return "other";
}

Source parse_source(std::string_view s) {
  if (s == "app") return Source::kApp;
  if (s == "button") return Source::kButton;
  if (s == "switch") return Source::kSwitch;
  return Source::kOther;
}

ParseOutcome fail(ErrorKind kind, std::string message) {
  ParseOutcome out;
  out.error = kind;
  out.message = std::move(message);
  return out;
}

const std::string* string_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) return nullptr;
  return it->get_ptr<const std::string*>();
}

std::optional<double> number_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number()) return std::nullopt;
  return it->get<double>();
}

}  // namespace

std::optional<std::int64_t> parse_timestamp(std::string_view s) {
  int y, mo, d, h, mi, sec;
  if (s.size() < 20) return std::nullopt;
  if (!read_digits(s, 0, 4, y) || s[4] != '-' || !read_digits(s, 5, 2, mo) || s[7] != '-' ||
      !read_digits(s, 8, 2, d) || (s[10] != 'T' && s[10] != 't' && s[10] != ' ') ||
      !read_digits(s, 11, 2, h) || s[13] != ':' || !read_digits(s, 14, 2, mi) || s[16] != ':' ||
      !read_digits(s, 17, 2, sec)) {
    return std::nullopt;
  }
  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    const std::size_t frac_begin = pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos == frac_begin) return std::nullopt;
  }
  if (pos >= s.size()) return std::nullopt;
  if (s[pos] == 'Z' || s[pos] == 'z') {
    ++pos;
  } else if (s[pos] == '+' || s[pos] == '-') {
    int oh, om;
    if (!read_digits(s, pos + 1, 2, oh) || pos + 3 >= s.size() || s[pos + 3] != ':' ||
        !read_digits(s, pos + 4, 2, om) || oh > 23 || om > 59) {
      return std::nullopt;
    }
    pos += 6;
  } else {
    return std::nullopt;
  }
  if (pos != s.size()) return std::nullopt;
  if (h > 23 || mi > 59 || sec > 60) return std::nullopt;
  using namespace std::chrono;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  const std::int64_t days_since = sys_days{ymd}.time_since_epoch().count();
  return days_since * kSecondsPerDay + h * 3600 + mi * 60 + std::min(sec, 59);
}

std::string format_timestamp(std::int64_t t) {
  std::int64_t days = t >= 0 ? t / kSecondsPerDay : -((-t + kSecondsPerDay - 1) / kSecondsPerDay);
  std::int64_t rem = t - days * kSecondsPerDay;
  const Date date{std::chrono::days{days}};
  char buf[40];
  std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02dZ", format_date(date).c_str(),
                static_cast<int>(rem / 3600), static_cast<int>(rem / 60 % 60),
                static_cast<int>(rem % 60));
  return buf;
}

ParseOutcome try_parse_event_record(std::string_view line, const ParseOptions& options) {
  json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) return fail(ErrorKind::kMalformedRecord, "not a JSON object");

  LightEvent ev;
  const std::string* ts = string_field(j, "ts");
  if (!ts) return fail(ErrorKind::kMalformedRecord, "missing ts");
  auto t = parse_timestamp(*ts);
  if (!t) return fail(ErrorKind::kMalformedRecord, "unparsable timestamp '" + *ts + "'");
  ev.timestamp = *t;

  const std::string* hub = string_field(j, "hub");
  const std::string* light = string_field(j, "light");
  const std::string* room = string_field(j, "room");
  const std::string* action = string_field(j, "action");
  const std::string* city = string_field(j, "city");
  const std::string* country = string_field(j, "country");
  if (!hub || !light || !room || !action || !city || !country) {
    return fail(ErrorKind::kMalformedRecord, "missing mandatory field");
  }
  if (hub->empty() || light->empty()) return fail(ErrorKind::kMalformedRecord, "empty id");
  ev.hub_id = *hub;
  ev.light_id = *light;
  ev.city = *city;
  ev.country = *country;

  if (*action == "on") {
    ev.action = Action::kOn;
  } else if (*action == "off") {
    ev.action = Action::kOff;
  } else if (*action == "scene") {
    ev.action = Action::kSceneSet;
    auto it = j.find("scene");
    if (it == j.end() || !it->is_number_integer()) {
      return fail(ErrorKind::kMalformedRecord, "scene action without integer scene");
    }
    const auto scene = it->get<std::int64_t>();
    if (scene < 0 || scene >= options.scene_count) {
      return fail(ErrorKind::kMalformedRecord, "scene id out of range");
    }
    ev.scene_id = static_cast<int>(scene);
  } else {
    return fail(ErrorKind::kMalformedRecord, "unknown action '" + *action + "'");
  }

  if (const std::string* src = string_field(j, "source")) ev.source = parse_source(*src);
  ev.brightness = number_field(j, "bri");
  ev.saturation = number_field(j, "sat");
  ev.color_x = number_field(j, "x");
  ev.color_y = number_field(j, "y");
  ev.color_temp = number_field(j, "ct");
  if (const std::string* mode = string_field(j, "colormode")) ev.color_mode = *mode;

  // Room last so that a record that is both malformed and mis-roomed counts
  // as malformed.
  if (!parse_room(*room, ev.room)) {
    return fail(ErrorKind::kUnknownRoom, "unknown room '" + *room + "'");
  }

  ParseOutcome out;
  out.event = std::move(ev);
  return out;
}

LightEvent parse_event_record(std::string_view line, const ParseOptions& options) {
  auto outcome = try_parse_event_record(line, options);
  if (!outcome.event) throw Error(outcome.error, outcome.message);
  return std::move(*outcome.event);
}

std::string format_event_record(const LightEvent& ev) {
  nlohmann::ordered_json j;
  j["ts"] = format_timestamp(ev.timestamp);
  j["hub"] = ev.hub_id;
  j["light"] = ev.light_id;
  j["room"] = std::string(lumirec::to_string(ev.room));
  j["action"] = std::string(to_string(ev.action));
  if (ev.action == Action::kSceneSet && ev.scene_id) j["scene"] = *ev.scene_id;
  j["source"] = std::string(to_string(ev.source));
  j["city"] = ev.city;
  j["country"] = ev.country;
  if (ev.brightness) j["bri"] = *ev.brightness;
  if (ev.saturation) j["sat"] = *ev.saturation;
  if (ev.color_x) j["x"] = *ev.color_x;
  if (ev.color_y) j["y"] = *ev.color_y;
  if (ev.color_temp) j["ct"] = *ev.color_temp;
  if (ev.color_mode) j["colormode"] = *ev.color_mode;
  return j.dump();
}

int StateSeries::scene_at(int day, int minute) const {
  const auto& runs = scene_runs[day];
  auto it = std::upper_bound(runs.begin(), runs.end(), minute,
                             [](int m, const SceneRun& r) { return m < r.start; });
  if (it == runs.begin()) return -1;
  --it;
  return minute < it->end ? it->scene : -1;
}

std::size_t StateSeries::on_minutes() const {
  std::size_t total = 0;
  for (const auto& g : grid) total += g.count();
  return total;
}

namespace {

struct OnInterval {
  std::int64_t begin;
  std::int64_t end;
};

struct SceneInterval {
  std::int64_t begin;
  std::int64_t end;
  int scene;
  std::uint64_t order;  // larger = set later
};

struct LightState {
  bool on = false;
  std::int64_t on_since = 0;
  std::int64_t last_order = 0;
  int scene = -1;
  std::int64_t scene_since = 0;
  std::uint64_t scene_order = 0;
};

}  // namespace

StateSeries reconstruct_room(const std::string& household, Room room,
                             std::vector<RoomEvent>& events, const DateRange& window,
                             const ReconstructOptions& options) {
  if (window.empty()) throw Error(ErrorKind::kEmptyWindow, "study window is empty");
  std::sort(events.begin(), events.end());

  const int days = window.day_count();
  const std::int64_t w0 = window.start_epoch_seconds();
  const std::int64_t w1 = w0 + static_cast<std::int64_t>(days) * kSecondsPerDay;
  const std::int64_t cap = options.stale_on_cap_seconds;

  std::uint32_t light_count = 0;
  for (const auto& e : events) light_count = std::max(light_count, e.light + 1);
  std::vector<LightState> lights(light_count);
  std::vector<OnInterval> on_intervals;
  std::vector<SceneInterval> scene_intervals;
  std::uint64_t order_counter = 0;

  auto close_light = [&](LightState& ls, std::int64_t at) {
    on_intervals.push_back({ls.on_since, at});
    if (ls.scene >= 0) scene_intervals.push_back({ls.scene_since, at, ls.scene, ls.scene_order});
    ls.on = false;
    ls.scene = -1;
  };

  for (const auto& e : events) {
    LightState& ls = lights[e.light];
    if (ls.on && e.timestamp - ls.last_order > cap) close_light(ls, ls.last_order + cap);
    switch (e.action) {
      case Action::kOn:
        if (!ls.on) {
          ls.on = true;
          ls.on_since = e.timestamp;
          ls.scene = -1;
        }
        ls.last_order = e.timestamp;
        break;
      case Action::kSceneSet:
        if (!ls.on) {
          ls.on = true;
          ls.on_since = e.timestamp;
        } else if (ls.scene >= 0) {
          scene_intervals.push_back({ls.scene_since, e.timestamp, ls.scene, ls.scene_order});
        }
        ls.scene = e.scene;
        ls.scene_since = e.timestamp;
        ls.scene_order = ++order_counter;
        ls.last_order = e.timestamp;
        break;
      case Action::kOff:
        if (ls.on) close_light(ls, e.timestamp);
        break;
    }
  }
  for (auto& ls : lights) {
    if (ls.on) close_light(ls, std::min(ls.last_order + cap, std::max(w1, ls.on_since)));
  }

  // Dense minute rasters over the whole window; packed per day below.
  const std::int64_t total_minutes = static_cast<std::int64_t>(days) * kMinutesPerDay;
  std::vector<std::uint8_t> on_raster(total_minutes, 0);
  std::vector<std::int16_t> scene_raster(total_minutes, -1);

  auto minute_span = [&](std::int64_t a, std::int64_t b, std::int64_t& m0, std::int64_t& m1) {
    a = std::max(a, w0);
    b = std::min(b, w1);
    if (b <= a) return false;
    m0 = (a - w0) / 60;
    m1 = (b - w0 + 59) / 60;
    return true;
  };

  for (const auto& iv : on_intervals) {
    std::int64_t m0, m1;
    if (!minute_span(iv.begin, iv.end, m0, m1)) continue;
    std::fill(on_raster.begin() + m0, on_raster.begin() + m1, 1);
  }

  if (!scene_intervals.empty()) {
    // Sweep: at every instant the room shows the most recently set scene
    // among lights that still hold one.
    struct Boundary {
      std::int64_t t;
      bool start;
      std::size_t idx;
    };
    std::vector<Boundary> bounds;
    bounds.reserve(scene_intervals.size() * 2);
    for (std::size_t i = 0; i < scene_intervals.size(); ++i) {
      if (scene_intervals[i].end <= scene_intervals[i].begin) continue;
      bounds.push_back({scene_intervals[i].begin, true, i});
      bounds.push_back({scene_intervals[i].end, false, i});
    }
    std::sort(bounds.begin(), bounds.end(), [](const Boundary& a, const Boundary& b) {
      if (a.t != b.t) return a.t < b.t;
      if (a.start != b.start) return !a.start;  // ends first
      return a.idx < b.idx;
    });
    std::set<std::pair<std::uint64_t, std::size_t>> active;
    for (std::size_t b = 0; b < bounds.size();) {
      const std::int64_t t = bounds[b].t;
      while (b < bounds.size() && bounds[b].t == t) {
        const auto& iv = scene_intervals[bounds[b].idx];
        if (bounds[b].start) {
          active.insert({iv.order, bounds[b].idx});
        } else {
          active.erase({iv.order, bounds[b].idx});
        }
        ++b;
      }
      if (active.empty() || b >= bounds.size()) continue;
      const int scene = scene_intervals[active.rbegin()->second].scene;
      std::int64_t m0, m1;
      if (!minute_span(t, bounds[b].t, m0, m1)) continue;
      std::fill(scene_raster.begin() + m0, scene_raster.begin() + m1,
                static_cast<std::int16_t>(scene));
    }
  }

  StateSeries out;
  out.household = household;
  out.room = room;
  out.first_day = window.first;
  out.grid.resize(days);
  out.scene_runs.resize(days);
  for (int d = 0; d < days; ++d) {
    const std::int64_t base = static_cast<std::int64_t>(d) * kMinutesPerDay;
    auto& g = out.grid[d];
    for (int m = 0; m < kMinutesPerDay; ++m) {
      if (on_raster[base + m]) g.set(m);
    }
    auto& runs = out.scene_runs[d];
    for (int m = 0; m < kMinutesPerDay;) {
      const std::int16_t s = scene_raster[base + m];
      if (s < 0) {
        ++m;
        continue;
      }
      int e = m + 1;
      while (e < kMinutesPerDay && scene_raster[base + e] == s) ++e;
      runs.push_back({static_cast<std::int16_t>(m), static_cast<std::int16_t>(e), s});
      m = e;
    }
  }
  return out;
}

namespace {

// Builds per-room compact events with light indices assigned by sorted id.
struct RoomBucket {
  std::vector<const LightEvent*> events;
};

}  // namespace

std::map<EntityKey, StateSeries> reconstruct_state(std::span<const LightEvent> events,
                                                   const DateRange& window,
                                                   const ReconstructOptions& options) {
  if (window.empty()) throw Error(ErrorKind::kEmptyWindow, "study window is empty");
  std::map<EntityKey, RoomBucket> buckets;
  for (const auto& e : events) buckets[EntityKey{e.hub_id, e.room}].events.push_back(&e);

  std::vector<const EntityKey*> keys;
  std::vector<RoomBucket*> values;
  for (auto& [k, v] : buckets) {
    keys.push_back(&k);
    values.push_back(&v);
  }
  std::vector<StateSeries> results(keys.size());
  parallel_for(keys.size(), [&](std::size_t i) {
    std::vector<std::string> ids;
    for (const auto* e : values[i]->events) ids.push_back(e->light_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::vector<RoomEvent> compact;
    compact.reserve(values[i]->events.size());
    for (const auto* e : values[i]->events) {
      const auto light = static_cast<std::uint32_t>(
          std::lower_bound(ids.begin(), ids.end(), e->light_id) - ids.begin());
      compact.push_back({e->timestamp, light, e->action,
                         static_cast<std::int16_t>(e->scene_id.value_or(-1))});
    }
    results[i] = reconstruct_room(keys[i]->household, keys[i]->room, compact, window, options);
  });
  std::map<EntityKey, StateSeries> out;
  for (std::size_t i = 0; i < keys.size(); ++i) out.emplace(*keys[i], std::move(results[i]));
  return out;
}

IngestReport validate_log(std::span<const std::string> lines, const ParseOptions& options,
                          const std::optional<DateRange>& window) {
  IngestReport report;
  std::set<std::string> households;
  std::set<EntityKey> rooms;
  for (const auto& line : lines) {
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    ++report.total;
    auto outcome = try_parse_event_record(line, options);
    if (!outcome.event) {
      if (outcome.error == ErrorKind::kUnknownRoom) {
        ++report.skipped_unknown_room;
      } else {
        ++report.skipped_malformed;
      }
      continue;
    }
    const auto& ev = *outcome.event;
    const Date day{std::chrono::floor<std::chrono::days>(std::chrono::sys_seconds{
        std::chrono::seconds{ev.timestamp}})};
    if (window && !window->contains(day)) {
      ++report.skipped_out_of_window;
      continue;
    }
    ++report.parsed;
    households.insert(ev.hub_id);
    rooms.insert(EntityKey{ev.hub_id, ev.room});
    if (!report.first_date || day < *report.first_date) report.first_date = day;
    if (!report.last_date || *report.last_date < day) report.last_date = day;
  }
  report.households = households.size();
  report.rooms = rooms.size();
  return report;
}

IngestResult ingest_stream(std::istream& in, const DateRange& window,
                           const ParseOptions& parse_options, const ReconstructOptions& options) {
  if (window.empty()) throw Error(ErrorKind::kEmptyWindow, "study window is empty");
  IngestResult result;
  IngestReport& report = result.report;

  struct Pending {
    std::vector<std::string> light_ids;
    std::unordered_map<std::string, std::uint32_t> provisional;
    std::vector<RoomEvent> events;
  };
  std::map<EntityKey, Pending> pending;

  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    ++report.total;
    auto outcome = try_parse_event_record(line, parse_options);
    if (!outcome.event) {
      if (outcome.error == ErrorKind::kUnknownRoom) {
        ++report.skipped_unknown_room;
      } else {
        ++report.skipped_malformed;
      }
      continue;
    }
    auto& ev = *outcome.event;
    const Date day{std::chrono::days{ev.timestamp >= 0 ? ev.timestamp / kSecondsPerDay
                                                       : (ev.timestamp - kSecondsPerDay + 1) /
                                                             kSecondsPerDay}};
    if (!window.contains(day)) {
      ++report.skipped_out_of_window;
      continue;
    }
    ++report.parsed;
    if (!report.first_date || day < *report.first_date) report.first_date = day;
    if (!report.last_date || *report.last_date < day) report.last_date = day;
    result.geo.try_emplace(ev.hub_id, GeoInfo{ev.city, ev.country});

    auto& p = pending[EntityKey{ev.hub_id, ev.room}];
    auto [it, inserted] =
        p.provisional.try_emplace(ev.light_id, static_cast<std::uint32_t>(p.light_ids.size()));
    if (inserted) p.light_ids.push_back(ev.light_id);
    p.events.push_back({ev.timestamp, it->second, ev.action,
                        static_cast<std::int16_t>(ev.scene_id.value_or(-1))});
  }

  std::vector<std::pair<const EntityKey*, Pending*>> work;
  for (auto& [k, p] : pending) work.emplace_back(&k, &p);
  std::vector<StateSeries> states(work.size());
  parallel_for(work.size(), [&](std::size_t i) {
    Pending& p = *work[i].second;
    // Re-index lights by sorted id so the result is independent of line order.
    std::vector<std::uint32_t> order(p.light_ids.size());
    for (std::uint32_t j = 0; j < order.size(); ++j) order[j] = j;
    std::sort(order.begin(), order.end(),
              [&](std::uint32_t a, std::uint32_t b) { return p.light_ids[a] < p.light_ids[b]; });
    std::vector<std::uint32_t> rank(order.size());
    for (std::uint32_t r = 0; r < order.size(); ++r) rank[order[r]] = r;
    for (auto& e : p.events) e.light = rank[e.light];
    states[i] = reconstruct_room(work[i].first->household, work[i].first->room, p.events, window,
                                 options);
    p.events = {};
  });
  std::set<std::string> households;
  for (std::size_t i = 0; i < work.size(); ++i) {
    households.insert(work[i].first->household);
    result.states.emplace(*work[i].first, std::move(states[i]));
  }
  report.households = households.size();
  report.rooms = result.states.size();
  return result;
}

}  // namespace lumirec::ingest
