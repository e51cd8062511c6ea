#include <algorithm>
#include <set>
#include <sstream>

#include "doctest.h"
#include "lumirec/ingest.hpp"

using namespace lumirec;
using namespace lumirec::ingest;

namespace {

std::string record(const std::string& ts, const std::string& light, const std::string& action,
                   int scene = -1, const std::string& hub = "h1", const std::string& room = "room1") {
  std::string s = R"({"ts":")" + ts + R"(","hub":")" + hub + R"(","light":")" + light +
                  R"(","room":")" + room + R"(","action":")" + action + R"(")";
  if (scene >= 0) s += R"(,"scene":)" + std::to_string(scene);
  return s + R"(,"source":"app","city":"ames","country":"US"})";
}

const DateRange kTwoDays{parse_date("2019-03-05"), parse_date("2019-03-06")};

StateSeries one_room(const std::vector<std::string>& lines, const DateRange& window = kTwoDays) {
  std::vector<LightEvent> events;
  for (const auto& l : lines) events.push_back(parse_event_record(l));
  auto states = reconstruct_state(events, window);
  REQUIRE(states.size() == 1);
  return states.begin()->second;
}

std::vector<int> on_minutes_of_day(const StateSeries& s, int day) {
  std::vector<int> out;
  for (int m = 0; m < kMinutesPerDay; ++m) {
    if (s.on(day, m)) out.push_back(m);
  }
  return out;
}

}  // namespace

TEST_SUITE("ingest") {

TEST_CASE("an on record maps every field") {
  const auto e = parse_event_record(
      R"({"ts":"2019-03-05T19:02:11Z","hub":"h1","light":"l1","room":"room1","action":"on","city":"ames","country":"US"})");
  CHECK(e.action == Action::kOn);
  CHECK(e.hub_id == "h1");
  CHECK(e.light_id == "l1");
  CHECK(e.room == Room::kRoom1);
  CHECK(e.city == "ames");
  CHECK(e.country == "US");
  CHECK_FALSE(e.scene_id.has_value());
  CHECK_FALSE(e.brightness.has_value());
  CHECK(format_timestamp(e.timestamp) == "2019-03-05T19:02:11Z");
}

TEST_CASE("a scene record carries its scene id") {
  const auto e = parse_event_record(record("2019-03-05T19:02:11Z", "l1", "scene", 3));
  CHECK(e.action == Action::kSceneSet);
  REQUIRE(e.scene_id.has_value());
  CHECK(*e.scene_id == 3);
}

TEST_CASE("optional numerics are carried and unknown keys ignored") {
  const auto e = parse_event_record(
      R"({"ts":"2019-03-05T19:02:11Z","hub":"h1","light":"l1","room":"room2","action":"off","bri":120,"sat":0.5,"x":0.3,"y":0.4,"ct":366,"colormode":"ct","extra":[1,2],"city":"ames","country":"US"})");
  CHECK(e.room == Room::kRoom2);
  CHECK(e.brightness.value() == 120);
  CHECK(e.saturation.value() == 0.5);
  CHECK(e.color_x.value() == 0.3);
  CHECK(e.color_y.value() == 0.4);
  CHECK(e.color_temp.value() == 366);
  CHECK(e.color_mode.value() == "ct");
}

TEST_CASE("a scene key on a non-scene action is not carried") {
  const auto e = parse_event_record(record("2019-03-05T19:02:11Z", "l1", "on", 2));
  CHECK(e.action == Action::kOn);
  CHECK_FALSE(e.scene_id.has_value());
}

TEST_CASE("malformed records are rejected with their error class") {
  auto kind_of = [](const std::string& line) {
    try {
      parse_event_record(line);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kInternal;
  };
  CHECK(kind_of(record("not-a-time", "l1", "on")) == ErrorKind::kMalformedRecord);
  CHECK(kind_of("{not json") == ErrorKind::kMalformedRecord);
  CHECK(kind_of(R"({"ts":"2019-03-05T19:02:11Z","light":"l1","room":"room1","action":"on"})") ==
        ErrorKind::kMalformedRecord);
  CHECK(kind_of(record("2019-03-05T19:02:11Z", "l1", "scene")) == ErrorKind::kMalformedRecord);
  CHECK(kind_of(record("2019-03-05T19:02:11Z", "l1", "scene", 9)) == ErrorKind::kMalformedRecord);
  CHECK(kind_of(record("2019-03-05T19:02:11Z", "l1", "dim")) == ErrorKind::kMalformedRecord);
  CHECK(kind_of(record("2019-03-05T19:02:11Z", "l1", "on", -1, "h1", "garage")) ==
        ErrorKind::kUnknownRoom);
}

TEST_CASE("timestamps accept offsets and fractions without converting") {
  CHECK(parse_timestamp("2019-03-05T19:02:11Z") == parse_timestamp("2019-03-05T19:02:11+02:00"));
  CHECK(parse_timestamp("2019-03-05T19:02:11.750Z") == parse_timestamp("2019-03-05T19:02:11Z"));
  CHECK_FALSE(parse_timestamp("2019-03-05 19:02:11").has_value());
  CHECK_FALSE(parse_timestamp("2019-02-30T00:00:00Z").has_value());
}

TEST_CASE("formatted records parse back to the same event") {
  auto e = parse_event_record(record("2019-03-05T19:02:11Z", "l7", "scene", 4, "hub-9", "room2"));
  e.brightness = 80;
  const auto back = parse_event_record(format_event_record(e));
  CHECK(back.timestamp == e.timestamp);
  CHECK(back.hub_id == e.hub_id);
  CHECK(back.light_id == e.light_id);
  CHECK(back.room == e.room);
  CHECK(back.action == e.action);
  CHECK(back.scene_id == e.scene_id);
  CHECK(back.brightness == e.brightness);
  CHECK(back.source == e.source);
}

TEST_CASE("a short session lights the minutes it touches") {
  const auto s = one_room({record("2019-03-05T19:00:30Z", "l1", "on"),
                           record("2019-03-05T19:02:10Z", "l1", "off")});
  CHECK(on_minutes_of_day(s, 0) == std::vector<int>{1140, 1141, 1142});
  CHECK(on_minutes_of_day(s, 1).empty());
}

TEST_CASE("an off without a preceding on is ignored") {
  const auto s = one_room({record("2019-03-05T19:02:10Z", "l1", "off")});
  CHECK(s.on_minutes() == 0);
}

TEST_CASE("a session across midnight splits between the two days") {
  const auto s = one_room({record("2019-03-05T23:50:00Z", "l1", "on"),
                           record("2019-03-06T00:10:00Z", "l1", "off")});
  CHECK(on_minutes_of_day(s, 0).size() == 10);
  CHECK(on_minutes_of_day(s, 1).size() == 10);
  CHECK(on_minutes_of_day(s, 1).front() == 0);
}

TEST_CASE("a scene order on an off light turns it on") {
  const auto s = one_room({record("2019-03-05T08:00:00Z", "l1", "scene", 4),
                           record("2019-03-05T08:30:00Z", "l1", "off")});
  CHECK(on_minutes_of_day(s, 0).size() == 30);
  CHECK(s.scene_at(0, 480) == 4);
  CHECK(s.scene_at(0, 509) == 4);
  CHECK(s.scene_at(0, 510) == -1);
}

TEST_CASE("the latest scene order wins while both lights hold one") {
  const auto s = one_room({record("2019-03-05T08:00:00Z", "a", "scene", 2),
                           record("2019-03-05T08:10:00Z", "b", "scene", 5),
                           record("2019-03-05T08:20:00Z", "b", "off"),
                           record("2019-03-05T08:30:00Z", "a", "off")});
  CHECK(s.scene_at(0, 485) == 2);
  CHECK(s.scene_at(0, 495) == 5);
  CHECK(s.scene_at(0, 505) == 2);
  CHECK(s.scene_at(0, 515) == -1);
}

TEST_CASE("a light left on is force-closed at the stale cap") {
  const DateRange week{parse_date("2019-03-05"), parse_date("2019-03-11")};
  const auto s = one_room({record("2019-03-05T12:00:00Z", "l1", "on"),
                           record("2019-03-09T12:00:00Z", "l1", "off")},
                          week);
  CHECK(s.on_minutes() == 1440);
  CHECK(s.on(1, 719));
  CHECK_FALSE(s.on(1, 720));
  CHECK_FALSE(s.on(4, 0));
}

TEST_CASE("an empty window is an error") {
  std::vector<LightEvent> none;
  CHECK_THROWS_AS(reconstruct_state(none, DateRange{parse_date("2019-03-06"), parse_date("2019-03-05")}),
                  Error);
}

// Per-second replay of the same on-state rules, used as an oracle.
TEST_CASE("minute rasters match a per-second replay on random sessions") {
  Rng rng(11);
  const std::int64_t w0 = kTwoDays.start_epoch_seconds();
  const std::int64_t span = 2 * kSecondsPerDay;
  for (int trial = 0; trial < 60; ++trial) {
    const int lights = 1 + static_cast<int>(rng() % 3);
    std::vector<std::string> lines;
    struct Order {
      std::int64_t t;
      int light;
      int action;  // 0 on, 1 scene, 2 off
      int scene;
    };
    std::vector<Order> orders;
    std::set<std::int64_t> used;
    for (int i = 0; i < 12; ++i) {
      std::int64_t t;
      do {
        t = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(span - 7200));
      } while (!used.insert(t).second);
      orders.push_back({t, static_cast<int>(rng() % lights), static_cast<int>(rng() % 3),
                        static_cast<int>(rng() % 9)});
    }
    for (const auto& o : orders) {
      static const char* names[] = {"on", "scene", "off"};
      lines.push_back(record(format_timestamp(w0 + o.t), "l" + std::to_string(o.light), names[o.action],
                             o.action == 1 ? o.scene : -1));
    }
    std::shuffle(lines.begin(), lines.end(), rng);
    const auto s = one_room(lines);

    std::sort(orders.begin(), orders.end(), [](const Order& a, const Order& b) { return a.t < b.t; });
    std::vector<std::vector<char>> on(lights, std::vector<char>(span, 0));
    std::vector<std::vector<int>> scene(lights, std::vector<int>(span, -1));
    std::vector<std::vector<std::uint64_t>> order(lights, std::vector<std::uint64_t>(span, 0));
    for (int l = 0; l < lights; ++l) {
      bool is_on = false;
      int sc = -1;
      std::uint64_t so = 0;
      std::int64_t last_order = 0;
      std::size_t next = 0;
      std::vector<Order> mine;
      for (const auto& o : orders) {
        if (o.light == l) mine.push_back(o);
      }
      for (std::int64_t t = 0; t < span; ++t) {
        if (is_on && t >= last_order + kSecondsPerDay) {
          is_on = false;
          sc = -1;
        }
        while (next < mine.size() && mine[next].t == t) {
          const auto& o = mine[next++];
          if (o.action == 0) {
            if (!is_on) sc = -1;
            is_on = true;
            last_order = t;
          } else if (o.action == 1) {
            is_on = true;
            last_order = t;
            sc = o.scene;
            so = (static_cast<std::uint64_t>(o.t) << 8) | 1;
          } else {
            is_on = false;
            sc = -1;
          }
        }
        on[l][t] = is_on;
        scene[l][t] = is_on ? sc : -1;
        order[l][t] = so;
      }
    }
    for (int d = 0; d < 2; ++d) {
      for (int m = 0; m < kMinutesPerDay; ++m) {
        bool any = false;
        int minute_scene = -1;
        for (std::int64_t sec = 0; sec < 60; ++sec) {
          const std::int64_t t = static_cast<std::int64_t>(d) * kSecondsPerDay + m * 60 + sec;
          int best = -1;
          std::uint64_t best_order = 0;
          for (int l = 0; l < lights; ++l) {
            any = any || on[l][t];
            if (scene[l][t] >= 0 && order[l][t] >= best_order) {
              best = scene[l][t];
              best_order = order[l][t];
            }
          }
          if (best >= 0) minute_scene = best;
        }
        REQUIRE(s.on(d, m) == any);
        REQUIRE(s.scene_at(d, m) == minute_scene);
        if (s.scene_at(d, m) >= 0) REQUIRE(s.on(d, m));
      }
    }
  }
}

TEST_CASE("reconstruction does not depend on input order") {
  Rng rng(5);
  std::vector<LightEvent> events;
  for (int i = 0; i < 200; ++i) {
    const std::int64_t t = kTwoDays.start_epoch_seconds() + static_cast<std::int64_t>(rng() % 170000);
    static const char* names[] = {"on", "scene", "off"};
    const int a = static_cast<int>(rng() % 3);
    events.push_back(parse_event_record(record(format_timestamp(t), "l" + std::to_string(rng() % 4),
                                               names[a], a == 1 ? static_cast<int>(rng() % 9) : -1,
                                               "h" + std::to_string(rng() % 3),
                                               rng() % 2 ? "room1" : "room2")));
  }
  const auto base = reconstruct_state(events, kTwoDays);
  for (int k = 0; k < 5; ++k) {
    std::shuffle(events.begin(), events.end(), rng);
    CHECK(reconstruct_state(events, kTwoDays) == base);
  }
}

TEST_CASE("validate_log counts records by outcome") {
  const std::vector<std::string> lines{record("2019-03-05T19:00:00Z", "l1", "on", -1, "h1"),
                                       record("2019-03-05T19:10:00Z", "l1", "off", -1, "h2"),
                                       record("2019-03-05T19:20:00Z", "l2", "on", -1, "h1"),
                                       "{broken"};
  const auto r = validate_log(lines);
  CHECK(r.total == 4);
  CHECK(r.parsed == 3);
  CHECK(r.skipped() == 1);
  CHECK(r.skipped_malformed == 1);
  CHECK(r.households == 2);
  CHECK(r.parsed + r.skipped() == r.total);

  const auto empty = validate_log(std::vector<std::string>{});
  CHECK(empty.total == 0);
  CHECK(empty.parsed == 0);
  CHECK(empty.households == 0);
  CHECK_FALSE(empty.first_date.has_value());
}

TEST_CASE("ingest_stream skips bad and out-of-window records") {
  std::stringstream in;
  in << record("2019-03-05T19:00:00Z", "l1", "on") << "\n"
     << "\n"
     << record("2019-03-05T19:30:00Z", "l1", "off") << "\n"
     << record("2019-04-01T19:30:00Z", "l1", "on") << "\n"
     << record("2019-03-05T19:30:00Z", "l1", "on", -1, "h1", "attic") << "\n"
     << "garbage\n";
  const auto r = ingest_stream(in, kTwoDays);
  CHECK(r.report.total == 5);
  CHECK(r.report.parsed == 2);
  CHECK(r.report.skipped_out_of_window == 1);
  CHECK(r.report.skipped_unknown_room == 1);
  CHECK(r.report.skipped_malformed == 1);
  REQUIRE(r.states.size() == 1);
  CHECK(r.states.begin()->second.on_minutes() == 30);
  CHECK(r.geo.at("h1") == GeoInfo{"ames", "US"});
}

}  // TEST_SUITE
