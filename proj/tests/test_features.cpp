#include <algorithm>
#include <map>
#include <sstream>

#include "doctest.h"
#include "lumirec/features.hpp"
#include "lumirec/synth.hpp"
#include "test_util.hpp"

using namespace lumirec;
using namespace lumirec::features;

namespace {

ingest::StateSeries series(const std::string& from, const std::string& to, Room room = Room::kRoom1) {
  ingest::StateSeries s;
  s.household = "h1";
  s.room = room;
  const DateRange r{parse_date(from), parse_date(to)};
  s.first_day = r.first;
  s.grid.assign(r.day_count(), {});
  s.scene_runs.assign(r.day_count(), {});
  return s;
}

void add_session(ingest::StateSeries& s, int day, int start, int end, int scene) {
  for (int m = start; m < end; ++m) s.grid[day].set(m);
  if (scene >= 0) {
    s.scene_runs[day].push_back({static_cast<std::int16_t>(start), static_cast<std::int16_t>(end),
                                 static_cast<std::int16_t>(scene)});
  }
}

int day_index(const ingest::StateSeries& s, const std::string& date) {
  return (parse_date(date) - s.first_day).count();
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("ten March evenings in scene three give one row") {
  auto s = series("2019-01-01", "2019-12-31");
  for (int d = 1; d <= 10; ++d) {
    add_session(s, day_index(s, "2019-03-" + std::string(d < 10 ? "0" : "") + std::to_string(d)), 1140,
                1170, 3);
  }
  const auto rows = build_feature_rows(s, 1, 2);
  REQUIRE(rows.size() == 1);
  const auto& r = rows[0];
  CHECK(r.month == 3);
  CHECK(r.hour == 19);
  CHECK(r.period == Period::kEvening);
  CHECK(r.monthly_turn_on == 10);
  CHECK(r.avg_turn_on_monthly == doctest::Approx(10.0 / 31.0).epsilon(1e-15));
  CHECK(r.quarterly_turn_on == 10);
  CHECK(r.avg_turn_on_quarterly == doctest::Approx(10.0 / 90.0).epsilon(1e-15));
  CHECK(r.yearly_turn_on == 10);
  CHECK(r.yearly_avg_turn_on == doctest::Approx(10.0 / 365.0).epsilon(1e-15));
  CHECK(r.label == 3);
  CHECK(r.country == 1);
  CHECK(r.city == 2);
}

TEST_CASE("on every day of a month the monthly average is one") {
  auto s = series("2019-01-01", "2019-12-31");
  for (int d = day_index(s, "2019-07-01"); d <= day_index(s, "2019-07-31"); ++d) {
    add_session(s, d, 600, 620, 1);
  }
  const auto rows = build_feature_rows(s, 0, 0);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].monthly_turn_on == 31);
  CHECK(rows[0].avg_turn_on_monthly == 1.0);
}

TEST_CASE("cells without scene minutes emit no row") {
  auto s = series("2019-01-01", "2019-01-31");
  add_session(s, 3, 600, 700, -1);
  CHECK(build_feature_rows(s, 0, 0).empty());
}

TEST_CASE("label is the modal scene with ties to the lowest id") {
  auto s = series("2019-01-01", "2019-01-31");
  add_session(s, 0, 600, 620, 5);
  add_session(s, 1, 600, 620, 2);
  add_session(s, 2, 600, 610, 7);
  auto rows = build_feature_rows(s, 0, 0);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].label == 2);
  add_session(s, 3, 600, 601, 5);
  rows = build_feature_rows(s, 0, 0);
  CHECK(rows[0].label == 5);
}

TEST_CASE("divisors count only window days") {
  auto s = series("2019-03-20", "2019-04-10");
  add_session(s, 0, 60, 70, 1);
  add_session(s, 15, 60, 70, 1);
  const auto rows = build_feature_rows(s, 0, 0);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].month == 3);
  CHECK(rows[0].avg_turn_on_monthly == doctest::Approx(1.0 / 12.0));
  CHECK(rows[0].quarterly_turn_on == 1);
  CHECK(rows[0].avg_turn_on_quarterly == doctest::Approx(1.0 / 12.0));
  CHECK(rows[1].month == 4);
  CHECK(rows[1].avg_turn_on_monthly == doctest::Approx(1.0 / 10.0));
  CHECK(rows[1].quarterly_turn_on == 1);
  CHECK(rows[0].yearly_turn_on == 2);
  CHECK(rows[0].yearly_avg_turn_on == doctest::Approx(2.0 / 22.0));
}

TEST_CASE("rows match a dense brute-force tally on random series") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    auto s = series("2019-02-20", "2019-05-10", trial % 2 ? Room::kRoom2 : Room::kRoom1);
    for (int d = 0; d < s.day_count(); ++d) {
      const int sessions = static_cast<int>(rng() % 4);
      int cursor = static_cast<int>(rng() % 300);
      for (int k = 0; k < sessions && cursor < 1400; ++k) {
        const int len = 1 + static_cast<int>(rng() % 120);
        const int end = std::min(cursor + len, kMinutesPerDay);
        add_session(s, d, cursor, end, rng() % 3 ? static_cast<int>(rng() % 9) : -1);
        cursor = end + 1 + static_cast<int>(rng() % 300);
      }
    }
    const auto rows = build_feature_rows(s, 4, 5);

    std::map<std::pair<int, int>, FeatureRow> expect;
    std::map<int, int> month_days, quarter_days;
    int year_days = 0;
    for (int d = 0; d < s.day_count(); ++d) {
      const int month = static_cast<int>(month_of(s.day(d)));
      ++month_days[month];
      ++quarter_days[quarter_of_month(month)];
      ++year_days;
    }
    for (int month = 1; month <= 12; ++month) {
      for (int h = 0; h < 24; ++h) {
        std::vector<int> minutes(9, 0);
        int m_on = 0, q_on = 0, y_on = 0;
        for (int d = 0; d < s.day_count(); ++d) {
          const int dm = static_cast<int>(month_of(s.day(d)));
          bool on = false;
          for (int t = h * 60; t < h * 60 + 60; ++t) {
            on = on || s.on(d, t);
            if (dm == month && s.scene_at(d, t) >= 0) ++minutes[s.scene_at(d, t)];
          }
          if (!on) continue;
          ++y_on;
          if (quarter_of_month(dm) == quarter_of_month(month)) ++q_on;
          if (dm == month) ++m_on;
        }
        const auto best = std::max_element(minutes.begin(), minutes.end());
        if (*best == 0) continue;
        FeatureRow r;
        r.household = "h1";
        r.room = s.room;
        r.country = 4;
        r.city = 5;
        r.month = month;
        r.hour = h;
        r.period = period_of_hour(h);
        r.monthly_turn_on = m_on;
        r.avg_turn_on_monthly = static_cast<double>(m_on) / month_days[month];
        r.quarterly_turn_on = q_on;
        r.avg_turn_on_quarterly = static_cast<double>(q_on) / quarter_days[quarter_of_month(month)];
        r.yearly_turn_on = y_on;
        r.yearly_avg_turn_on = static_cast<double>(y_on) / year_days;
        r.label = static_cast<int>(best - minutes.begin());
        expect[{month, h}] = r;
      }
    }
    REQUIRE(rows.size() == expect.size());
    std::size_t i = 0;
    for (const auto& [key, r] : expect) CHECK(rows[i++] == r);
  }
}

TEST_CASE("count nesting and average bounds hold on synthetic households") {
  auto pop = synth::default_population(3);
  for (auto& p : pop.personas) p.households = 5;
  const auto truth = synth::plan_households(pop, 3);
  const DateRange range{parse_date("2019-01-01"), parse_date("2019-06-30")};
  const auto st = synth::synthesize_states(pop, truth, range, 3);
  const auto codes = fit_codes(st.geo);
  const auto rows = build_feature_rows(st.states, st.geo, codes);
  REQUIRE(!rows.empty());
  CHECK(rows.size() <= truth.size() * 2 * 12 * 24);
  for (const auto& r : rows) {
    CHECK(r.monthly_turn_on <= r.quarterly_turn_on);
    CHECK(r.quarterly_turn_on <= r.yearly_turn_on);
    CHECK(r.avg_turn_on_monthly >= 0.0);
    CHECK(r.avg_turn_on_monthly <= 1.0);
    CHECK(r.avg_turn_on_quarterly <= 1.0);
    CHECK(r.yearly_avg_turn_on <= 1.0);
    CHECK(r.label < 9);
    CHECK(r.country > 0);
    CHECK(r.city > 0);
  }
}

TEST_CASE("code tables are sorted with zero for unseen names") {
  const auto t = CodeTable::fit({"US", "DE", "US", "JP"});
  CHECK(t.names == std::vector<std::string>{"DE", "JP", "US"});
  CHECK(t.code("DE") == 1);
  CHECK(t.code("US") == 3);
  CHECK(t.code("FR") == 0);
  CHECK(t.cardinality() == 4);

  std::map<std::string, ingest::GeoInfo> geo{{"a", {"tokyo", "JP"}}, {"b", {"boston", "US"}}};
  const auto codes = fit_codes(geo);
  const auto back = CategoryCodes::from_json(codes.to_json());
  CHECK(back.country.names == codes.country.names);
  CHECK(back.city.names == codes.city.names);
  CHECK(codes.to_json().at("unknown_code") == 0);
}

TEST_CASE("csv columns follow the row layout and round-trip") {
  CHECK(csv_columns() ==
        std::vector<std::string>{"household", "room", "country", "city", "month", "hour", "period",
                                 "monthly_turn_on", "avg_turn_on_monthly", "quarterly_turn_on",
                                 "avg_turn_on_quarterly", "yearly_turn_on", "yearly_avg_turn_on",
                                 "label"});
  auto s = series("2019-01-01", "2019-03-31", Room::kRoom2);
  Rng rng(2);
  for (int d = 0; d < s.day_count(); ++d) {
    const int start = static_cast<int>(rng() % 1300);
    add_session(s, d, start, start + 1 + static_cast<int>(rng() % 100), static_cast<int>(rng() % 9));
  }
  const auto rows = build_feature_rows(s, 2, 3);
  std::stringstream buf;
  write_csv(buf, rows);
  CHECK(read_csv(buf) == rows);

  std::stringstream bad("household,room\nh1,room1\n");
  CHECK_THROWS_AS(read_csv(bad), Error);
}

TEST_CASE("model matrix uses the twelve feature columns") {
  auto s = series("2019-01-01", "2019-01-31");
  add_session(s, 0, 600, 620, 4);
  const auto rows = build_feature_rows(s, 1, 1);
  const auto d = to_dataset(rows, 9);
  CHECK(d.cols == 12);
  CHECK(d.feature_names == model_feature_names());
  CHECK(d.y == std::vector<int>{4});
  CHECK_THROWS_AS(to_dataset(rows, 4), Error);
}

TEST_CASE("a label driven by one feature puts nearly all importance on it") {
  Rng rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i < 600; ++i) {
    const int hour = static_cast<int>(rng() % 24);
    x.push_back({u(rng), static_cast<double>(hour), u(rng)});
    y.push_back(hour < 8 ? 0 : hour < 18 ? 1 : 2);
  }
  auto d = testing::make_dataset(x, y, 3);
  d.feature_names = {"noise_a", "hour", "noise_b"};
  models::ModelSpec spec;
  spec.n_trees = 30;
  spec.seed = 4;
  const auto forest = models::rf_fit(d, spec);
  const auto imp = compute_feature_importance(forest);
  REQUIRE(imp.size() == 3);
  CHECK(imp[0].first == "hour");
  CHECK(imp[0].second > 0.9);
  double sum = 0.0;
  for (const auto& [name, v] : imp) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  for (std::size_t i = 1; i < imp.size(); ++i) CHECK(imp[i - 1].second >= imp[i].second);
}

TEST_CASE("an untrained forest has no importance") {
  models::ForestModel empty;
  CHECK_THROWS_AS(compute_feature_importance(empty), Error);
}

TEST_CASE("an appended noise column ranks below the scene-driving features") {
  auto pop = synth::default_population(5);
  for (auto& p : pop.personas) p.households = 20;
  const auto truth = synth::plan_households(pop, 5);
  const DateRange range{parse_date("2019-01-01"), parse_date("2019-04-30")};
  const auto st = synth::synthesize_states(pop, truth, range, 5);
  const auto codes = fit_codes(st.geo);
  const auto rows = build_feature_rows(st.states, st.geo, codes);
  auto d = to_dataset(rows, 9);
  Rng rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  models::Dataset wide = d;
  wide.cols = d.cols + 1;
  wide.x.clear();
  for (std::size_t i = 0; i < d.rows; ++i) {
    const auto r = d.row(i);
    wide.x.insert(wide.x.end(), r.begin(), r.end());
    wide.x.push_back(u(rng));
  }
  wide.feature_names.push_back("noise");
  models::ModelSpec spec;
  spec.n_trees = 50;
  spec.seed = 8;
  const auto imp = compute_feature_importance(models::rf_fit(wide, spec));
  std::map<std::string, double> by_name(imp.begin(), imp.end());
  for (const char* signal : {"hour", "room", "period"}) {
    CHECK(by_name.at("noise") < by_name.at(signal));
  }
}

}  // TEST_SUITE
