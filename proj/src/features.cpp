#include "lumirec/features.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <sstream>

namespace lumirec::features {

using nlohmann::json;

CodeTable CodeTable::fit(std::vector<std::string> values) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  CodeTable t;
  t.names = std::move(values);
  return t;
}

int CodeTable::code(std::string_view name) const {
  auto it = std::lower_bound(names.begin(), names.end(), name);
  if (it == names.end() || *it != name) return 0;
  return static_cast<int>(it - names.begin()) + 1;
}

json CategoryCodes::to_json() const {
  return json{{"format_version", 1},
              {"unknown_code", 0},
              {"country", country.names},
              {"city", city.names}};
}

CategoryCodes CategoryCodes::from_json(const json& j) {
  CategoryCodes c;
  try {
    c.country = CodeTable::fit(j.at("country").get<std::vector<std::string>>());
    c.city = CodeTable::fit(j.at("city").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidArgument, std::string("malformed code table: ") + e.what());
  }
  return c;
}

CategoryCodes fit_codes(const std::map<std::string, ingest::GeoInfo>& geo) {
  std::vector<std::string> countries, cities;
  for (const auto& [household, info] : geo) {
    countries.push_back(info.country);
    cities.push_back(info.city);
  }
  CategoryCodes c;
  c.country = CodeTable::fit(std::move(countries));
  c.city = CodeTable::fit(std::move(cities));
  return c;
}

namespace {

const std::array<ingest::DayGrid, 24>& hour_masks() {
  static const std::array<ingest::DayGrid, 24> masks = [] {
    std::array<ingest::DayGrid, 24> m{};
    for (int h = 0; h < 24; ++h) {
      for (int t = h * 60; t < h * 60 + 60; ++t) m[h].set(t);
    }
    return m;
  }();
  return masks;
}

struct CellCounts {
  std::array<int, 24> on{};
};

}  // namespace

std::vector<FeatureRow> build_feature_rows(const ingest::StateSeries& state, int country,
                                           int city) {
  using Key = std::pair<int, int>;  // (year, month or quarter)
  std::map<Key, int> month_days, quarter_days;
  std::map<int, int> year_days;
  std::map<Key, CellCounts> month_on, quarter_on;
  std::map<int, CellCounts> year_on;
  std::map<Key, std::array<std::vector<int>, 24>> scene_minutes;
  const auto& masks = hour_masks();

  for (int d = 0; d < state.day_count(); ++d) {
    const Date date = state.day(d);
    const int year = year_of(date);
    const int month = static_cast<int>(month_of(date));
    const int quarter = quarter_of_month(static_cast<unsigned>(month));
    ++month_days[{year, month}];
    ++quarter_days[{year, quarter}];
    ++year_days[year];
    const auto& grid = state.grid[d];
    if (grid.any()) {
      auto& mo = month_on[{year, month}];
      auto& qo = quarter_on[{year, quarter}];
      auto& yo = year_on[year];
      for (int h = 0; h < 24; ++h) {
        if ((grid & masks[h]).any()) {
          ++mo.on[h];
          ++qo.on[h];
          ++yo.on[h];
        }
      }
    }
    for (const auto& run : state.scene_runs[d]) {
      auto& cells = scene_minutes[{year, month}];
      for (int h = run.start / 60; h <= (run.end - 1) / 60; ++h) {
        const int overlap = std::min<int>(run.end, h * 60 + 60) - std::max<int>(run.start, h * 60);
        if (overlap <= 0) continue;
        auto& counts = cells[h];
        if (counts.size() <= static_cast<std::size_t>(run.scene)) counts.resize(run.scene + 1, 0);
        counts[run.scene] += overlap;
      }
    }
  }

  std::vector<FeatureRow> rows;
  for (const auto& [key, cells] : scene_minutes) {
    const auto [year, month] = key;
    const int quarter = quarter_of_month(static_cast<unsigned>(month));
    for (int h = 0; h < 24; ++h) {
      const auto& counts = cells[h];
      if (counts.empty()) continue;
      const auto best = std::max_element(counts.begin(), counts.end());
      if (*best <= 0) continue;
      FeatureRow r;
      r.household = state.household;
      r.room = state.room;
      r.country = country;
      r.city = city;
      r.month = month;
      r.hour = h;
      r.period = period_of_hour(h);
      r.monthly_turn_on = month_on[key].on[h];
      r.avg_turn_on_monthly = static_cast<double>(r.monthly_turn_on) / month_days[key];
      r.quarterly_turn_on = quarter_on[{year, quarter}].on[h];
      r.avg_turn_on_quarterly =
          static_cast<double>(r.quarterly_turn_on) / quarter_days[{year, quarter}];
      r.yearly_turn_on = year_on[year].on[h];
      r.yearly_avg_turn_on = static_cast<double>(r.yearly_turn_on) / year_days[year];
      r.label = static_cast<int>(best - counts.begin());
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

std::vector<FeatureRow> build_feature_rows(
    const std::map<ingest::EntityKey, ingest::StateSeries>& states,
    const std::map<std::string, ingest::GeoInfo>& geo, const CategoryCodes& codes) {
  std::vector<const ingest::StateSeries*> order;
  for (const auto& [key, series] : states) order.push_back(&series);
  std::vector<std::vector<FeatureRow>> parts(order.size());
  parallel_for(order.size(), [&](std::size_t i) {
    const auto& s = *order[i];
    int country = 0, city = 0;
    if (auto it = geo.find(s.household); it != geo.end()) {
      country = codes.country.code(it->second.country);
      city = codes.city.code(it->second.city);
    }
    parts[i] = build_feature_rows(s, country, city);
  });
  std::vector<FeatureRow> rows;
  for (auto& p : parts) {
    rows.insert(rows.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
  }
  return rows;
}

const std::vector<std::string>& model_feature_names() {
  static const std::vector<std::string> names{
      "room",  "country", "city", "month", "hour", "period", "monthly_turn_on",
      "avg_turn_on_monthly", "quarterly_turn_on", "avg_turn_on_quarterly", "yearly_turn_on",
      "yearly_avg_turn_on"};
  return names;
}

models::Dataset to_dataset(const std::vector<FeatureRow>& rows,
                           std::span<const std::size_t> indices, int class_count) {
  models::Dataset d;
  d.feature_names = model_feature_names();
  d.cols = d.feature_names.size();
  d.rows = indices.size();
  d.class_count = class_count;
  d.x.reserve(d.rows * d.cols);
  d.y.reserve(d.rows);
  for (std::size_t i : indices) {
    const FeatureRow& r = rows[i];
    d.x.insert(d.x.end(), {static_cast<double>(r.room), static_cast<double>(r.country),
                           static_cast<double>(r.city), static_cast<double>(r.month),
                           static_cast<double>(r.hour), static_cast<double>(r.period),
                           static_cast<double>(r.monthly_turn_on), r.avg_turn_on_monthly,
                           static_cast<double>(r.quarterly_turn_on), r.avg_turn_on_quarterly,
                           static_cast<double>(r.yearly_turn_on), r.yearly_avg_turn_on});
    if (r.label < 0 || r.label >= class_count) {
      throw Error(ErrorKind::kInvalidArgument, "scene label outside [0, C)");
    }
    d.y.push_back(r.label);
  }
  return d;
}

models::Dataset to_dataset(const std::vector<FeatureRow>& rows, int class_count) {
  std::vector<std::size_t> all(rows.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return to_dataset(rows, all, class_count);
}

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols{
      "household", "room", "country", "city", "month", "hour", "period", "monthly_turn_on",
      "avg_turn_on_monthly", "quarterly_turn_on", "avg_turn_on_quarterly", "yearly_turn_on",
      "yearly_avg_turn_on", "label"};
  return cols;
}

void write_csv(std::ostream& out, const std::vector<FeatureRow>& rows) {
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : rows) {
    out << r.household << ',' << to_string(r.room) << ',' << r.country << ',' << r.city << ','
        << r.month << ',' << r.hour << ',' << to_string(r.period) << ',' << r.monthly_turn_on
        << ',' << format_double(r.avg_turn_on_monthly) << ',' << r.quarterly_turn_on << ','
        << format_double(r.avg_turn_on_quarterly) << ',' << r.yearly_turn_on << ','
        << format_double(r.yearly_avg_turn_on) << ',' << r.label << '\n';
  }
}

std::vector<FeatureRow> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kInvalidArgument, "features.csv is empty");
  {
    std::string expected;
    for (const auto& c : csv_columns()) expected += (expected.empty() ? "" : ",") + c;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expected) throw Error(ErrorKind::kInvalidArgument, "features.csv: bad header");
  }
  std::vector<FeatureRow> rows;
  std::vector<std::string_view> cells;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    cells.clear();
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (cells.size() != csv_columns().size()) {
      throw Error(ErrorKind::kInvalidArgument,
                  "features.csv line " + std::to_string(line_no) + ": wrong field count");
    }
    FeatureRow r;
    r.household = std::string(cells[0]);
    if (!parse_room(cells[1], r.room) || !parse_period(cells[6], r.period)) {
      throw Error(ErrorKind::kInvalidArgument,
                  "features.csv line " + std::to_string(line_no) + ": bad room or period");
    }
    r.country = static_cast<int>(parse_int(cells[2]));
    r.city = static_cast<int>(parse_int(cells[3]));
    r.month = static_cast<int>(parse_int(cells[4]));
    r.hour = static_cast<int>(parse_int(cells[5]));
    r.monthly_turn_on = static_cast<int>(parse_int(cells[7]));
    r.avg_turn_on_monthly = parse_double(cells[8]);
    r.quarterly_turn_on = static_cast<int>(parse_int(cells[9]));
    r.avg_turn_on_quarterly = parse_double(cells[10]);
    r.yearly_turn_on = static_cast<int>(parse_int(cells[11]));
    r.yearly_avg_turn_on = parse_double(cells[12]);
    r.label = static_cast<int>(parse_int(cells[13]));
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<std::pair<std::string, double>> compute_feature_importance(
    const models::ForestModel& model) {
  if (model.trees.empty()) throw Error(ErrorKind::kUntrainedModel, "forest is not trained");
  const std::size_t p = model.trees.front().importance.size();
  std::vector<double> total(p, 0.0);
  for (const auto& t : model.trees) {
    for (std::size_t j = 0; j < p && j < t.importance.size(); ++j) total[j] += t.importance[j];
  }
  double sum = 0.0;
  for (double& v : total) {
    v /= static_cast<double>(model.trees.size());
    sum += v;
  }
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t j = 0; j < p; ++j) {
    const std::string name =
        j < model.feature_names.size() ? model.feature_names[j] : "f" + std::to_string(j);
    out.emplace_back(name, sum > 0 ? total[j] / sum : 1.0 / static_cast<double>(p));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

}  // namespace lumirec::features
