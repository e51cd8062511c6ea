#pragma once

#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lumirec/common.hpp"
#include "lumirec/ingest.hpp"
#include "lumirec/models.hpp"

namespace lumirec::features {

// Integer codes 1..K in sorted name order; 0 is reserved for unseen names.
struct CodeTable {
  std::vector<std::string> names;

  static CodeTable fit(std::vector<std::string> values);
  int code(std::string_view name) const;
  int cardinality() const { return static_cast<int>(names.size()) + 1; }
};

struct CategoryCodes {
  CodeTable country;
  CodeTable city;

  nlohmann::json to_json() const;
  static CategoryCodes from_json(const nlohmann::json& j);
};

CategoryCodes fit_codes(const std::map<std::string, ingest::GeoInfo>& geo);

struct FeatureRow {
  std::string household;
  Room room = Room::kRoom1;
  int country = 0;
  int city = 0;
  int month = 1;  // 1..12
  int hour = 0;   // 0..23
  Period period = Period::kNight;
  int monthly_turn_on = 0;
  double avg_turn_on_monthly = 0.0;
  int quarterly_turn_on = 0;
  double avg_turn_on_quarterly = 0.0;
  int yearly_turn_on = 0;
  double yearly_avg_turn_on = 0.0;
  int label = 0;

  bool operator==(const FeatureRow&) const = default;
};

// One row per (household, room, month, hour) cell holding scene minutes.
// A day counts toward a cell when the room has at least one on-minute in
// that hour. Divisors are the days of the month, quarter and year that lie
// inside the series' window. Rows are ordered by entity, then time.
std::vector<FeatureRow> build_feature_rows(const std::map<ingest::EntityKey, ingest::StateSeries>& states,
                                           const std::map<std::string, ingest::GeoInfo>& geo,
                                           const CategoryCodes& codes);
std::vector<FeatureRow> build_feature_rows(const ingest::StateSeries& state, int country, int city);

// Column names of the model matrix, in order.
const std::vector<std::string>& model_feature_names();
models::Dataset to_dataset(const std::vector<FeatureRow>& rows, int class_count);
models::Dataset to_dataset(const std::vector<FeatureRow>& rows, std::span<const std::size_t> indices,
                           int class_count);

// CSV header and cell order follow FeatureRow's member order.
const std::vector<std::string>& csv_columns();
void write_csv(std::ostream& out, const std::vector<FeatureRow>& rows);
// Throws Error{kInvalidArgument} on a malformed file.
std::vector<FeatureRow> read_csv(std::istream& in);

// Mean normalized impurity decrease per feature across trees, scaled to sum
// to 1 and sorted descending (ties by column order). Throws
// Error{kUntrainedModel} for an empty forest.
std::vector<std::pair<std::string, double>> compute_feature_importance(
    const models::ForestModel& model);

}  // namespace lumirec::features
