#pragma once

#include <bitset>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lumirec/common.hpp"

namespace lumirec::ingest {

enum class Action : std::uint8_t { kOn = 0, kSceneSet = 1, kOff = 2 };
enum class Source : std::uint8_t { kApp, kButton, kSwitch, kOther };

// One hub log record. Timestamps are seconds since the Unix epoch of the
// wall-clock time written in the log; no timezone conversion is applied.
struct LightEvent {
  std::int64_t timestamp = 0;
  std::string hub_id;
  std::string light_id;
  Room room = Room::kRoom1;
  Action action = Action::kOn;
  std::optional<int> scene_id;  // present iff action == kSceneSet
  Source source = Source::kOther;
  std::string city;
  std::string country;
  std::optional<double> brightness;
  std::optional<double> saturation;
  std::optional<double> color_x;
  std::optional<double> color_y;
  std::optional<double> color_temp;
  std::optional<std::string> color_mode;
};

struct ParseOptions {
  int scene_count = 9;
};

struct ParseOutcome {
  std::optional<LightEvent> event;
  ErrorKind error = ErrorKind::kMalformedRecord;  // meaningful when !event
  std::string message;
};

ParseOutcome try_parse_event_record(std::string_view line, const ParseOptions& options = {});

// Throws Error{kMalformedRecord} or Error{kUnknownRoom}.
LightEvent parse_event_record(std::string_view line, const ParseOptions& options = {});

// Serializes one event as a single NDJSON line (no trailing newline).
std::string format_event_record(const LightEvent& event);

// Parses "YYYY-MM-DDTHH:MM:SS[.fff](Z|+hh:mm|-hh:mm)". The offset is
// accepted but not applied.
std::optional<std::int64_t> parse_timestamp(std::string_view text);
std::string format_timestamp(std::int64_t epoch_seconds);

struct EntityKey {
  std::string household;
  Room room = Room::kRoom1;

  auto operator<=>(const EntityKey&) const = default;
};

// Half-open minute run [start, end) within one day with an active scene.
struct SceneRun {
  std::int16_t start = 0;
  std::int16_t end = 0;
  std::int16_t scene = -1;

  bool operator==(const SceneRun&) const = default;
};

using DayGrid = std::bitset<kMinutesPerDay>;

// Minute-resolution on/off state of one room over the study window. The
// scene grid is stored as per-day runs; scene_at() gives the dense view.
struct StateSeries {
  std::string household;
  Room room = Room::kRoom1;
  Date first_day{};
  std::vector<DayGrid> grid;
  std::vector<std::vector<SceneRun>> scene_runs;

  int day_count() const { return static_cast<int>(grid.size()); }
  Date day(int index) const { return first_day + std::chrono::days{index}; }
  bool on(int day, int minute) const { return grid[day][minute]; }
  int scene_at(int day, int minute) const;
  std::size_t on_minutes() const;

  bool operator==(const StateSeries&) const = default;
};

struct ReconstructOptions {
  // A light with no order for longer than this is force-closed at the cap.
  std::int64_t stale_on_cap_seconds = kSecondsPerDay;
};

// Compact per-room order used by the reconstruction core. Light indices
// are assigned by sorted light id so results do not depend on input order.
struct RoomEvent {
  std::int64_t timestamp = 0;
  std::uint32_t light = 0;
  Action action = Action::kOn;
  std::int16_t scene = -1;

  auto operator<=>(const RoomEvent&) const = default;
};

// Reconstructs one room. Sorts `events` in place.
StateSeries reconstruct_room(const std::string& household, Room room,
                             std::vector<RoomEvent>& events, const DateRange& window,
                             const ReconstructOptions& options = {});

std::map<EntityKey, StateSeries> reconstruct_state(std::span<const LightEvent> events,
                                                   const DateRange& window,
                                                   const ReconstructOptions& options = {});

struct GeoInfo {
  std::string city;
  std::string country;

  bool operator==(const GeoInfo&) const = default;
};

struct IngestReport {
  std::size_t total = 0;
  std::size_t parsed = 0;
  std::size_t skipped_malformed = 0;
  std::size_t skipped_unknown_room = 0;
  std::size_t skipped_out_of_window = 0;
  std::size_t households = 0;
  std::size_t rooms = 0;
  std::optional<Date> first_date;
  std::optional<Date> last_date;

  std::size_t skipped() const {
    return skipped_malformed + skipped_unknown_room + skipped_out_of_window;
  }
};

// Counts records by outcome. Blank lines are not records. When a window is
// given, parsed records outside it are counted as skipped_out_of_window.
IngestReport validate_log(std::span<const std::string> lines, const ParseOptions& options = {},
                          const std::optional<DateRange>& window = std::nullopt);

struct IngestResult {
  IngestReport report;
  std::map<EntityKey, StateSeries> states;
  std::map<std::string, GeoInfo> geo;  // first record's location per household
};

// Streams an NDJSON log, skipping bad records, and reconstructs every room.
IngestResult ingest_stream(std::istream& in, const DateRange& window,
                           const ParseOptions& parse_options = {},
                           const ReconstructOptions& options = {});

}  // namespace lumirec::ingest
