#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lumirec {

inline constexpr int kMinutesPerDay = 1440;
inline constexpr std::int64_t kSecondsPerDay = 86400;

// Failure classes surfaced by the library. The CLI maps validation kinds to
// exit code 1 and kInternal to exit code 2.
enum class ErrorKind {
  kMalformedRecord,
  kUnknownRoom,
  kEmptyWindow,
  kDegenerateProfile,
  kTooFewPoints,
  kDimensionMismatch,
  kKTooLarge,
  kUntrainedModel,
  kLengthMismatch,
  kEmptyMatrix,
  kInsufficientHouseholds,
  kInvalidSpec,
  kInvalidArgument,
  kMissingArtifact,
  kConfigMismatch,
  kInternal,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

enum class Room : std::uint8_t { kRoom1 = 0, kRoom2 = 1 };
inline constexpr int kRoomCount = 2;

std::string_view to_string(Room room);
// Accepts "room1"/"room2"; returns false for anything else.
bool parse_room(std::string_view text, Room& out);

// Day partition used by the period factor.
enum class Period : std::uint8_t { kNight = 0, kMorning = 1, kAfternoon = 2, kEvening = 3 };
std::string_view to_string(Period period);
bool parse_period(std::string_view text, Period& out);
constexpr Period period_of_hour(int hour) {
  if (hour < 6) return Period::kNight;
  if (hour < 12) return Period::kMorning;
  if (hour < 18) return Period::kAfternoon;
  return Period::kEvening;
}

using Date = std::chrono::sys_days;

Date make_date(int y, unsigned m, unsigned d);
// Parses YYYY-MM-DD. Throws Error{kInvalidArgument}.
Date parse_date(std::string_view text);
std::string format_date(Date date);
int year_of(Date date);
unsigned month_of(Date date);
inline int quarter_of_month(unsigned month) { return static_cast<int>((month - 1) / 3); }

// Inclusive calendar range [first, last].
struct DateRange {
  Date first;
  Date last;

  bool empty() const { return last < first; }
  int day_count() const { return empty() ? 0 : (last - first).count() + 1; }
  bool contains(Date d) const { return !(d < first) && !(last < d); }
  std::int64_t start_epoch_seconds() const;
};

// "HH:MM" for a minute of day in [0, 1440].
std::string format_hhmm(int minute);

// Shortest text that parses back to the same double.
std::string format_double(double value);
// Strict full-string number parsing. Throw Error{kInvalidArgument}.
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

// splitmix64 finalizer; the basis of every named seed derivation.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);

using Rng = std::mt19937_64;

// FNV-1a 64 as 16 hex chars.
std::string fnv1a_hex(std::string_view data);

// Upper bound on worker threads used by parallel_for. 0 means hardware
// concurrency. Results never depend on this value.
void set_max_threads(unsigned n);
unsigned max_threads();

// Runs body(i) for i in [0, n). Each index must write only to its own slot.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace lumirec
