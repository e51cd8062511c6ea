#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "lumirec/common.hpp"
#include "lumirec/ingest.hpp"

namespace lumirec::routine {

// Per minute-of-day fraction of days on which the room was on.
struct FrequencyProfile {
  std::string household;
  Room room = Room::kRoom1;
  std::vector<double> values;  // length kMinutesPerDay, each in [0, 1]
  int day_count = 0;
};

FrequencyProfile frequency_profile(const ingest::StateSeries& state);

struct Knee {
  // Index into the curve of the point farthest from the chord.
  std::size_t index = 0;
  double distance = 0.0;  // perpendicular distance in normalized units
  bool above_chord = false;
  bool degenerate = false;
};

// Knee of a curve given in order, using min-max normalization of both axes
// and the chord from the first to the last point. Ties go to the smaller
// index. A curve whose largest distance is at or below `flat_tolerance` is
// reported degenerate.
Knee curve_knee(std::span<const double> curve, double flat_tolerance = 1e-9);

struct KneeThreshold {
  double threshold = 0.0;
  std::size_t knee_index = 0;
  bool fallback = false;  // collinear curve: threshold is the mean
};

// Sorts values descending and finds the knee. A knee below the chord is the
// first point of the low tail, so the threshold is the value just before
// it; a knee above the chord is the last point of the high regime and is
// itself the threshold. Throws Error{kDegenerateProfile} when all values are
// equal.
KneeThreshold knee_threshold(std::span<const double> values);

struct Interval {
  int start = 0;  // minute of day, inclusive
  int end = 0;    // exclusive, <= 1440

  int length() const { return end - start; }
  bool operator==(const Interval&) const = default;
};

struct RoutinePlan {
  std::string household;
  Room room = Room::kRoom1;
  double threshold = 0.0;
  bool fallback = false;
  bool no_routine = false;  // degenerate profile
  std::vector<Interval> intervals;
};

struct RoutineParams {
  int merge_gap = 15;
  int min_len = 10;
};

// Selects minutes with value >= threshold, merges runs separated by gaps of
// at most merge_gap minutes, then drops intervals shorter than min_len.
RoutinePlan routine_intervals(const FrequencyProfile& profile, double threshold,
                              const RoutineParams& params = {});

RoutinePlan recommend_routine(const ingest::StateSeries& state, const RoutineParams& params = {});
RoutinePlan recommend_routine(const FrequencyProfile& profile, const RoutineParams& params = {});

}  // namespace lumirec::routine
