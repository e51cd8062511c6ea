#include "lumirec/routine.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace lumirec::routine {

FrequencyProfile frequency_profile(const ingest::StateSeries& state) {
  FrequencyProfile p;
  p.household = state.household;
  p.room = state.room;
  p.day_count = state.day_count();
  p.values.assign(kMinutesPerDay, 0.0);
  if (p.day_count == 0) return p;
  std::vector<int> counts(kMinutesPerDay, 0);
  for (const auto& day : state.grid) {
    if (day.none()) continue;
    for (int m = 0; m < kMinutesPerDay; ++m) counts[m] += day[m];
  }
  for (int m = 0; m < kMinutesPerDay; ++m) {
    p.values[m] = static_cast<double>(counts[m]) / p.day_count;
  }
  return p;
}

Knee curve_knee(std::span<const double> curve, double flat_tolerance) {
  Knee knee;
  const std::size_t n = curve.size();
  if (n < 3) {
    knee.degenerate = true;
    return knee;
  }
  const auto [lo_it, hi_it] = std::minmax_element(curve.begin(), curve.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) {
    knee.degenerate = true;
    return knee;
  }
  const double y_first = (curve.front() - lo) / (hi - lo);
  const double y_last = (curve.back() - lo) / (hi - lo);
  // Chord from (0, y_first) to (1, y_last): dy * x - y + y_first = 0.
  const double dy = y_last - y_first;
  const double norm = std::sqrt(dy * dy + 1.0);
  double best = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(n - 1);
    const double y = (curve[i] - lo) / (hi - lo);
    const double signed_dist = (dy * x - y + y_first) / norm;  // < 0 above chord
    const double dist = std::abs(signed_dist);
    if (dist > best) {
      best = dist;
      knee.index = i;
      knee.above_chord = signed_dist < 0.0;
    }
  }
  knee.distance = best;
  knee.degenerate = !(best > flat_tolerance);
  return knee;
}

KneeThreshold knee_threshold(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorKind::kDegenerateProfile, "empty profile");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  if (sorted.front() == sorted.back()) {
    throw Error(ErrorKind::kDegenerateProfile, "all profile values are equal");
  }
  KneeThreshold out;
  const Knee knee = curve_knee(sorted);
  if (knee.degenerate) {
    out.fallback = true;
    out.threshold = std::accumulate(values.begin(), values.end(), 0.0) /
                    static_cast<double>(values.size());
    out.knee_index = static_cast<std::size_t>(
        std::lower_bound(sorted.begin(), sorted.end(), out.threshold, std::greater<>()) -
        sorted.begin());
    return out;
  }
  out.knee_index = knee.index;
  if (!knee.above_chord && knee.index > 0) {
    out.threshold = sorted[knee.index - 1];
  } else {
    out.threshold = sorted[knee.index];
  }
  return out;
}

RoutinePlan routine_intervals(const FrequencyProfile& profile, double threshold,
                              const RoutineParams& params) {
  RoutinePlan plan;
  plan.household = profile.household;
  plan.room = profile.room;
  plan.threshold = threshold;

  std::vector<Interval> runs;
  const int n = static_cast<int>(profile.values.size());
  for (int m = 0; m < n;) {
    if (!(profile.values[m] >= threshold)) {
      ++m;
      continue;
    }
    int e = m + 1;
    while (e < n && profile.values[e] >= threshold) ++e;
    runs.push_back({m, e});
    m = e;
  }
  std::vector<Interval> merged;
  for (const auto& r : runs) {
    if (!merged.empty() && r.start - merged.back().end <= params.merge_gap) {
      merged.back().end = r.end;
    } else {
      merged.push_back(r);
    }
  }
  for (const auto& r : merged) {
    if (r.length() >= params.min_len) plan.intervals.push_back(r);
  }
  return plan;
}

RoutinePlan recommend_routine(const FrequencyProfile& profile, const RoutineParams& params) {
  KneeThreshold kt;
  try {
    kt = knee_threshold(profile.values);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kDegenerateProfile) throw;
    RoutinePlan plan;
    plan.household = profile.household;
    plan.room = profile.room;
    plan.no_routine = true;
    return plan;
  }
  RoutinePlan plan = routine_intervals(profile, kt.threshold, params);
  plan.fallback = kt.fallback;
  return plan;
}

RoutinePlan recommend_routine(const ingest::StateSeries& state, const RoutineParams& params) {
  return recommend_routine(frequency_profile(state), params);
}

}  // namespace lumirec::routine
