#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lumirec/common.hpp"
#include "lumirec/ingest.hpp"

namespace lumirec::synth {

struct Window {
  int start = 0;  // minute of day
  int end = 0;    // exclusive
  double daily_probability = 1.0;

  bool operator==(const Window&) const = default;
};

struct Location {
  std::string country;
  std::string city;

  bool operator==(const Location&) const = default;
};

using SceneTable = std::map<std::pair<Room, Period>, int>;

struct PersonaSpec {
  std::string id;
  // Each household draws one location uniformly from this list.
  std::vector<Location> locations;
  std::vector<Room> rooms;
  std::map<Room, std::vector<Window>> active_windows;
  SceneTable scene_table;  // keyed by the period of each window's start
  double noise_rate = 0.1;  // random on/off sessions per room-day
  double flip_probability = 0.1;
  int households = 0;
};

struct GeneratorOptions {
  int scene_count = 9;
  int jitter_minutes = 10;
  int noise_min_minutes = 10;
  int noise_max_minutes = 30;
};

struct Population {
  std::vector<PersonaSpec> personas;
  GeneratorOptions options;
};

// Throws Error{kInvalidSpec}.
void validate(const Population& population);

nlohmann::json to_json(const Population& population);
// Throws Error{kInvalidSpec} on malformed input.
Population population_from_json(const nlohmann::json& j);

// Three personas over four countries, 600 households split by a seeded
// multinomial draw, redrawn until every persona is within 10% of an equal
// share. Windows and scene tables differ by persona.
Population default_population(std::uint64_t seed);

struct HouseholdTruth {
  std::string household;
  std::size_t persona_index = 0;
  std::string persona;
  Location location;
  std::map<Room, std::vector<Window>> windows;
  SceneTable scene_table;
};

// Hub ids h0001, h0002, ... in persona order.
std::vector<HouseholdTruth> plan_households(const Population& population, std::uint64_t seed);
nlohmann::json ground_truth_json(const std::vector<HouseholdTruth>& truth);

// Compact generated order.
struct SynthEvent {
  std::int64_t timestamp = 0;
  std::uint32_t household = 0;
  Room room = Room::kRoom1;
  std::uint8_t light = 0;  // 0 = background light, 1 + i = window i
  ingest::Action action = ingest::Action::kOn;
  std::int16_t scene = -1;

  auto operator<=>(const SynthEvent&) const = default;
};

// All orders of one household inside the range, sorted.
std::vector<SynthEvent> household_events(const Population& population,
                                         const HouseholdTruth& truth, std::uint32_t index,
                                         const DateRange& range, std::uint64_t seed);

std::string light_id(Room room, std::uint8_t light);
ingest::LightEvent to_light_event(const SynthEvent& e, const HouseholdTruth& truth);

// Writes NDJSON sorted by (timestamp, household, room, light, action).
// Returns the number of records.
std::size_t write_events(const Population& population, const std::vector<HouseholdTruth>& truth,
                         const DateRange& range, std::uint64_t seed, std::ostream& out);

struct SynthStates {
  std::map<ingest::EntityKey, ingest::StateSeries> states;
  std::map<std::string, ingest::GeoInfo> geo;
  std::size_t events = 0;
};

// Same result as writing the log and ingesting it, without the text detour.
SynthStates synthesize_states(const Population& population,
                              const std::vector<HouseholdTruth>& truth, const DateRange& range,
                              std::uint64_t seed, const ingest::ReconstructOptions& options = {});

}  // namespace lumirec::synth
