#pragma once

#include "json.hpp"
#include "lumirec/models.hpp"

namespace lumirec::models {

inline constexpr int kModelFormatVersion = 1;

nlohmann::json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);

// {format_version, family, params, class_count, feature_names, <body>, encoders}
nlohmann::json model_to_json(const TrainedModel& model,
                             const nlohmann::json& encoders = nlohmann::json::object());
// Throws Error{kInvalidArgument} on unknown versions or malformed bodies.
TrainedModel model_from_json(const nlohmann::json& j);

}  // namespace lumirec::models
