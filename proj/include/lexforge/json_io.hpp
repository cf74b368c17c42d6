#pragma once

#include "lexforge/model.hpp"
#include "lexforge/training.hpp"

#include <json.hpp>

namespace lexforge {

void to_json(nlohmann::json& j, const TransformerConfig& c);
void from_json(const nlohmann::json& j, TransformerConfig& c);
void to_json(nlohmann::json& j, const LoraConfig& c);
void from_json(const nlohmann::json& j, LoraConfig& c);
// Missing keys keep the stage defaults of `c.stage`; callers set the stage first.
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

}  // namespace lexforge
