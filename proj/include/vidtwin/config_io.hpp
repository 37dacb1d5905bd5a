#pragma once

#include "json.hpp"
#include "vidtwin/config.hpp"

namespace vidtwin {

using json = nlohmann::json;

void to_json(json& j, const ClipGeometry& g);
void from_json(const json& j, ClipGeometry& g);
void to_json(json& j, const BackboneConfig& c);
void from_json(const json& j, BackboneConfig& c);
void to_json(json& j, const StructureConfig& c);
void from_json(const json& j, StructureConfig& c);
void to_json(json& j, const DynamicsConfig& c);
void from_json(const json& j, DynamicsConfig& c);
void to_json(json& j, const SingleLatentConfig& c);
void from_json(const json& j, SingleLatentConfig& c);
void to_json(json& j, const ModelConfig& c);
void from_json(const json& j, ModelConfig& c);

}  // namespace vidtwin
