#pragma once

#include <json.hpp>

#include "rwl/agents/agents.hpp"

namespace rwl::agents {

nlohmann::json to_json(const AgentConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
AgentConfig config_from_json(const nlohmann::json& j);

}  // namespace rwl::agents
