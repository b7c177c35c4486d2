#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace hablab {

// Validates against the JSON-Schema keywords used by the shipped report schema:
// type, required, properties, additionalProperties (boolean), items, enum, minimum, maximum and local $ref.
// Returns one message per violation; empty means valid.
std::vector<std::string> validate_json(const nlohmann::json& instance, const nlohmann::json& schema);

// The report schema compiled into the library.
const nlohmann::json& report_schema();

}  // namespace hablab
