#pragma once

#include <string>
#include <utility>

#include "json.hpp"

#include "agf/network.hpp"

namespace agf {

using json = nlohmann::json;

// Field access that reports the dotted path of a missing or mistyped field
// through ConfigError.
const json& require_field(const json& object, const std::string& key, const std::string& context);
std::size_t require_size(const json& object, const std::string& key, const std::string& context);
double require_real(const json& object, const std::string& key, const std::string& context);

json to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const json& j, const std::string& context = "network");

json checkpoint_header_json(const NetworkSpec& spec, const CheckpointMeta& meta);
std::pair<NetworkSpec, CheckpointMeta> checkpoint_header_from_json(const json& j);

}  // namespace agf
