#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <string_view>

namespace YAML {
class Node;
}

namespace vd::yaml {

using nlohmann::json;

/// Converts a parsed YAML node to a value tree. Plain scalars are resolved to
/// null/bool/int/float following the YAML 1.2 core schema; quoted scalars are
/// always strings.
json to_value(const YAML::Node& node);

/// Parses one YAML document. Throws Error(SyntaxError) with line/col details.
json parse(std::string_view text);

/// Deterministic block-style YAML: map keys sorted bytewise, sequences kept in
/// order, strings always double-quoted, floats in shortest round-trip form.
std::string emit_canonical(const json& value);

}  // namespace vd::yaml
