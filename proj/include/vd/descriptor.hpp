#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace vd {

enum class ParamType { Int, Number, String, Bool, StringList, List, Any };

std::string_view param_type_name(ParamType t);
std::optional<ParamType> parse_param_type(std::string_view s);

struct ParamSpec {
  std::string key;
  ParamType type = ParamType::Any;
  bool required = false;
  std::optional<double> min;            // numeric lower bound, inclusive
  std::vector<std::string> choices;     // allowed string values (String or StringList items)
  std::string constraint;               // human-readable, shown in listings
};

enum class Granularity { DatasetLevel, ObjectLevel };

/// Registry entry for one transformation function: what it consumes, what it
/// produces, and how its parameters are checked.
struct TransformDescriptor {
  static constexpr std::size_t kVariadic = std::numeric_limits<std::size_t>::max();

  std::string transform_id;
  std::size_t min_inputs = 1;
  std::size_t max_inputs = 1;  // kVariadic for "two or more"
  std::size_t output_arity = 1;
  std::vector<ParamSpec> params;
  bool deterministic = true;
  bool seeded = false;
  Granularity granularity = Granularity::ObjectLevel;
  std::string summary;
  std::string exec;  // external plugins only

  bool accepts_inputs(std::size_t n) const { return n >= min_inputs && n <= max_inputs; }
  std::string arity_text() const;
  nlohmann::json to_json() const;
};

/// Generic schema check: unknown keys, missing required keys, types, bounds and
/// choices. Throws Error(ParamError) naming the offending key.
void check_param_schema(const TransformDescriptor& d, const nlohmann::json& params);

}  // namespace vd
