#pragma once

#include "vd/descriptor.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Specification standard for virtual datasets: a YAML document naming the
// ordered input datasets and the transformation that derives this dataset.
namespace vd::ssvd {

using nlohmann::json;

inline constexpr std::string_view kSpecVersion = "ssvd/1";

/// Link to a predecessor dataset, either by catalog id or by storage URI.
struct DatasetRef {
  std::string target;

  bool is_uri() const { return target.find("://") != std::string::npos; }
  bool operator==(const DatasetRef&) const = default;
};

/// Link to a registered transformation and the arguments it is called with.
struct TransformRef {
  std::string id;
  json params = json::object();
  std::optional<std::uint64_t> seed;

  bool operator==(const TransformRef&) const = default;
};

struct VirtualDatasetSpec {
  std::string spec_version{kSpecVersion};
  std::string name;
  std::string description;
  std::vector<DatasetRef> inputs;
  TransformRef transform;
  std::vector<std::string> outputs{"out"};
  std::size_t output_index = 0;
  json metadata = json::object();

  bool operator==(const VirtualDatasetSpec&) const = default;
};

/// Throws Error with SyntaxError / MissingField / UnknownField / BadVersion.
VirtualDatasetSpec parse_spec(std::string_view text);
VirtualDatasetSpec from_value(const json& doc);
json to_value(const VirtualDatasetSpec& spec);

std::string canonical_serialize(const VirtualDatasetSpec& spec);

/// Canonical text of the computation alone (transform call and output slots).
/// Sibling specs of a multi-output transform share this text.
std::string computation_text(const VirtualDatasetSpec& spec);

// ---- validation ------------------------------------------------------------

struct ResolvedInput {
  std::string dataset_id;
  std::string name;
  bool is_virtual = false;

  bool operator==(const ResolvedInput&) const = default;
};

class CatalogView {
 public:
  virtual ~CatalogView() = default;
  virtual std::optional<ResolvedInput> resolve(const DatasetRef& ref) const = 0;
  virtual std::uint64_t generation() const = 0;
};

class RegistryView {
 public:
  virtual ~RegistryView() = default;
  virtual std::optional<TransformDescriptor> find(std::string_view id) const = 0;
  /// Schema plus transform-specific rules; throws Error(ParamError).
  virtual void check_call(std::string_view id, const json& params, std::optional<std::uint64_t> seed) const = 0;
};

struct ValidatedSpec {
  VirtualDatasetSpec spec;
  std::vector<ResolvedInput> inputs;
  TransformDescriptor descriptor;
  std::uint64_t generation = 0;
};

/// Throws Error with UnknownDataset / UnknownTransform / ParamError / ArityMismatch.
ValidatedSpec validate_spec(const VirtualDatasetSpec& spec, const RegistryView& registry, const CatalogView& catalog);

}  // namespace vd::ssvd
