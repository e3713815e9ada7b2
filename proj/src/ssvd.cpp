#include "vd/ssvd.hpp"

#include "vd/error.hpp"
#include "vd/yaml_value.hpp"

#include <regex>
#include <set>

namespace vd::ssvd {

namespace {

[[noreturn]] void type_error(const std::string& path, const std::string& expected) {
  throw Error(ErrorCode::SyntaxError, "field '" + path + "' must be " + expected, {{"path", path}});
}

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& prefix) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
      throw Error(ErrorCode::UnknownField, "unknown field '" + path + "'", {{"path", path}});
    }
  }
}

const json& require(const json& obj, const std::string& key, const std::string& prefix) {
  std::string path = prefix.empty() ? key : prefix + "." + key;
  if (!obj.contains(key) || obj.at(key).is_null()) {
    throw Error(ErrorCode::MissingField, "missing field '" + path + "'", {{"path", path}});
  }
  return obj.at(key);
}

std::string as_string(const json& v, const std::string& path) {
  if (v.is_string()) return v.get<std::string>();
  // Plain scalars like `name: 2024` are still names.
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  type_error(path, "a string");
}

void check_version(const std::string& v) {
  static const std::regex kVersion(R"(ssvd/([0-9]+)(\.[0-9]+)?)");
  std::smatch m;
  if (!std::regex_match(v, m, kVersion) || m[1].str() != "1") {
    throw Error(ErrorCode::BadVersion, "unsupported spec_version '" + v + "'", {{"got", v}});
  }
}

}  // namespace

VirtualDatasetSpec from_value(const json& doc) {
  if (!doc.is_object()) type_error("<root>", "a mapping");
  reject_unknown(doc, {"spec_version", "name", "description", "inputs", "transform", "outputs", "output_index",
                       "metadata"},
                 "");
  VirtualDatasetSpec spec;
  spec.spec_version = as_string(require(doc, "spec_version", ""), "spec_version");
  check_version(spec.spec_version);
  spec.name = as_string(require(doc, "name", ""), "name");
  if (doc.contains("description") && !doc["description"].is_null()) {
    spec.description = as_string(doc["description"], "description");
  }

  const json& inputs = require(doc, "inputs", "");
  if (!inputs.is_array()) type_error("inputs", "a sequence");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::string prefix = "inputs[" + std::to_string(i) + "]";
    const json& item = inputs[i];
    if (!item.is_object()) type_error(prefix, "a mapping with key 'dataset'");
    reject_unknown(item, {"dataset"}, prefix);
    spec.inputs.push_back(DatasetRef{as_string(require(item, "dataset", prefix), prefix + ".dataset")});
  }
  if (spec.inputs.empty()) {
    throw Error(ErrorCode::MissingField, "inputs must list at least one dataset", {{"path", "inputs"}});
  }

  const json& transform = require(doc, "transform", "");
  if (!transform.is_object()) type_error("transform", "a mapping");
  reject_unknown(transform, {"id", "params", "seed"}, "transform");
  spec.transform.id = as_string(require(transform, "id", "transform"), "transform.id");
  if (transform.contains("params") && !transform["params"].is_null()) {
    if (!transform["params"].is_object()) type_error("transform.params", "a mapping");
    spec.transform.params = transform["params"];
  }
  if (transform.contains("seed") && !transform["seed"].is_null()) {
    const json& s = transform["seed"];
    if (s.is_number_unsigned()) {
      spec.transform.seed = s.get<std::uint64_t>();
    } else if (s.is_number_integer() && s.get<std::int64_t>() >= 0) {
      spec.transform.seed = static_cast<std::uint64_t>(s.get<std::int64_t>());
    } else {
      type_error("transform.seed", "a non-negative integer");
    }
  }

  if (doc.contains("outputs") && !doc["outputs"].is_null()) {
    const json& outs = doc["outputs"];
    if (!outs.is_array() || outs.empty()) type_error("outputs", "a non-empty sequence of slot names");
    spec.outputs.clear();
    for (std::size_t i = 0; i < outs.size(); ++i) {
      spec.outputs.push_back(as_string(outs[i], "outputs[" + std::to_string(i) + "]"));
    }
  }
  if (doc.contains("output_index") && !doc["output_index"].is_null()) {
    const json& oi = doc["output_index"];
    if (!(oi.is_number_integer() || oi.is_number_unsigned()) || oi.get<std::int64_t>() < 0) {
      type_error("output_index", "a non-negative integer");
    }
    spec.output_index = oi.get<std::size_t>();
  }
  if (spec.output_index >= spec.outputs.size()) {
    throw Error(ErrorCode::SyntaxError,
                "output_index " + std::to_string(spec.output_index) + " is outside outputs (" +
                    std::to_string(spec.outputs.size()) + " slots)",
                {{"path", "output_index"}});
  }
  if (doc.contains("metadata") && !doc["metadata"].is_null()) {
    if (!doc["metadata"].is_object()) type_error("metadata", "a mapping");
    spec.metadata = doc["metadata"];
  }
  return spec;
}

VirtualDatasetSpec parse_spec(std::string_view text) { return from_value(yaml::parse(text)); }

json to_value(const VirtualDatasetSpec& spec) {
  json doc = json::object();
  doc["spec_version"] = spec.spec_version;
  doc["name"] = spec.name;
  if (!spec.description.empty()) doc["description"] = spec.description;
  json inputs = json::array();
  for (const auto& in : spec.inputs) inputs.push_back({{"dataset", in.target}});
  doc["inputs"] = std::move(inputs);
  json t = {{"id", spec.transform.id}, {"params", spec.transform.params}};
  if (spec.transform.seed) t["seed"] = *spec.transform.seed;
  doc["transform"] = std::move(t);
  doc["outputs"] = spec.outputs;
  doc["output_index"] = spec.output_index;
  doc["metadata"] = spec.metadata;
  return doc;
}

std::string canonical_serialize(const VirtualDatasetSpec& spec) { return yaml::emit_canonical(to_value(spec)); }

std::string computation_text(const VirtualDatasetSpec& spec) {
  json t = {{"id", spec.transform.id}, {"params", spec.transform.params}};
  if (spec.transform.seed) t["seed"] = *spec.transform.seed;
  return yaml::emit_canonical(json{{"transform", t}, {"outputs", spec.outputs}});
}

ValidatedSpec validate_spec(const VirtualDatasetSpec& spec, const RegistryView& registry,
                            const CatalogView& catalog) {
  ValidatedSpec out;
  out.generation = catalog.generation();
  for (const auto& ref : spec.inputs) {
    auto resolved = catalog.resolve(ref);
    if (!resolved) {
      throw Error(ErrorCode::UnknownDataset, "unknown dataset '" + ref.target + "'", {{"ref", ref.target}});
    }
    out.inputs.push_back(std::move(*resolved));
  }
  auto descriptor = registry.find(spec.transform.id);
  if (!descriptor) {
    throw Error(ErrorCode::UnknownTransform, "unknown transform '" + spec.transform.id + "'",
                {{"id", spec.transform.id}});
  }
  if (!descriptor->accepts_inputs(spec.inputs.size())) {
    throw Error(ErrorCode::ArityMismatch,
                spec.transform.id + " takes " + descriptor->arity_text() + " inputs, got " +
                    std::to_string(spec.inputs.size()),
                {{"expected", descriptor->arity_text()}, {"got", spec.inputs.size()}, {"what", "inputs"}});
  }
  if (spec.outputs.size() != descriptor->output_arity) {
    throw Error(ErrorCode::ArityMismatch,
                spec.transform.id + " produces " + std::to_string(descriptor->output_arity) +
                    " outputs, spec declares " + std::to_string(spec.outputs.size()),
                {{"expected", descriptor->output_arity}, {"got", spec.outputs.size()}, {"what", "outputs"}});
  }
  registry.check_call(spec.transform.id, spec.transform.params, spec.transform.seed);
  out.spec = spec;
  out.descriptor = std::move(*descriptor);
  return out;
}

}  // namespace vd::ssvd
