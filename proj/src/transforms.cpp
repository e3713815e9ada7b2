#include "vd/transforms.hpp"

#include "vd/error.hpp"
#include "vd/external.hpp"
#include "vd/util.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

namespace vd {

// ---- descriptor ------------------------------------------------------------

std::string_view param_type_name(ParamType t) {
  switch (t) {
    case ParamType::Int: return "int";
    case ParamType::Number: return "number";
    case ParamType::String: return "string";
    case ParamType::Bool: return "bool";
    case ParamType::StringList: return "string_list";
    case ParamType::List: return "list";
    case ParamType::Any: return "any";
  }
  return "any";
}

std::optional<ParamType> parse_param_type(std::string_view s) {
  for (auto t : {ParamType::Int, ParamType::Number, ParamType::String, ParamType::Bool, ParamType::StringList,
                 ParamType::List, ParamType::Any}) {
    if (param_type_name(t) == s) return t;
  }
  return std::nullopt;
}

std::string TransformDescriptor::arity_text() const {
  if (max_inputs == kVariadic) return "variadic>=" + std::to_string(min_inputs);
  if (min_inputs == max_inputs) return std::to_string(min_inputs);
  return std::to_string(min_inputs) + ".." + std::to_string(max_inputs);
}

nlohmann::json TransformDescriptor::to_json() const {
  nlohmann::json params_json = nlohmann::json::array();
  for (const auto& p : params) {
    nlohmann::json pj = {{"key", p.key}, {"type", param_type_name(p.type)}, {"required", p.required}};
    if (!p.constraint.empty()) pj["constraint"] = p.constraint;
    if (!p.choices.empty()) pj["choices"] = p.choices;
    params_json.push_back(std::move(pj));
  }
  nlohmann::json j = {{"transform_id", transform_id},
                      {"input_arity", arity_text()},
                      {"output_arity", output_arity},
                      {"params", std::move(params_json)},
                      {"deterministic", deterministic},
                      {"seeded", seeded},
                      {"granularity", granularity == Granularity::ObjectLevel ? "object-level" : "dataset-level"},
                      {"summary", summary}};
  if (!exec.empty()) j["exec"] = exec;
  return j;
}

namespace {

[[noreturn]] void param_error(const std::string& key, const std::string& reason) {
  throw Error(ErrorCode::ParamError, "parameter '" + key + "' " + reason, {{"key", key}, {"reason", reason}});
}

bool type_ok(const nlohmann::json& v, ParamType t) {
  switch (t) {
    case ParamType::Int: return v.is_number_integer();
    case ParamType::Number: return v.is_number();
    case ParamType::String: return v.is_string();
    case ParamType::Bool: return v.is_boolean();
    case ParamType::StringList:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const auto& x) { return x.is_string(); });
    case ParamType::List: return v.is_array();
    case ParamType::Any: return true;
  }
  return false;
}

}  // namespace

void check_param_schema(const TransformDescriptor& d, const nlohmann::json& params) {
  if (!params.is_object()) param_error("params", "must be a mapping");
  for (auto it = params.begin(); it != params.end(); ++it) {
    bool known = std::any_of(d.params.begin(), d.params.end(), [&](const ParamSpec& p) { return p.key == it.key(); });
    if (!known) param_error(it.key(), "is not a parameter of " + d.transform_id);
  }
  for (const auto& p : d.params) {
    if (!params.contains(p.key) || params[p.key].is_null()) {
      if (p.required) param_error(p.key, "is required");
      continue;
    }
    const auto& v = params[p.key];
    if (!type_ok(v, p.type)) param_error(p.key, "must be of type " + std::string(param_type_name(p.type)));
    if (p.min && v.is_number() && v.get<double>() < *p.min) {
      param_error(p.key, p.constraint.empty() ? "is below its minimum" : p.constraint);
    }
    if (!p.choices.empty()) {
      auto allowed = [&](const nlohmann::json& x) {
        return x.is_string() && std::find(p.choices.begin(), p.choices.end(), x.get<std::string>()) != p.choices.end();
      };
      bool ok = v.is_array() ? std::all_of(v.begin(), v.end(), allowed) : allowed(v);
      if (!ok) param_error(p.key, "must be one of the allowed values");
    }
  }
}

// ---- transform base --------------------------------------------------------

std::string PlanContext::mint(std::size_t slot, std::string_view key) const {
  return derived_id128(slot < slot_digests.size() ? slot_digests[slot] : std::string_view{}, key);
}

void Transform::check_call(const TransformCall& call) const { check_param_schema(descriptor(), call.params); }

Table Transform::compute_object(const ObjectEntry&, const TransformCall&, const nlohmann::json&,
                                const ObjectFetcher&) const {
  throw Error(ErrorCode::Internal, descriptor().transform_id + " does not compute single objects");
}

std::vector<std::vector<Table>> Transform::compute_all(std::span<const InputObjects> inputs,
                                                       const TransformCall& call, const PlanResult& plan) const {
  std::vector<std::unordered_map<std::string, std::shared_ptr<const Table>>> by_id(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (const auto& o : inputs[i].objects) by_id[i][o.object_id] = o.payload;
  }
  ObjectFetcher fetch = [&](std::size_t pos, const std::string& id) -> std::shared_ptr<const Table> {
    if (pos >= by_id.size()) throw Error(ErrorCode::Internal, "input position out of range");
    auto it = by_id[pos].find(id);
    if (it == by_id[pos].end() || !it->second) {
      throw Error(ErrorCode::NotFound, "input object '" + id + "' not available", {{"object_id", id}});
    }
    return it->second;
  };
  std::vector<std::vector<Table>> out(plan.slots.size());
  for (std::size_t s = 0; s < plan.slots.size(); ++s) {
    out[s].reserve(plan.slots[s].size());
    for (const auto& entry : plan.slots[s]) out[s].push_back(compute_object(entry, call, plan.notes, fetch));
  }
  return out;
}

ObjectIndex index_of(const std::vector<DataObject>& objects) {
  ObjectIndex idx;
  idx.reserve(objects.size());
  for (const auto& o : objects) {
    ObjectEntry e;
    e.object_id = o.object_id;
    e.labels = o.labels;
    e.source = o.source;
    if (o.payload) {
      e.row_count = static_cast<std::int64_t>(o.payload->row_count());
      e.schema = std::make_shared<const Schema>(o.payload->schema);
    }
    idx.push_back(std::move(e));
  }
  return idx;
}

ExecutionResult execute(const Transform& t, std::span<const InputObjects> inputs, const TransformCall& call,
                        const PlanContext& ctx) {
  std::vector<ObjectIndex> indexes;
  indexes.reserve(inputs.size());
  for (const auto& in : inputs) indexes.push_back(index_of(in.objects));
  std::vector<PlanInput> plan_inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    plan_inputs.push_back(PlanInput{inputs[i].dataset_id, inputs[i].name, &indexes[i]});
  }
  ExecutionResult result;
  result.plan = t.plan(plan_inputs, call, ctx);
  for (auto& slot : result.plan.slots) {
    for (auto& e : slot) {
      if (e.source && e.source->input_position < inputs.size()) {
        e.source->dataset_id = inputs[e.source->input_position].dataset_id;
      }
    }
  }
  auto tables = t.compute_all(inputs, call, result.plan);
  result.slots.resize(result.plan.slots.size());
  for (std::size_t s = 0; s < result.plan.slots.size(); ++s) {
    const auto& entries = result.plan.slots[s];
    if (tables.size() <= s || tables[s].size() != entries.size()) {
      throw Error(ErrorCode::Internal, t.descriptor().transform_id + " produced a different object count than planned");
    }
    for (std::size_t k = 0; k < entries.size(); ++k) {
      DataObject o;
      o.object_id = entries[k].object_id;
      o.labels = entries[k].labels;
      o.source = entries[k].source;
      o.payload = std::make_shared<const Table>(std::move(tables[s][k]));
      result.slots[s].push_back(std::move(o));
    }
  }
  return result;
}

// ---- partition helpers -----------------------------------------------------

std::array<std::size_t, 3> partition_sizes(std::size_t n, std::int64_t a, std::int64_t b, std::int64_t) {
  std::size_t trn = static_cast<std::size_t>(a) * n / 100;
  std::size_t vld = static_cast<std::size_t>(b) * n / 100;
  return {trn, vld, n - trn - vld};
}

std::vector<std::string> seeded_shuffle(std::vector<std::string> ids, std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  Xoshiro256 rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(ids[i - 1], ids[j]);
  }
  return ids;
}

// ---- registry --------------------------------------------------------------

TransformRegistry::TransformRegistry(ExternalOptions external) : external_(std::move(external)) {
  for (auto& t : builtin_transforms()) add(std::move(t));
}

void TransformRegistry::add(std::shared_ptr<const Transform> t) {
  std::lock_guard lock(mu_);
  const std::string& id = t->descriptor().transform_id;
  if (transforms_.count(id)) {
    throw Error(ErrorCode::DuplicateTransform, "transform '" + id + "' is already registered", {{"id", id}});
  }
  transforms_.emplace(id, std::move(t));
}

void TransformRegistry::add_plugin_file(const std::filesystem::path& file) {
  add(load_external_transform(file, external_));
}

std::size_t TransformRegistry::load_plugins(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) return 0;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".yaml") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) add_plugin_file(f);
  return files.size();
}

std::shared_ptr<const Transform> TransformRegistry::get(std::string_view id) const {
  std::lock_guard lock(mu_);
  auto it = transforms_.find(id);
  if (it == transforms_.end()) {
    throw Error(ErrorCode::UnknownTransform, "unknown transform '" + std::string(id) + "'", {{"id", std::string(id)}});
  }
  return it->second;
}

std::vector<TransformDescriptor> TransformRegistry::list() const {
  std::lock_guard lock(mu_);
  std::vector<TransformDescriptor> out;
  for (const auto& [_, t] : transforms_) out.push_back(t->descriptor());
  return out;
}

std::optional<TransformDescriptor> TransformRegistry::find(std::string_view id) const {
  std::lock_guard lock(mu_);
  auto it = transforms_.find(id);
  if (it == transforms_.end()) return std::nullopt;
  return it->second->descriptor();
}

void TransformRegistry::check_call(std::string_view id, const nlohmann::json& params,
                                  std::optional<std::uint64_t> seed) const {
  get(id)->check_call(TransformCall{params, seed});
}

}  // namespace vd
