#pragma once

#include "vd/descriptor.hpp"
#include "vd/model.hpp"
#include "vd/ssvd.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vd {

struct TransformCall {
  nlohmann::json params = nlohmann::json::object();
  std::optional<std::uint64_t> seed;
};

/// One input dataset as seen by planning: its object index, possibly without
/// row counts or schemas.
struct PlanInput {
  std::string dataset_id;
  std::string name;
  const ObjectIndex* objects = nullptr;
};

/// Digests of the output slots; fresh object ids are derived from them so a
/// logical computation always produces the same ids.
struct PlanContext {
  std::vector<std::string> slot_digests;

  std::string mint(std::size_t slot, std::string_view key) const;
};

struct PlanResult {
  std::vector<ObjectIndex> slots;
  nlohmann::json notes = nlohmann::json::object();
};

/// One input dataset with payloads, as consumed by execution.
struct InputObjects {
  std::string dataset_id;
  std::string name;
  std::vector<DataObject> objects;
};

using ObjectFetcher =
    std::function<std::shared_ptr<const Table>(std::size_t input_position, const std::string& object_id)>;

/// A registered transformation. Planning computes the output object index
/// (ids, labels, source links and whatever stats are derivable) without
/// touching payloads; execution fills the payloads in plan order.
class Transform {
 public:
  virtual ~Transform() = default;

  virtual const TransformDescriptor& descriptor() const = 0;
  /// Parameter schema plus transform-specific rules. Throws Error(ParamError).
  virtual void check_call(const TransformCall& call) const;
  /// Whether each output object depends on exactly one input object group.
  virtual bool object_level(const TransformCall&) const {
    return descriptor().granularity == Granularity::ObjectLevel;
  }
  /// Throws Error(StatsUnavailable) when the inputs' indexes lack the row
  /// counts or schemas this transform needs to plan.
  virtual PlanResult plan(std::span<const PlanInput> inputs, const TransformCall& call,
                          const PlanContext& ctx) const = 0;
  /// Payload of a single planned output object. Object-level transforms only.
  virtual Table compute_object(const ObjectEntry& entry, const TransformCall& call, const nlohmann::json& notes,
                               const ObjectFetcher& fetch) const;
  /// Payloads for every planned object, per slot in plan order. The default
  /// loops compute_object over the plan.
  virtual std::vector<std::vector<Table>> compute_all(std::span<const InputObjects> inputs,
                                                      const TransformCall& call, const PlanResult& plan) const;
};

/// Builds a payload-derived object index (ids, labels, row counts, schemas).
ObjectIndex index_of(const std::vector<DataObject>& objects);

struct ExecutionResult {
  PlanResult plan;
  std::vector<std::vector<DataObject>> slots;
};

/// Plans against the payloads' own stats, then computes every slot.
ExecutionResult execute(const Transform& t, std::span<const InputObjects> inputs, const TransformCall& call,
                        const PlanContext& ctx);

struct ExternalOptions {
  std::chrono::milliseconds timeout{300'000};
  std::size_t max_processes = 4;
  std::vector<std::string> env_allowlist{"PATH", "HOME", "LANG", "LC_ALL", "TMPDIR"};
};

class TransformRegistry : public ssvd::RegistryView {
 public:
  /// Starts with the built-ins registered.
  explicit TransformRegistry(ExternalOptions external = {});

  /// Throws Error(DuplicateTransform).
  void add(std::shared_ptr<const Transform> t);
  /// Registers one plugin from a `transforms.d/<id>.yaml` file.
  void add_plugin_file(const std::filesystem::path& file);
  /// Loads every `*.yaml` under `dir`; returns how many were registered.
  std::size_t load_plugins(const std::filesystem::path& dir);

  /// Throws Error(UnknownTransform).
  std::shared_ptr<const Transform> get(std::string_view id) const;
  std::vector<TransformDescriptor> list() const;

  std::optional<TransformDescriptor> find(std::string_view id) const override;
  void check_call(std::string_view id, const nlohmann::json& params,
                  std::optional<std::uint64_t> seed) const override;

  const ExternalOptions& external_options() const { return external_; }

 private:
  ExternalOptions external_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<const Transform>, std::less<>> transforms_;
};

std::vector<std::shared_ptr<const Transform>> builtin_transforms();

// Partition slot sizes: floor(a*N/100), floor(b*N/100), and the remainder.
std::array<std::size_t, 3> partition_sizes(std::size_t n, std::int64_t a, std::int64_t b, std::int64_t c);

/// Seeded Fisher-Yates over the ids sorted lexicographically.
std::vector<std::string> seeded_shuffle(std::vector<std::string> ids, std::uint64_t seed);

}  // namespace vd
