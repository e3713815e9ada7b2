#pragma once

#include "vd/cache.hpp"
#include "vd/catalog.hpp"
#include "vd/storage.hpp"
#include "vd/transforms.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace vd {

enum class NodeKind { Source, Transform };

struct PlanNode {
  NodeKind kind = NodeKind::Source;
  std::vector<std::string> dataset_ids;  // every dataset served by this node (siblings share one)
  std::optional<ssvd::TransformRef> transform;
  std::string cache_key;
  std::optional<std::int64_t> estimated_rows;
  /// (node index, output slot) per input position.
  std::vector<std::pair<std::size_t, std::size_t>> inputs;
  /// Record that defines the computation (source or first virtual output).
  std::shared_ptr<const DatasetRecord> record;
};

/// Deduplicated backward closure of one dataset; inputs precede dependents.
struct Plan {
  std::vector<PlanNode> nodes;
  std::string target;
  std::size_t target_node = 0;
  std::size_t target_slot = 0;

  std::size_t transform_nodes() const;
  nlohmann::json to_json() const;
};

struct RunStats {
  std::uint64_t nodes_total = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t transforms_executed = 0;
  std::uint64_t bytes_written = 0;

  nlohmann::json to_json() const;
};

struct MaterializeOptions {
  bool force_recompute = false;
};

struct MaterializedHandle {
  std::string dataset_id;
  std::vector<DataObject> objects;
  RunStats stats;

  const DataObject& object(const std::string& object_id) const;
};

struct EngineCounters {
  std::uint64_t materializations = 0;
  std::uint64_t transforms_executed = 0;
  std::uint64_t bytes_written = 0;
  std::uint64_t objects_opened = 0;
};

/// Resolves virtual datasets to plans and executes them through the cache.
class Engine {
 public:
  Engine(const Catalog& catalog, const Storage& storage, const TransformRegistry& registry, Cache& cache);

  /// Throws Error(NotFound) or Error(BrokenLineage).
  Plan resolve(const std::string& id) const;
  /// Content digest of a node: its computation, its inputs' digests and,
  /// transitively, the source fingerprints.
  static std::string cache_key(const PlanNode& node) { return node.cache_key; }

  MaterializedHandle materialize(const std::string& id, const MaterializeOptions& options = {});
  /// One object's payload, computing only the upstream objects it links to
  /// when the chain is object-level.
  Table open_object(const std::string& id, const std::string& object_id);
  /// Full object index with row counts and schemas taken from materialized payloads.
  ObjectIndex resolved_index(const std::string& id);

  CacheStats cache_stats() const { return cache_.stats(); }
  void evict() { cache_.evict(); }
  Cache& cache() { return cache_; }
  EngineCounters counters() const;

 private:
  using NodeResult = std::shared_ptr<const NodeOutput>;

  struct Run {
    const Plan* plan = nullptr;
    MaterializeOptions options;
    std::map<std::size_t, NodeResult> done;
    RunStats stats;
  };

  NodeResult evaluate(Run& run, std::size_t node);
  NodeResult compute(Run& run, std::size_t node);
  NodeResult read_source(const DatasetRecord& rec) const;
  std::vector<DataObject> finish(const DatasetRecord& rec, const NodeOutput& out, std::size_t slot) const;

  const Catalog& catalog_;
  const Storage& storage_;
  const TransformRegistry& registry_;
  Cache& cache_;

  std::mutex flight_mu_;
  std::map<std::string, std::shared_future<NodeResult>> in_flight_;

  mutable std::mutex counters_mu_;
  EngineCounters counters_;
};

}  // namespace vd
