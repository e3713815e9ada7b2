#pragma once

#include "vd/cache.hpp"
#include "vd/catalog.hpp"
#include "vd/engine.hpp"
#include "vd/ssvd.hpp"
#include "vd/storage.hpp"
#include "vd/transforms.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace vd {

struct WorkspaceOptions {
  /// Holds `catalog/`, `cache/` and `transforms.d/`. Without it everything is in memory.
  std::optional<std::filesystem::path> data_dir;
  std::uint64_t cache_budget = Cache::kDefaultBudget;
  ExternalOptions external;
};

/// The library surface: storage, transform registry, catalog and engine wired
/// together. Everything the HTTP service does goes through here.
class Workspace {
 public:
  explicit Workspace(WorkspaceOptions options = {});

  Storage& storage() { return *storage_; }
  TransformRegistry& registry() { return *registry_; }
  Catalog& catalog() { return *catalog_; }
  Engine& engine() { return *engine_; }
  Cache& cache() { return *cache_; }
  const WorkspaceOptions& options() const { return options_; }

  std::string register_explicit(const std::string& uri, const std::string& format = "csv-dir",
                                const std::optional<std::filesystem::path>& labels_file = std::nullopt,
                                const nlohmann::json& metadata = nlohmann::json::object(),
                                const std::string& creator = {});

  /// Validates against the current catalog and creates, retrying when a
  /// concurrent write made the validation stale.
  std::string create_virtual(const ssvd::VirtualDatasetSpec& spec, const std::string& creator = {},
                             const std::optional<std::string>& requested_id = std::nullopt);
  /// Parses an SSVD document first.
  std::string create_virtual_text(std::string_view yaml_text, const std::string& creator = {});

  std::vector<std::string> remove(const std::string& id, RemoveMode mode = RemoveMode::Restrict);
  std::shared_ptr<const DatasetRecord> get(const std::string& id) const { return catalog_->get(id); }
  LineageGraph lineage(const std::string& id, Direction d, std::optional<std::size_t> depth = std::nullopt) const {
    return catalog_->lineage(id, d, depth);
  }
  MaterializedHandle materialize(const std::string& id, const MaterializeOptions& o = {}) {
    return engine_->materialize(id, o);
  }
  Table open_object(const std::string& id, const std::string& object_id) {
    return engine_->open_object(id, object_id);
  }

 private:
  WorkspaceOptions options_;
  std::unique_ptr<Storage> storage_;
  std::unique_ptr<TransformRegistry> registry_;
  std::unique_ptr<Catalog> catalog_;
  std::unique_ptr<Cache> cache_;
  std::unique_ptr<Engine> engine_;
};

}  // namespace vd
