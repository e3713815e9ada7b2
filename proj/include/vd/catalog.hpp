#pragma once

#include "vd/model.hpp"
#include "vd/ssvd.hpp"
#include "vd/storage.hpp"
#include "vd/transforms.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace vd {

enum class DatasetKind { Explicit, Virtual };
enum class RecordStatus { Active, Removed };
enum class RemoveMode { Restrict, Cascade };
enum class Direction { Backward, Forward };

std::string_view kind_name(DatasetKind k);

/// Catalog entry for one dataset and a node of the lineage graph. Records are
/// immutable once published; updates replace the whole record.
struct DatasetRecord {
  std::string id;
  DatasetKind kind = DatasetKind::Explicit;
  std::string name;
  RecordStatus status = RecordStatus::Active;
  std::int64_t created_at = 0;
  std::uint64_t seq = 0;
  std::string creator;
  nlohmann::json metadata = nlohmann::json::object();

  // explicit only
  std::string uri;
  std::string format;

  // virtual only
  std::optional<ssvd::VirtualDatasetSpec> spec;
  std::vector<std::string> input_ids;
  std::string node_digest;   // digest of the computation shared by sibling outputs
  nlohmann::json notes = nlohmann::json::object();
  bool stored_index = false;  // index came from materialized stats and is persisted verbatim

  /// Explicit: digest of the object fingerprints. Virtual: digest of this output slot.
  std::string content_digest;
  std::shared_ptr<const ObjectIndex> objects = std::make_shared<const ObjectIndex>();

  bool active() const { return status == RecordStatus::Active; }
  std::string transform_id() const { return spec ? spec->transform.id : std::string{}; }

  /// Summary without the object index.
  nlohmann::json to_json() const;
};

nlohmann::json object_entry_json(const ObjectEntry& e);

struct LineageEdge {
  std::string from;
  std::string to;
  std::string via;
  std::size_t input_position = 0;

  bool operator==(const LineageEdge&) const = default;
};

struct LineageGraph {
  std::vector<std::string> nodes;
  std::vector<LineageEdge> edges;

  nlohmann::json to_json() const;
};

struct SearchFilter {
  std::optional<std::string> name_substring;
  std::optional<std::pair<std::string, std::string>> label;
  std::optional<DatasetKind> kind;
  std::optional<std::string> transform_id;
  std::optional<std::string> creator;
};

/// Supplies a complete object index (row counts and schemas) for a dataset by
/// materializing it. Used when planning needs stats the catalog cannot derive.
using StatsResolver = std::function<ObjectIndex(const std::string& dataset_id)>;

std::string source_digest(const ObjectIndex& objects);
std::string node_digest_of(const ssvd::VirtualDatasetSpec& spec, const std::vector<std::string>& input_digests);
std::string slot_digest(const std::string& node_digest, std::size_t slot);

/// Registry of explicit and virtual datasets with their lineage. Writers are
/// serialized; readers see a consistent snapshot. With a directory, every
/// mutation is appended to `catalog/records.log` and periodically folded into
/// `catalog/snapshot.yaml`.
class Catalog : public ssvd::CatalogView {
 public:
  Catalog(const Storage& storage, const TransformRegistry& registry,
          std::optional<std::filesystem::path> data_dir = std::nullopt);

  std::string register_explicit(const std::string& uri, const std::string& format = "csv-dir",
                                const std::optional<std::filesystem::path>& labels_file = std::nullopt,
                                const nlohmann::json& metadata = nlohmann::json::object(),
                                const std::string& creator = {});

  std::string create_virtual(const ssvd::ValidatedSpec& validated, const std::string& creator = {},
                             const StatsResolver& resolver = {},
                             const std::optional<std::string>& requested_id = std::nullopt);

  std::vector<std::string> remove(const std::string& id, RemoveMode mode = RemoveMode::Restrict);

  /// Active records only; throws Error(NotFound).
  std::shared_ptr<const DatasetRecord> get(const std::string& id) const;
  /// Active or removed; nullptr when the id was never issued.
  std::shared_ptr<const DatasetRecord> find_any(const std::string& id) const;
  std::vector<std::shared_ptr<const DatasetRecord>> search(const SearchFilter& filter) const;
  std::vector<std::shared_ptr<const DatasetRecord>> all(bool include_removed = false) const;

  LineageGraph lineage(const std::string& id, Direction direction,
                       std::optional<std::size_t> depth = std::nullopt) const;

  std::optional<ssvd::ResolvedInput> resolve(const ssvd::DatasetRef& ref) const override;
  std::uint64_t generation() const override;

  /// Folds the log into a fresh snapshot.
  void write_snapshot();

  std::size_t snapshot_every = 256;

 private:
  using RecordPtr = std::shared_ptr<const DatasetRecord>;

  struct Planned {
    std::shared_ptr<const ObjectIndex> objects;
    nlohmann::json notes;
    bool stored_index = false;
  };
  Planned plan_record(const DatasetRecord& rec, const std::vector<RecordPtr>& inputs,
                      const StatsResolver& resolver) const;

  void publish(RecordPtr rec);  // caller holds the write lock
  void append_log(const DatasetRecord& rec);
  void write_snapshot_locked();
  void load();
  bool reaches(const std::string& from, const std::string& target) const;

  const Storage& storage_;
  const TransformRegistry& registry_;
  std::optional<std::filesystem::path> dir_;

  mutable std::shared_mutex mu_;
  std::map<std::string, RecordPtr> records_;
  std::map<std::string, std::vector<LineageEdge>> children_;
  std::uint64_t generation_ = 0;
  std::uint64_t next_seq_ = 1;
  std::size_t log_entries_ = 0;
};

nlohmann::json record_to_value(const DatasetRecord& rec);

}  // namespace vd
