#pragma once

#include "vd/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace vd {

/// Every output slot of one transform node, payloads included.
struct NodeOutput {
  std::vector<std::vector<DataObject>> slots;
};

struct CacheStats {
  std::uint64_t entries = 0;
  std::uint64_t bytes = 0;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t evictions = 0;

  nlohmann::json to_json() const;
};

struct CacheEntryInfo {
  std::string key;
  std::uint64_t byte_size = 0;
  std::int64_t created_at = 0;
  std::int64_t last_hit_at = 0;
  std::uint64_t hit_count = 0;
};

/// Encodes a node output as a self-checking blob (schemas explicit, payloads as CSV).
std::string encode_node(const NodeOutput& node);
/// Throws Error(CacheCorrupt) when the blob fails its checksum or does not parse.
NodeOutput decode_node(const std::string& blob, const std::string& key = {});

/// Content-addressed store of node outputs, LRU by last hit. With a directory,
/// entries live at `cache/<2 hex>/<key>.bin` and survive restarts through
/// `cache/index.log`; without one they are kept in memory.
class Cache {
 public:
  static constexpr std::uint64_t kDefaultBudget = 1ull << 30;

  explicit Cache(std::optional<std::filesystem::path> data_dir = std::nullopt,
                 std::uint64_t budget_bytes = kDefaultBudget);

  bool contains(const std::string& key) const;
  /// Marks a hit without loading the entry. Returns false if absent.
  bool touch(const std::string& key);
  /// Loads an entry; nullptr when absent. With `count`, records a hit or a miss.
  std::shared_ptr<const NodeOutput> get(const std::string& key, bool count = true);
  /// Stores an entry unless it cannot fit the budget; returns bytes written.
  std::uint64_t put(const std::string& key, const NodeOutput& node);
  void note_miss();

  /// Evicts least-recently-hit, unpinned entries until bytes <= budget.
  void evict();
  void set_budget(std::uint64_t budget_bytes);
  std::uint64_t budget() const;
  void erase(const std::string& key);
  void clear();

  CacheStats stats() const;
  std::optional<CacheEntryInfo> info(const std::string& key) const;
  std::filesystem::path entry_path(const std::string& key) const;

 private:
  struct Slot {
    CacheEntryInfo info;
    std::uint64_t tick = 0;  // recency order among equal timestamps
    std::size_t pins = 0;
    std::string blob;        // memory mode only
  };

  void log(const nlohmann::json& line);
  void load();
  void evict_locked();
  void drop_locked(std::map<std::string, Slot>::iterator it);

  std::optional<std::filesystem::path> dir_;
  std::uint64_t budget_;
  mutable std::mutex mu_;
  std::map<std::string, Slot> entries_;
  std::uint64_t bytes_ = 0;
  std::uint64_t tick_ = 0;
  CacheStats counters_;
};

}  // namespace vd
