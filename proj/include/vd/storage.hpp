#pragma once

#include "vd/model.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vd {

struct ObjectStat {
  std::string object_id;
  std::uint64_t byte_size = 0;
  std::int64_t row_count = 0;
  Schema schema;
  std::uint64_t fingerprint = 0;  // FNV-1a 64 of the object's bytes
  std::vector<std::string> warnings;
};

/// Read-only access to one URI scheme.
class StorageAdapter {
 public:
  virtual ~StorageAdapter() = default;
  virtual std::string_view scheme() const = 0;
  /// Object ids in lexicographic order. Throws Error(UnreadableSource).
  virtual std::vector<std::string> list_ids(std::string_view uri) const = 0;
  /// Raw bytes of one object. Throws Error(NotFound) or Error(UnreadableSource).
  virtual std::string read_bytes(std::string_view uri, std::string_view object_id) const = 0;
};

/// `file:///abs/dir`: every `*.csv` file directly inside the directory is an
/// object whose id is the filename stem.
class FileAdapter : public StorageAdapter {
 public:
  std::string_view scheme() const override { return "file"; }
  std::vector<std::string> list_ids(std::string_view uri) const override;
  std::string read_bytes(std::string_view uri, std::string_view object_id) const override;
};

/// `mem://fixture-name`: in-process fixtures, mostly for tests and demos.
class MemoryAdapter : public StorageAdapter {
 public:
  std::string_view scheme() const override { return "mem"; }
  std::vector<std::string> list_ids(std::string_view uri) const override;
  std::string read_bytes(std::string_view uri, std::string_view object_id) const override;

  void put_fixture(const std::string& name, std::map<std::string, std::string> objects);
  void remove_fixture(const std::string& name);

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::map<std::string, std::string>, std::less<>> fixtures_;
};

std::string_view uri_scheme(std::string_view uri);
std::string file_uri(const std::string& abs_path);

/// Dispatches by URI scheme. Adapters are stateless (the memory adapter guards
/// its fixture map), so a Storage may be shared across threads.
class Storage {
 public:
  Storage();

  MemoryAdapter& memory() { return *memory_; }

  std::vector<ObjectStat> list_objects(std::string_view uri) const;
  ObjectStat stat_object(std::string_view uri, std::string_view object_id) const;
  /// Throws Error(SourceChanged) when `expected_fingerprint` no longer matches
  /// the bytes, Error(ParseError) for malformed CSV.
  Table read_object(std::string_view uri, std::string_view object_id,
                    std::optional<std::uint64_t> expected_fingerprint = std::nullopt) const;

 private:
  const StorageAdapter& adapter_for(std::string_view uri) const;

  std::shared_ptr<FileAdapter> file_;
  std::shared_ptr<MemoryAdapter> memory_;
};

/// Stats for one object's bytes; ragged rows become warnings instead of errors.
ObjectStat stat_bytes(std::string object_id, const std::string& bytes);

}  // namespace vd
