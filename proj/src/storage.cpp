#include "vd/storage.hpp"

#include "vd/csv.hpp"
#include "vd/error.hpp"
#include "vd/util.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace vd {

std::string_view uri_scheme(std::string_view uri) {
  auto pos = uri.find("://");
  if (pos == std::string_view::npos) return {};
  return uri.substr(0, pos);
}

std::string file_uri(const std::string& abs_path) { return "file://" + abs_path; }

namespace {

std::string_view uri_rest(std::string_view uri) {
  auto pos = uri.find("://");
  return pos == std::string_view::npos ? uri : uri.substr(pos + 3);
}

[[noreturn]] void unreadable(std::string_view uri, const std::string& why) {
  throw Error(ErrorCode::UnreadableSource, "cannot read '" + std::string(uri) + "': " + why,
              {{"uri", std::string(uri)}});
}

}  // namespace

// ---- file ------------------------------------------------------------------

std::vector<std::string> FileAdapter::list_ids(std::string_view uri) const {
  fs::path dir(std::string(uri_rest(uri)));
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) unreadable(uri, "not a directory");
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") {
      ids.push_back(entry.path().stem().string());
    }
  }
  if (ec) unreadable(uri, ec.message());
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::string FileAdapter::read_bytes(std::string_view uri, std::string_view object_id) const {
  fs::path p = fs::path(std::string(uri_rest(uri))) / (std::string(object_id) + ".csv");
  std::ifstream in(p, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::NotFound, "object '" + std::string(object_id) + "' not found in " + std::string(uri),
                {{"uri", std::string(uri)}, {"object_id", std::string(object_id)}});
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- memory ----------------------------------------------------------------

std::vector<std::string> MemoryAdapter::list_ids(std::string_view uri) const {
  std::lock_guard lock(mu_);
  auto it = fixtures_.find(uri_rest(uri));
  if (it == fixtures_.end()) unreadable(uri, "no such fixture");
  std::vector<std::string> ids;
  for (const auto& [id, _] : it->second) ids.push_back(id);
  return ids;
}

std::string MemoryAdapter::read_bytes(std::string_view uri, std::string_view object_id) const {
  std::lock_guard lock(mu_);
  auto it = fixtures_.find(uri_rest(uri));
  if (it == fixtures_.end()) unreadable(uri, "no such fixture");
  auto obj = it->second.find(std::string(object_id));
  if (obj == it->second.end()) {
    throw Error(ErrorCode::NotFound, "object '" + std::string(object_id) + "' not found in " + std::string(uri),
                {{"uri", std::string(uri)}, {"object_id", std::string(object_id)}});
  }
  return obj->second;
}

void MemoryAdapter::put_fixture(const std::string& name, std::map<std::string, std::string> objects) {
  std::lock_guard lock(mu_);
  fixtures_[name] = std::move(objects);
}

void MemoryAdapter::remove_fixture(const std::string& name) {
  std::lock_guard lock(mu_);
  fixtures_.erase(name);
}

// ---- dispatcher ------------------------------------------------------------

Storage::Storage() : file_(std::make_shared<FileAdapter>()), memory_(std::make_shared<MemoryAdapter>()) {}

const StorageAdapter& Storage::adapter_for(std::string_view uri) const {
  auto scheme = uri_scheme(uri);
  if (scheme == "file") return *file_;
  if (scheme == "mem") return *memory_;
  unreadable(uri, "unsupported URI scheme '" + std::string(scheme) + "'");
}

ObjectStat stat_bytes(std::string object_id, const std::string& bytes) {
  ObjectStat st;
  st.object_id = std::move(object_id);
  st.byte_size = bytes.size();
  st.fingerprint = fnv1a64(bytes);
  std::vector<csv::Record> records;
  try {
    records = csv::parse_records(bytes);
  } catch (const Error& e) {
    st.warnings.push_back(e.what());
    return st;
  }
  if (records.empty()) {
    st.warnings.push_back("missing header");
    return st;
  }
  std::vector<std::string> header;
  for (const auto& f : records.front()) header.push_back(f.text);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != header.size()) {
      st.warnings.push_back(Violation{Violation::Rule::RaggedRow, r - 1, {}}.describe());
      continue;
    }
    std::vector<std::string> cells;
    for (const auto& f : records[r]) cells.push_back(f.text);
    rows.push_back(std::move(cells));
  }
  st.row_count = static_cast<std::int64_t>(records.size() - 1);
  try {
    if (st.warnings.empty()) {
      st.schema = csv::parse_table(bytes).schema;
    } else {
      st.schema = infer_schema(header, rows);
    }
  } catch (const Error& e) {
    st.warnings.push_back(e.what());
  }
  return st;
}

std::vector<ObjectStat> Storage::list_objects(std::string_view uri) const {
  const auto& adapter = adapter_for(uri);
  std::vector<ObjectStat> out;
  for (const auto& id : adapter.list_ids(uri)) {
    out.push_back(stat_bytes(id, adapter.read_bytes(uri, id)));
  }
  return out;
}

ObjectStat Storage::stat_object(std::string_view uri, std::string_view object_id) const {
  const auto& adapter = adapter_for(uri);
  return stat_bytes(std::string(object_id), adapter.read_bytes(uri, object_id));
}

Table Storage::read_object(std::string_view uri, std::string_view object_id,
                           std::optional<std::uint64_t> expected_fingerprint) const {
  const auto& adapter = adapter_for(uri);
  std::string bytes = adapter.read_bytes(uri, object_id);
  if (expected_fingerprint && fnv1a64(bytes) != *expected_fingerprint) {
    throw Error(ErrorCode::SourceChanged,
                "source object '" + std::string(object_id) + "' in " + std::string(uri) +
                    " changed since registration",
                {{"uri", std::string(uri)}, {"object_id", std::string(object_id)}});
  }
  return csv::parse_table(bytes);
}

}  // namespace vd
