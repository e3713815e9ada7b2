#include "vd/cache.hpp"

#include "vd/csv.hpp"
#include "vd/error.hpp"
#include "vd/util.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace vd {

namespace {

constexpr std::string_view kMagic = "VDCACHE 1 ";

json schema_json(const Schema& s) {
  json cols = json::array();
  for (const auto& c : s.columns()) cols.push_back({c.name, type_name(c.type), c.nullable});
  return cols;
}

Schema schema_from(const json& cols) {
  std::vector<Column> out;
  for (const auto& c : cols) {
    auto t = parse_type_name(c.at(1).get<std::string>());
    if (!t) throw std::runtime_error("bad column type");
    out.push_back(Column{c.at(0).get<std::string>(), *t, c.at(2).get<bool>()});
  }
  return Schema(std::move(out));
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return {};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

[[noreturn]] void corrupt(const std::string& key, const std::string& why) {
  throw Error(ErrorCode::CacheCorrupt, "cache entry " + key + " is corrupt: " + why, {{"key", key}});
}

}  // namespace

json CacheStats::to_json() const {
  return {{"entries", entries}, {"bytes", bytes}, {"hits", hits}, {"misses", misses}, {"evictions", evictions}};
}

std::string encode_node(const NodeOutput& node) {
  json header = json::array();
  std::string payloads;
  for (const auto& slot : node.slots) {
    json objs = json::array();
    for (const auto& o : slot) {
      std::string csv = o.payload->schema.empty() ? std::string{} : csv::serialize(*o.payload);
      json j = {{"id", o.object_id},
                {"labels", o.labels},
                {"schema", schema_json(o.payload->schema)},
                {"rows", o.payload->row_count()},
                {"len", csv.size()}};
      if (o.source) {
        j["source"] = {o.source->dataset_id, o.source->input_position, o.source->object_id};
        if (o.source->offset) j["offset"] = *o.source->offset;
        if (o.source->length) j["length"] = *o.source->length;
      }
      objs.push_back(std::move(j));
      payloads += csv;
    }
    header.push_back(std::move(objs));
  }
  std::string body = header.dump() + "\n" + payloads;
  return std::string(kMagic) + to_hex(sha256(body)) + "\n" + body;
}

NodeOutput decode_node(const std::string& blob, const std::string& key) {
  if (blob.compare(0, kMagic.size(), kMagic) != 0 || blob.size() < kMagic.size() + 65) corrupt(key, "bad header");
  std::string digest = blob.substr(kMagic.size(), 64);
  std::string_view body(blob.data() + kMagic.size() + 65, blob.size() - kMagic.size() - 65);
  if (to_hex(sha256(body)) != digest) corrupt(key, "checksum mismatch");
  try {
    auto nl = body.find('\n');
    json header = json::parse(body.substr(0, nl));
    std::size_t pos = nl + 1;
    NodeOutput out;
    for (const auto& objs : header) {
      std::vector<DataObject> slot;
      for (const auto& j : objs) {
        DataObject o;
        o.object_id = j.at("id").get<std::string>();
        o.labels = j.at("labels").get<Labels>();
        if (j.contains("source")) {
          const auto& s = j["source"];
          SourceLink link{s.at(0).get<std::string>(), s.at(1).get<std::size_t>(), s.at(2).get<std::string>(),
                          std::nullopt, std::nullopt};
          if (j.contains("offset")) link.offset = j["offset"].get<std::int64_t>();
          if (j.contains("length")) link.length = j["length"].get<std::int64_t>();
          o.source = std::move(link);
        }
        Schema schema = schema_from(j.at("schema"));
        auto len = j.at("len").get<std::size_t>();
        if (pos + len > body.size()) corrupt(key, "truncated payload");
        Table t;
        if (schema.empty()) {
          t.rows.resize(j.at("rows").get<std::size_t>());
        } else {
          t = csv::parse_table_typed(body.substr(pos, len), schema);
        }
        pos += len;
        o.payload = std::make_shared<const Table>(std::move(t));
        slot.push_back(std::move(o));
      }
      out.slots.push_back(std::move(slot));
    }
    return out;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CacheCorrupt) throw;
    corrupt(key, e.what());
  } catch (const std::exception& e) {
    corrupt(key, e.what());
  }
}

Cache::Cache(std::optional<fs::path> data_dir, std::uint64_t budget_bytes)
    : dir_(std::move(data_dir)), budget_(budget_bytes) {
  if (dir_) {
    fs::create_directories(*dir_ / "cache");
    load();
  }
}

fs::path Cache::entry_path(const std::string& key) const {
  return *dir_ / "cache" / key.substr(0, 2) / (key + ".bin");
}

void Cache::log(const json& line) {
  if (!dir_) return;
  std::ofstream out(*dir_ / "cache" / "index.log", std::ios::app);
  out << line.dump() << '\n';
}

void Cache::load() {
  std::map<std::string, Slot> found;
  std::ifstream in(*dir_ / "cache" / "index.log");
  std::string line;
  while (std::getline(in, line)) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("op")) continue;  // torn tail
    const std::string op = j["op"], key = j.value("key", "");
    if (op == "put") {
      Slot s;
      s.info = CacheEntryInfo{key, j.value("bytes", std::uint64_t{0}), j.value("t", std::int64_t{0}),
                              j.value("t", std::int64_t{0}), 0};
      found[key] = s;
    } else if (op == "hit") {
      if (auto it = found.find(key); it != found.end()) {
        it->second.info.last_hit_at = j.value("t", std::int64_t{0});
        ++it->second.info.hit_count;
      }
    } else if (op == "drop") {
      found.erase(key);
    }
  }
  in.close();
  for (auto& [key, s] : found) {
    std::error_code ec;
    auto size = fs::file_size(entry_path(key), ec);
    if (ec) continue;
    s.info.byte_size = size;
    entries_[key] = s;
    bytes_ += size;
  }
  std::vector<std::pair<std::int64_t, std::string>> order;
  for (auto& [key, s] : entries_) order.push_back({s.info.last_hit_at, key});
  std::sort(order.begin(), order.end());
  for (auto& [_, key] : order) entries_[key].tick = ++tick_;

  // Compact the index to the surviving entries.
  std::ofstream out(*dir_ / "cache" / "index.log", std::ios::trunc);
  for (const auto& [_, key] : order) {
    const auto& info = entries_[key].info;
    out << json{{"op", "put"}, {"key", key}, {"bytes", info.byte_size}, {"t", info.created_at}}.dump() << '\n';
    for (std::uint64_t i = 0; i < info.hit_count; ++i) {
      out << json{{"op", "hit"}, {"key", key}, {"t", info.last_hit_at}}.dump() << '\n';
    }
  }
  evict_locked();
}

bool Cache::contains(const std::string& key) const {
  std::lock_guard lock(mu_);
  return entries_.count(key) > 0;
}

bool Cache::touch(const std::string& key) {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return false;
  it->second.info.last_hit_at = now_micros();
  ++it->second.info.hit_count;
  it->second.tick = ++tick_;
  ++counters_.hits;
  log({{"op", "hit"}, {"key", key}, {"t", it->second.info.last_hit_at}});
  return true;
}

void Cache::note_miss() {
  std::lock_guard lock(mu_);
  ++counters_.misses;
}

std::shared_ptr<const NodeOutput> Cache::get(const std::string& key, bool count) {
  std::string blob;
  {
    std::lock_guard lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) {
      if (count) ++counters_.misses;
      return nullptr;
    }
    if (count) {
      it->second.info.last_hit_at = now_micros();
      ++it->second.info.hit_count;
      it->second.tick = ++tick_;
      ++counters_.hits;
      log({{"op", "hit"}, {"key", key}, {"t", it->second.info.last_hit_at}});
    }
    ++it->second.pins;
    if (!dir_) blob = it->second.blob;
  }
  if (dir_) blob = read_file(entry_path(key));
  std::shared_ptr<const NodeOutput> out;
  try {
    out = std::make_shared<const NodeOutput>(decode_node(blob, key));
  } catch (...) {
    std::lock_guard lock(mu_);
    auto it = entries_.find(key);
    if (it != entries_.end()) {
      --it->second.pins;
      drop_locked(it);
    }
    throw;
  }
  std::lock_guard lock(mu_);
  if (auto it = entries_.find(key); it != entries_.end()) --it->second.pins;
  return out;
}

std::uint64_t Cache::put(const std::string& key, const NodeOutput& node) {
  std::string blob = encode_node(node);
  std::lock_guard lock(mu_);
  if (blob.size() > budget_ || entries_.count(key)) return 0;
  if (dir_) {
    fs::path p = entry_path(key);
    fs::create_directories(p.parent_path());
    fs::path tmp = p;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << blob;
      if (!out) throw Error(ErrorCode::Internal, "cannot write cache entry " + key);
    }
    fs::rename(tmp, p);
  }
  Slot s;
  s.info = CacheEntryInfo{key, blob.size(), now_micros(), now_micros(), 0};
  s.tick = ++tick_;
  if (!dir_) s.blob = std::move(blob);
  bytes_ += s.info.byte_size;
  log({{"op", "put"}, {"key", key}, {"bytes", s.info.byte_size}, {"t", s.info.created_at}});
  std::uint64_t written = s.info.byte_size;
  entries_[key] = std::move(s);
  evict_locked();
  return written;
}

void Cache::drop_locked(std::map<std::string, Slot>::iterator it) {
  bytes_ -= it->second.info.byte_size;
  if (dir_) {
    std::error_code ec;
    fs::remove(entry_path(it->first), ec);
  }
  log({{"op", "drop"}, {"key", it->first}});
  entries_.erase(it);
}

void Cache::evict_locked() {
  while (bytes_ > budget_) {
    auto victim = entries_.end();
    for (auto it = entries_.begin(); it != entries_.end(); ++it) {
      if (it->second.pins) continue;
      if (victim == entries_.end() || it->second.tick < victim->second.tick) victim = it;
    }
    if (victim == entries_.end()) break;  // everything left is pinned
    drop_locked(victim);
    ++counters_.evictions;
  }
}

void Cache::evict() {
  std::lock_guard lock(mu_);
  evict_locked();
}

void Cache::set_budget(std::uint64_t budget_bytes) {
  std::lock_guard lock(mu_);
  budget_ = budget_bytes;
  evict_locked();
}

std::uint64_t Cache::budget() const {
  std::lock_guard lock(mu_);
  return budget_;
}

void Cache::erase(const std::string& key) {
  std::lock_guard lock(mu_);
  if (auto it = entries_.find(key); it != entries_.end()) drop_locked(it);
}

void Cache::clear() {
  std::lock_guard lock(mu_);
  while (!entries_.empty()) drop_locked(entries_.begin());
}

CacheStats Cache::stats() const {
  std::lock_guard lock(mu_);
  CacheStats s = counters_;
  s.entries = entries_.size();
  s.bytes = bytes_;
  return s;
}

std::optional<CacheEntryInfo> Cache::info(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second.info;
}

}  // namespace vd
