#include "vd/catalog.hpp"

#include "vd/csv.hpp"
#include "vd/error.hpp"
#include "vd/util.hpp"
#include "vd/yaml_value.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace vd {

std::string_view kind_name(DatasetKind k) { return k == DatasetKind::Explicit ? "explicit" : "virtual"; }

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) { return std::stoull(s, nullptr, 16); }

json schema_value(const Schema& s) {
  json cols = json::array();
  for (const auto& c : s.columns()) {
    cols.push_back(c.name + ":" + std::string(type_name(c.type)) + (c.nullable ? "?" : ""));
  }
  return cols;
}

std::shared_ptr<const Schema> schema_from_value(const json& v) {
  std::vector<Column> cols;
  for (const auto& item : v) {
    std::string text = item.get<std::string>();
    Column c;
    if (!text.empty() && text.back() == '?') {
      c.nullable = true;
      text.pop_back();
    }
    auto colon = text.rfind(':');
    c.name = text.substr(0, colon);
    auto t = parse_type_name(text.substr(colon + 1));
    if (!t) throw Error(ErrorCode::Internal, "bad column type in catalog: " + text);
    c.type = *t;
    cols.push_back(std::move(c));
  }
  return std::make_shared<const Schema>(std::move(cols));
}

json source_value(const SourceLink& s) {
  json j = {{"dataset", s.dataset_id}, {"position", s.input_position}, {"object", s.object_id}};
  if (s.offset) j["offset"] = *s.offset;
  if (s.length) j["length"] = *s.length;
  return j;
}

SourceLink source_from_value(const json& j) {
  SourceLink s;
  s.dataset_id = j.at("dataset").get<std::string>();
  s.input_position = j.at("position").get<std::size_t>();
  s.object_id = j.at("object").get<std::string>();
  if (j.contains("offset")) s.offset = j["offset"].get<std::int64_t>();
  if (j.contains("length")) s.length = j["length"].get<std::int64_t>();
  return s;
}

json entry_value(const ObjectEntry& e) {
  json j = {{"id", e.object_id}};
  if (!e.labels.empty()) j["labels"] = e.labels;
  if (e.source) j["source"] = source_value(*e.source);
  if (e.row_count) j["rows"] = *e.row_count;
  if (e.schema) j["schema"] = schema_value(*e.schema);
  if (e.byte_size) j["bytes"] = *e.byte_size;
  if (e.fingerprint) j["fingerprint"] = hex64(*e.fingerprint);
  return j;
}

ObjectEntry entry_from_value(const json& j, std::map<json, std::shared_ptr<const Schema>>& schemas) {
  ObjectEntry e;
  e.object_id = j.at("id").get<std::string>();
  if (j.contains("labels")) e.labels = j["labels"].get<Labels>();
  if (j.contains("source")) e.source = source_from_value(j["source"]);
  if (j.contains("rows")) e.row_count = j["rows"].get<std::int64_t>();
  if (j.contains("schema")) {
    auto& slot = schemas[j["schema"]];
    if (!slot) slot = schema_from_value(j["schema"]);
    e.schema = slot;
  }
  if (j.contains("bytes")) e.byte_size = j["bytes"].get<std::uint64_t>();
  if (j.contains("fingerprint")) e.fingerprint = parse_hex64(j["fingerprint"].get<std::string>());
  return e;
}

DatasetRecord record_from_value(const json& v, std::map<json, std::shared_ptr<const Schema>>& schemas) {
  DatasetRecord r;
  r.id = v.at("id").get<std::string>();
  r.kind = v.at("kind").get<std::string>() == "explicit" ? DatasetKind::Explicit : DatasetKind::Virtual;
  r.name = v.value("name", "");
  r.status = v.value("status", "active") == "active" ? RecordStatus::Active : RecordStatus::Removed;
  r.created_at = v.at("created_at").get<std::int64_t>();
  r.seq = v.at("seq").get<std::uint64_t>();
  r.creator = v.value("creator", "");
  r.metadata = v.value("metadata", json::object());
  r.content_digest = v.value("content_digest", "");
  if (r.kind == DatasetKind::Explicit) {
    r.uri = v.at("uri").get<std::string>();
    r.format = v.value("format", "csv-dir");
  } else {
    r.spec = ssvd::from_value(v.at("spec"));
    r.input_ids = v.at("input_ids").get<std::vector<std::string>>();
    r.node_digest = v.at("node_digest").get<std::string>();
    r.stored_index = v.value("stored_index", false);
  }
  if (v.contains("notes")) r.notes = v["notes"];
  if (v.contains("objects")) {
    ObjectIndex idx;
    for (const auto& e : v["objects"]) idx.push_back(entry_from_value(e, schemas));
    r.objects = std::make_shared<const ObjectIndex>(std::move(idx));
  }
  return r;
}

std::shared_ptr<const Schema> uniform_schema(const ObjectIndex& idx) {
  std::shared_ptr<const Schema> s;
  for (const auto& e : idx) {
    if (!e.schema) return nullptr;
    if (!s) {
      s = e.schema;
    } else if (!(*s == *e.schema)) {
      return nullptr;
    }
  }
  return s;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, Labels> read_labels_file(const fs::path& p) {
  std::ifstream probe(p);
  if (!probe) {
    throw Error(ErrorCode::UnreadableSource, "cannot read labels file '" + p.string() + "'", {{"uri", p.string()}});
  }
  auto records = csv::parse_records(read_file(p));
  if (records.empty() || records[0].empty() || records[0][0].text != "object_id") {
    throw Error(ErrorCode::ParseError, "labels file must start with an object_id column", {{"file", p.string()}});
  }
  std::map<std::string, Labels> out;
  const auto& header = records[0];
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != header.size()) {
      throw Error(ErrorCode::ParseError, "ragged row in labels file", {{"file", p.string()}, {"row", r}});
    }
    Labels& l = out[records[r][0].text];
    for (std::size_t c = 1; c < header.size(); ++c) {
      if (!records[r][c].text.empty() || records[r][c].quoted) l[header[c].text] = records[r][c].text;
    }
  }
  return out;
}

}  // namespace

json object_entry_json(const ObjectEntry& e) {
  json j = {{"object_id", e.object_id}, {"labels", e.labels}};
  if (e.source) {
    json s = {{"dataset_id", e.source->dataset_id},
              {"input_position", e.source->input_position},
              {"object_id", e.source->object_id}};
    if (e.source->offset) s["offset"] = *e.source->offset;
    if (e.source->length) s["length"] = *e.source->length;
    j["source"] = s;
  } else {
    j["source"] = nullptr;
  }
  if (e.row_count) j["row_count"] = *e.row_count;
  if (e.byte_size) j["byte_size"] = *e.byte_size;
  if (e.fingerprint) j["fingerprint"] = hex64(*e.fingerprint);
  return j;
}

json record_to_value(const DatasetRecord& r) {
  json v = {{"id", r.id},
            {"kind", kind_name(r.kind)},
            {"name", r.name},
            {"status", r.active() ? "active" : "removed"},
            {"created_at", r.created_at},
            {"seq", r.seq},
            {"creator", r.creator},
            {"metadata", r.metadata},
            {"content_digest", r.content_digest}};
  if (!r.notes.empty()) v["notes"] = r.notes;
  bool store_objects = true;
  if (r.kind == DatasetKind::Explicit) {
    v["uri"] = r.uri;
    v["format"] = r.format;
  } else {
    v["spec"] = ssvd::to_value(*r.spec);
    v["input_ids"] = r.input_ids;
    v["node_digest"] = r.node_digest;
    v["stored_index"] = r.stored_index;
    store_objects = r.stored_index;
    v.erase("notes");  // re-derived by planning
    if (r.stored_index && !r.notes.empty()) v["notes"] = r.notes;
  }
  if (store_objects) {
    json objs = json::array();
    for (const auto& e : *r.objects) objs.push_back(entry_value(e));
    v["objects"] = std::move(objs);
  }
  return v;
}

json DatasetRecord::to_json() const {
  json j = {{"id", id},
            {"kind", kind_name(kind)},
            {"name", name},
            {"status", active() ? "active" : "removed"},
            {"created_at", format_timestamp(Timestamp{created_at})},
            {"creator", creator},
            {"metadata", metadata},
            {"object_count", objects->size()},
            {"content_digest", content_digest}};
  if (kind == DatasetKind::Explicit) {
    j["uri"] = uri;
    j["format"] = format;
  } else {
    j["spec"] = ssvd::to_value(*spec);
    j["transform_id"] = spec->transform.id;
    j["input_ids"] = input_ids;
  }
  if (!notes.empty()) j["notes"] = notes;
  if (auto s = uniform_schema(*objects)) {
    json cols = json::array();
    for (const auto& c : s->columns()) {
      cols.push_back({{"name", c.name}, {"type", type_name(c.type)}, {"nullable", c.nullable}});
    }
    j["schema"] = std::move(cols);
  } else {
    j["schema"] = nullptr;
  }
  return j;
}

json LineageGraph::to_json() const {
  json e = json::array();
  for (const auto& x : edges) {
    e.push_back({{"from", x.from}, {"to", x.to}, {"via", x.via}, {"input_position", x.input_position}});
  }
  return {{"nodes", nodes}, {"edges", std::move(e)}};
}

// ---- digests ---------------------------------------------------------------

std::string source_digest(const ObjectIndex& objects) {
  std::vector<const ObjectEntry*> sorted;
  for (const auto& e : objects) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->object_id < b->object_id; });
  Sha256 h;
  h.feed("source\n");
  for (const auto* e : sorted) {
    h.feed(e->object_id).feed(" ").feed(hex64(e->fingerprint.value_or(0)));
    for (const auto& [k, v] : e->labels) h.feed(" ").feed(json(k).dump()).feed("=").feed(json(v).dump());
    h.feed("\n");
  }
  return to_hex(h.finish());
}

std::string node_digest_of(const ssvd::VirtualDatasetSpec& spec, const std::vector<std::string>& input_digests) {
  Sha256 h;
  h.feed("transform\n").feed(ssvd::computation_text(spec)).feed("inputs\n");
  for (const auto& d : input_digests) h.feed(d).feed("\n");
  return to_hex(h.finish());
}

std::string slot_digest(const std::string& node_digest, std::size_t slot) {
  return to_hex(sha256(node_digest + ":" + std::to_string(slot)));
}

// ---- catalog ---------------------------------------------------------------

Catalog::Catalog(const Storage& storage, const TransformRegistry& registry, std::optional<fs::path> data_dir)
    : storage_(storage), registry_(registry), dir_(std::move(data_dir)) {
  if (dir_) {
    fs::create_directories(*dir_ / "catalog");
    load();
  }
}

std::uint64_t Catalog::generation() const {
  std::shared_lock lock(mu_);
  return generation_;
}

std::shared_ptr<const DatasetRecord> Catalog::get(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = records_.find(id);
  if (it == records_.end() || !it->second->active()) {
    throw Error(ErrorCode::NotFound, "dataset '" + id + "' not found", {{"id", id}});
  }
  return it->second;
}

std::shared_ptr<const DatasetRecord> Catalog::find_any(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = records_.find(id);
  return it == records_.end() ? nullptr : it->second;
}

std::vector<std::shared_ptr<const DatasetRecord>> Catalog::all(bool include_removed) const {
  std::shared_lock lock(mu_);
  std::vector<RecordPtr> out;
  for (const auto& [_, r] : records_) {
    if (include_removed || r->active()) out.push_back(r);
  }
  std::sort(out.begin(), out.end(), [](const RecordPtr& a, const RecordPtr& b) { return a->seq < b->seq; });
  return out;
}

std::vector<std::shared_ptr<const DatasetRecord>> Catalog::search(const SearchFilter& f) const {
  std::vector<RecordPtr> out;
  for (auto& r : all(false)) {
    if (f.name_substring && r->name.find(*f.name_substring) == std::string::npos) continue;
    if (f.kind && r->kind != *f.kind) continue;
    if (f.transform_id && r->transform_id() != *f.transform_id) continue;
    if (f.creator && r->creator != *f.creator) continue;
    if (f.label) {
      const auto& [key, value] = *f.label;
      bool hit = r->metadata.contains(key) && r->metadata[key].is_string() && r->metadata[key] == value;
      if (!hit && r->metadata.contains("labels") && r->metadata["labels"].is_object()) {
        const auto& l = r->metadata["labels"];
        hit = l.contains(key) && l[key].is_string() && l[key] == value;
      }
      if (!hit) {
        hit = std::any_of(r->objects->begin(), r->objects->end(), [&](const ObjectEntry& e) {
          auto it = e.labels.find(key);
          return it != e.labels.end() && it->second == value;
        });
      }
      if (!hit) continue;
    }
    out.push_back(std::move(r));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RecordPtr& a, const RecordPtr& b) { return a->created_at < b->created_at; });
  return out;
}

std::optional<ssvd::ResolvedInput> Catalog::resolve(const ssvd::DatasetRef& ref) const {
  std::shared_lock lock(mu_);
  if (ref.is_uri()) {
    RecordPtr best;
    for (const auto& [_, r] : records_) {
      if (r->active() && r->kind == DatasetKind::Explicit && r->uri == ref.target && (!best || r->seq > best->seq)) {
        best = r;
      }
    }
    if (!best) return std::nullopt;
    return ssvd::ResolvedInput{best->id, best->name, false};
  }
  auto it = records_.find(ref.target);
  if (it == records_.end() || !it->second->active()) return std::nullopt;
  return ssvd::ResolvedInput{it->second->id, it->second->name, it->second->kind == DatasetKind::Virtual};
}

std::string Catalog::register_explicit(const std::string& uri, const std::string& format,
                                       const std::optional<fs::path>& labels_file, const json& metadata,
                                       const std::string& creator) {
  if (format != "csv-dir") {
    throw Error(ErrorCode::UnreadableSource, "unsupported format '" + format + "'", {{"uri", uri}, {"format", format}});
  }
  if (!metadata.is_object()) throw Error(ErrorCode::BadRequest, "metadata must be a mapping");
  auto stats = storage_.list_objects(uri);
  if (stats.empty()) throw Error(ErrorCode::EmptyDataset, "'" + uri + "' contains no objects", {{"uri", uri}});

  std::map<std::string, Labels> labels;
  if (labels_file) labels = read_labels_file(*labels_file);
  for (const auto& [oid, _] : labels) {
    bool known = std::any_of(stats.begin(), stats.end(), [&](const ObjectStat& s) { return s.object_id == oid; });
    if (!known) {
      throw Error(ErrorCode::BadRequest, "labels file names unknown object '" + oid + "'", {{"object_id", oid}});
    }
  }

  auto rec = std::make_shared<DatasetRecord>();
  rec->id = random_id128();
  rec->kind = DatasetKind::Explicit;
  rec->uri = uri;
  rec->format = format;
  rec->creator = creator;
  rec->metadata = metadata;
  if (metadata.contains("name") && metadata["name"].is_string()) {
    rec->name = metadata["name"].get<std::string>();
  } else {
    std::string trimmed = uri;
    while (!trimmed.empty() && trimmed.back() == '/') trimmed.pop_back();
    rec->name = trimmed.substr(trimmed.find_last_of('/') + 1);
  }

  ObjectIndex idx;
  std::map<std::string, std::shared_ptr<const Schema>> shared;
  json warnings = json::object();
  for (auto& s : stats) {
    ObjectEntry e;
    e.object_id = s.object_id;
    if (auto it = labels.find(s.object_id); it != labels.end()) e.labels = it->second;
    e.row_count = s.row_count;
    auto& sp = shared[schema_value(s.schema).dump()];
    if (!sp) sp = std::make_shared<const Schema>(s.schema);
    e.schema = sp;
    e.byte_size = s.byte_size;
    e.fingerprint = s.fingerprint;
    if (!s.warnings.empty()) warnings[s.object_id] = s.warnings;
    idx.push_back(std::move(e));
  }
  if (!warnings.empty()) rec->notes["warnings"] = warnings;
  rec->content_digest = source_digest(idx);
  rec->objects = std::make_shared<const ObjectIndex>(std::move(idx));

  std::unique_lock lock(mu_);
  rec->seq = next_seq_++;
  rec->created_at = now_micros();
  publish(rec);
  return rec->id;
}

Catalog::Planned Catalog::plan_record(const DatasetRecord& rec, const std::vector<RecordPtr>& inputs,
                                      const StatsResolver& resolver) const {
  const auto& spec = *rec.spec;
  auto transform = registry_.get(spec.transform.id);
  TransformCall call{spec.transform.params, spec.transform.seed};
  PlanContext ctx;
  for (std::size_t s = 0; s < spec.outputs.size(); ++s) ctx.slot_digests.push_back(slot_digest(rec.node_digest, s));

  auto run = [&](const std::vector<std::shared_ptr<const ObjectIndex>>& indexes) {
    std::vector<PlanInput> plan_inputs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      plan_inputs.push_back(PlanInput{inputs[i]->id, inputs[i]->name, indexes[i].get()});
    }
    return transform->plan(plan_inputs, call, ctx);
  };

  std::vector<std::shared_ptr<const ObjectIndex>> indexes;
  for (const auto& in : inputs) indexes.push_back(in->objects);
  Planned out;
  PlanResult result;
  try {
    result = run(indexes);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::StatsUnavailable || !resolver) throw;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (inputs[i]->kind == DatasetKind::Virtual) {
        indexes[i] = std::make_shared<const ObjectIndex>(resolver(inputs[i]->id));
      }
    }
    result = run(indexes);
    out.stored_index = true;
  }
  if (spec.output_index >= result.slots.size()) {
    throw Error(ErrorCode::ArityMismatch, spec.transform.id + " produced fewer slots than outputs",
                {{"expected", spec.outputs.size()}, {"got", result.slots.size()}, {"what", "outputs"}});
  }
  ObjectIndex idx = std::move(result.slots[spec.output_index]);
  for (auto& e : idx) {
    if (e.source && e.source->input_position < rec.input_ids.size()) {
      e.source->dataset_id = rec.input_ids[e.source->input_position];
    }
  }
  out.objects = std::make_shared<const ObjectIndex>(std::move(idx));
  out.notes = std::move(result.notes);
  return out;
}

std::string Catalog::create_virtual(const ssvd::ValidatedSpec& validated, const std::string& creator,
                                    const StatsResolver& resolver, const std::optional<std::string>& requested_id) {
  auto stale = [] {
    throw Error(ErrorCode::ValidationStale, "catalog changed since the spec was validated");
  };
  std::vector<RecordPtr> inputs;
  {
    std::shared_lock lock(mu_);
    if (generation_ != validated.generation) stale();
    for (const auto& in : validated.inputs) {
      auto it = records_.find(in.dataset_id);
      if (it == records_.end() || !it->second->active()) stale();
      inputs.push_back(it->second);
    }
  }

  auto rec = std::make_shared<DatasetRecord>();
  rec->id = requested_id.value_or(random_id128());
  rec->kind = DatasetKind::Virtual;
  rec->spec = validated.spec;
  rec->name = validated.spec.name;
  rec->creator = creator;
  rec->metadata = validated.spec.metadata;
  std::vector<std::string> digests;
  for (const auto& in : inputs) {
    rec->input_ids.push_back(in->id);
    digests.push_back(in->content_digest);
  }
  rec->node_digest = node_digest_of(validated.spec, digests);
  rec->content_digest = slot_digest(rec->node_digest, validated.spec.output_index);

  // Cycle and id checks come before planning: planning may materialize inputs.
  auto check_identity = [&] {
    for (const auto& in : rec->input_ids) {
      if (in == rec->id || reaches(in, rec->id)) {
        throw Error(ErrorCode::CycleDetected, "spec would make '" + rec->id + "' its own ancestor",
                    {{"id", rec->id}, {"via", in}});
      }
    }
    if (records_.count(rec->id)) {
      throw Error(ErrorCode::BadRequest, "dataset id '" + rec->id + "' is already in use", {{"id", rec->id}});
    }
  };
  {
    std::shared_lock lock(mu_);
    check_identity();
  }

  Planned planned = plan_record(*rec, inputs, resolver);
  rec->objects = planned.objects;
  rec->notes = planned.notes;
  rec->stored_index = planned.stored_index;

  std::unique_lock lock(mu_);
  if (generation_ != validated.generation) stale();
  check_identity();
  rec->seq = next_seq_++;
  rec->created_at = now_micros();
  publish(rec);
  return rec->id;
}

bool Catalog::reaches(const std::string& from, const std::string& target) const {
  std::set<std::string> seen;
  std::vector<std::string> stack{from};
  while (!stack.empty()) {
    std::string cur = std::move(stack.back());
    stack.pop_back();
    if (cur == target) return true;
    if (!seen.insert(cur).second) continue;
    auto it = records_.find(cur);
    if (it == records_.end()) continue;
    for (const auto& p : it->second->input_ids) stack.push_back(p);
  }
  return false;
}

std::vector<std::string> Catalog::remove(const std::string& id, RemoveMode mode) {
  std::unique_lock lock(mu_);
  auto it = records_.find(id);
  if (it == records_.end() || !it->second->active()) {
    throw Error(ErrorCode::NotFound, "dataset '" + id + "' not found", {{"id", id}});
  }
  auto active_children = [&](const std::string& node) {
    std::vector<std::string> out;
    if (auto c = children_.find(node); c != children_.end()) {
      for (const auto& e : c->second) {
        if (records_.at(e.to)->active() && std::find(out.begin(), out.end(), e.to) == out.end()) out.push_back(e.to);
      }
    }
    return out;
  };

  std::vector<std::string> doomed;
  if (mode == RemoveMode::Restrict) {
    auto deps = active_children(id);
    if (!deps.empty()) {
      throw Error(ErrorCode::HasDependents, "dataset '" + id + "' has active dependents",
                  {{"id", id}, {"dependents", deps}});
    }
    doomed.push_back(id);
  } else {
    std::set<std::string> closure{id};
    std::deque<std::string> queue{id};
    while (!queue.empty()) {
      auto cur = queue.front();
      queue.pop_front();
      for (auto& c : active_children(cur)) {
        if (closure.insert(c).second) queue.push_back(c);
      }
    }
    // Kahn's algorithm restricted to the closure: parents before children.
    std::map<std::string, std::size_t> indegree;
    for (const auto& n : closure) {
      std::set<std::string> parents;
      for (const auto& p : records_.at(n)->input_ids) {
        if (closure.count(p)) parents.insert(p);
      }
      indegree[n] = parents.size();
    }
    std::set<std::pair<std::uint64_t, std::string>> ready;
    for (const auto& [n, d] : indegree) {
      if (d == 0) ready.insert({records_.at(n)->seq, n});
    }
    while (!ready.empty()) {
      auto [_, n] = *ready.begin();
      ready.erase(ready.begin());
      doomed.push_back(n);
      for (const auto& c : active_children(n)) {
        if (!closure.count(c)) continue;
        std::set<std::string> parents(records_.at(c)->input_ids.begin(), records_.at(c)->input_ids.end());
        if (parents.count(n) && --indegree[c] == 0) ready.insert({records_.at(c)->seq, c});
      }
    }
  }
  for (const auto& n : doomed) {
    auto copy = std::make_shared<DatasetRecord>(*records_.at(n));
    copy->status = RecordStatus::Removed;
    publish(copy);
  }
  return doomed;
}

LineageGraph Catalog::lineage(const std::string& id, Direction direction, std::optional<std::size_t> depth) const {
  std::shared_lock lock(mu_);
  if (!records_.count(id)) throw Error(ErrorCode::NotFound, "dataset '" + id + "' not found", {{"id", id}});
  LineageGraph g;
  std::set<std::string> seen{id};
  std::set<std::tuple<std::string, std::string, std::size_t>> edge_seen;
  g.nodes.push_back(id);
  std::deque<std::pair<std::string, std::size_t>> queue{{id, 0}};
  while (!queue.empty()) {
    auto [cur, d] = queue.front();
    queue.pop_front();
    if (depth && d >= *depth) continue;
    std::vector<LineageEdge> next;
    if (direction == Direction::Backward) {
      const auto& r = *records_.at(cur);
      for (std::size_t pos = 0; pos < r.input_ids.size(); ++pos) {
        next.push_back(LineageEdge{r.input_ids[pos], cur, r.transform_id(), pos});
      }
    } else if (auto c = children_.find(cur); c != children_.end()) {
      for (const auto& e : c->second) {
        if (records_.at(e.to)->active()) next.push_back(e);
      }
    }
    for (auto& e : next) {
      const std::string& other = direction == Direction::Backward ? e.from : e.to;
      if (!records_.count(other)) continue;
      if (edge_seen.insert({e.from, e.to, e.input_position}).second) g.edges.push_back(e);
      if (seen.insert(other).second) {
        g.nodes.push_back(other);
        queue.push_back({other, d + 1});
      }
    }
  }
  return g;
}

// ---- persistence -----------------------------------------------------------

void Catalog::publish(RecordPtr rec) {
  bool fresh = !records_.count(rec->id);
  records_[rec->id] = rec;
  if (fresh) {
    for (std::size_t pos = 0; pos < rec->input_ids.size(); ++pos) {
      children_[rec->input_ids[pos]].push_back(LineageEdge{rec->input_ids[pos], rec->id, rec->transform_id(), pos});
    }
  }
  ++generation_;
  if (dir_) {
    append_log(*rec);
    if (++log_entries_ >= snapshot_every) write_snapshot_locked();
  }
}

void Catalog::append_log(const DatasetRecord& rec) {
  std::string body = yaml::emit_canonical(record_to_value(rec));
  std::ofstream out(*dir_ / "catalog" / "records.log", std::ios::binary | std::ios::app);
  out << '#' << body.size() << '\n' << body;
  out.flush();
  if (!out) throw Error(ErrorCode::Internal, "cannot append to the catalog log");
}

void Catalog::write_snapshot() {
  std::unique_lock lock(mu_);
  if (dir_) write_snapshot_locked();
}

void Catalog::write_snapshot_locked() {
  std::vector<RecordPtr> ordered;
  for (const auto& [_, r] : records_) ordered.push_back(r);
  std::sort(ordered.begin(), ordered.end(), [](const RecordPtr& a, const RecordPtr& b) { return a->seq < b->seq; });
  json records = json::array();
  for (const auto& r : ordered) records.push_back(record_to_value(*r));
  json doc = {{"version", 1}, {"next_seq", next_seq_}, {"records", std::move(records)}};
  fs::path dir = *dir_ / "catalog";
  fs::path tmp = dir / "snapshot.yaml.tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << yaml::emit_canonical(doc);
    if (!out) throw Error(ErrorCode::Internal, "cannot write catalog snapshot");
  }
  fs::rename(tmp, dir / "snapshot.yaml");
  std::ofstream(dir / "records.log", std::ios::binary | std::ios::trunc);
  log_entries_ = 0;
}

void Catalog::load() {
  fs::path dir = *dir_ / "catalog";
  std::map<std::string, json> latest;
  if (fs::exists(dir / "snapshot.yaml")) {
    json doc = yaml::parse(read_file(dir / "snapshot.yaml"));
    next_seq_ = std::max<std::uint64_t>(next_seq_, doc.value("next_seq", std::uint64_t{1}));
    for (auto& r : doc.at("records")) latest[r.at("id").get<std::string>()] = r;
  }
  if (fs::exists(dir / "records.log")) {
    std::string log = read_file(dir / "records.log");
    std::size_t pos = 0;
    while (pos < log.size()) {
      std::size_t nl = log.find('\n', pos);
      if (log[pos] != '#' || nl == std::string::npos) break;
      std::size_t len = std::stoull(log.substr(pos + 1, nl - pos - 1));
      if (nl + 1 + len > log.size()) break;  // torn tail from a crash mid-append
      json r = yaml::parse(std::string_view(log).substr(nl + 1, len));
      auto id = r.at("id").get<std::string>();
      latest[id] = std::move(r);
      pos = nl + 1 + len;
      ++log_entries_;
    }
  }

  std::map<json, std::shared_ptr<const Schema>> schemas;
  std::vector<DatasetRecord> recs;
  for (auto& [_, v] : latest) recs.push_back(record_from_value(v, schemas));
  std::sort(recs.begin(), recs.end(), [](const auto& a, const auto& b) { return a.seq < b.seq; });
  for (auto& r : recs) {
    next_seq_ = std::max(next_seq_, r.seq + 1);
    if (r.kind == DatasetKind::Virtual && !r.stored_index) {
      std::vector<RecordPtr> inputs;
      for (const auto& in : r.input_ids) inputs.push_back(records_.at(in));
      try {
        auto planned = plan_record(r, inputs, {});
        r.objects = planned.objects;
        r.notes = planned.notes;
      } catch (const Error& e) {
        r.objects = std::make_shared<const ObjectIndex>();
        r.notes = {{"load_error", std::string(code_name(e.code())) + ": " + e.what()}};
      }
    }
    auto ptr = std::make_shared<const DatasetRecord>(std::move(r));
    records_[ptr->id] = ptr;
    for (std::size_t pos = 0; pos < ptr->input_ids.size(); ++pos) {
      children_[ptr->input_ids[pos]].push_back(LineageEdge{ptr->input_ids[pos], ptr->id, ptr->transform_id(), pos});
    }
  }
  generation_ = recs.size();
}

}  // namespace vd
