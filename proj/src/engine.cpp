#include "vd/engine.hpp"

#include "vd/error.hpp"

#include <algorithm>
#include <functional>
#include <set>

using nlohmann::json;

namespace vd {

std::size_t Plan::transform_nodes() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const PlanNode& n) { return n.kind == NodeKind::Transform; }));
}

json Plan::to_json() const {
  json arr = json::array();
  for (const auto& n : nodes) {
    json j = {{"kind", n.kind == NodeKind::Source ? "source" : "transform"},
              {"dataset_ids", n.dataset_ids},
              {"cache_key", n.cache_key}};
    if (n.transform) j["transform"] = n.transform->id;
    if (n.estimated_rows) j["estimated_rows"] = *n.estimated_rows;
    json inputs = json::array();
    for (auto [node, slot] : n.inputs) inputs.push_back({{"node", node}, {"slot", slot}});
    j["inputs"] = std::move(inputs);
    arr.push_back(std::move(j));
  }
  return {{"target", target}, {"target_node", target_node}, {"target_slot", target_slot}, {"nodes", std::move(arr)}};
}

json RunStats::to_json() const {
  return {{"nodes_total", nodes_total},
          {"cache_hits", cache_hits},
          {"transforms_executed", transforms_executed},
          {"bytes_written", bytes_written}};
}

const DataObject& MaterializedHandle::object(const std::string& object_id) const {
  for (const auto& o : objects) {
    if (o.object_id == object_id) return o;
  }
  throw Error(ErrorCode::NotFound, "object '" + object_id + "' not in dataset " + dataset_id,
              {{"id", dataset_id}, {"object_id", object_id}});
}

Engine::Engine(const Catalog& catalog, const Storage& storage, const TransformRegistry& registry, Cache& cache)
    : catalog_(catalog), storage_(storage), registry_(registry), cache_(cache) {}

EngineCounters Engine::counters() const {
  std::lock_guard lock(counters_mu_);
  return counters_;
}

namespace {

std::optional<std::int64_t> total_rows(const ObjectIndex& idx) {
  std::int64_t sum = 0;
  for (const auto& e : idx) {
    if (!e.row_count) return std::nullopt;
    sum += *e.row_count;
  }
  return sum;
}

bool passes_through(ErrorCode c) {
  switch (c) {
    case ErrorCode::PluginCrashed:
    case ErrorCode::Timeout:
    case ErrorCode::ProtocolViolation:
    case ErrorCode::SourceChanged:
    case ErrorCode::CacheCorrupt:
    case ErrorCode::TransformFailed:
    case ErrorCode::BrokenLineage:
      return true;
    default:
      return false;
  }
}

template <class F>
auto guarded(const DatasetRecord& rec, F&& body) -> decltype(body()) {
  auto fail = [&](const json& cause, const std::string& what) -> Error {
    return Error(ErrorCode::TransformFailed,
                 rec.transform_id() + " failed for dataset " + rec.id + ": " + what,
                 {{"node", rec.node_digest}, {"dataset_id", rec.id}, {"transform", rec.transform_id()}, {"cause", cause}});
  };
  try {
    return body();
  } catch (const Error& e) {
    if (passes_through(e.code())) throw;
    throw fail({{"code", code_name(e.code())}, {"message", e.what()}, {"details", e.details()}}, e.what());
  } catch (const std::exception& e) {
    throw fail({{"code", "INTERNAL"}, {"message", e.what()}}, e.what());
  }
}

}  // namespace

Plan Engine::resolve(const std::string& id) const {
  auto target = catalog_.get(id);
  Plan plan;
  plan.target = id;
  std::map<std::string, std::size_t> by_key;

  std::set<std::string> visiting;
  std::function<std::pair<std::size_t, std::size_t>(const std::shared_ptr<const DatasetRecord>&)> visit =
      [&](const std::shared_ptr<const DatasetRecord>& rec) -> std::pair<std::size_t, std::size_t> {
    const bool is_virtual = rec->kind == DatasetKind::Virtual;
    const std::string key = is_virtual ? rec->node_digest : rec->content_digest;
    const std::size_t slot = is_virtual ? rec->spec->output_index : 0;
    if (auto it = by_key.find(key); it != by_key.end()) {
      auto& ids = plan.nodes[it->second].dataset_ids;
      if (std::find(ids.begin(), ids.end(), rec->id) == ids.end()) ids.push_back(rec->id);
      return {it->second, slot};
    }
    if (!visiting.insert(rec->id).second) {
      throw Error(ErrorCode::BrokenLineage, "lineage of " + rec->id + " loops", {{"missing", rec->id}});
    }
    PlanNode node;
    node.record = rec;
    node.dataset_ids = {rec->id};
    node.cache_key = key;
    if (is_virtual) {
      node.kind = NodeKind::Transform;
      node.transform = rec->spec->transform;
      for (const auto& in : rec->input_ids) {
        auto parent = catalog_.find_any(in);
        if (!parent || !parent->active()) {
          throw Error(ErrorCode::BrokenLineage, "ancestor " + in + " of " + rec->id + " is missing",
                      {{"missing", in}, {"dataset_id", rec->id}});
        }
        node.inputs.push_back(visit(parent));
      }
    }
    node.estimated_rows = total_rows(*rec->objects);
    visiting.erase(rec->id);
    plan.nodes.push_back(std::move(node));
    by_key[key] = plan.nodes.size() - 1;
    return {plan.nodes.size() - 1, slot};
  };
  auto [node, slot] = visit(target);
  plan.target_node = node;
  plan.target_slot = slot;
  return plan;
}

Engine::NodeResult Engine::read_source(const DatasetRecord& rec) const {
  auto out = std::make_shared<NodeOutput>();
  out->slots.emplace_back();
  for (const auto& e : *rec.objects) {
    DataObject o;
    o.object_id = e.object_id;
    o.labels = e.labels;
    o.payload = std::make_shared<const Table>(storage_.read_object(rec.uri, e.object_id, e.fingerprint));
    out->slots[0].push_back(std::move(o));
  }
  return out;
}

Engine::NodeResult Engine::evaluate(Run& run, std::size_t idx) {
  if (auto it = run.done.find(idx); it != run.done.end()) return it->second;
  const PlanNode& node = run.plan->nodes[idx];
  NodeResult result;
  if (node.kind == NodeKind::Source) {
    result = read_source(*node.record);
  } else {
    if (!run.options.force_recompute) result = cache_.get(node.cache_key, false);
    if (!result) result = compute(run, idx);
  }
  run.done[idx] = result;
  return result;
}

Engine::NodeResult Engine::compute(Run& run, std::size_t idx) {
  const PlanNode& node = run.plan->nodes[idx];
  std::promise<NodeResult> promise;
  {
    std::unique_lock lock(flight_mu_);
    if (auto it = in_flight_.find(node.cache_key); it != in_flight_.end()) {
      auto fut = it->second;
      lock.unlock();
      return fut.get();
    }
    in_flight_.emplace(node.cache_key, promise.get_future().share());
  }
  auto land = [&] {
    std::lock_guard lock(flight_mu_);
    in_flight_.erase(node.cache_key);
  };
  try {
    NodeResult result;
    if (!run.options.force_recompute) result = cache_.get(node.cache_key, false);  // another flight just landed
    if (!result) {
      const DatasetRecord& rec = *node.record;
      std::vector<InputObjects> inputs;
      for (std::size_t pos = 0; pos < node.inputs.size(); ++pos) {
        auto [in_node, in_slot] = node.inputs[pos];
        auto in = evaluate(run, in_node);
        auto parent = run.plan->nodes[in_node].record;
        inputs.push_back(InputObjects{rec.input_ids[pos], parent->name, in->slots.at(in_slot)});
      }
      auto t = registry_.get(rec.spec->transform.id);
      TransformCall call{rec.spec->transform.params, rec.spec->transform.seed};
      PlanContext ctx;
      for (std::size_t s = 0; s < rec.spec->outputs.size(); ++s) {
        ctx.slot_digests.push_back(slot_digest(rec.node_digest, s));
      }
      auto executed = guarded(rec, [&] { return execute(*t, inputs, call, ctx); });
      auto out = std::make_shared<NodeOutput>();
      out->slots = std::move(executed.slots);
      result = out;
      ++run.stats.transforms_executed;
      cache_.note_miss();
      run.stats.bytes_written += cache_.put(node.cache_key, *out);
    }
    promise.set_value(result);
    land();
    return result;
  } catch (...) {
    promise.set_exception(std::current_exception());
    land();
    throw;
  }
}

std::vector<DataObject> Engine::finish(const DatasetRecord& rec, const NodeOutput& out, std::size_t slot) const {
  const auto& computed = out.slots.at(slot);
  const auto& index = *rec.objects;
  if (computed.size() != index.size()) {
    throw Error(ErrorCode::Internal, "materialized object count differs from the catalog index",
                {{"id", rec.id}, {"expected", index.size()}, {"got", computed.size()}});
  }
  std::vector<DataObject> objects;
  objects.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (computed[i].object_id != index[i].object_id) {
      throw Error(ErrorCode::Internal, "materialized object ids differ from the catalog index",
                  {{"id", rec.id}, {"expected", index[i].object_id}, {"got", computed[i].object_id}});
    }
    DataObject o;
    o.object_id = index[i].object_id;
    o.labels = index[i].labels;
    o.source = index[i].source;
    o.payload = computed[i].payload;
    objects.push_back(std::move(o));
  }
  return objects;
}

MaterializedHandle Engine::materialize(const std::string& id, const MaterializeOptions& options) {
  Plan plan = resolve(id);
  auto rec = catalog_.get(id);
  Run run;
  run.plan = &plan;
  run.options = options;
  run.stats.nodes_total = plan.nodes.size();
  if (!options.force_recompute) {
    for (const auto& n : plan.nodes) {
      if (n.kind == NodeKind::Transform && cache_.touch(n.cache_key)) ++run.stats.cache_hits;
    }
  }
  auto out = evaluate(run, plan.target_node);
  MaterializedHandle h;
  h.dataset_id = id;
  h.objects = finish(*rec, *out, plan.target_slot);
  h.stats = run.stats;
  std::lock_guard lock(counters_mu_);
  ++counters_.materializations;
  counters_.transforms_executed += run.stats.transforms_executed;
  counters_.bytes_written += run.stats.bytes_written;
  return h;
}

Table Engine::open_object(const std::string& id, const std::string& object_id) {
  auto rec = catalog_.get(id);
  const auto& index = *rec->objects;
  auto entry = std::find_if(index.begin(), index.end(), [&](const ObjectEntry& e) { return e.object_id == object_id; });
  if (entry == index.end()) {
    throw Error(ErrorCode::NotFound, "object '" + object_id + "' not in dataset " + id,
                {{"id", id}, {"object_id", object_id}});
  }
  {
    std::lock_guard lock(counters_mu_);
    ++counters_.objects_opened;
  }
  if (rec->kind == DatasetKind::Explicit) return storage_.read_object(rec->uri, object_id, entry->fingerprint);

  std::shared_ptr<const NodeOutput> cached;
  try {
    cached = cache_.get(rec->node_digest, false);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::CacheCorrupt) throw;
  }
  if (cached) {
    for (const auto& o : cached->slots.at(rec->spec->output_index)) {
      if (o.object_id == object_id) return *o.payload;
    }
  }

  auto t = registry_.get(rec->spec->transform.id);
  TransformCall call{rec->spec->transform.params, rec->spec->transform.seed};
  if (t->object_level(call)) {
    ObjectFetcher fetch = [&](std::size_t pos, const std::string& src) -> std::shared_ptr<const Table> {
      if (pos >= rec->input_ids.size()) throw Error(ErrorCode::Internal, "input position out of range");
      return std::make_shared<const Table>(open_object(rec->input_ids[pos], src));
    };
    return guarded(*rec, [&] { return t->compute_object(*entry, call, rec->notes, fetch); });
  }
  auto h = materialize(id);
  return *h.object(object_id).payload;
}

ObjectIndex Engine::resolved_index(const std::string& id) {
  auto h = materialize(id);
  return index_of(h.objects);
}

}  // namespace vd
