#include "vd/error.hpp"
#include "vd/transforms.hpp"
#include "vd/util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace vd {

namespace {

using nlohmann::json;

[[noreturn]] void param_error(const std::string& key, const std::string& reason) {
  throw Error(ErrorCode::ParamError, "parameter '" + key + "' " + reason, {{"key", key}, {"reason", reason}});
}

[[noreturn]] void stats_unavailable(const std::string& transform, const std::string& what) {
  throw Error(ErrorCode::StatsUnavailable, transform + " needs " + what + " of its inputs to plan",
              {{"transform", transform}, {"needs", what}});
}

std::vector<std::string> strings(const json& params, const std::string& key) {
  std::vector<std::string> out;
  if (!params.contains(key) || !params[key].is_array()) return out;
  for (const auto& v : params[key]) out.push_back(v.get<std::string>());
  return out;
}

std::string string_param(const json& params, const std::string& key, const std::string& fallback = {}) {
  if (params.contains(key) && params[key].is_string()) return params[key].get<std::string>();
  return fallback;
}

std::int64_t int_param(const json& params, const std::string& key, std::int64_t fallback) {
  if (params.contains(key) && params[key].is_number_integer()) return params[key].get<std::int64_t>();
  return fallback;
}

bool is_numeric(ColumnType t) { return t == ColumnType::Int64 || t == ColumnType::Float64; }

std::optional<double> number_of(const Cell& c) {
  if (const auto* i = std::get_if<std::int64_t>(&c)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&c)) return *d;
  return std::nullopt;
}

/// Column indices for the requested names, expanding multivariate prefixes.
std::vector<std::size_t> resolve_columns(const Schema& s, const std::vector<std::string>& names,
                                         const std::string& object_id) {
  std::vector<std::size_t> out;
  for (const auto& n : names) {
    auto idx = expand_column(s, n);
    if (!idx) {
      throw Error(ErrorCode::UnknownColumn, "column '" + n + "' not found in object " + object_id,
                  {{"name", n}, {"object_id", object_id}});
    }
    out.insert(out.end(), idx->begin(), idx->end());
  }
  return out;
}

void require_numeric(const Schema& s, const std::vector<std::size_t>& cols, const std::string& object_id) {
  for (auto c : cols) {
    if (!is_numeric(s[c].type)) {
      throw Error(ErrorCode::NonNumericColumn,
                  "column '" + s[c].name + "' is " + std::string(type_name(s[c].type)) + ", not numeric",
                  {{"name", s[c].name}, {"object_id", object_id}});
    }
  }
}

Schema project_schema(const Schema& s, const std::vector<std::size_t>& cols) {
  std::vector<Column> out;
  for (auto c : cols) out.push_back(s[c]);
  return Schema(std::move(out));
}

Table project(const Table& t, const std::vector<std::size_t>& cols) {
  Table out;
  out.schema = project_schema(t.schema, cols);
  out.rows.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    Row r;
    r.reserve(cols.size());
    for (auto c : cols) r.push_back(row[c]);
    out.rows.push_back(std::move(r));
  }
  return out;
}

/// Entry carried over unchanged apart from its link to the input object.
ObjectEntry passthrough(const ObjectEntry& in, std::size_t position) {
  ObjectEntry e;
  e.object_id = in.object_id;
  e.labels = in.labels;
  e.source = SourceLink{{}, position, in.object_id, std::nullopt, std::nullopt};
  e.row_count = in.row_count;
  e.schema = in.schema;
  return e;
}

ParamSpec param(std::string key, ParamType type, bool required, std::string constraint = {},
                std::optional<double> min = std::nullopt, std::vector<std::string> choices = {}) {
  return ParamSpec{std::move(key), type, required, min, std::move(choices), std::move(constraint)};
}

// ---- merge -----------------------------------------------------------------

class Merge final : public Transform {
 public:
  Merge() {
    d_.transform_id = "merge";
    d_.min_inputs = 2;
    d_.max_inputs = TransformDescriptor::kVariadic;
    d_.params = {param("columns", ParamType::StringList, false, "overrides the common-column intersection")};
    d_.summary = "concatenate the objects of k similar datasets, projected onto their common columns";
  }
  const TransformDescriptor& descriptor() const override { return d_; }

  PlanResult plan(std::span<const PlanInput> inputs, const TransformCall& call, const PlanContext& ctx) const override {
    std::vector<Schema> schemas;
    for (const auto& in : inputs) {
      for (const auto& e : *in.objects) {
        if (!e.schema) stats_unavailable("merge", "object schemas");
        schemas.push_back(*e.schema);
      }
    }
    std::vector<std::string> names = strings(call.params, "columns");
    if (names.empty()) {
      auto common = common_columns(schemas);
      for (const auto& c : common.columns) names.push_back(c.name);
      if (names.empty() && !schemas.empty()) {
        throw Error(ErrorCode::NoCommonColumns, "inputs share no column with a consistent type",
                    {{"conflicts", common.conflicts}});
      }
    }
    PlanResult r;
    r.notes["columns"] = names;
    r.slots.resize(1);
    for (std::size_t pos = 0; pos < inputs.size(); ++pos) {
      for (const auto& e : *inputs[pos].objects) {
        ObjectEntry out;
        out.object_id = ctx.mint(0, std::to_string(pos) + "/" + e.object_id);
        out.labels = e.labels;
        out.source = SourceLink{{}, pos, e.object_id, std::nullopt, std::nullopt};
        out.row_count = e.row_count;
        out.schema = std::make_shared<const Schema>(project_schema(*e.schema, exact_columns(*e.schema, names, e.object_id)));
        r.slots[0].push_back(std::move(out));
      }
    }
    return r;
  }

  Table compute_object(const ObjectEntry& entry, const TransformCall&, const json& notes,
                       const ObjectFetcher& fetch) const override {
    auto src = fetch(entry.source->input_position, entry.source->object_id);
    auto names = notes.at("columns").get<std::vector<std::string>>();
    return project(*src, exact_columns(src->schema, names, entry.source->object_id));
  }

 private:
  static std::vector<std::size_t> exact_columns(const Schema& s, const std::vector<std::string>& names,
                                                const std::string& object_id) {
    std::vector<std::size_t> out;
    for (const auto& n : names) {
      auto idx = s.index_of(n);
      if (!idx) {
        throw Error(ErrorCode::UnknownColumn, "column '" + n + "' not found in object " + object_id,
                    {{"name", n}, {"object_id", object_id}});
      }
      out.push_back(*idx);
    }
    return out;
  }

  TransformDescriptor d_;
};

// ---- integrate -------------------------------------------------------------

class Integrate final : public Transform {
 public:
  Integrate() {
    d_.transform_id = "integrate";
    d_.min_inputs = 2;
    d_.max_inputs = TransformDescriptor::kVariadic;
    d_.params = {param("key", ParamType::String, true, "join column present in every input")};
    d_.summary = "inner-join objects paired by id across datasets of different nature";
  }
  const TransformDescriptor& descriptor() const override { return d_; }

  PlanResult plan(std::span<const PlanInput> inputs, const TransformCall& call, const PlanContext&) const override {
    const std::string key = string_param(call.params, "key");
    std::vector<std::unordered_map<std::string, const ObjectEntry*>> by_id(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      for (const auto& e : *inputs[i].objects) by_id[i][e.object_id] = &e;
    }
    for (std::size_t i = 1; i < inputs.size(); ++i) {
      for (const auto& e : *inputs[i].objects) {
        if (!by_id[0].count(e.object_id)) unpaired(e.object_id);
      }
    }
    PlanResult r;
    json names = json::array();
    for (const auto& in : inputs) names.push_back(in.name);
    r.notes["names"] = names;
    r.slots.resize(1);
    for (const auto& e : *inputs[0].objects) {
      std::vector<const ObjectEntry*> group{&e};
      for (std::size_t i = 1; i < inputs.size(); ++i) {
        auto it = by_id[i].find(e.object_id);
        if (it == by_id[i].end()) unpaired(e.object_id);
        group.push_back(it->second);
      }
      ObjectEntry out;
      out.object_id = e.object_id;
      for (const auto* g : group) out.labels.insert(g->labels.begin(), g->labels.end());
      out.source = SourceLink{{}, 0, e.object_id, std::nullopt, std::nullopt};
      bool schemas_known = std::all_of(group.begin(), group.end(), [](const ObjectEntry* g) { return g->schema != nullptr; });
      if (schemas_known) {
        std::vector<const Schema*> schemas;
        for (const auto* g : group) schemas.push_back(g->schema.get());
        out.schema = std::make_shared<const Schema>(joined_schema(schemas, key, names, e.object_id));
      }
      r.slots[0].push_back(std::move(out));
    }
    return r;
  }

  Table compute_object(const ObjectEntry& entry, const TransformCall& call, const json& notes,
                       const ObjectFetcher& fetch) const override {
    const std::string key = string_param(call.params, "key");
    const auto& names = notes.at("names");
    std::vector<std::shared_ptr<const Table>> tables;
    std::vector<const Schema*> schemas;
    for (std::size_t i = 0; i < names.size(); ++i) {
      tables.push_back(fetch(i, entry.object_id));
      schemas.push_back(&tables.back()->schema);
    }
    Table out;
    out.schema = joined_schema(schemas, key, names, entry.object_id);

    std::vector<std::size_t> key_idx;
    std::vector<std::map<Cell, std::vector<std::size_t>>> groups(tables.size());
    for (std::size_t i = 0; i < tables.size(); ++i) {
      key_idx.push_back(*tables[i]->schema.index_of(key));
      for (std::size_t r = 0; r < tables[i]->rows.size(); ++r) {
        const Cell& k = tables[i]->rows[r][key_idx[i]];
        if (!is_null(k)) groups[i][k].push_back(r);
      }
    }
    for (const auto& [k, rows0] : groups[0]) {
      std::vector<const std::vector<std::size_t>*> matches{&rows0};
      bool everywhere = true;
      for (std::size_t i = 1; i < tables.size() && everywhere; ++i) {
        auto it = groups[i].find(k);
        if (it == groups[i].end()) {
          everywhere = false;
        } else {
          matches.push_back(&it->second);
        }
      }
      if (!everywhere) continue;
      // Cartesian product of matching rows, input 0 outermost.
      std::vector<std::size_t> cursor(tables.size(), 0);
      bool more = true;
      while (more) {
        Row row{k};
        for (std::size_t i = 0; i < tables.size(); ++i) {
          const Row& src = tables[i]->rows[(*matches[i])[cursor[i]]];
          for (std::size_t c = 0; c < src.size(); ++c) {
            if (c != key_idx[i]) row.push_back(src[c]);
          }
        }
        out.rows.push_back(std::move(row));
        more = false;
        for (std::size_t i = tables.size(); i-- > 0;) {
          if (++cursor[i] < matches[i]->size()) {
            more = true;
            break;
          }
          cursor[i] = 0;
        }
      }
    }
    return out;
  }

 private:
  [[noreturn]] static void unpaired(const std::string& id) {
    throw Error(ErrorCode::UnpairedObject, "object '" + id + "' has no partner in every input", {{"id", id}});
  }

  static Schema joined_schema(const std::vector<const Schema*>& schemas, const std::string& key, const json& names,
                              const std::string& object_id) {
    std::optional<ColumnType> key_type;
    std::vector<Column> cols;
    for (std::size_t i = 0; i < schemas.size(); ++i) {
      std::string dataset = names[i].get<std::string>();
      auto k = schemas[i]->index_of(key);
      if (!k) {
        throw Error(ErrorCode::MissingKey, "key '" + key + "' missing from " + dataset,
                    {{"dataset", dataset}, {"object_id", object_id}});
      }
      ColumnType t = (*schemas[i])[*k].type;
      if (key_type && *key_type != t) {
        throw Error(ErrorCode::MissingKey,
                    "key '" + key + "' in " + dataset + " is " + std::string(type_name(t)) + ", expected " +
                        std::string(type_name(*key_type)),
                    {{"dataset", dataset}, {"object_id", object_id}, {"note", "type conflict"}});
      }
      if (!key_type) {
        key_type = t;
        cols.push_back(Column{key, t, false});
      }
      for (std::size_t c = 0; c < schemas[i]->size(); ++c) {
        if (c == *k) continue;
        const Column& col = (*schemas[i])[c];
        cols.push_back(Column{dataset + "." + col.name, col.type, col.nullable});
      }
    }
    return Schema(std::move(cols));
  }

  TransformDescriptor d_;
};

// ---- select_columns --------------------------------------------------------

class SelectColumns final : public Transform {
 public:
  SelectColumns() {
    d_.transform_id = "select_columns";
    d_.params = {param("columns", ParamType::StringList, true, "ordered column names; a prefix selects prefix.*")};
    d_.summary = "keep a subset of variables, in the given order";
  }
  const TransformDescriptor& descriptor() const override { return d_; }

  void check_call(const TransformCall& call) const override {
    Transform::check_call(call);
    if (call.params["columns"].empty()) param_error("columns", "must name at least one column");
  }

  PlanResult plan(std::span<const PlanInput> inputs, const TransformCall& call, const PlanContext&) const override {
    auto names = strings(call.params, "columns");
    PlanResult r;
    r.slots.resize(1);
    for (const auto& e : *inputs[0].objects) {
      ObjectEntry out = passthrough(e, 0);
      if (e.schema) {
        out.schema = std::make_shared<const Schema>(project_schema(*e.schema, resolve_columns(*e.schema, names, e.object_id)));
      }
      r.slots[0].push_back(std::move(out));
    }
    return r;
  }

  Table compute_object(const ObjectEntry& entry, const TransformCall& call, const json&,
                       const ObjectFetcher& fetch) const override {
    auto src = fetch(0, entry.source->object_id);
    return project(*src, resolve_columns(src->schema, strings(call.params, "columns"), entry.source->object_id));
  }

 private:
  TransformDescriptor d_;
};

// ---- select_labels ---------------------------------------------------------

class SelectLabels final : public Transform {
 public:
  SelectLabels() {
    d_.transform_id = "select_labels";
    d_.params = {param("key", ParamType::String, true), param("values", ParamType::StringList, true)};
    d_.summary = "keep the objects whose label value is in a set";
  }
  const TransformDescriptor& descriptor() const override { return d_; }

  PlanResult plan(std::span<const PlanInput> inputs, const TransformCall& call, const PlanContext&) const override {
    const std::string key = string_param(call.params, "key");
    auto values = strings(call.params, "values");
    std::set<std::string> wanted(values.begin(), values.end());
    const auto& objects = *inputs[0].objects;
    bool key_seen = std::any_of(objects.begin(), objects.end(), [&](const ObjectEntry& e) { return e.labels.count(key) > 0; });
    if (!objects.empty() && !key_seen) {
      throw Error(ErrorCode::UnknownLabelKey, "no object carries label '" + key + "'", {{"key", key}});
    }
    PlanResult r;
    r.slots.resize(1);
    for (const auto& e : objects) {
      auto it = e.labels.find(key);
      if (it != e.labels.end() && wanted.count(it->second)) r.slots[0].push_back(passthrough(e, 0));
    }
    return r;
  }

  Table compute_object(const ObjectEntry& entry, const TransformCall&, const json&,
                       const ObjectFetcher& fetch) const override {
    return *fetch(0, entry.source->object_id);
  }

 private:
  TransformDescriptor d_;
};

// ---- normalize -------------------------------------------------------------

struct ColumnStats {
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  double sum = 0;
  std::size_t n = 0;
  std::vector<double> values;

  void add(double v) {
    if (std::isnan(v)) return;
    min = std::min(min, v);
    max = std::max(max, v);
    sum += v;
    ++n;
    values.push_back(v);
  }
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
  double stddev() const {
    if (!n) return 0.0;
    double m = mean();
    double acc = 0;
    for (double v : values) acc += (v - m) * (v - m);
    return std::sqrt(acc / static_cast<double>(n));
  }
};

class Normalize final : public Transform {
 public:
  Normalize() {
    d_.transform_id = "normalize";
    d_.params = {param("method", ParamType::String, true, {}, std::nullopt, {"minmax", "zscore"}),
                 param("columns", ParamType::StringList, true),
                 param("scope", ParamType::String, false, "default per-object", std::nullopt, {"per-object", "global"})};
    d_.summary = "rescale numeric columns (minmax onto [0,1] or zscore); constant columns become 0.0";
  }
  const TransformDescriptor& descriptor() const override { return d_; }

  void check_call(const TransformCall& call) const override {
    Transform::check_call(call);
    if (call.params["columns"].empty()) param_error("columns", "must name at least one column");
  }

  bool object_level(const TransformCall& call) const override { return !global(call); }

  PlanResult plan(std::span<const PlanInput> inputs, const TransformCall& call, const PlanContext&) const override {
    auto names = strings(call.params, "columns");
    PlanResult r;
    r.slots.resize(1);
    for (const auto& e : *inputs[0].objects) {
      ObjectEntry out = passthrough(e, 0);
      if (e.schema) out.schema = std::make_shared<const Schema>(output_schema(*e.schema, names, e.object_id));
      r.slots[0].push_back(std::move(out));
    }
    return r;
  }

  Table compute_object(const ObjectEntry& entry, const TransformCall& call, const json&,
                       const ObjectFetcher& fetch) const override {
    auto src = fetch(0, entry.source->object_id);
    auto names = strings(call.params, "columns");
    auto cols = resolve_columns(src->schema, names, entry.source->object_id);
    require_numeric(src->schema, cols, entry.source->object_id);
    std::map<std::string, ColumnStats> stats;
    for (auto c : cols) stats[src->schema[c].name] = collect(*src, c);
    return apply(*src, cols, stats, string_param(call.params, "method"), entry.source->object_id, names);
  }

  std::vector<std::vector<Table>> compute_all(std::span<const InputObjects> inputs, const TransformCall& call,
                                              const PlanResult& plan) const override {
    if (!global(call)) return Transform::compute_all(inputs, call, plan);
    auto names = strings(call.params, "columns");
    std::map<std::string, ColumnStats> stats;
    for (const auto& o : inputs[0].objects) {
      auto cols = resolve_columns(o.payload->schema, names, o.object_id);
      require_numeric(o.payload->schema, cols, o.object_id);
      for (auto c : cols) {
        auto& st = stats[o.payload->schema[c].name];
        for (const auto& row : o.payload->rows) {
          if (auto v = number_of(row[c])) st.add(*v);
        }
      }
    }
    std::unordered_map<std::string, const DataObject*> by_id;
    for (const auto& o : inputs[0].objects) by_id[o.object_id] = &o;
    std::vector<std::vector<Table>> out(1);
    for (const auto& e : plan.slots[0]) {
      const Table& src = *by_id.at(e.source->object_id)->payload;
      auto cols = resolve_columns(src.schema, names, e.object_id);
      out[0].push_back(apply(src, cols, stats, string_param(call.params, "method"), e.object_id, names));
    }
    return out;
  }

 private:
  static bool global(const TransformCall& call) { return string_param(call.params, "scope") == "global"; }

  static Schema output_schema(const Schema& s, const std::vector<std::string>& names, const std::string& oid) {
    auto cols = resolve_columns(s, names, oid);
    require_numeric(s, cols, oid);
    std::vector<Column> out = s.columns();
    for (auto c : cols) out[c].type = ColumnType::Float64;
    return Schema(std::move(out));
  }

  static ColumnStats collect(const Table& t, std::size_t c) {
    ColumnStats st;
    for (const auto& row : t.rows) {
      if (auto v = number_of(row[c])) st.add(*v);
    }
    return st;
  }

  static Table apply(const Table& src, const std::vector<std::size_t>& cols, const std::map<std::string, ColumnStats>& stats,
                     const std::string& method, const std::string& oid, const std::vector<std::string>& names) {
    Table out;
    out.schema = output_schema(src.schema, names, oid);
    out.rows = src.rows;
    for (auto c : cols) {
      const ColumnStats& st = stats.at(src.schema[c].name);
      const double lo = st.min, hi = st.max, mean = st.mean(), sd = st.stddev();
      for (auto& row : out.rows) {
        auto v = number_of(row[c]);
        if (!v) continue;
        double x;
        if (method == "minmax") {
          x = (st.n == 0 || hi == lo) ? 0.0 : (*v - lo) / (hi - lo);
        } else {
          x = (st.n == 0 || sd == 0.0) ? 0.0 : (*v - mean) / sd;
        }
        row[c] = x;
      }
    }
    return out;
  }

  TransformDescriptor d_;
};

// ---- window ----------------------------------------------------------------

class Window final : public Transform {
 public:
  Window() {
    d_.transform_id = "window";
    d_.params = {param("W", ParamType::Int, true, "must be ≥1", 1.0),
                 param("stride", ParamType::Int, false, "must be ≥1", 1.0)};
    d_.summary = "reorganize each series into overlapping segments of length W";
  }
  const TransformDescriptor& descriptor() const override { return d_; }

  PlanResult plan(std::span<const PlanInput> inputs, const TransformCall& call, const PlanContext& ctx) const override {
    const std::int64_t w = int_param(call.params, "W", 1);
    const std::int64_t stride = int_param(call.params, "stride", 1);
    PlanResult r;
    r.slots.resize(1);
    for (const auto& e : *inputs[0].objects) {
      if (!e.row_count) stats_unavailable("window", "row counts");
      const std::int64_t len = *e.row_count;
      if (len < w) continue;
      const std::int64_t count = (len - w) / stride + 1;
      for (std::int64_t k = 0; k < count; ++k) {
        const std::int64_t offset = k * stride;
        ObjectEntry out;
        out.object_id = ctx.mint(0, e.object_id + "@" + std::to_string(offset));
        out.labels = e.labels;
        out.source = SourceLink{{}, 0, e.object_id, offset, w};
        out.row_count = w;
        out.schema = e.schema;
        r.slots[0].push_back(std::move(out));
      }
    }
    return r;
  }

  Table compute_object(const ObjectEntry& entry, const TransformCall&, const json&,
                       const ObjectFetcher& fetch) const override {
    auto src = fetch(0, entry.source->object_id);
    const auto offset = static_cast<std::size_t>(*entry.source->offset);
    const auto len = static_cast<std::size_t>(*entry.source->length);
    if (offset + len > src->rows.size()) {
      throw Error(ErrorCode::SourceChanged, "segment exceeds source rows", {{"object_id", entry.source->object_id}});
    }
    Table out;
    out.schema = src->schema;
    out.rows.assign(src->rows.begin() + static_cast<std::ptrdiff_t>(offset),
                    src->rows.begin() + static_cast<std::ptrdiff_t>(offset + len));
    return out;
  }

 private:
  TransformDescriptor d_;
};

// ---- extract_features ------------------------------------------------------

class ExtractFeatures final : public Transform {
 public:
  ExtractFeatures() {
    d_.transform_id = "extract_features";
    d_.params = {param("stats", ParamType::StringList, true, {}, std::nullopt, {"mean", "std", "min", "max", "range"}),
                 param("columns", ParamType::StringList, true)};
    d_.summary = "replace each object by a one-row table of order-free statistics";
  }
  const TransformDescriptor& descriptor() const override { return d_; }

  void check_call(const TransformCall& call) const override {
    Transform::check_call(call);
    if (call.params["stats"].empty() || call.params["columns"].empty()) {
      param_error("stats", "feature list is empty");
    }
  }

  PlanResult plan(std::span<const PlanInput> inputs, const TransformCall& call, const PlanContext&) const override {
    PlanResult r;
    r.slots.resize(1);
    for (const auto& e : *inputs[0].objects) {
      ObjectEntry out = passthrough(e, 0);
      out.row_count = 1;
      out.schema = e.schema ? std::make_shared<const Schema>(output_schema(*e.schema, call, e.object_id)) : nullptr;
      r.slots[0].push_back(std::move(out));
    }
    return r;
  }

  Table compute_object(const ObjectEntry& entry, const TransformCall& call, const json&,
                       const ObjectFetcher& fetch) const override {
    auto src = fetch(0, entry.source->object_id);
    auto cols = resolve_columns(src->schema, strings(call.params, "columns"), entry.object_id);
    require_numeric(src->schema, cols, entry.object_id);
    Table out;
    out.schema = output_schema(src->schema, call, entry.object_id);
    Row row;
    for (auto c : cols) {
      ColumnStats st;
      for (const auto& r : src->rows) {
        if (auto v = number_of(r[c])) st.add(*v);
      }
      for (const auto& stat : strings(call.params, "stats")) {
        if (st.n == 0) {
          row.emplace_back(Null{});
        } else if (stat == "mean") {
          row.emplace_back(st.mean());
        } else if (stat == "std") {
          row.emplace_back(st.stddev());
        } else if (stat == "min") {
          row.emplace_back(st.min);
        } else if (stat == "max") {
          row.emplace_back(st.max);
        } else {
          row.emplace_back(st.max - st.min);
        }
      }
    }
    out.rows.push_back(std::move(row));
    return out;
  }

 private:
  static Schema output_schema(const Schema& s, const TransformCall& call, const std::string& oid) {
    auto cols = resolve_columns(s, strings(call.params, "columns"), oid);
    require_numeric(s, cols, oid);
    std::vector<Column> out;
    for (auto c : cols) {
      for (const auto& stat : strings(call.params, "stats")) {
        out.push_back(Column{s[c].name + "_" + stat, ColumnType::Float64, true});
      }
    }
    return Schema(std::move(out));
  }

  TransformDescriptor d_;
};

// ---- partition -------------------------------------------------------------

class Partition final : public Transform {
 public:
  Partition() {
    d_.transform_id = "partition";
    d_.output_arity = 3;
    d_.seeded = true;
    d_.params = {param("a", ParamType::Int, true, "percentage > 0", 1.0), param("b", ParamType::Int, true, "percentage > 0", 1.0),
                 param("c", ParamType::Int, true, "percentage > 0", 1.0)};
    d_.summary = "seeded random split into training, validation and testing slots (a+b+c = 100)";
  }
  const TransformDescriptor& descriptor() const override { return d_; }

  void check_call(const TransformCall& call) const override {
    Transform::check_call(call);
    const auto& p = call.params;
    if (p["a"].get<std::int64_t>() + p["b"].get<std::int64_t>() + p["c"].get<std::int64_t>() != 100) {
      param_error("a+b+c", "must equal 100");
    }
    if (!call.seed) param_error("seed", "is required for partition");
  }

  PlanResult plan(std::span<const PlanInput> inputs, const TransformCall& call, const PlanContext&) const override {
    const auto& objects = *inputs[0].objects;
    std::unordered_map<std::string, const ObjectEntry*> by_id;
    std::vector<std::string> ids;
    for (const auto& e : objects) {
      by_id[e.object_id] = &e;
      ids.push_back(e.object_id);
    }
    auto order = seeded_shuffle(std::move(ids), call.seed.value_or(0));
    auto sizes = partition_sizes(order.size(), call.params["a"].get<std::int64_t>(), call.params["b"].get<std::int64_t>(),
                                 call.params["c"].get<std::int64_t>());
    PlanResult r;
    r.slots.resize(3);
    std::size_t at = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t k = 0; k < sizes[s]; ++k, ++at) r.slots[s].push_back(passthrough(*by_id.at(order[at]), 0));
    }
    return r;
  }

  Table compute_object(const ObjectEntry& entry, const TransformCall&, const json&,
                       const ObjectFetcher& fetch) const override {
    return *fetch(0, entry.source->object_id);
  }

 private:
  TransformDescriptor d_;
};

// ---- sample ----------------------------------------------------------------

class Sample final : public Transform {
 public:
  Sample() {
    d_.transform_id = "sample";
    d_.seeded = true;
    d_.params = {param("strategy", ParamType::String, true, {}, std::nullopt,
                       {"uniform_grid", "uniform_random", "latin_hypercube"}),
                 param("n", ParamType::Int, true, "must be ≥1", 1.0), param("domain_columns", ParamType::StringList, true)};
    d_.summary = "select rows of each object by grid, random or Latin hypercube sampling over domain columns";
  }
  const TransformDescriptor& descriptor() const override { return d_; }

  void check_call(const TransformCall& call) const override {
    Transform::check_call(call);
    if (call.params["domain_columns"].empty()) param_error("domain_columns", "must name at least one column");
    if (string_param(call.params, "strategy") != "uniform_grid" && !call.seed) {
      param_error("seed", "is required for random sampling strategies");
    }
  }

  PlanResult plan(std::span<const PlanInput> inputs, const TransformCall& call, const PlanContext&) const override {
    const auto n = int_param(call.params, "n", 1);
    const bool grid = string_param(call.params, "strategy") == "uniform_grid";
    PlanResult r;
    r.slots.resize(1);
    for (const auto& e : *inputs[0].objects) {
      ObjectEntry out = passthrough(e, 0);
      if (e.schema) {
        auto cols = resolve_columns(*e.schema, strings(call.params, "domain_columns"), e.object_id);
        require_numeric(*e.schema, cols, e.object_id);
      }
      if (grid) {
        out.row_count.reset();
      } else if (e.row_count) {
        if (n > *e.row_count) too_many(n, *e.row_count, e.object_id);
        out.row_count = n;
      }
      r.slots[0].push_back(std::move(out));
    }
    return r;
  }

  Table compute_object(const ObjectEntry& entry, const TransformCall& call, const json&,
                       const ObjectFetcher& fetch) const override {
    auto src = fetch(0, entry.source->object_id);
    auto cols = resolve_columns(src->schema, strings(call.params, "domain_columns"), entry.object_id);
    require_numeric(src->schema, cols, entry.object_id);
    const auto n = static_cast<std::size_t>(int_param(call.params, "n", 1));
    const std::string strategy = string_param(call.params, "strategy");

    // Rows with a null in any domain column cannot be placed in the domain.
    std::vector<std::size_t> eligible;
    std::vector<std::vector<double>> coords;
    for (std::size_t r = 0; r < src->rows.size(); ++r) {
      std::vector<double> p;
      for (auto c : cols) {
        auto v = number_of(src->rows[r][c]);
        if (!v || std::isnan(*v)) break;
        p.push_back(*v);
      }
      if (p.size() != cols.size()) continue;
      eligible.push_back(r);
      coords.push_back(std::move(p));
    }

    std::vector<std::size_t> picked;  // indices into `eligible`
    if (strategy == "uniform_grid") {
      picked = uniform_grid(coords, n);
    } else {
      if (n > eligible.size()) too_many(static_cast<std::int64_t>(n), static_cast<std::int64_t>(eligible.size()), entry.object_id);
      Xoshiro256 rng(object_seed(*call.seed, entry.object_id));
      picked = strategy == "uniform_random" ? uniform_random(eligible.size(), n, rng) : latin_hypercube(coords, n, rng);
    }
    std::vector<std::size_t> rows;
    for (auto p : picked) rows.push_back(eligible[p]);
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());

    Table out;
    out.schema = src->schema;
    for (auto r : rows) out.rows.push_back(src->rows[r]);
    return out;
  }

 private:
  [[noreturn]] static void too_many(std::int64_t n, std::int64_t rows, const std::string& oid) {
    throw Error(ErrorCode::ParamError,
                "parameter 'n' " + std::to_string(n) + " exceeds the " + std::to_string(rows) + " rows of object " + oid,
                {{"key", "n"}, {"reason", "n > row count"}, {"object_id", oid}});
  }

  struct Bounds {
    std::vector<double> lo, hi;
  };

  static Bounds bounds_of(const std::vector<std::vector<double>>& coords, std::size_t dims) {
    Bounds b{std::vector<double>(dims, std::numeric_limits<double>::infinity()),
             std::vector<double>(dims, -std::numeric_limits<double>::infinity())};
    for (const auto& p : coords) {
      for (std::size_t d = 0; d < dims; ++d) {
        b.lo[d] = std::min(b.lo[d], p[d]);
        b.hi[d] = std::max(b.hi[d], p[d]);
      }
    }
    return b;
  }

  static double scaled_distance2(const std::vector<double>& p, const std::vector<double>& target, const Bounds& b) {
    double acc = 0;
    for (std::size_t d = 0; d < p.size(); ++d) {
      double span = b.hi[d] - b.lo[d];
      double diff = (p[d] - target[d]) / (span > 0 ? span : 1.0);
      acc += diff * diff;
    }
    return acc;
  }

  static std::size_t nearest(const std::vector<std::vector<double>>& coords, const std::vector<double>& target,
                             const Bounds& b, const std::vector<bool>* allowed) {
    std::size_t best = coords.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < coords.size(); ++i) {
      if (allowed && !(*allowed)[i]) continue;
      double d = scaled_distance2(coords[i], target, b);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }

  static std::vector<std::size_t> uniform_grid(const std::vector<std::vector<double>>& coords, std::size_t n) {
    if (coords.empty()) return {};
    const std::size_t dims = coords.front().size();
    // Points per axis: the smallest m with m^dims >= n.
    std::size_t m = 1;
    auto pow_ge = [&](std::size_t base) {
      std::size_t acc = 1;
      for (std::size_t d = 0; d < dims; ++d) {
        acc *= base;
        if (acc >= n) return true;
      }
      return acc >= n;
    };
    while (!pow_ge(m)) ++m;
    Bounds b = bounds_of(coords, dims);
    std::vector<std::size_t> out;
    std::vector<std::size_t> idx(dims, 0);
    for (;;) {
      std::vector<double> target(dims);
      for (std::size_t d = 0; d < dims; ++d) {
        target[d] = m == 1 ? (b.lo[d] + b.hi[d]) / 2
                           : b.lo[d] + (b.hi[d] - b.lo[d]) * static_cast<double>(idx[d]) / static_cast<double>(m - 1);
      }
      out.push_back(nearest(coords, target, b, nullptr));
      std::size_t d = dims;
      while (d > 0) {
        --d;
        if (++idx[d] < m) break;
        idx[d] = 0;
        if (d == 0) return out;
      }
      if (dims == 0) return out;
    }
  }

  static std::vector<std::size_t> uniform_random(std::size_t rows, std::size_t n, Xoshiro256& rng) {
    std::vector<std::size_t> perm(rows);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng.below(rows - i));
      std::swap(perm[i], perm[j]);
    }
    perm.resize(n);
    return perm;
  }

  static std::size_t stratum(double v, double lo, double hi, std::size_t n) {
    if (!(hi > lo)) return 0;
    auto s = static_cast<std::size_t>(std::floor((v - lo) / (hi - lo) * static_cast<double>(n)));
    return std::min(s, n - 1);
  }

  static std::vector<std::size_t> latin_hypercube(const std::vector<std::vector<double>>& coords, std::size_t n,
                                                  Xoshiro256& rng) {
    const std::size_t dims = coords.front().size();
    Bounds b = bounds_of(coords, dims);
    // One random permutation of the strata per dimension.
    std::vector<std::vector<std::size_t>> perms(dims, std::vector<std::size_t>(n));
    for (auto& p : perms) {
      std::iota(p.begin(), p.end(), 0);
      for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[static_cast<std::size_t>(rng.below(i))]);
    }
    std::vector<std::vector<std::size_t>> strata(coords.size(), std::vector<std::size_t>(dims));
    for (std::size_t i = 0; i < coords.size(); ++i) {
      for (std::size_t d = 0; d < dims; ++d) strata[i][d] = stratum(coords[i][d], b.lo[d], b.hi[d], n);
    }
    std::vector<bool> available(coords.size(), true);
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < n; ++k) {
      std::vector<double> target(dims);
      for (std::size_t d = 0; d < dims; ++d) {
        double width = (b.hi[d] - b.lo[d]) / static_cast<double>(n);
        target[d] = b.lo[d] + (static_cast<double>(perms[d][k]) + rng.unit()) * width;
      }
      // Prefer rows inside the design cell; snap to the nearest free row otherwise.
      std::vector<bool> in_cell(coords.size(), false);
      bool any = false;
      for (std::size_t i = 0; i < coords.size(); ++i) {
        if (!available[i]) continue;
        bool match = true;
        for (std::size_t d = 0; d < dims && match; ++d) match = strata[i][d] == perms[d][k];
        in_cell[i] = match;
        any = any || match;
      }
      std::size_t pick = nearest(coords, target, b, any ? &in_cell : &available);
      available[pick] = false;
      out.push_back(pick);
    }
    return out;
  }

  TransformDescriptor d_;
};

}  // namespace

std::vector<std::shared_ptr<const Transform>> builtin_transforms() {
  return {std::make_shared<Merge>(),         std::make_shared<Integrate>(),      std::make_shared<SelectColumns>(),
          std::make_shared<SelectLabels>(),  std::make_shared<Normalize>(),      std::make_shared<Window>(),
          std::make_shared<ExtractFeatures>(), std::make_shared<Partition>(),    std::make_shared<Sample>()};
}

}  // namespace vd
