#include "vd/service.hpp"

#include "vd/csv.hpp"
#include "vd/util.hpp"
#include "vd/yaml_value.hpp"

#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace vd {

// ---- config ----------------------------------------------------------------

namespace {

std::uint64_t parse_budget(const std::string& text) {
  auto v = parse_int64(text);
  if (!v || *v < 0) throw Error(ErrorCode::BadRequest, "cache budget must be a non-negative integer", {{"value", text}});
  return static_cast<std::uint64_t>(*v);
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "cannot read '" + p.string() + "'", {{"path", p.string()}});
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ServiceConfig ServiceConfig::load(const std::optional<fs::path>& file) {
  ServiceConfig c;
  if (file) {
    json doc = yaml::parse(read_text(*file));
    if (!doc.is_object()) throw Error(ErrorCode::SyntaxError, "config must be a mapping");
    for (auto it = doc.begin(); it != doc.end(); ++it) {
      const std::string& k = it.key();
      const json& v = it.value();
      if (k == "addr") {
        c.addr = v.get<std::string>();
      } else if (k == "data_dir") {
        fs::path p = v.get<std::string>();
        c.data_dir = p.is_relative() ? file->parent_path() / p : p;
      } else if (k == "cache_budget_bytes") {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
          throw Error(ErrorCode::SyntaxError, "cache_budget_bytes must be a non-negative integer");
        }
        c.cache_budget = v.get<std::uint64_t>();
      } else if (k == "auth") {
        c.auth_enabled = v.value("enabled", false);
        if (v.contains("token_file")) {
          fs::path p = v["token_file"].get<std::string>();
          c.token_file = p.is_relative() ? file->parent_path() / p : p;
        }
      } else {
        throw Error(ErrorCode::UnknownField, "unknown config key '" + k + "'", {{"path", k}});
      }
    }
  }
  c.apply_env();
  return c;
}

void ServiceConfig::apply_env() {
  if (const char* v = std::getenv("VD_ADDR")) addr = v;
  if (const char* v = std::getenv("VD_DATA_DIR")) data_dir = fs::path(v);
  if (const char* v = std::getenv("VD_CACHE_BUDGET")) cache_budget = parse_budget(v);
}

std::string ServiceConfig::host() const {
  auto colon = addr.rfind(':');
  return colon == std::string::npos ? addr : addr.substr(0, colon);
}

int ServiceConfig::port() const {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos) return 8470;
  auto p = parse_int64(addr.substr(colon + 1));
  if (!p || *p < 0 || *p > 65535) throw Error(ErrorCode::BadRequest, "bad port in addr '" + addr + "'");
  return static_cast<int>(*p);
}

std::map<std::string, Principal> load_tokens(const fs::path& file) {
  std::map<std::string, Principal> out;
  std::istringstream in(read_text(file));
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string token, role, name;
    if (!(fields >> token) || token[0] == '#') continue;
    fields >> role >> name;
    Principal p;
    if (role == "reader") {
      p.role = Role::Reader;
    } else if (role == "writer") {
      p.role = Role::Writer;
    } else {
      throw Error(ErrorCode::SyntaxError, "token role must be reader or writer", {{"role", role}});
    }
    p.name = name.empty() ? role + "-" + token.substr(0, std::min<std::size_t>(6, token.size())) : name;
    out[token] = p;
  }
  return out;
}

// ---- errors ----------------------------------------------------------------

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateColumn:
    case ErrorCode::RaggedRow:
    case ErrorCode::ParseError:
    case ErrorCode::SyntaxError:
    case ErrorCode::MissingField:
    case ErrorCode::UnknownField:
    case ErrorCode::BadVersion:
    case ErrorCode::BadRequest:
      return 400;
    case ErrorCode::Unauthorized:
      return 401;
    case ErrorCode::Forbidden:
      return 403;
    case ErrorCode::NotFound:
      return 404;
    case ErrorCode::ValidationStale:
    case ErrorCode::CycleDetected:
    case ErrorCode::HasDependents:
    case ErrorCode::SourceChanged:
    case ErrorCode::DuplicateTransform:
    case ErrorCode::BrokenLineage:
      return 409;
    case ErrorCode::UnknownDataset:
    case ErrorCode::UnknownTransform:
    case ErrorCode::ParamError:
    case ErrorCode::ArityMismatch:
    case ErrorCode::UnreadableSource:
    case ErrorCode::EmptyDataset:
    case ErrorCode::StatsUnavailable:
    case ErrorCode::NoCommonColumns:
    case ErrorCode::MissingKey:
    case ErrorCode::UnpairedObject:
    case ErrorCode::UnknownColumn:
    case ErrorCode::UnknownLabelKey:
    case ErrorCode::NonNumericColumn:
    case ErrorCode::TransformFailed:
      return 422;
    case ErrorCode::PluginCrashed:
    case ErrorCode::ProtocolViolation:
    case ErrorCode::Timeout:
    case ErrorCode::CacheCorrupt:
    case ErrorCode::Internal:
      return 500;
  }
  return 500;
}

json error_body(const Error& e) {
  return {{"error", {{"code", code_name(e.code())}, {"message", e.what()}, {"details", e.details()}}}};
}

// ---- service ---------------------------------------------------------------

namespace {

struct Reply {
  int status = 200;
  json body;
  std::string text;  // used instead of body when content_type is set
  std::string content_type;

  Reply(int s, json b) : status(s), body(std::move(b)) {}
  Reply(int s, std::string t, std::string type) : status(s), text(std::move(t)), content_type(std::move(type)) {}
};

struct Context {
  const httplib::Request& req;
  Principal principal;

  std::string param(const std::string& key) const {
    return req.has_param(key) ? req.get_param_value(key) : std::string{};
  }
};

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json v = yaml::parse(req.body);
  if (v.is_null()) return json::object();
  return v;
}

std::string object_digest(const Table& t) { return to_hex(sha256(csv::serialize(t))); }

}  // namespace

struct Service::Impl {
  Workspace& ws;
  ServiceOptions options;
  httplib::Server server;

  std::mutex audit_mu;
  std::uint64_t audit_count = 0;
  std::mutex idem_mu;
  std::map<std::string, std::pair<std::string, std::string>> idempotency;  // key -> (canonical spec, id)
  std::atomic<std::uint64_t> requests{0};
  std::atomic<std::uint64_t> errors{0};

  Impl(Workspace& w, ServiceOptions o) : ws(w), options(std::move(o)) { install(); }

  void audit(const Principal& who, const std::string& verb, const std::string& target) {
    std::lock_guard lock(audit_mu);
    ++audit_count;
    if (!options.audit_log) return;
    json line = {{"time", format_timestamp(Timestamp{now_micros()})},
                 {"principal", who.name},
                 {"verb", verb},
                 {"target", target}};
    std::ofstream out(*options.audit_log, std::ios::app);
    out << line.dump() << '\n';
  }

  Principal authenticate(const httplib::Request& req, bool mutating) const {
    if (options.tokens.empty()) return Principal{"anonymous", Role::Writer};
    const std::string header = req.get_header_value("Authorization");
    const std::string prefix = "Bearer ";
    if (header.compare(0, prefix.size(), prefix) != 0) {
      throw Error(ErrorCode::Unauthorized, "missing bearer token");
    }
    auto it = options.tokens.find(header.substr(prefix.size()));
    if (it == options.tokens.end()) throw Error(ErrorCode::Unauthorized, "unknown bearer token");
    if (mutating && it->second.role != Role::Writer) {
      throw Error(ErrorCode::Forbidden, "principal '" + it->second.name + "' may not modify datasets",
                  {{"principal", it->second.name}});
    }
    return it->second;
  }

  static void send(const httplib::Request& req, httplib::Response& res, const Reply& r) {
    res.status = r.status;
    if (!r.content_type.empty()) {
      auto body = std::make_shared<std::string>(r.text);
      res.set_content_provider(body->size(), r.content_type,
                               [body](std::size_t offset, std::size_t length, httplib::DataSink& sink) {
                                 sink.write(body->data() + offset, std::min<std::size_t>(length, 1 << 16));
                                 return true;
                               });
      return;
    }
    const std::string accept = req.get_header_value("Accept");
    if (accept.find("yaml") != std::string::npos) {
      res.set_content(yaml::emit_canonical(r.body), "application/yaml");
    } else {
      res.set_content(r.body.dump(), "application/json");
    }
  }

  using Handler = std::function<Reply(Context&)>;

  httplib::Server::Handler wrap(bool mutating, Handler fn) {
    return [this, mutating, fn](const httplib::Request& req, httplib::Response& res) {
      ++requests;
      try {
        Context ctx{req, authenticate(req, mutating)};
        send(req, res, fn(ctx));
      } catch (const Error& e) {
        ++errors;
        send(req, res, Reply{http_status(e.code()), error_body(e)});
      } catch (const std::exception& e) {
        ++errors;
        send(req, res, Reply{500, error_body(Error(ErrorCode::Internal, e.what()))});
      }
    };
  }

  void install() {
    server.Post("/v1/datasets/explicit", wrap(true, [this](Context& c) { return register_explicit(c); }));
    server.Post("/v1/datasets/virtual", wrap(true, [this](Context& c) { return create_virtual(c); }));
    server.Get("/v1/datasets", wrap(false, [this](Context& c) { return search(c); }));
    server.Get(R"(/v1/datasets/([^/]+))", wrap(false, [this](Context& c) {
                 return Reply{200, ws.get(c.req.matches[1])->to_json()};
               }));
    server.Get(R"(/v1/datasets/([^/]+)/lineage)", wrap(false, [this](Context& c) { return lineage(c); }));
    server.Delete(R"(/v1/datasets/([^/]+))", wrap(true, [this](Context& c) { return remove(c); }));
    server.Get(R"(/v1/datasets/([^/]+)/objects)", wrap(false, [this](Context& c) { return objects(c); }));
    server.Get(R"(/v1/datasets/([^/]+)/objects/([^/]+))", wrap(false, [this](Context& c) {
                 Table t = ws.open_object(c.req.matches[1], c.req.matches[2]);
                 return Reply{200, csv::serialize(t), "text/csv"};
               }));
    server.Post(R"(/v1/datasets/([^/]+)/materialize)", wrap(true, [this](Context& c) { return materialize(c); }));
    server.Get(R"(/v1/datasets/([^/]+)/plan)", wrap(false, [this](Context& c) {
                 return Reply{200, ws.engine().resolve(c.req.matches[1]).to_json()};
               }));
    server.Get("/v1/transforms", wrap(false, [this](Context&) {
                 json list = json::array();
                 for (const auto& d : ws.registry().list()) list.push_back(d.to_json());
                 return Reply{200, {{"transforms", list}}};
               }));
    server.Get("/v1/cache/stats", wrap(false, [this](Context&) {
                 json s = ws.engine().cache_stats().to_json();
                 s["budget"] = ws.cache().budget();
                 return Reply{200, s};
               }));
    server.Get("/v1/metrics", wrap(false, [this](Context&) {
                 return Reply{200, metrics(), "text/plain; version=0.0.4"};
               }));
    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty()) return;
      Error e(res.status == 404 ? ErrorCode::NotFound : ErrorCode::BadRequest,
              "no route for " + req.method + " " + req.path);
      res.set_content(error_body(e).dump(), "application/json");
    });
  }

  Reply register_explicit(Context& c) {
    json body = parse_body(c.req);
    if (!body.is_object()) throw Error(ErrorCode::BadRequest, "body must be a mapping");
    for (auto it = body.begin(); it != body.end(); ++it) {
      if (it.key() != "uri" && it.key() != "format" && it.key() != "metadata" && it.key() != "labels_file") {
        throw Error(ErrorCode::UnknownField, "unknown field '" + it.key() + "'", {{"path", it.key()}});
      }
    }
    if (!body.contains("uri") || !body["uri"].is_string()) {
      throw Error(ErrorCode::MissingField, "missing field 'uri'", {{"path", "uri"}});
    }
    std::optional<fs::path> labels;
    if (body.contains("labels_file") && body["labels_file"].is_string()) labels = body["labels_file"].get<std::string>();
    std::string id = ws.register_explicit(body["uri"].get<std::string>(), body.value("format", "csv-dir"), labels,
                                          body.value("metadata", json::object()), c.principal.name);
    audit(c.principal, "register", id);
    return Reply{201, {{"id", id}}};
  }

  Reply create_virtual(Context& c) {
    auto spec = ssvd::parse_spec(c.req.body);
    const std::string key = c.req.get_header_value("Idempotency-Key");
    if (key.empty()) {
      std::string id = ws.create_virtual(spec, c.principal.name);
      audit(c.principal, "create", id);
      return Reply{201, {{"id", id}}};
    }
    const std::string canonical = ssvd::canonical_serialize(spec);
    std::lock_guard lock(idem_mu);
    if (auto it = idempotency.find(key); it != idempotency.end()) {
      if (it->second.first != canonical) {
        throw Error(ErrorCode::BadRequest, "Idempotency-Key was already used for a different spec",
                    {{"idempotency_key", key}});
      }
      return Reply{200, {{"id", it->second.second}, {"replayed", true}}};
    }
    std::string id = ws.create_virtual(spec, c.principal.name);
    idempotency[key] = {canonical, id};
    audit(c.principal, "create", id);
    return Reply{201, {{"id", id}}};
  }

  Reply search(Context& c) {
    SearchFilter f;
    if (c.req.has_param("name")) f.name_substring = c.param("name");
    if (c.req.has_param("kind")) {
      const auto k = c.param("kind");
      if (k != "explicit" && k != "virtual") throw Error(ErrorCode::BadRequest, "kind must be explicit or virtual");
      f.kind = k == "explicit" ? DatasetKind::Explicit : DatasetKind::Virtual;
    }
    if (c.req.has_param("transform")) f.transform_id = c.param("transform");
    if (c.req.has_param("creator")) f.creator = c.param("creator");
    if (c.req.has_param("label")) {
      const auto l = c.param("label");
      auto sep = l.find('=');
      if (sep == std::string::npos) sep = l.find(':');
      if (sep == std::string::npos) throw Error(ErrorCode::BadRequest, "label filter must be key=value");
      f.label = std::make_pair(l.substr(0, sep), l.substr(sep + 1));
    }
    json list = json::array();
    for (const auto& r : ws.catalog().search(f)) list.push_back(r->to_json());
    return Reply{200, {{"datasets", list}}};
  }

  Reply lineage(Context& c) {
    Direction d = Direction::Backward;
    if (c.req.has_param("direction")) {
      const auto v = c.param("direction");
      if (v == "forward") {
        d = Direction::Forward;
      } else if (v != "backward") {
        throw Error(ErrorCode::BadRequest, "direction must be backward or forward");
      }
    }
    std::optional<std::size_t> depth;
    if (c.req.has_param("depth") && c.param("depth") != "unlimited") {
      auto v = parse_int64(c.param("depth"));
      if (!v || *v < 0) throw Error(ErrorCode::BadRequest, "depth must be a non-negative integer");
      depth = static_cast<std::size_t>(*v);
    }
    return Reply{200, ws.lineage(c.req.matches[1], d, depth).to_json()};
  }

  Reply remove(Context& c) {
    RemoveMode mode = RemoveMode::Restrict;
    if (c.req.has_param("mode")) {
      const auto v = c.param("mode");
      if (v == "cascade") {
        mode = RemoveMode::Cascade;
      } else if (v != "restrict") {
        throw Error(ErrorCode::BadRequest, "mode must be restrict or cascade");
      }
    }
    const std::string id = c.req.matches[1];
    auto removed = ws.remove(id, mode);
    audit(c.principal, "remove", id);
    return Reply{200, {{"removed", removed}}};
  }

  Reply objects(Context& c) {
    auto rec = ws.get(c.req.matches[1]);
    const auto& idx = *rec->objects;
    std::size_t offset = 0, limit = idx.size();
    if (c.req.has_param("offset")) {
      auto v = parse_int64(c.param("offset"));
      if (!v || *v < 0) throw Error(ErrorCode::BadRequest, "offset must be a non-negative integer");
      offset = std::min<std::size_t>(static_cast<std::size_t>(*v), idx.size());
    }
    if (c.req.has_param("limit")) {
      auto v = parse_int64(c.param("limit"));
      if (!v || *v < 1) throw Error(ErrorCode::BadRequest, "limit must be a positive integer");
      limit = static_cast<std::size_t>(*v);
    }
    std::size_t end = std::min(idx.size(), offset + std::min(limit, idx.size() - offset));
    json list = json::array();
    for (std::size_t i = offset; i < end; ++i) list.push_back(object_entry_json(idx[i]));
    json out = {{"objects", list}, {"total", idx.size()}, {"offset", offset}};
    out["next_offset"] = end < idx.size() ? json(end) : json(nullptr);
    return Reply{200, out};
  }

  Reply materialize(Context& c) {
    json body = parse_body(c.req);
    MaterializeOptions o;
    if (body.is_object() && body.contains("force_recompute")) o.force_recompute = body["force_recompute"].get<bool>();
    const std::string id = c.req.matches[1];
    auto h = ws.materialize(id, o);
    json digests = json::array();
    for (const auto& obj : h.objects) {
      digests.push_back({{"object_id", obj.object_id}, {"digest", object_digest(*obj.payload)}});
    }
    audit(c.principal, "materialize", id);
    return Reply{200, {{"id", id}, {"stats", h.stats.to_json()}, {"objects", digests}}};
  }

  std::string metrics() {
    std::size_t active = 0, virtual_count = 0;
    for (const auto& r : ws.catalog().all(false)) {
      ++active;
      if (r->kind == DatasetKind::Virtual) ++virtual_count;
    }
    auto cs = ws.engine().cache_stats();
    auto ec = ws.engine().counters();
    std::uint64_t audits;
    {
      std::lock_guard lock(audit_mu);
      audits = audit_count;
    }
    std::ostringstream out;
    auto line = [&](const char* name, std::uint64_t v) { out << name << ' ' << v << '\n'; };
    line("vd_datasets_active", active);
    line("vd_datasets_virtual", virtual_count);
    line("vd_catalog_generation", ws.catalog().generation());
    line("vd_cache_entries", cs.entries);
    line("vd_cache_bytes", cs.bytes);
    line("vd_cache_budget_bytes", ws.cache().budget());
    line("vd_cache_hits_total", cs.hits);
    line("vd_cache_misses_total", cs.misses);
    line("vd_cache_evictions_total", cs.evictions);
    line("vd_materializations_total", ec.materializations);
    line("vd_transforms_executed_total", ec.transforms_executed);
    line("vd_cache_bytes_written_total", ec.bytes_written);
    line("vd_objects_opened_total", ec.objects_opened);
    line("vd_http_requests_total", requests.load());
    line("vd_http_errors_total", errors.load());
    line("vd_audit_lines_total", audits);
    return out.str();
  }
};

Service::Service(Workspace& workspace, ServiceOptions options)
    : impl_(std::make_unique<Impl>(workspace, std::move(options))) {}

Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
  if (port == 0) {
    int p = impl_->server.bind_to_any_port(host);
    if (p < 0) throw Error(ErrorCode::Internal, "cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw Error(ErrorCode::Internal, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void Service::run() { impl_->server.listen_after_bind(); }

void Service::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

std::uint64_t Service::audit_lines() const {
  std::lock_guard lock(impl_->audit_mu);
  return impl_->audit_count;
}

std::string Service::metrics_text() const { return impl_->metrics(); }

}  // namespace vd
