// vd: command-line front end. Every command except `serve` talks to a running
// service over HTTP. Exit status: 0 success, 1 API error, 2 usage error.

#include "vd/service.hpp"
#include "vd/workspace.hpp"

#include <CLI11.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

using nlohmann::json;

namespace {

struct ApiFailure {
  std::string message;
};

class Api {
 public:
  Api(std::string server, std::string token) : client_(server), token_(std::move(token)) {
    client_.set_read_timeout(600, 0);
  }

  json call(const std::string& method, const std::string& path, const std::string& body = {},
            const std::string& content_type = "application/json", httplib::Headers extra = {}) {
    auto text = raw(method, path, body, content_type, std::move(extra));
    return text.empty() ? json() : json::parse(text);
  }

  std::string raw(const std::string& method, const std::string& path, const std::string& body = {},
                  const std::string& content_type = "application/json", httplib::Headers headers = {}) {
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
    httplib::Result r;
    if (method == "GET") {
      r = client_.Get(path, headers);
    } else if (method == "POST") {
      r = client_.Post(path, headers, body, content_type);
    } else {
      r = client_.Delete(path, headers);
    }
    if (!r) throw ApiFailure{"cannot reach server: " + httplib::to_string(r.error())};
    if (r->status >= 400) {
      auto j = json::parse(r->body, nullptr, false);
      if (!j.is_discarded() && j.contains("error")) {
        throw ApiFailure{j["error"].value("code", "") + ": " + j["error"].value("message", "")};
      }
      throw ApiFailure{"HTTP " + std::to_string(r->status)};
    }
    return r->body;
  }

 private:
  httplib::Client client_;
  std::string token_;
};

std::string read_file(const std::string& path) {
  if (path == "-") {
    std::ostringstream ss;
    ss << std::cin.rdbuf();
    return ss.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ApiFailure{"cannot read " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string query(const std::vector<std::pair<std::string, std::string>>& params) {
  std::string q;
  for (const auto& [k, v] : params) {
    if (v.empty()) continue;
    q += (q.empty() ? "?" : "&") + k + "=" + httplib::detail::encode_query_param(v);
  }
  return q;
}

vd::Service* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

int serve(const std::optional<std::string>& config, const std::string& addr, const std::string& data_dir,
          const std::string& cache_budget, const std::string& token_file) {
  auto cfg = vd::ServiceConfig::load(config ? std::optional<std::filesystem::path>(*config) : std::nullopt);
  if (!addr.empty()) cfg.addr = addr;
  if (!data_dir.empty()) cfg.data_dir = std::filesystem::path(data_dir);
  if (!cache_budget.empty()) cfg.cache_budget = std::stoull(cache_budget);
  if (!token_file.empty()) {
    cfg.token_file = token_file;
    cfg.auth_enabled = true;
  }

  vd::WorkspaceOptions wo;
  wo.data_dir = cfg.data_dir;
  wo.cache_budget = cfg.cache_budget;
  vd::Workspace ws(wo);
  vd::ServiceOptions so;
  if (cfg.auth_enabled) {
    if (!cfg.token_file) throw vd::Error(vd::ErrorCode::BadRequest, "auth enabled without a token file");
    so.tokens = vd::load_tokens(*cfg.token_file);
  }
  if (cfg.data_dir) so.audit_log = *cfg.data_dir / "audit.log";
  vd::Service service(ws, so);
  int port = service.bind(cfg.host(), cfg.port());
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "vd listening on " << cfg.host() << ":" << port << "\n";
  service.run();
  g_service = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vd: data virtualization service"};
  app.require_subcommand(1);
  const char* env_server = std::getenv("VD_SERVER");
  const char* env_token = std::getenv("VD_TOKEN");
  std::string server = env_server ? env_server : "http://127.0.0.1:8470";
  std::string token = env_token ? env_token : "";
  app.add_option("--server", server, "Service base URL");
  app.add_option("--token", token, "Bearer token");

  std::string uri, format = "csv-dir", labels, name;
  std::vector<std::string> meta;
  auto* reg = app.add_subcommand("register", "Register a directory of CSV objects as an explicit dataset");
  reg->add_option("uri", uri, "Storage URI, e.g. file:///data/farm-a")->required();
  reg->add_option("--format", format);
  reg->add_option("--labels", labels, "Labels CSV (object_id,<key>...) readable by the server");
  reg->add_option("--name", name);
  reg->add_option("--meta", meta, "Metadata key=value");

  std::string spec_file, idem_key;
  auto* create = app.add_subcommand("create", "Create a virtual dataset from an SSVD document");
  create->add_option("spec", spec_file, "SSVD YAML file or - for stdin")->required();
  create->add_option("--idempotency-key", idem_key);

  std::string f_name, f_label, f_kind, f_transform, f_creator;
  auto* ls = app.add_subcommand("ls", "Search datasets");
  ls->add_option("--name", f_name);
  ls->add_option("--label", f_label, "key=value");
  ls->add_option("--kind", f_kind)->check(CLI::IsMember({"explicit", "virtual"}));
  ls->add_option("--transform", f_transform);
  ls->add_option("--creator", f_creator);

  std::string id;
  auto* show = app.add_subcommand("show", "Show a dataset record");
  show->add_option("id", id)->required();

  std::string direction = "backward", depth;
  auto* lineage = app.add_subcommand("lineage", "Show lineage");
  lineage->add_option("id", id)->required();
  lineage->add_option("--direction", direction)->check(CLI::IsMember({"backward", "forward"}));
  lineage->add_option("--depth", depth);

  bool cascade = false;
  auto* rm = app.add_subcommand("rm", "Remove a dataset from the catalog");
  rm->add_option("id", id)->required();
  rm->add_flag("--cascade", cascade, "Also remove every dependent");

  bool force = false;
  auto* mat = app.add_subcommand("materialize", "Materialize a dataset and print run statistics");
  mat->add_option("id", id)->required();
  mat->add_flag("--force", force, "Recompute even when cached");

  std::string oid;
  auto* cat = app.add_subcommand("cat", "Print one object as CSV, or the object index");
  cat->add_option("id", id)->required();
  cat->add_option("object_id", oid);

  auto* transforms = app.add_subcommand("transforms", "List registered transforms");

  std::optional<std::string> config;
  std::string addr, data_dir, cache_budget, token_file;
  auto* srv = app.add_subcommand("serve", "Run the HTTP service");
  srv->add_option("--config", config, "vd.yaml");
  srv->add_option("--addr", addr, "host:port");
  srv->add_option("--data-dir", data_dir);
  srv->add_option("--cache-budget", cache_budget, "Bytes")->check(CLI::NonNegativeNumber);
  srv->add_option("--token-file", token_file);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (srv->parsed()) return serve(config, addr, data_dir, cache_budget, token_file);

    Api api(server, token);
    json out;
    if (reg->parsed()) {
      json m = json::object();
      for (const auto& kv : meta) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) {
          std::cerr << "--meta expects key=value\n";
          return 2;
        }
        m[kv.substr(0, eq)] = kv.substr(eq + 1);
      }
      if (!name.empty()) m["name"] = name;
      json body = {{"uri", uri}, {"format", format}, {"metadata", m}};
      if (!labels.empty()) body["labels_file"] = labels;
      out = api.call("POST", "/v1/datasets/explicit", body.dump());
    } else if (create->parsed()) {
      httplib::Headers h;
      if (!idem_key.empty()) h.emplace("Idempotency-Key", idem_key);
      out = api.call("POST", "/v1/datasets/virtual", read_file(spec_file), "application/yaml", h);
    } else if (ls->parsed()) {
      out = api.call("GET", "/v1/datasets" + query({{"name", f_name},
                                                    {"label", f_label},
                                                    {"kind", f_kind},
                                                    {"transform", f_transform},
                                                    {"creator", f_creator}}));
      for (const auto& d : out["datasets"]) {
        std::cout << d["id"].get<std::string>() << "  " << d["kind"].get<std::string>() << "  "
                  << d["object_count"] << "  " << d["name"].get<std::string>() << "\n";
      }
      return 0;
    } else if (show->parsed()) {
      out = api.call("GET", "/v1/datasets/" + id);
    } else if (lineage->parsed()) {
      out = api.call("GET", "/v1/datasets/" + id + "/lineage" + query({{"direction", direction}, {"depth", depth}}));
    } else if (rm->parsed()) {
      out = api.call("DELETE", "/v1/datasets/" + id + (cascade ? "?mode=cascade" : "?mode=restrict"));
    } else if (mat->parsed()) {
      out = api.call("POST", "/v1/datasets/" + id + "/materialize", json{{"force_recompute", force}}.dump());
    } else if (cat->parsed()) {
      if (oid.empty()) {
        out = api.call("GET", "/v1/datasets/" + id + "/objects");
      } else {
        std::cout << api.raw("GET", "/v1/datasets/" + id + "/objects/" + httplib::detail::encode_query_param(oid));
        return 0;
      }
    } else if (transforms->parsed()) {
      out = api.call("GET", "/v1/transforms");
      for (const auto& d : out["transforms"]) {
        std::cout << d["transform_id"].get<std::string>() << "  in=" << d["input_arity"].get<std::string>()
                  << "  out=" << d["output_arity"] << "  " << d["summary"].get<std::string>() << "\n";
      }
      return 0;
    }
    std::cout << out.dump(2) << "\n";
    return 0;
  } catch (const ApiFailure& f) {
    std::cerr << "error: " << f.message << "\n";
    return 1;
  } catch (const vd::Error& e) {
    std::cerr << "error: " << vd::code_name(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
