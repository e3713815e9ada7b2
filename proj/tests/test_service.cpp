#include <doctest.h>

#include "http_session.hpp"
#include "support.hpp"

#include "vd/storage.hpp"
#include "vd/yaml_value.hpp"

#include <httplib.h>

#include <cstdio>
#include <sys/wait.h>

using namespace vd;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

httplib::Headers bearer(const std::string& token) { return {{"Authorization", "Bearer " + token}}; }

std::string register_body(const fs::path& dir, const std::string& name) {
  return json{{"uri", file_uri(dir.string())}, {"metadata", {{"name", name}}}}.dump();
}

struct CliResult {
  int status = -1;
  std::string out;
};

CliResult run_cli(const std::string& args, const fs::path& scratch) {
  const auto out_file = scratch / "cli.out";
  const std::string cmd = std::string(VD_CLI_PATH) + " " + args + " >" + out_file.string() + " 2>&1";
  int raw = std::system(cmd.c_str());
  CliResult r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = vdtest::read_file(out_file);
  return r;
}

}  // namespace

TEST_SUITE("service") {

TEST_CASE("register, create, read and delete over HTTP") {
  vdtest::TempDir dir;
  vdtest::write_fig2_farms(dir.path());
  Workspace ws;
  vdtest::ServiceThread server(ws);
  httplib::Client cli(server.base_url());

  auto r = cli.Post("/v1/datasets/explicit", register_body(dir / "farm-a", "farm-a"), "application/json");
  REQUIRE(r);
  CHECK(r->status == 201);
  const std::string a = json::parse(r->body)["id"];

  r = cli.Get("/v1/datasets/" + a);
  CHECK(r->status == 200);
  CHECK(json::parse(r->body)["object_count"] == 22);

  auto spec = vdtest::spec_yaml("sel", {a}, "select_columns", {{"columns", {"time", "sensor_1"}}});
  r = cli.Post("/v1/datasets/virtual", spec, "application/yaml");
  CHECK(r->status == 201);
  const std::string sel = json::parse(r->body)["id"];

  r = cli.Get("/v1/datasets?kind=virtual");
  CHECK(json::parse(r->body)["datasets"].size() == 1);
  r = cli.Get("/v1/datasets?name=farm");
  CHECK(json::parse(r->body)["datasets"].size() == 1);

  r = cli.Get("/v1/datasets/" + sel + "/objects?offset=20&limit=5");
  auto page = json::parse(r->body);
  CHECK(page["objects"].size() == 2);
  CHECK(page["total"] == 22);
  CHECK(page["next_offset"].is_null());
  r = cli.Get("/v1/datasets/" + sel + "/objects?limit=5");
  CHECK(json::parse(r->body)["next_offset"] == 5);

  r = cli.Get("/v1/datasets/" + sel + "/objects/a_event_000");
  CHECK(r->status == 200);
  CHECK(r->get_header_value("Content-Type") == "text/csv");
  CHECK(r->body.rfind("time,sensor_1\n", 0) == 0);

  r = cli.Post("/v1/datasets/" + sel + "/materialize", "", "application/json");
  auto m = json::parse(r->body);
  CHECK(m["stats"]["transforms_executed"] == 1);
  CHECK(m["objects"].size() == 22);

  r = cli.Get("/v1/datasets/" + sel + "/plan");
  CHECK(json::parse(r->body)["nodes"].size() == 2);
  r = cli.Get("/v1/datasets/" + a + "/lineage?direction=forward&depth=1");
  CHECK(json::parse(r->body)["edges"].size() == 1);

  r = cli.Delete("/v1/datasets/" + a);
  CHECK(r->status == 409);
  CHECK(json::parse(r->body)["error"]["code"] == "HAS_DEPENDENTS");
  r = cli.Delete("/v1/datasets/" + a + "?mode=cascade");
  CHECK(r->status == 200);
  CHECK(json::parse(r->body)["removed"].size() == 2);
  r = cli.Get("/v1/datasets/" + sel);
  CHECK(r->status == 404);
  CHECK(json::parse(r->body)["error"]["code"] == "NOT_FOUND");
}

TEST_CASE("error statuses follow the error codes") {
  vdtest::TempDir dir;
  vdtest::write_fig2_farms(dir.path());
  Workspace ws;
  vdtest::ServiceThread server(ws);
  httplib::Client cli(server.base_url());
  auto a = json::parse(cli.Post("/v1/datasets/explicit", register_body(dir / "farm-a", "a"), "application/json")->body)["id"]
               .get<std::string>();

  auto post_spec = [&](const std::string& body) { return cli.Post("/v1/datasets/virtual", body, "application/yaml"); };
  CHECK(post_spec("name: [unclosed")->status == 400);
  CHECK(post_spec(vdtest::spec_yaml("x", {"nope"}, "select_columns", {{"columns", {"time"}}}))->status == 422);
  CHECK(post_spec(vdtest::spec_yaml("x", {a}, "no_such", json::object()))->status == 422);
  auto r = post_spec(vdtest::spec_yaml("x", {a}, "select_columns", {{"columns", {"missing"}}}));
  CHECK(r->status == 422);
  CHECK(json::parse(r->body)["error"]["code"] == "UNKNOWN_COLUMN");
  CHECK(cli.Post("/v1/datasets/explicit", R"({"uri": "file:///definitely/not/here"})", "application/json")->status ==
        422);
  CHECK(cli.Post("/v1/datasets/explicit", R"({"url": "x"})", "application/json")->status == 400);
  CHECK(cli.Get("/v1/datasets/" + a + "/lineage?direction=up")->status == 400);
  CHECK(cli.Get("/v1/nothing")->status == 404);
}

TEST_CASE("YAML responses on request") {
  Workspace ws;
  vdtest::ServiceThread server(ws);
  httplib::Client cli(server.base_url());
  auto r = cli.Get("/v1/transforms", {{"Accept", "application/yaml"}});
  CHECK(r->get_header_value("Content-Type") == "application/yaml");
  auto doc = yaml::parse(r->body);
  CHECK(doc["transforms"].size() >= 9);
  r = cli.Get("/v1/transforms");
  CHECK(json::parse(r->body) == doc);
}

TEST_CASE("bearer tokens separate readers and writers") {
  vdtest::TempDir dir;
  vdtest::write_file(dir / "tokens", "# comment\nrtok reader alice\nwtok writer bob\n");
  Workspace ws;
  ServiceOptions o;
  o.tokens = load_tokens(dir / "tokens");
  o.audit_log = dir / "audit.log";
  vdtest::ServiceThread server(ws, o);
  httplib::Client cli(server.base_url());
  vdtest::write_fig2_farms(dir.path());
  const auto body = register_body(dir / "farm-a", "a");

  CHECK(cli.Get("/v1/datasets")->status == 401);
  CHECK(cli.Get("/v1/datasets", bearer("bogus"))->status == 401);
  CHECK(cli.Get("/v1/datasets", bearer("rtok"))->status == 200);
  auto r = cli.Post("/v1/datasets/explicit", bearer("rtok"), body, "application/json");
  CHECK(r->status == 403);
  CHECK(json::parse(r->body)["error"]["code"] == "FORBIDDEN");
  r = cli.Post("/v1/datasets/explicit", bearer("wtok"), body, "application/json");
  CHECK(r->status == 201);
  const std::string id = json::parse(r->body)["id"];
  CHECK(ws.get(id)->creator == "bob");

  CHECK(server.service().audit_lines() == 1);
  auto line = json::parse(vdtest::read_file(dir / "audit.log"));
  CHECK(line["principal"] == "bob");
  CHECK(line["verb"] == "register");
  CHECK(line["target"] == id);
}

TEST_CASE("idempotency key replays the first creation") {
  vdtest::TempDir dir;
  vdtest::write_fig2_farms(dir.path());
  Workspace ws;
  vdtest::ServiceThread server(ws);
  httplib::Client cli(server.base_url());
  auto a = json::parse(cli.Post("/v1/datasets/explicit", register_body(dir / "farm-a", "a"), "application/json")->body)["id"]
               .get<std::string>();
  const auto spec = vdtest::spec_yaml("sel", {a}, "select_columns", {{"columns", {"time"}}});
  httplib::Headers h{{"Idempotency-Key", "k-1"}};
  auto first = cli.Post("/v1/datasets/virtual", h, spec, "application/yaml");
  auto second = cli.Post("/v1/datasets/virtual", h, spec, "application/yaml");
  CHECK(first->status == 201);
  CHECK(second->status == 200);
  CHECK(json::parse(first->body)["id"] == json::parse(second->body)["id"]);
  SearchFilter virtuals;
  virtuals.kind = DatasetKind::Virtual;
  CHECK(ws.catalog().search(virtuals).size() == 1);
  const auto other = vdtest::spec_yaml("sel", {a}, "select_columns", {{"columns", {"sensor_1"}}});
  CHECK(cli.Post("/v1/datasets/virtual", h, other, "application/yaml")->status == 400);
  CHECK(server.service().audit_lines() == 2);
}

TEST_CASE("metrics and cache statistics") {
  vdtest::TempDir dir;
  Workspace ws;
  auto f = vdtest::build_fig2(ws, dir.path());
  vdtest::ServiceThread server(ws);
  httplib::Client cli(server.base_url());
  cli.Post("/v1/datasets/" + f.test + "/materialize", "{}", "application/json");
  cli.Post("/v1/datasets/" + f.test + "/materialize", "{}", "application/json");
  auto r = cli.Get("/v1/metrics");
  CHECK(r->status == 200);
  CHECK(r->body.find("vd_datasets_active 8\n") != std::string::npos);
  CHECK(r->body.find("vd_materializations_total 2\n") != std::string::npos);
  CHECK(r->body.find("vd_transforms_executed_total 3\n") != std::string::npos);
  CHECK(r->body.find("vd_cache_hits_total 3\n") != std::string::npos);
  auto s = json::parse(cli.Get("/v1/cache/stats")->body);
  CHECK(s["entries"] == 3);
  CHECK(s["hits"] == 3);
  CHECK(s["budget"] == Cache::kDefaultBudget);
}

TEST_CASE("HTTP session matches the library session") {
  vdtest::TempDir dir;
  vdtest::write_fig2_farms(dir.path());
  Workspace remote_ws;
  json remote;
  {
    vdtest::ServiceThread server(remote_ws);
    remote = vdtest::http_session(server.base_url(), dir.path());
  }
  Workspace local_ws;
  json local = vdtest::library_session(local_ws, dir.path());
  CHECK(remote["steps"].size() == 12);
  CHECK(remote == local);
}

TEST_CASE("configuration file and environment") {
  vdtest::TempDir dir;
  vdtest::write_file(dir / "vd.yaml", "addr: 0.0.0.0:9000\ndata_dir: data\ncache_budget_bytes: 1024\n");
  ::unsetenv("VD_ADDR");
  ::unsetenv("VD_DATA_DIR");
  ::setenv("VD_CACHE_BUDGET", "2048", 1);
  auto c = ServiceConfig::load(dir / "vd.yaml");
  ::unsetenv("VD_CACHE_BUDGET");
  CHECK(c.host() == "0.0.0.0");
  CHECK(c.port() == 9000);
  CHECK(*c.data_dir == dir / "data");
  CHECK(c.cache_budget == 2048);
  vdtest::write_file(dir / "bad.yaml", "adr: x\n");
  CHECK_THROWS_AS(ServiceConfig::load(dir / "bad.yaml"), Error);
}

}  // TEST_SUITE

TEST_SUITE("cli") {

TEST_CASE("vd talks to a running service") {
  vdtest::TempDir dir;
  vdtest::write_fig2_farms(dir.path());
  Workspace ws;
  vdtest::ServiceThread server(ws);
  const std::string srv = "--server " + server.base_url() + " ";

  auto r = run_cli(srv + "register " + file_uri((dir / "farm-a").string()) + " --name farm-a", dir.path());
  REQUIRE(r.status == 0);
  const std::string a = json::parse(r.out)["id"];

  vdtest::write_file(dir / "sel.yaml", vdtest::spec_yaml("sel", {a}, "select_columns", {{"columns", {"time"}}}));
  r = run_cli(srv + "create " + (dir / "sel.yaml").string(), dir.path());
  REQUIRE(r.status == 0);
  const std::string sel = json::parse(r.out)["id"];

  r = run_cli(srv + "ls --kind virtual", dir.path());
  CHECK(r.status == 0);
  CHECK(r.out.find(sel) != std::string::npos);

  r = run_cli(srv + "materialize " + sel, dir.path());
  CHECK(r.status == 0);
  CHECK(json::parse(r.out)["stats"]["transforms_executed"] == 1);

  r = run_cli(srv + "cat " + sel + " a_event_001", dir.path());
  CHECK(r.status == 0);
  CHECK(r.out.rfind("time\n", 0) == 0);

  r = run_cli(srv + "lineage " + sel, dir.path());
  CHECK(json::parse(r.out)["nodes"].size() == 2);

  r = run_cli(srv + "transforms", dir.path());
  CHECK(r.out.find("partition") != std::string::npos);

  r = run_cli(srv + "rm " + a, dir.path());
  CHECK(r.status == 1);
  CHECK(r.out.find("HAS_DEPENDENTS") != std::string::npos);
  r = run_cli(srv + "rm --cascade " + a, dir.path());
  CHECK(r.status == 0);

  r = run_cli(srv + "show 0123", dir.path());
  CHECK(r.status == 1);
  CHECK(run_cli("frobnicate", dir.path()).status == 2);
  CHECK(run_cli(srv + "show", dir.path()).status == 2);
  CHECK(run_cli("--server http://127.0.0.1:1 ls", dir.path()).status == 1);
}

}  // TEST_SUITE
