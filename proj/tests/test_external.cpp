#include <doctest.h>

#include "support.hpp"

#include "vd/csv.hpp"
#include "vd/error.hpp"
#include "vd/external.hpp"

using namespace vd;
using nlohmann::json;

namespace {

std::shared_ptr<ExternalTransform> plugin(const vdtest::TempDir& dir, const std::string& id, const std::string& script,
                                          const std::string& extra = {}, ExternalOptions opts = {}) {
  vdtest::write_script(dir / (id + ".sh"), "#!/bin/sh\n" + script + "\n");
  vdtest::write_file(dir / (id + ".yaml"), "id: " + id + "\nexec: " + id + ".sh\n" + extra);
  return load_external_transform(dir / (id + ".yaml"), opts);
}

std::vector<std::vector<Table>> call(const Transform& t, const Table& payload, json params = json::object(),
                                     std::optional<std::uint64_t> seed = std::nullopt) {
  InputObjects in{"d", "d", {{"o1", {}, std::nullopt, std::make_shared<const Table>(payload)}}};
  std::vector<InputObjects> inputs{in};
  auto r = execute(t, inputs, {params, seed}, {});
  std::vector<std::vector<Table>> out;
  for (const auto& slot : r.slots) {
    out.emplace_back();
    for (const auto& o : slot) out.back().push_back(*o.payload);
  }
  return out;
}

ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Internal;
}

const Table kPayload = csv::parse_table("id,name,score\n1,\"a,b\",1.5\n2,\"\",\n3,\"---\",-0.25\n");

}  // namespace

TEST_SUITE("external") {

TEST_CASE("identity plugin reproduces its input byte-exactly") {
  vdtest::TempDir dir;
  auto t = plugin(dir, "identity", "exec cat");
  auto out = call(*t, kPayload);
  REQUIRE(out.size() == 1);
  REQUIRE(out[0].size() == 1);
  CHECK(csv::serialize(out[0][0]) == csv::serialize(kPayload));
  CHECK(out[0][0] == kPayload);
}

TEST_CASE("crashing plugin is PluginCrashed with stderr excerpt") {
  vdtest::TempDir dir;
  auto t = plugin(dir, "crash", "echo boom >&2\nexit 3");
  try {
    call(*t, kPayload);
    FAIL("expected PluginCrashed");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PluginCrashed);
    CHECK(e.details()["status"] == 3);
    CHECK(e.details()["stderr"].get<std::string>().find("boom") != std::string::npos);
  }
}

TEST_CASE("wrong block count or bad CSV is ProtocolViolation") {
  vdtest::TempDir dir;
  auto two = plugin(dir, "two", "cat; echo ---; echo 'a'; echo 1");
  CHECK(code_of([&] { call(*two, kPayload); }) == ErrorCode::ProtocolViolation);
  auto ragged = plugin(dir, "ragged", "cat >/dev/null; printf 'a,b\\n1\\n'");
  CHECK(code_of([&] { call(*ragged, kPayload); }) == ErrorCode::ProtocolViolation);
}

TEST_CASE("multi-output plugin") {
  vdtest::TempDir dir;
  auto t = plugin(dir, "split", "cat >/dev/null; printf 'a\\n1\\n---\\nb\\n2\\n'", "output_arity: 2\n");
  auto out = call(*t, kPayload);
  REQUIRE(out.size() == 2);
  CHECK(out[1][0].schema.names() == std::vector<std::string>{"b"});
}

TEST_CASE("timeout kills the process") {
  vdtest::TempDir dir;
  ExternalOptions opts;
  opts.timeout = std::chrono::milliseconds(200);
  auto t = plugin(dir, "slow", "sleep 5", {}, opts);
  auto start = std::chrono::steady_clock::now();
  CHECK(code_of([&] { call(*t, kPayload); }) == ErrorCode::Timeout);
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(4));
}

TEST_CASE("params arrive as sorted key=value arguments") {
  CHECK(ExternalTransform::encode_args({{"z", 1}, {"a", "x"}, {"l", {1, 2}}, {"f", 0.5}}, 7) ==
        std::vector<std::string>{"a=x", "f=0.5", "l=1,2", "z=1", "seed=7"});
  vdtest::TempDir dir;
  auto t = plugin(dir, "echoargs", "cat >/dev/null; echo arg; for a in \"$@\"; do echo \"\\\"$a\\\"\"; done",
                  "params:\n  level: int\n  mode: {type: string, required: true}\n");
  auto out = call(*t, kPayload, {{"mode", "fast"}, {"level", 3}});
  REQUIRE(out[0][0].rows.size() == 2);
  CHECK(std::get<std::string>(out[0][0].rows[0][0]) == "level=3");
  CHECK(std::get<std::string>(out[0][0].rows[1][0]) == "mode=fast");
  CHECK(code_of([&] { t->check_call({{{"level", 3}}, std::nullopt}); }) == ErrorCode::ParamError);
}

TEST_CASE("environment is restricted to the allowlist") {
  ::setenv("VD_TEST_SECRET", "leak", 1);
  vdtest::TempDir dir;
  auto t = plugin(dir, "env", "cat >/dev/null; echo v; echo \"x${VD_TEST_SECRET}\"");
  auto out = call(*t, kPayload);
  CHECK(std::get<std::string>(out[0][0].rows[0][0]) == "x");
  ::unsetenv("VD_TEST_SECRET");
}

TEST_CASE("plugin files are validated and loaded from a directory") {
  vdtest::TempDir dir;
  vdtest::write_file(dir / "bad.yaml", "id: bad\nexec: x\nunknown: 1\n");
  CHECK(code_of([&] { load_external_transform(dir / "bad.yaml", {}); }) == ErrorCode::BadRequest);
  vdtest::fs::remove(dir / "bad.yaml");
  plugin(dir, "identity", "exec cat", "summary: copies its input\n");
  TransformRegistry reg;
  CHECK(reg.load_plugins(dir.path()) == 1);
  CHECK(reg.find("identity")->summary == "copies its input");
  CHECK(code_of([&] { reg.load_plugins(dir.path()); }) == ErrorCode::DuplicateTransform);
}

}  // TEST_SUITE
