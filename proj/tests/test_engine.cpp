#include <doctest.h>

#include "support.hpp"

#include "vd/csv.hpp"
#include "vd/error.hpp"
#include "vd/storage.hpp"

#include <algorithm>

using namespace vd;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Internal;
}

std::vector<std::string> digests(const MaterializedHandle& h) {
  std::vector<std::string> out;
  for (const auto& o : h.objects) out.push_back(o.object_id + ":" + vdtest::digest_of(*o.payload));
  return out;
}

std::string key_of(Workspace& ws, const std::string& id) {
  auto plan = ws.engine().resolve(id);
  return plan.nodes[plan.target_node].cache_key;
}

}  // namespace

TEST_SUITE("engine") {

TEST_CASE("plan of the test split has three sources and three transforms") {
  vdtest::TempDir dir;
  Workspace ws;
  auto f = vdtest::build_fig2(ws, dir.path());
  auto plan = ws.engine().resolve(f.test);
  CHECK(plan.nodes.size() == 6);
  CHECK(plan.transform_nodes() == 3);
  CHECK(plan.target_node == plan.nodes.size() - 1);
  CHECK(plan.target_slot == 2);
  // Inputs precede dependents.
  for (std::size_t i = 0; i < plan.nodes.size(); ++i) {
    for (auto [n, s] : plan.nodes[i].inputs) CHECK(n < i);
  }
  CHECK(plan.nodes.back().transform->id == "partition");
  CHECK(plan.to_json()["nodes"].size() == 6);
}

TEST_CASE("diamond dependency resolves the shared node once") {
  vdtest::TempDir dir;
  Workspace ws;
  auto f = vdtest::build_fig2(ws, dir.path());
  auto left = ws.create_virtual_text(
      vdtest::spec_yaml("left", {f.merged}, "select_columns", {{"columns", {"time", "sensor_1", "sensor_2"}}}));
  auto right = ws.create_virtual_text(
      vdtest::spec_yaml("right", {f.merged}, "select_columns", {{"columns", {"time", "sensor_1", "sensor_3"}}}));
  auto top = ws.create_virtual_text(vdtest::spec_yaml("top", {left, right}, "merge", json::object()));
  auto plan = ws.engine().resolve(top);
  auto merges = std::count_if(plan.nodes.begin(), plan.nodes.end(), [&](const PlanNode& n) {
    return std::find(n.dataset_ids.begin(), n.dataset_ids.end(), f.merged) != n.dataset_ids.end();
  });
  CHECK(merges == 1);
  CHECK(plan.nodes.size() == 3 + 4);
  auto h = ws.materialize(top);
  CHECK(h.stats.transforms_executed == 4);
  CHECK(h.objects.size() == 2 * 95);
  CHECK(h.objects[0].payload->schema.names() == std::vector<std::string>{"time", "sensor_1"});
}

TEST_CASE("first materialization computes, the second is served from cache") {
  vdtest::TempDir dir;
  Workspace ws;
  auto f = vdtest::build_fig2(ws, dir.path());
  auto first = ws.materialize(f.test);
  CHECK(first.stats.cache_hits == 0);
  CHECK(first.stats.transforms_executed == 3);
  CHECK(first.stats.nodes_total == 6);
  CHECK(first.stats.bytes_written > 0);
  CHECK(first.objects.size() == 15);

  auto second = ws.materialize(f.test);
  CHECK(second.stats.transforms_executed == 0);
  CHECK(second.stats.cache_hits == 3);
  CHECK(second.stats.bytes_written == 0);
  CHECK(digests(first) == digests(second));

  // Siblings share the partition node.
  auto train = ws.materialize(f.train);
  CHECK(train.stats.transforms_executed == 0);
  CHECK(train.objects.size() == 66);

  auto forced = ws.materialize(f.test, {true});
  CHECK(forced.stats.transforms_executed == 3);
  CHECK(digests(forced) == digests(first));
  CHECK(ws.engine().counters().materializations == 4);
}

TEST_CASE("budget zero recomputes every run with identical output") {
  vdtest::TempDir dir;
  WorkspaceOptions o;
  o.cache_budget = 0;
  Workspace ws(o);
  auto f = vdtest::build_fig2(ws, dir.path());
  auto a = ws.materialize(f.test);
  auto b = ws.materialize(f.test);
  CHECK(a.stats.transforms_executed == 3);
  CHECK(b.stats.transforms_executed == 3);
  CHECK(b.stats.cache_hits == 0);
  CHECK(ws.cache().stats().entries == 0);
  CHECK(digests(a) == digests(b));
}

TEST_CASE("eviction keeps the cache within budget") {
  vdtest::TempDir dir;
  Workspace ws;
  auto f = vdtest::build_fig2(ws, dir.path());
  auto before = ws.materialize(f.test);
  const auto full = ws.cache().stats().bytes;
  ws.cache().set_budget(full / 2);
  auto s = ws.cache().stats();
  CHECK(s.evictions > 0);
  CHECK(s.bytes <= full / 2);
  auto again = ws.materialize(f.test);
  CHECK(again.stats.cache_hits < 3);
  CHECK(digests(again) == digests(before));
  CHECK(ws.cache().stats().bytes <= full / 2);
}

TEST_CASE("cache keys follow the computation and the source content") {
  vdtest::TempDir dir;
  Workspace ws;
  auto f = vdtest::build_fig2(ws, dir.path());
  const json split = {{"a", 70}, {"b", 15}, {"c", 15}};
  const std::vector<std::string> slots{"train", "validation", "test"};
  auto same = ws.create_virtual_text(vdtest::spec_yaml("again", {f.selected}, "partition", split, 42, slots, 2));
  CHECK(key_of(ws, same) == key_of(ws, f.test));
  auto other = ws.create_virtual_text(vdtest::spec_yaml("other", {f.selected}, "partition", split, 43, slots, 2));
  CHECK(key_of(ws, other) != key_of(ws, f.test));

  // Re-registering unchanged data gives the same key; changed data gives a new one.
  const auto src = dir / "farm-a";
  auto sel = [&](const std::string& id) {
    return ws.create_virtual_text(vdtest::spec_yaml("sel", {id}, "select_columns", {{"columns", {"time"}}}));
  };
  auto base = sel(f.a);
  auto again = sel(ws.register_explicit(file_uri(src.string())));
  CHECK(key_of(ws, base) == key_of(ws, again));

  const auto victim = src / "a_event_000.csv";
  auto text = vdtest::read_file(victim);
  const auto last = text.rfind('\n', text.size() - 2);
  vdtest::write_file(victim, text + text.substr(last + 1));
  CHECK(code_of([&] { ws.materialize(base); }) == ErrorCode::SourceChanged);
  auto changed = sel(ws.register_explicit(file_uri(src.string())));
  CHECK(key_of(ws, changed) != key_of(ws, base));
  CHECK(ws.materialize(changed).objects.size() == 22);
}

TEST_CASE("open_object computes a single window segment") {
  vdtest::TempDir dir;
  vdtest::write_series(dir / "series", "s1", 1000);
  Workspace ws;
  auto src = ws.register_explicit(file_uri((dir / "series").string()));
  auto win = ws.create_virtual_text(vdtest::spec_yaml("win", {src}, "window", {{"W", 100}, {"stride", 100}}));
  auto rec = ws.get(win);
  REQUIRE(rec->objects->size() == 10);
  const auto& entry = (*rec->objects)[3];
  Table seg = ws.open_object(win, entry.object_id);
  REQUIRE(seg.rows.size() == 100);
  CHECK(std::get<std::int64_t>(seg.rows[0][0]) == 300);
  CHECK(std::get<std::int64_t>(seg.rows[99][0]) == 399);
  CHECK(ws.engine().counters().materializations == 0);
  auto h = ws.materialize(win);
  CHECK(*h.object(entry.object_id).payload == seg);
  CHECK(code_of([&] { ws.open_object(win, "nope"); }) == ErrorCode::NotFound);
}

TEST_CASE("crashing plugin leaves no cache entry") {
  vdtest::TempDir dir;
  const auto plugins = dir / "data" / "transforms.d";
  fs::create_directories(plugins);
  vdtest::write_script(plugins / "crash.sh", "#!/bin/sh\ncat >/dev/null\necho boom >&2\nexit 4\n");
  vdtest::write_file(plugins / "crash.yaml", "id: crash\nexec: crash.sh\n");
  vdtest::write_script(plugins / "identity.sh", "#!/bin/sh\nexec cat\n");
  vdtest::write_file(plugins / "identity.yaml", "id: identity\nexec: identity.sh\n");
  WorkspaceOptions o;
  o.data_dir = dir / "data";
  Workspace ws(o);
  auto f = vdtest::build_fig2(ws, dir / "farms");

  auto crash = ws.create_virtual_text(vdtest::spec_yaml("crash", {f.selected}, "crash", json::object()));
  const auto entries = ws.cache().stats().entries;
  try {
    ws.materialize(crash);
    FAIL("expected PluginCrashed");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PluginCrashed);
    CHECK(e.details()["status"] == 4);
  }
  CHECK_FALSE(ws.cache().contains(key_of(ws, crash)));
  // The merge and select nodes were cached; the crashed node was not.
  CHECK(ws.cache().stats().entries == entries + 2);

  auto ident = ws.create_virtual_text(vdtest::spec_yaml("ident", {f.selected}, "identity", json::object()));
  auto a = ws.materialize(ident);
  auto b = ws.materialize(f.selected);
  REQUIRE(a.objects.size() == b.objects.size());
  for (std::size_t i = 0; i < a.objects.size(); ++i) {
    CHECK(csv::serialize(*a.objects[i].payload) == csv::serialize(*b.objects[i].payload));
  }
}

TEST_CASE("materialization survives a restart through the disk cache") {
  vdtest::TempDir dir;
  WorkspaceOptions o;
  o.data_dir = dir / "data";
  std::vector<std::string> first;
  std::string test_id;
  {
    Workspace ws(o);
    auto f = vdtest::build_fig2(ws, dir / "farms");
    test_id = f.test;
    first = digests(ws.materialize(f.test));
  }
  Workspace ws(o);
  auto h = ws.materialize(test_id);
  CHECK(h.stats.transforms_executed == 0);
  CHECK(h.stats.cache_hits == 3);
  CHECK(digests(h) == first);
}

}  // TEST_SUITE
