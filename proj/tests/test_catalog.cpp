#include <doctest.h>

#include "catalog_ops.hpp"
#include "support.hpp"

#include "vd/error.hpp"
#include "vd/util.hpp"
#include "vd/workspace.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <thread>

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

struct Fixture {
  vdtest::TempDir dir;
  Workspace ws;
  vdtest::Fig2 f;
  Fixture() { f = vdtest::build_fig2(ws, dir.path()); }
};

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_SUITE("catalog") {

TEST_CASE("explicit registration records the object index") {
  vdtest::TempDir dir;
  vdtest::write_file(dir / "d/o1.csv", "x\n1\n2\n");
  vdtest::write_file(dir / "d/o2.csv", "x\n3\n");
  vdtest::write_file(dir / "labels.csv", "object_id,split,site\no1,a,north\n");
  Workspace ws;
  auto id = ws.register_explicit(file_uri((dir / "d").string()), "csv-dir", dir / "labels.csv", {{"owner", "me"}}, "alice");
  auto rec = ws.get(id);
  CHECK(is_id128(id));
  CHECK(rec->kind == DatasetKind::Explicit);
  CHECK(rec->name == "d");
  CHECK(rec->creator == "alice");
  REQUIRE(rec->objects->size() == 2);
  CHECK((*rec->objects)[0].labels == Labels{{"site", "north"}, {"split", "a"}});
  CHECK((*rec->objects)[1].row_count == 1);
  CHECK(rec->content_digest == source_digest(*rec->objects));

  vdtest::write_file(dir / "bad.csv", "object_id,split\nnope,a\n");
  CHECK(code_of([&] { ws.register_explicit(file_uri((dir / "d").string()), "csv-dir", dir / "bad.csv"); }) ==
        ErrorCode::BadRequest);
  fs::create_directories(dir / "empty");
  CHECK(code_of([&] { ws.register_explicit(file_uri((dir / "empty").string())); }) == ErrorCode::EmptyDataset);
  CHECK(code_of([&] { ws.register_explicit("file:///no/such/dir"); }) == ErrorCode::UnreadableSource);
}

TEST_CASE("three-farm pipeline shapes") {
  Fixture fx;
  auto& ws = fx.ws;
  auto merged = ws.get(fx.f.merged);
  CHECK(merged->objects->size() == 95);
  CHECK(merged->notes["columns"].size() == 59);
  std::set<std::string> ids;
  for (const auto& e : *merged->objects) {
    ids.insert(e.object_id);
    REQUIRE(e.source);
    CHECK(e.schema->size() == 59);
  }
  CHECK(ids.size() == 95);
  CHECK(ws.get(fx.f.train)->objects->size() == 66);
  CHECK(ws.get(fx.f.validation)->objects->size() == 14);
  CHECK(ws.get(fx.f.test)->objects->size() == 15);
  CHECK(ws.get(fx.f.train)->node_digest == ws.get(fx.f.test)->node_digest);
  CHECK(ws.get(fx.f.train)->content_digest != ws.get(fx.f.test)->content_digest);
}

TEST_CASE("search") {
  Fixture fx;
  auto& cat = fx.ws.catalog();
  SearchFilter by_transform;
  by_transform.transform_id = "partition";
  CHECK(cat.search(by_transform).size() == 3);
  SearchFilter by_name;
  by_name.name_substring = "farm";
  auto farms = cat.search(by_name);
  REQUIRE(farms.size() == 3);
  CHECK(farms[0]->id == fx.f.a);  // ordered by creation
  SearchFilter virt;
  virt.kind = DatasetKind::Virtual;
  CHECK(cat.search(virt).size() == 5);
  SearchFilter both;
  both.kind = DatasetKind::Virtual;
  both.name_substring = "t";  // selected, train, validation, test
  CHECK(cat.search(both).size() == 4);
  SearchFilter none;
  none.creator = "nobody";
  CHECK(cat.search(none).empty());
}

TEST_CASE("search by label matches metadata and object labels") {
  vdtest::TempDir dir;
  vdtest::write_file(dir / "d/o1.csv", "x\n1\n");
  vdtest::write_file(dir / "labels.csv", "object_id,split\no1,a\n");
  Workspace ws;
  auto a = ws.register_explicit(file_uri((dir / "d").string()), "csv-dir", dir / "labels.csv");
  auto b = ws.register_explicit(file_uri((dir / "d").string()), "csv-dir", std::nullopt, {{"team", "wind"}});
  SearchFilter f;
  f.label = std::pair<std::string, std::string>{"split", "a"};
  auto r = ws.catalog().search(f);
  REQUIRE(r.size() == 1);
  CHECK(r[0]->id == a);
  f.label = std::pair<std::string, std::string>{"team", "wind"};
  r = ws.catalog().search(f);
  REQUIRE(r.size() == 1);
  CHECK(r[0]->id == b);
}

TEST_CASE("lineage") {
  Fixture fx;
  auto& ws = fx.ws;
  auto back = ws.lineage(fx.f.test, Direction::Backward);
  CHECK(back.nodes.size() == 6);
  CHECK(as_set(back.nodes) == std::set<std::string>{fx.f.test, fx.f.selected, fx.f.merged, fx.f.a, fx.f.b, fx.f.c});
  CHECK(back.edges.size() == 5);
  auto first = std::find_if(back.edges.begin(), back.edges.end(), [&](const LineageEdge& e) { return e.to == fx.f.test; });
  REQUIRE(first != back.edges.end());
  CHECK(first->via == "partition");
  CHECK(first->from == fx.f.selected);

  auto one = ws.lineage(fx.f.test, Direction::Backward, 1);
  CHECK(one.nodes == std::vector<std::string>{fx.f.test, fx.f.selected});

  auto fwd = ws.lineage(fx.f.a, Direction::Forward);
  CHECK(as_set(fwd.nodes) ==
        std::set<std::string>{fx.f.a, fx.f.merged, fx.f.selected, fx.f.train, fx.f.validation, fx.f.test});
  CHECK(code_of([&] { ws.lineage("missing", Direction::Backward); }) == ErrorCode::NotFound);
}

TEST_CASE("removal modes") {
  Fixture fx;
  auto& ws = fx.ws;
  CHECK(code_of([&] { ws.remove(fx.f.selected); }) == ErrorCode::HasDependents);
  try {
    ws.remove(fx.f.selected);
  } catch (const Error& e) {
    CHECK(e.details()["dependents"].size() == 3);
  }
  CHECK(ws.remove(fx.f.train) == std::vector<std::string>{fx.f.train});
  CHECK(code_of([&] { ws.get(fx.f.train); }) == ErrorCode::NotFound);
  CHECK(ws.catalog().find_any(fx.f.train)->status == RecordStatus::Removed);
  // Lineage of a removed node still answers.
  CHECK(ws.lineage(fx.f.train, Direction::Backward).nodes.size() == 6);

  // merge with three partition children, cascade
  vdtest::TempDir dir2;
  Workspace ws2;
  auto g = vdtest::build_fig2(ws2, dir2.path());
  auto m2 = ws2.create_virtual_text(vdtest::spec_yaml("m2", {g.a, g.b}, "merge", json::object()));
  std::vector<std::string> kids;
  for (std::size_t s = 0; s < 3; ++s) {
    kids.push_back(ws2.create_virtual_text(vdtest::spec_yaml("k" + std::to_string(s), {m2}, "partition",
                                                             {{"a", 70}, {"b", 15}, {"c", 15}}, 7,
                                                             {"train", "validation", "test"}, s)));
  }
  CHECK(code_of([&] { ws2.remove(m2); }) == ErrorCode::HasDependents);
  auto removed = ws2.remove(m2, RemoveMode::Cascade);
  REQUIRE(removed.size() == 4);
  CHECK(removed[0] == m2);
  CHECK(as_set(removed) == std::set<std::string>{m2, kids[0], kids[1], kids[2]});
  // Explicit files are never touched.
  CHECK(fs::exists(dir2 / "farm-a"));
  CHECK(ws2.get(g.a)->active());
}

TEST_CASE("cascade order puts parents before children") {
  Fixture fx;
  auto removed = fx.ws.remove(fx.f.merged, RemoveMode::Cascade);
  REQUIRE(removed.size() == 5);
  auto pos = [&](const std::string& id) { return std::find(removed.begin(), removed.end(), id) - removed.begin(); };
  CHECK(pos(fx.f.merged) < pos(fx.f.selected));
  CHECK(pos(fx.f.selected) < pos(fx.f.train));
  CHECK(pos(fx.f.selected) < pos(fx.f.test));
}

TEST_CASE("cycles, reused ids and stale validation") {
  Fixture fx;
  auto& ws = fx.ws;
  auto spec = ssvd::parse_spec(vdtest::spec_yaml("again", {fx.f.selected}, "select_columns", {{"columns", {"time"}}}));
  CHECK(code_of([&] { ws.create_virtual(spec, "", fx.f.selected); }) == ErrorCode::CycleDetected);
  CHECK(code_of([&] { ws.create_virtual(spec, "", fx.f.merged); }) == ErrorCode::CycleDetected);
  CHECK(code_of([&] { ws.create_virtual(spec, "", fx.f.train); }) == ErrorCode::BadRequest);
  auto validated = ssvd::validate_spec(spec, ws.registry(), ws.catalog());
  ws.create_virtual(spec);
  CHECK(code_of([&] { ws.catalog().create_virtual(validated); }) == ErrorCode::ValidationStale);
  auto missing = spec;
  missing.inputs = {{"0123456789abcdef0123456789abcdef"}};
  CHECK(code_of([&] { ws.create_virtual(missing); }) == ErrorCode::UnknownDataset);
}

TEST_CASE("inputs may be referenced by storage uri") {
  Fixture fx;
  auto uri = fx.ws.get(fx.f.a)->uri;
  auto id = fx.ws.create_virtual_text(vdtest::spec_yaml("by-uri", {uri}, "select_columns", {{"columns", {"time"}}}));
  CHECK(fx.ws.get(id)->input_ids == std::vector<std::string>{fx.f.a});
}

TEST_CASE("random create/remove keeps the graph sound") {
  auto r = vdtest::run_catalog_ops(11, 300);
  INFO(r.message);
  CHECK(r.ok);
  CHECK(r.creates > 0);
  CHECK(r.restrict_refusals > 0);
}

TEST_CASE("records survive a restart through log and snapshot") {
  vdtest::TempDir data;
  vdtest::TempDir farms;
  vdtest::Fig2 f;
  std::vector<json> before;
  {
    WorkspaceOptions o;
    o.data_dir = data.path();
    Workspace ws(o);
    ws.catalog().snapshot_every = 4;
    f = vdtest::build_fig2(ws, farms.path());
    ws.remove(f.train);
    for (const auto& r : ws.catalog().all(true)) {
      auto j = r->to_json();
      j["objects"] = json::array();
      for (const auto& e : *r->objects) j["objects"].push_back(object_entry_json(e));
      before.push_back(j);
    }
  }
  CHECK(fs::exists(data / "catalog/snapshot.yaml"));
  WorkspaceOptions o;
  o.data_dir = data.path();
  Workspace ws(o);
  std::vector<json> after;
  for (const auto& r : ws.catalog().all(true)) {
    auto j = r->to_json();
    j["objects"] = json::array();
    for (const auto& e : *r->objects) j["objects"].push_back(object_entry_json(e));
    after.push_back(j);
  }
  CHECK(before == after);
  CHECK(ws.lineage(f.test, Direction::Backward).nodes.size() == 6);
  CHECK(code_of([&] { ws.get(f.train); }) == ErrorCode::NotFound);
  // New records keep sequencing after the restored ones.
  auto extra = ws.create_virtual_text(vdtest::spec_yaml("extra", {f.test}, "select_columns", {{"columns", {"time"}}}));
  CHECK(ws.catalog().all().back()->id == extra);
}

TEST_CASE("concurrent creates stay consistent") {
  Fixture fx;
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 5; ++i) {
        auto text = vdtest::spec_yaml("c" + std::to_string(t) + "_" + std::to_string(i), {fx.f.test}, "select_columns",
                                      {{"columns", {"time"}}});
        fx.ws.create_virtual_text(text);
        ++ok;
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(ok == 40);
  CHECK(fx.ws.lineage(fx.f.test, Direction::Forward, 1).nodes.size() == 41);
}

}  // TEST_SUITE
