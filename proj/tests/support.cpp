#include "support.hpp"

#include "vd/csv.hpp"
#include "vd/storage.hpp"
#include "vd/util.hpp"
#include "vd/yaml_value.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace vdtest {

TempDir::TempDir() {
  std::string tmpl = (fs::temp_directory_path() / "vdtest-XXXXXX").string();
  if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_csv_dir(const fs::path& dir, const std::map<std::string, vd::Table>& objects) {
  fs::create_directories(dir);
  for (const auto& [id, t] : objects) write_file(dir / (id + ".csv"), vd::csv::serialize(t));
}

vd::Table make_table(std::vector<vd::Column> cols, std::vector<vd::Row> rows) {
  vd::Table t;
  t.schema = vd::Schema(std::move(cols));
  t.rows = std::move(rows);
  return t;
}

void write_farm(const fs::path& dir, const FarmSpec& farm, std::size_t shared, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> value(0.0, 100.0);
  std::vector<vd::Column> cols{{"time", vd::ColumnType::Int64, false}};
  for (std::size_t i = 1; i < shared; ++i) cols.push_back({"sensor_" + std::to_string(i), vd::ColumnType::Float64, false});
  for (std::size_t i = shared; i < farm.columns; ++i) {
    cols.push_back({farm.name + "_extra_" + std::to_string(i), vd::ColumnType::Float64, false});
  }
  std::map<std::string, vd::Table> objects;
  for (std::size_t o = 0; o < farm.objects; ++o) {
    std::vector<vd::Row> rows;
    for (std::int64_t r = 0; r < 6; ++r) {
      vd::Row row{r};
      for (std::size_t c = 1; c < cols.size(); ++c) row.push_back(std::round(value(rng) * 1000) / 1000);
      rows.push_back(std::move(row));
    }
    char id[64];
    std::snprintf(id, sizeof(id), "%s_event_%03zu", farm.name.c_str(), o);
    objects[id] = make_table(cols, std::move(rows));
  }
  write_csv_dir(dir, objects);
}

void write_fig2_farms(const fs::path& root) {
  write_farm(root / "farm-a", {"a", 22, 80}, 59, 1);
  write_farm(root / "farm-b", {"b", 38, 90}, 59, 2);
  write_farm(root / "farm-c", {"c", 35, 100}, 59, 3);
}

Fig2 build_fig2(vd::Workspace& ws, const fs::path& root, std::uint64_t seed) {
  if (!fs::exists(root / "farm-a")) write_fig2_farms(root);
  Fig2 f;
  f.a = ws.register_explicit(vd::file_uri((root / "farm-a").string()), "csv-dir", std::nullopt, {{"name", "farm-a"}});
  f.b = ws.register_explicit(vd::file_uri((root / "farm-b").string()), "csv-dir", std::nullopt, {{"name", "farm-b"}});
  f.c = ws.register_explicit(vd::file_uri((root / "farm-c").string()), "csv-dir", std::nullopt, {{"name", "farm-c"}});
  f.merged = ws.create_virtual_text(spec_yaml("merged", {f.a, f.b, f.c}, "merge", nlohmann::json::object()));
  std::vector<std::string> cols{"time"};
  for (int i = 1; i <= 10; ++i) cols.push_back("sensor_" + std::to_string(i));
  f.selected = ws.create_virtual_text(spec_yaml("selected", {f.merged}, "select_columns", {{"columns", cols}}));
  const nlohmann::json split = {{"a", 70}, {"b", 15}, {"c", 15}};
  const std::vector<std::string> slots{"train", "validation", "test"};
  f.train = ws.create_virtual_text(spec_yaml("train", {f.selected}, "partition", split, seed, slots, 0));
  f.validation = ws.create_virtual_text(spec_yaml("validation", {f.selected}, "partition", split, seed, slots, 1));
  f.test = ws.create_virtual_text(spec_yaml("test", {f.selected}, "partition", split, seed, slots, 2));
  return f;
}

void write_series(const fs::path& dir, const std::string& object_id, std::size_t rows) {
  std::string text = "t,value\n";
  text.reserve(rows * 24);
  for (std::size_t i = 0; i < rows; ++i) {
    text += std::to_string(i);
    text += ',';
    text += vd::format_double(std::sin(static_cast<double>(i) * 0.01) * 10.0);
    text += '\n';
  }
  write_file(dir / (object_id + ".csv"), text);
}

void write_script(const fs::path& p, const std::string& body) {
  write_file(p, body);
  fs::permissions(p, fs::perms::owner_all | fs::perms::group_read | fs::perms::group_exec | fs::perms::others_read |
                         fs::perms::others_exec);
}

std::string spec_yaml(const std::string& name, const std::vector<std::string>& inputs, const std::string& transform,
                      const nlohmann::json& params, std::optional<std::uint64_t> seed,
                      const std::vector<std::string>& outputs, std::size_t output_index) {
  nlohmann::json doc = {{"spec_version", "ssvd/1"}, {"name", name}, {"outputs", outputs}, {"output_index", output_index}};
  nlohmann::json in = nlohmann::json::array();
  for (const auto& i : inputs) in.push_back({{"dataset", i}});
  doc["inputs"] = in;
  doc["transform"] = {{"id", transform}, {"params", params}};
  if (seed) doc["transform"]["seed"] = *seed;
  return vd::yaml::emit_canonical(doc);
}

bool cells_close(const vd::Cell& a, const vd::Cell& b, double rel_tol) {
  const auto* x = std::get_if<double>(&a);
  const auto* y = std::get_if<double>(&b);
  if (x && y) {
    if (std::isnan(*x) || std::isnan(*y)) return std::isnan(*x) && std::isnan(*y);
    if (*x == *y) return true;
    double scale = std::max({std::fabs(*x), std::fabs(*y), 1e-300});
    return std::fabs(*x - *y) / scale <= rel_tol || std::fabs(*x - *y) <= rel_tol;
  }
  return a == b;
}

std::string table_diff(const vd::Table& a, const vd::Table& b, double rel_tol) {
  if (!(a.schema == b.schema)) {
    std::string sa, sb;
    for (const auto& c : a.schema.columns()) sa += c.name + ":" + std::string(vd::type_name(c.type)) + (c.nullable ? "?" : "") + " ";
    for (const auto& c : b.schema.columns()) sb += c.name + ":" + std::string(vd::type_name(c.type)) + (c.nullable ? "?" : "") + " ";
    return "schema differs: [" + sa + "] vs [" + sb + "]";
  }
  if (a.rows.size() != b.rows.size()) {
    return "row count differs: " + std::to_string(a.rows.size()) + " vs " + std::to_string(b.rows.size());
  }
  for (std::size_t r = 0; r < a.rows.size(); ++r) {
    for (std::size_t c = 0; c < a.schema.size(); ++c) {
      if (!cells_close(a.rows[r][c], b.rows[r][c], rel_tol)) {
        return "cell (" + std::to_string(r) + "," + a.schema[c].name + ") differs: " + vd::format_cell(a.rows[r][c]) +
               " vs " + vd::format_cell(b.rows[r][c]);
      }
    }
  }
  return {};
}

std::string digest_of(const vd::Table& t) { return vd::to_hex(vd::sha256(vd::csv::serialize(t))); }

namespace {

nlohmann::json random_scalar(std::mt19937_64& rng) {
  static const std::vector<std::string> words{"alpha", "two words", "quote\"d", "colon: x", "2024", "true", "", "ünï"};
  switch (rng() % 5) {
    case 0: return static_cast<std::int64_t>(rng() % 2001) - 1000;
    case 1: return std::uniform_real_distribution<double>(-1e6, 1e6)(rng);
    case 2: return rng() % 2 == 0;
    default: return words[rng() % words.size()];
  }
}

nlohmann::json random_value(std::mt19937_64& rng, int depth) {
  auto pick = rng() % 6;
  if (depth > 2 || pick < 3) return random_scalar(rng);
  if (pick == 3) {
    nlohmann::json a = nlohmann::json::array();
    for (std::size_t i = rng() % 4; i > 0; --i) a.push_back(random_value(rng, depth + 1));
    return a;
  }
  nlohmann::json o = nlohmann::json::object();
  for (std::size_t i = rng() % 4; i > 0; --i) o["k" + std::to_string(rng() % 20)] = random_value(rng, depth + 1);
  return o;
}

}  // namespace

nlohmann::json random_spec_value(std::mt19937_64& rng) {
  static const std::vector<std::string> transforms{"merge", "partition", "window", "normalize", "my_plugin"};
  nlohmann::json doc = {{"spec_version", rng() % 2 ? "ssvd/1" : "ssvd/1.0"}, {"name", "spec-" + std::to_string(rng() % 1000)}};
  if (rng() % 2) doc["description"] = "generated: #" + std::to_string(rng() % 100);
  nlohmann::json inputs = nlohmann::json::array();
  for (std::size_t i = 1 + rng() % 3; i > 0; --i) {
    inputs.push_back({{"dataset", rng() % 2 ? vd::random_id128() : "file:///data/farm-" + std::to_string(i)}});
  }
  doc["inputs"] = inputs;
  nlohmann::json params = nlohmann::json::object();
  for (std::size_t i = rng() % 5; i > 0; --i) params["p" + std::to_string(rng() % 50)] = random_value(rng, 0);
  doc["transform"] = {{"id", transforms[rng() % transforms.size()]}, {"params", params}};
  if (rng() % 2) doc["transform"]["seed"] = rng() % 3 == 0 ? rng() : rng() % 1000;
  std::size_t outs = 1 + rng() % 3;
  doc["outputs"] = nlohmann::json::array();
  for (std::size_t i = 0; i < outs; ++i) doc["outputs"].push_back("slot" + std::to_string(i));
  doc["output_index"] = rng() % outs;
  if (rng() % 2) doc["metadata"] = {{"owner", "team-" + std::to_string(rng() % 9)}, {"tags", random_value(rng, 1)}};
  return doc;
}

std::string shuffled_yaml(const nlohmann::json& v, std::mt19937_64& rng) {
  if (v.is_object()) {
    std::vector<std::string> keys;
    for (auto it = v.begin(); it != v.end(); ++it) keys.push_back(it.key());
    std::shuffle(keys.begin(), keys.end(), rng);
    std::string out = "{";
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (i) out += ", ";
      out += nlohmann::json(keys[i]).dump() + ": " + shuffled_yaml(v.at(keys[i]), rng);
    }
    return out + "}";
  }
  if (v.is_array()) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + shuffled_yaml(v[i], rng);
    return out + "]";
  }
  return v.dump();
}

}  // namespace vdtest
