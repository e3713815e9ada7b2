#pragma once

#include "vd/model.hpp"
#include "vd/workspace.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace vdtest {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

void write_file(const fs::path& p, const std::string& text);
std::string read_file(const fs::path& p);

/// Writes each table as `<dir>/<object id>.csv`.
void write_csv_dir(const fs::path& dir, const std::map<std::string, vd::Table>& objects);

vd::Table make_table(std::vector<vd::Column> cols, std::vector<vd::Row> rows);

/// Three wind-farm style datasets whose schemas share exactly `shared` columns.
struct FarmSpec {
  std::string name;
  std::size_t objects;
  std::size_t columns;
};
void write_farm(const fs::path& dir, const FarmSpec& farm, std::size_t shared, std::uint64_t seed);

/// The three-farm pipeline: farms of 80/90/100 columns sharing 59, holding
/// 22/38/35 objects, merged, reduced to a column subset, then split 70/15/15.
struct Fig2 {
  std::string a, b, c, merged, selected, train, validation, test;
};
void write_fig2_farms(const fs::path& root);
Fig2 build_fig2(vd::Workspace& ws, const fs::path& root, std::uint64_t seed = 42);

/// Single-object series with `rows` rows: t (int), value (float).
void write_series(const fs::path& dir, const std::string& object_id, std::size_t rows);

/// Writes an executable shell script.
void write_script(const fs::path& p, const std::string& body);

std::string spec_yaml(const std::string& name, const std::vector<std::string>& inputs, const std::string& transform,
                      const nlohmann::json& params, std::optional<std::uint64_t> seed = std::nullopt,
                      const std::vector<std::string>& outputs = {"out"}, std::size_t output_index = 0);

bool cells_close(const vd::Cell& a, const vd::Cell& b, double rel_tol);
/// Empty when equal; otherwise a description of the first difference.
std::string table_diff(const vd::Table& a, const vd::Table& b, double rel_tol = 1e-12);

std::string digest_of(const vd::Table& t);

/// A random but valid SSVD document as a value tree.
nlohmann::json random_spec_value(std::mt19937_64& rng);
/// Flow-style YAML with map keys in a random order.
std::string shuffled_yaml(const nlohmann::json& v, std::mt19937_64& rng);

}  // namespace vdtest
