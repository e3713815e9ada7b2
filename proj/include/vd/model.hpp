#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace vd {

enum class ColumnType { Int64, Float64, String, Bool, Timestamp };

std::string_view type_name(ColumnType t);
std::optional<ColumnType> parse_type_name(std::string_view s);

/// Microseconds since the Unix epoch, always UTC.
struct Timestamp {
  std::int64_t micros = 0;
  auto operator<=>(const Timestamp&) const = default;
};

using Null = std::monostate;
using Cell = std::variant<Null, std::int64_t, double, std::string, bool, Timestamp>;

inline bool is_null(const Cell& c) { return std::holds_alternative<Null>(c); }
bool cell_matches(const Cell& c, ColumnType t);

/// Textual form of a cell as written to CSV (nulls render as the empty string).
std::string format_cell(const Cell& c);
std::string format_timestamp(Timestamp ts);

// Strict single-type parsers used by inference and typed reads.
std::optional<std::int64_t> parse_int64(std::string_view s);
std::optional<double> parse_float64(std::string_view s);
std::optional<bool> parse_bool(std::string_view s);
std::optional<Timestamp> parse_timestamp(std::string_view s);
std::optional<Cell> parse_cell(std::string_view s, ColumnType t);

struct Column {
  std::string name;
  ColumnType type = ColumnType::String;
  bool nullable = false;

  bool operator==(const Column&) const = default;
};

class Schema {
 public:
  Schema() = default;
  /// Throws Error(DuplicateColumn) on repeated names.
  explicit Schema(std::vector<Column> columns);

  const std::vector<Column>& columns() const { return columns_; }
  std::size_t size() const { return columns_.size(); }
  bool empty() const { return columns_.empty(); }
  const Column& operator[](std::size_t i) const { return columns_[i]; }

  std::optional<std::size_t> index_of(std::string_view name) const;
  std::vector<std::string> names() const;

  bool operator==(const Schema& other) const { return columns_ == other.columns_; }

 private:
  std::vector<Column> columns_;
};

using Row = std::vector<Cell>;

struct Table {
  Schema schema;
  std::vector<Row> rows;

  std::size_t row_count() const { return rows.size(); }
  bool operator==(const Table&) const = default;
};

/// Sorted so that serialization and comparison are deterministic.
using Labels = std::map<std::string, std::string>;

/// Per-object realization of a dataset link: where an object of a virtual
/// dataset comes from.
struct SourceLink {
  std::string dataset_id;
  std::size_t input_position = 0;
  std::string object_id;
  std::optional<std::int64_t> offset;
  std::optional<std::int64_t> length;

  bool operator==(const SourceLink&) const = default;
};

/// One entry of a dataset's object index. Payload-free: stats are optional and
/// only present when they are known without materializing.
struct ObjectEntry {
  std::string object_id;
  Labels labels;
  std::optional<SourceLink> source;
  std::optional<std::int64_t> row_count;
  std::shared_ptr<const Schema> schema;
  // explicit objects only
  std::optional<std::uint64_t> byte_size;
  std::optional<std::uint64_t> fingerprint;

  bool operator==(const ObjectEntry& o) const;
};

using ObjectIndex = std::vector<ObjectEntry>;

struct DataObject {
  std::string object_id;
  Labels labels;
  std::optional<SourceLink> source;
  std::shared_ptr<const Table> payload;  // null while virtual
};

// --- schema logic ---------------------------------------------------------

Schema infer_schema(const std::vector<std::string>& header_names,
                    const std::vector<std::vector<std::string>>& sample_rows);

struct CommonColumns {
  std::vector<Column> columns;
  std::vector<std::string> conflicts;  // names present everywhere with differing types
};

CommonColumns common_columns(const std::vector<Schema>& schemas);

struct Violation {
  enum class Rule { TypeMismatch, RaggedRow, NullInNonNullable, DuplicateColumn };
  Rule rule;
  std::size_t row = 0;
  std::string column;

  std::string describe() const;
  bool operator==(const Violation&) const = default;
};

std::vector<Violation> validate_table(const Table& t);

/// Expands multivariate prefixes: `feat` names `feat.0`, `feat.1`, ... when no
/// column is literally called `feat`. Returns nullopt when nothing matches.
std::optional<std::vector<std::size_t>> expand_column(const Schema& s, std::string_view name);

}  // namespace vd
