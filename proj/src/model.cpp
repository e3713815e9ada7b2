#include "vd/model.hpp"

#include "vd/error.hpp"
#include "vd/util.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <unordered_map>

namespace vd {

std::string_view type_name(ColumnType t) {
  switch (t) {
    case ColumnType::Int64: return "int64";
    case ColumnType::Float64: return "float64";
    case ColumnType::String: return "string";
    case ColumnType::Bool: return "bool";
    case ColumnType::Timestamp: return "timestamp";
  }
  return "string";
}

std::optional<ColumnType> parse_type_name(std::string_view s) {
  if (s == "int64") return ColumnType::Int64;
  if (s == "float64") return ColumnType::Float64;
  if (s == "string") return ColumnType::String;
  if (s == "bool") return ColumnType::Bool;
  if (s == "timestamp") return ColumnType::Timestamp;
  return std::nullopt;
}

bool cell_matches(const Cell& c, ColumnType t) {
  switch (t) {
    case ColumnType::Int64: return std::holds_alternative<std::int64_t>(c);
    case ColumnType::Float64: return std::holds_alternative<double>(c);
    case ColumnType::String: return std::holds_alternative<std::string>(c);
    case ColumnType::Bool: return std::holds_alternative<bool>(c);
    case ColumnType::Timestamp: return std::holds_alternative<Timestamp>(c);
  }
  return false;
}

// ---- timestamps ----------------------------------------------------------

namespace {

// Howard Hinnant's civil calendar algorithms.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

bool read_digits(std::string_view s, std::size_t& pos, std::size_t n, int& out) {
  if (pos + n > s.size()) return false;
  int v = 0;
  for (std::size_t i = 0; i < n; ++i) {
    char c = s[pos + i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  pos += n;
  out = v;
  return true;
}

constexpr std::int64_t kMicrosPerDay = 86'400'000'000LL;

}  // namespace

std::optional<Timestamp> parse_timestamp(std::string_view s) {
  // YYYY-MM-DD[(T| )HH:MM:SS[.ffffff]][Z|(+|-)HH:MM]
  std::size_t pos = 0;
  int year, month, day;
  if (!read_digits(s, pos, 4, year) || pos >= s.size() || s[pos++] != '-') return std::nullopt;
  if (!read_digits(s, pos, 2, month) || pos >= s.size() || s[pos++] != '-') return std::nullopt;
  if (!read_digits(s, pos, 2, day)) return std::nullopt;
  if (month < 1 || month > 12 || day < 1 || day > 31) return std::nullopt;
  int hh = 0, mm = 0, ss = 0;
  std::int64_t frac = 0;
  if (pos < s.size() && (s[pos] == 'T' || s[pos] == ' ')) {
    ++pos;
    if (!read_digits(s, pos, 2, hh) || pos >= s.size() || s[pos++] != ':') return std::nullopt;
    if (!read_digits(s, pos, 2, mm) || pos >= s.size() || s[pos++] != ':') return std::nullopt;
    if (!read_digits(s, pos, 2, ss)) return std::nullopt;
    if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;
    if (pos < s.size() && s[pos] == '.') {
      ++pos;
      std::size_t start = pos;
      std::int64_t scale = 100000;
      while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
        if (pos - start < 6) {
          frac += (s[pos] - '0') * scale;
          scale /= 10;
        }
        ++pos;
      }
      if (pos == start) return std::nullopt;
    }
  }
  std::int64_t offset_minutes = 0;
  if (pos < s.size()) {
    if (s[pos] == 'Z') {
      ++pos;
    } else if (s[pos] == '+' || s[pos] == '-') {
      int sign = s[pos] == '-' ? -1 : 1;
      ++pos;
      int oh, om;
      if (!read_digits(s, pos, 2, oh) || pos >= s.size() || s[pos++] != ':') return std::nullopt;
      if (!read_digits(s, pos, 2, om)) return std::nullopt;
      offset_minutes = sign * (oh * 60 + om);
    } else {
      return std::nullopt;
    }
  }
  if (pos != s.size()) return std::nullopt;
  std::int64_t days = days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day));
  std::int64_t secs = static_cast<std::int64_t>(hh) * 3600 + mm * 60 + ss - offset_minutes * 60;
  return Timestamp{days * kMicrosPerDay + secs * 1'000'000LL + frac};
}

std::string format_timestamp(Timestamp ts) {
  std::int64_t days = ts.micros / kMicrosPerDay;
  std::int64_t rem = ts.micros % kMicrosPerDay;
  if (rem < 0) {
    rem += kMicrosPerDay;
    --days;
  }
  std::int64_t y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  std::int64_t secs = rem / 1'000'000;
  std::int64_t us = rem % 1'000'000;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02lld:%02lld:%02lld.%06lldZ", static_cast<long long>(y), m,
                d, static_cast<long long>(secs / 3600), static_cast<long long>((secs / 60) % 60),
                static_cast<long long>(secs % 60), static_cast<long long>(us));
  return buf;
}

// ---- scalar parsing ------------------------------------------------------

std::optional<std::int64_t> parse_int64(std::string_view s) {
  // Canonical decimal only: no '+', no leading zeros. Keeps identifiers such
  // as "007" textual so they survive a round trip byte-exactly.
  if (s.empty()) return std::nullopt;
  std::size_t digits_at = s[0] == '-' ? 1 : 0;
  if (digits_at == s.size()) return std::nullopt;
  if (s[digits_at] == '0' && s.size() > digits_at + 1) return std::nullopt;
  if (s == "-0") return std::nullopt;
  std::int64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> parse_float64(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s == "nan" || s == "NaN") return std::nan("");
  if (s == "inf" || s == "Infinity") return HUGE_VAL;
  if (s == "-inf" || s == "-Infinity") return -HUGE_VAL;
  char c0 = s[0];
  if (!((c0 >= '0' && c0 <= '9') || c0 == '-' || c0 == '.')) return std::nullopt;
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<bool> parse_bool(std::string_view s) {
  if (s == "true" || s == "True" || s == "TRUE") return true;
  if (s == "false" || s == "False" || s == "FALSE") return false;
  return std::nullopt;
}

std::optional<Cell> parse_cell(std::string_view s, ColumnType t) {
  switch (t) {
    case ColumnType::Int64:
      if (auto v = parse_int64(s)) return Cell{*v};
      return std::nullopt;
    case ColumnType::Float64:
      if (auto v = parse_float64(s)) return Cell{*v};
      return std::nullopt;
    case ColumnType::Bool:
      if (auto v = parse_bool(s)) return Cell{*v};
      return std::nullopt;
    case ColumnType::Timestamp:
      if (auto v = parse_timestamp(s)) return Cell{*v};
      return std::nullopt;
    case ColumnType::String:
      return Cell{std::string(s)};
  }
  return std::nullopt;
}

std::string format_cell(const Cell& c) {
  struct Visitor {
    std::string operator()(Null) const { return {}; }
    std::string operator()(std::int64_t v) const { return std::to_string(v); }
    std::string operator()(double v) const { return format_double(v); }
    std::string operator()(const std::string& v) const { return v; }
    std::string operator()(bool v) const { return v ? "true" : "false"; }
    std::string operator()(Timestamp v) const { return format_timestamp(v); }
  };
  return std::visit(Visitor{}, c);
}

// ---- Schema --------------------------------------------------------------

Schema::Schema(std::vector<Column> columns) : columns_(std::move(columns)) {
  std::set<std::string_view> seen;
  for (const auto& c : columns_) {
    if (!seen.insert(c.name).second) {
      throw Error(ErrorCode::DuplicateColumn, "duplicate column '" + c.name + "'", {{"name", c.name}});
    }
  }
}

std::optional<std::size_t> Schema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<std::string> Schema::names() const {
  std::vector<std::string> out;
  out.reserve(columns_.size());
  for (const auto& c : columns_) out.push_back(c.name);
  return out;
}

bool ObjectEntry::operator==(const ObjectEntry& o) const {
  bool schemas_equal = (!schema && !o.schema) || (schema && o.schema && *schema == *o.schema);
  return object_id == o.object_id && labels == o.labels && source == o.source && row_count == o.row_count &&
         schemas_equal && byte_size == o.byte_size && fingerprint == o.fingerprint;
}

// ---- inference -----------------------------------------------------------

Schema infer_schema(const std::vector<std::string>& header_names,
                    const std::vector<std::vector<std::string>>& sample_rows) {
  std::set<std::string_view> seen;
  for (const auto& n : header_names) {
    if (!seen.insert(n).second) {
      throw Error(ErrorCode::DuplicateColumn, "duplicate column '" + n + "'", {{"name", n}});
    }
  }
  for (std::size_t r = 0; r < sample_rows.size(); ++r) {
    if (sample_rows[r].size() != header_names.size()) {
      throw Error(ErrorCode::RaggedRow, "row " + std::to_string(r) + " has " +
                                            std::to_string(sample_rows[r].size()) + " cells, expected " +
                                            std::to_string(header_names.size()),
                  {{"index", r}});
    }
  }

  static constexpr ColumnType kPriority[] = {ColumnType::Int64, ColumnType::Float64, ColumnType::Bool,
                                             ColumnType::Timestamp};
  std::vector<Column> cols;
  cols.reserve(header_names.size());
  for (std::size_t c = 0; c < header_names.size(); ++c) {
    bool nullable = false;
    bool possible[4] = {true, true, true, true};
    for (const auto& row : sample_rows) {
      const std::string& cell = row[c];
      if (cell.empty()) {
        nullable = true;
        continue;
      }
      if (possible[0] && !parse_int64(cell)) possible[0] = false;
      if (possible[1] && !parse_float64(cell)) possible[1] = false;
      if (possible[2] && !parse_bool(cell)) possible[2] = false;
      if (possible[3] && !parse_timestamp(cell)) possible[3] = false;
    }
    ColumnType chosen = ColumnType::String;
    for (int k = 0; k < 4; ++k) {
      if (possible[k]) {
        chosen = kPriority[k];
        break;
      }
    }
    cols.push_back(Column{header_names[c], chosen, nullable});
  }
  return Schema(std::move(cols));
}

CommonColumns common_columns(const std::vector<Schema>& schemas) {
  CommonColumns out;
  if (schemas.empty()) return out;
  for (const auto& col : schemas.front().columns()) {
    bool everywhere = true;
    bool conflict = false;
    bool nullable = col.nullable;
    for (std::size_t i = 1; i < schemas.size(); ++i) {
      auto idx = schemas[i].index_of(col.name);
      if (!idx) {
        everywhere = false;
        break;
      }
      const Column& other = schemas[i][*idx];
      if (other.type != col.type) conflict = true;
      nullable = nullable || other.nullable;
    }
    if (!everywhere) continue;
    if (conflict) {
      out.conflicts.push_back(col.name);
    } else {
      out.columns.push_back(Column{col.name, col.type, nullable});
    }
  }
  return out;
}

std::string Violation::describe() const {
  switch (rule) {
    case Rule::TypeMismatch: return "TypeMismatch(row " + std::to_string(row) + ", column " + column + ")";
    case Rule::RaggedRow: return "RaggedRow(row " + std::to_string(row) + ")";
    case Rule::NullInNonNullable:
      return "NullInNonNullable(row " + std::to_string(row) + ", column " + column + ")";
    case Rule::DuplicateColumn: return "DuplicateColumn(" + column + ")";
  }
  return "Unknown";
}

std::vector<Violation> validate_table(const Table& t) {
  std::vector<Violation> out;
  std::set<std::string_view> seen;
  for (const auto& c : t.schema.columns()) {
    if (!seen.insert(c.name).second) out.push_back({Violation::Rule::DuplicateColumn, 0, c.name});
  }
  const auto& cols = t.schema.columns();
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const Row& row = t.rows[r];
    if (row.size() != cols.size()) {
      out.push_back({Violation::Rule::RaggedRow, r, {}});
      continue;
    }
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (is_null(row[c])) {
        if (!cols[c].nullable) out.push_back({Violation::Rule::NullInNonNullable, r, cols[c].name});
      } else if (!cell_matches(row[c], cols[c].type)) {
        out.push_back({Violation::Rule::TypeMismatch, r, cols[c].name});
      }
    }
  }
  return out;
}

std::optional<std::vector<std::size_t>> expand_column(const Schema& s, std::string_view name) {
  if (auto idx = s.index_of(name)) return std::vector<std::size_t>{*idx};
  std::vector<std::size_t> out;
  std::string prefix = std::string(name) + ".";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i].name.rfind(prefix, 0) == 0) out.push_back(i);
  }
  if (out.empty()) return std::nullopt;
  return out;
}

}  // namespace vd
