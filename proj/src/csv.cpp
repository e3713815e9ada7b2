#include "vd/csv.hpp"

#include "vd/error.hpp"

namespace vd::csv {

std::vector<Record> parse_records(std::string_view text) {
  std::vector<Record> records;
  Record current;
  Field field;
  bool in_quotes = false;
  bool field_started = false;  // any character (or quote) consumed for this field
  std::size_t line = 0;

  auto end_field = [&] {
    current.push_back(std::move(field));
    field = Field{};
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(current));
    current.clear();
    ++line;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.text.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.text.push_back(c);
      }
      continue;
    }
    switch (c) {
      case ',':
        end_field();
        break;
      case '\n':
        end_record();
        break;
      case '"':
        if (field_started) {
          throw Error(ErrorCode::ParseError, "stray quote inside unquoted field",
                      {{"row", line}, {"col", current.size()}, {"reason", "stray quote"}});
        }
        in_quotes = true;
        field.quoted = true;
        field_started = true;
        break;
      default:
        if (field.quoted) {
          throw Error(ErrorCode::ParseError, "characters after closing quote",
                      {{"row", line}, {"col", current.size()}, {"reason", "text after quote"}});
        }
        field.text.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) {
    throw Error(ErrorCode::ParseError, "unterminated quoted field",
                {{"row", line}, {"col", current.size()}, {"reason", "unterminated quote"}});
  }
  // Final record without a trailing newline.
  if (field_started || !current.empty()) end_record();
  return records;
}

namespace {

void check_shape(const std::vector<Record>& records) {
  if (records.empty()) {
    throw Error(ErrorCode::ParseError, "missing header", {{"row", 0}, {"col", 0}, {"reason", "missing header"}});
  }
  const std::size_t width = records.front().size();
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != width) {
      throw Error(ErrorCode::ParseError,
                  "ragged row " + std::to_string(r - 1) + ": " + std::to_string(records[r].size()) +
                      " fields, expected " + std::to_string(width),
                  {{"row", r - 1}, {"col", std::min(records[r].size(), width)}, {"reason", "ragged row"}});
    }
  }
}

std::vector<std::string> header_of(const std::vector<Record>& records) {
  std::vector<std::string> names;
  for (const auto& f : records.front()) names.push_back(f.text);
  return names;
}

bool column_parses(const std::vector<Record>& records, std::size_t c, ColumnType t) {
  for (std::size_t r = 1; r < records.size(); ++r) {
    const Field& f = records[r][c];
    if (!f.quoted && f.text.empty()) continue;
    if (t != ColumnType::String && f.quoted && f.text.empty()) return false;
    if (!parse_cell(f.text, t)) return false;
  }
  return true;
}

Table build(const std::vector<Record>& records, Schema schema) {
  Table t;
  t.rows.reserve(records.size() - 1);
  const std::size_t width = schema.size();
  for (std::size_t r = 1; r < records.size(); ++r) {
    Row row;
    row.reserve(width);
    for (std::size_t c = 0; c < width; ++c) {
      const Field& f = records[r][c];
      if (!f.quoted && f.text.empty()) {
        row.emplace_back(Null{});
        continue;
      }
      auto cell = parse_cell(f.text, schema[c].type);
      if (!cell) {
        throw Error(ErrorCode::ParseError, "cell does not parse as " + std::string(type_name(schema[c].type)),
                    {{"row", r - 1}, {"col", c}, {"reason", "type mismatch"}});
      }
      row.push_back(std::move(*cell));
    }
    t.rows.push_back(std::move(row));
  }
  t.schema = std::move(schema);
  return t;
}

}  // namespace

Table parse_table(std::string_view text, const Schema* hint) {
  auto records = parse_records(text);
  check_shape(records);
  auto names = header_of(records);

  std::vector<std::vector<std::string>> cells;
  cells.reserve(records.size() - 1);
  for (std::size_t r = 1; r < records.size(); ++r) {
    std::vector<std::string> row;
    row.reserve(names.size());
    for (const auto& f : records[r]) row.push_back(f.text);
    cells.push_back(std::move(row));
  }
  Schema inferred = infer_schema(names, cells);

  std::vector<Column> cols = inferred.columns();
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (hint && hint->size() == cols.size() && (*hint)[c].name == cols[c].name &&
        column_parses(records, c, (*hint)[c].type)) {
      cols[c].type = (*hint)[c].type;
      continue;
    }
    // A quoted empty field is a real empty string, which only a string column holds.
    if (cols[c].type != ColumnType::String && !column_parses(records, c, cols[c].type)) {
      cols[c].type = ColumnType::String;
    }
  }
  return build(records, Schema(std::move(cols)));
}

Table parse_table_typed(std::string_view text, const Schema& schema) {
  auto records = parse_records(text);
  check_shape(records);
  auto names = header_of(records);
  if (names != schema.names()) {
    throw Error(ErrorCode::ParseError, "header does not match schema",
                {{"row", 0}, {"col", 0}, {"reason", "header mismatch"}});
  }
  Table t = build(records, schema);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t c = 0; c < schema.size(); ++c) {
      if (is_null(t.rows[r][c]) && !schema[c].nullable) {
        throw Error(ErrorCode::ParseError, "null in non-nullable column " + schema[c].name,
                    {{"row", r}, {"col", c}, {"reason", "null"}});
      }
    }
  }
  return t;
}

std::string format_field(std::string_view s, bool force_quote) {
  bool quote = force_quote || s.find_first_of(",\"\n\r") != std::string_view::npos;
  if (!quote) return std::string(s);
  std::string out;
  out.reserve(s.size() + 2);
  out.push_back('"');
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_header(const Schema& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out.push_back(',');
    out += format_field(s[i].name, s[i].name.empty());
  }
  out.push_back('\n');
  return out;
}

std::string format_row(const Row& row) {
  std::string out;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out.push_back(',');
    if (const auto* str = std::get_if<std::string>(&row[i])) {
      out += format_field(*str, str->empty());
    } else {
      out += format_cell(row[i]);
    }
  }
  out.push_back('\n');
  return out;
}

std::string serialize(const Table& t) {
  std::string out = format_header(t.schema);
  for (const auto& row : t.rows) out += format_row(row);
  return out;
}

std::vector<std::string> split_blocks(std::string_view text) {
  std::vector<std::string> blocks;
  std::string current;
  bool in_quotes = false;
  std::size_t line_start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i < text.size() && text[i] != '\n') {
      if (text[i] == '"') in_quotes = !in_quotes;
      continue;
    }
    std::string_view line = text.substr(line_start, i - line_start);
    bool at_end = i == text.size();
    if (!in_quotes && line == "---") {
      blocks.push_back(std::move(current));
      current.clear();
    } else if (!(at_end && line.empty())) {
      current.append(line);
      if (!at_end) current.push_back('\n');
    }
    line_start = i + 1;
  }
  if (!current.empty() || !blocks.empty()) blocks.push_back(std::move(current));
  return blocks;
}

std::string join_blocks(const std::vector<std::string>& blocks) {
  std::string out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (i) out += "---\n";
    out += blocks[i];
  }
  return out;
}

}  // namespace vd::csv
