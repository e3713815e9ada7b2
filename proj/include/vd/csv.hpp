#pragma once

#include "vd/model.hpp"

#include <string>
#include <string_view>
#include <vector>

// CSV dialect: UTF-8, ',' delimiter, '"' quoting with doubled-quote escape,
// '\n' record terminator, first record is the header. An unquoted empty field
// is null; a quoted empty field ("") is the empty string.
namespace vd::csv {

struct Field {
  std::string text;
  bool quoted = false;
};

using Record = std::vector<Field>;

/// Splits text into records. Throws Error(ParseError) on an unterminated quote.
std::vector<Record> parse_records(std::string_view text);

/// Parses a table, inferring the schema from every row. When `hint` is given
/// and its column names match the header, those types are tried first and the
/// column falls back to inference only if a cell does not parse.
/// Throws Error(ParseError) with row/column details for ragged rows.
Table parse_table(std::string_view text, const Schema* hint = nullptr);

/// Parses against a fixed schema. Throws Error(ParseError) when a cell does not
/// conform or the header disagrees with the schema.
Table parse_table_typed(std::string_view text, const Schema& schema);

std::string format_field(std::string_view s, bool force_quote = false);
std::string format_header(const Schema& s);
std::string format_row(const Row& row);
std::string serialize(const Table& t);

/// Multi-table framing used by the external transform protocol: CSV blocks
/// separated by a line consisting of exactly `---`.
std::vector<std::string> split_blocks(std::string_view text);
std::string join_blocks(const std::vector<std::string>& blocks);

}  // namespace vd::csv
