#include "vd/yaml_value.hpp"

#include "vd/error.hpp"
#include "vd/util.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <regex>

namespace vd::yaml {

namespace {

json resolve_plain(const std::string& s) {
  if (s.empty() || s == "~" || s == "null" || s == "Null" || s == "NULL") return nullptr;
  if (s == "true" || s == "True" || s == "TRUE") return true;
  if (s == "false" || s == "False" || s == "FALSE") return false;

  static const std::regex kInt(R"([-+]?[0-9]+)");
  static const std::regex kFloat(R"([-+]?(\.[0-9]+|[0-9]+(\.[0-9]*)?)([eE][-+]?[0-9]+)?)");
  if (std::regex_match(s, kInt)) {
    std::string_view v = s;
    if (v.front() == '+') v.remove_prefix(1);
    if (v.front() == '-') {
      std::int64_t x = 0;
      auto r = std::from_chars(v.data(), v.data() + v.size(), x);
      if (r.ec == std::errc() && r.ptr == v.data() + v.size()) return x;
    } else {
      std::uint64_t x = 0;
      auto r = std::from_chars(v.data(), v.data() + v.size(), x);
      if (r.ec == std::errc() && r.ptr == v.data() + v.size()) {
        if (x <= static_cast<std::uint64_t>(INT64_MAX)) return static_cast<std::int64_t>(x);
        return x;
      }
    }
    // Out of range integers fall through to float.
  }
  if (std::regex_match(s, kFloat)) {
    std::string_view v = s;
    if (v.front() == '+') v.remove_prefix(1);
    double d = 0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), d);
    if (r.ec == std::errc() && r.ptr == v.data() + v.size()) return d;
  }
  if (s == ".nan" || s == ".NaN" || s == ".NAN") return std::nan("");
  if (s == ".inf" || s == ".Inf" || s == ".INF" || s == "+.inf") return HUGE_VAL;
  if (s == "-.inf" || s == "-.Inf" || s == "-.INF") return -HUGE_VAL;
  return s;
}

bool plain_key_ok(const std::string& k) {
  static const std::regex kPlain(R"([A-Za-z_][A-Za-z0-9_./-]*)");
  if (!std::regex_match(k, kPlain)) return false;
  json r = resolve_plain(k);
  return r.is_string();
}

std::string emit_key(const std::string& k) {
  if (plain_key_ok(k)) return k;
  return json(k).dump();
}

std::string emit_scalar(const json& v) {
  switch (v.type()) {
    case json::value_t::null: return "null";
    case json::value_t::boolean: return v.get<bool>() ? "true" : "false";
    case json::value_t::number_integer: return std::to_string(v.get<std::int64_t>());
    case json::value_t::number_unsigned: return std::to_string(v.get<std::uint64_t>());
    case json::value_t::number_float: {
      double d = v.get<double>();
      if (std::isnan(d)) return ".nan";
      if (std::isinf(d)) return d > 0 ? ".inf" : "-.inf";
      return format_double(d);
    }
    case json::value_t::string: return v.dump();
    default: return v.dump();
  }
}

bool is_collection(const json& v) { return (v.is_object() || v.is_array()) && !v.empty(); }

void emit(const json& v, int indent, std::string& out);

void emit_map_body(const json& v, int indent, std::string& out) {
  std::string pad(indent, ' ');
  for (auto it = v.begin(); it != v.end(); ++it) {
    out += pad + emit_key(it.key()) + ":";
    if (is_collection(it.value())) {
      out += "\n";
      emit(it.value(), indent + 2, out);
    } else {
      out += " " + (it.value().is_object() ? std::string("{}")
                                           : it.value().is_array() ? std::string("[]") : emit_scalar(it.value()));
      out += "\n";
    }
  }
}

void emit_seq_body(const json& v, int indent, std::string& out) {
  std::string pad(indent, ' ');
  for (const auto& item : v) {
    if (item.is_object() && !item.empty()) {
      // First key shares the dash line; the rest align under it.
      std::string nested;
      emit_map_body(item, indent + 2, nested);
      out += pad + "- " + nested.substr(static_cast<std::size_t>(indent + 2));
    } else if (item.is_array() && !item.empty()) {
      out += pad + "-\n";
      emit(item, indent + 2, out);
    } else {
      out += pad + "- " +
             (item.is_object() ? std::string("{}") : item.is_array() ? std::string("[]") : emit_scalar(item)) + "\n";
    }
  }
}

void emit(const json& v, int indent, std::string& out) {
  if (v.is_object()) {
    if (v.empty()) {
      out += std::string(indent, ' ') + "{}\n";
    } else {
      emit_map_body(v, indent, out);
    }
  } else if (v.is_array()) {
    if (v.empty()) {
      out += std::string(indent, ' ') + "[]\n";
    } else {
      emit_seq_body(v, indent, out);
    }
  } else {
    out += std::string(indent, ' ') + emit_scalar(v) + "\n";
  }
}

}  // namespace

json to_value(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Undefined:
    case YAML::NodeType::Null:
      return nullptr;
    case YAML::NodeType::Scalar: {
      const std::string& s = node.Scalar();
      if (node.Tag() == "!") return s;  // quoted
      if (node.Tag() == "tag:yaml.org,2002:str" || node.Tag() == "!!str") return s;
      return resolve_plain(s);
    }
    case YAML::NodeType::Sequence: {
      json arr = json::array();
      for (const auto& item : node) arr.push_back(to_value(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      json obj = json::object();
      for (const auto& kv : node) {
        json key = to_value(kv.first);
        std::string k = key.is_string() ? key.get<std::string>() : kv.first.Scalar();
        if (obj.contains(k)) {
          auto mark = kv.first.Mark();
          throw Error(ErrorCode::SyntaxError, "duplicate key '" + k + "'",
                      {{"line", mark.line + 1}, {"col", mark.column + 1}});
        }
        obj[k] = to_value(kv.second);
      }
      return obj;
    }
  }
  return nullptr;
}

json parse(std::string_view text) {
  try {
    YAML::Node root = YAML::Load(std::string(text));
    return to_value(root);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::SyntaxError, "YAML syntax error: " + e.msg,
                {{"line", e.mark.line + 1}, {"col", e.mark.column + 1}});
  }
}

std::string emit_canonical(const json& value) {
  std::string out;
  emit(value, 0, out);
  return out;
}

}  // namespace vd::yaml
