#include "bevcoord/json_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <sstream>

#include "bevcoord/errors.hpp"

namespace bevcoord {
namespace {

void append_escaped(const std::string& s, std::string& out) {
  out.push_back('"');
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out.push_back(static_cast<char>(c));
        }
    }
  }
  out.push_back('"');
}

void dump_value(const Json& v, std::string& out) {
  switch (v.type()) {
    case Json::value_t::null:
      out += "null";
      break;
    case Json::value_t::boolean:
      out += v.get<bool>() ? "true" : "false";
      break;
    case Json::value_t::number_integer:
      out += std::to_string(v.get<std::int64_t>());
      break;
    case Json::value_t::number_unsigned:
      out += std::to_string(v.get<std::uint64_t>());
      break;
    case Json::value_t::number_float:
      out += canonical_number(v.get<double>());
      break;
    case Json::value_t::string:
      append_escaped(v.get<std::string>(), out);
      break;
    case Json::value_t::array: {
      out.push_back('[');
      bool first = true;
      for (const auto& item : v) {
        if (!first) out.push_back(',');
        first = false;
        dump_value(item, out);
      }
      out.push_back(']');
      break;
    }
    case Json::value_t::object: {
      // nlohmann::json already stores object keys sorted; iterate in order.
      out.push_back('{');
      bool first = true;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out.push_back(',');
        first = false;
        append_escaped(it.key(), out);
        out.push_back(':');
        dump_value(it.value(), out);
      }
      out.push_back('}');
      break;
    }
    default:
      throw InternalError("canonical_dump: unsupported JSON value type");
  }
}

}  // namespace

std::string canonical_number(double value) {
  if (!std::isfinite(value)) {
    throw SchemaError("$", "numbers must be finite");
  }
  if (value == 0.0) value = 0.0;  // normalize -0.0
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", value);
  // %.9g never emits a decimal point for integral values; keep it that way
  // (parsers treat 3 and 3.0 identically) but make the exponent form stable.
  return std::string(buf);
}

std::string canonical_dump(const Json& value) {
  std::string out;
  out.reserve(256);
  dump_value(value, out);
  return out;
}

std::string canonical_dump_line(const Json& value) {
  return canonical_dump(value) + "\n";
}

Json parse_json(const std::string& text, const std::string& source_label) {
  Json v = Json::parse(text, nullptr, false);
  if (v.is_discarded()) {
    throw SchemaError(source_label, "malformed JSON");
  }
  return v;
}

std::vector<Json> parse_jsonl(const std::string& text,
                              const std::string& source_label) {
  std::vector<Json> out;
  std::istringstream stream(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    out.push_back(
        parse_json(line, source_label + ":" + std::to_string(line_no)));
  }
  return out;
}

std::string dump_jsonl(const std::vector<Json>& values) {
  std::string out;
  for (const auto& v : values) out += canonical_dump_line(v);
  return out;
}

}  // namespace bevcoord
