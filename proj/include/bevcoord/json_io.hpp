#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace bevcoord {

using Json = nlohmann::json;

// Canonical JSON text form used for every artifact the toolkit writes.
//
// Rules:
//   - object keys emitted in ascending byte order,
//   - floating point numbers printed with up to 9 significant decimal digits
//     ("%.9g"), integers printed exactly,
//   - no insignificant whitespace,
//   - UTF-8 pass-through for strings, control characters escaped.
//
// The encoding is stable under a parse/serialize round trip: parsing the
// canonical text and re-serializing reproduces the same bytes. Non-finite
// numbers are rejected because the artifacts never contain them.
std::string canonical_dump(const Json& value);

// canonical_dump plus a trailing newline; convenience for whole-file writes.
std::string canonical_dump_line(const Json& value);

// Strict parse wrapper: throws SchemaError with the given source label on
// malformed input instead of nlohmann's parse_error.
Json parse_json(const std::string& text, const std::string& source_label);

// Splits a JSONL document into one parsed value per non-empty line.
std::vector<Json> parse_jsonl(const std::string& text,
                              const std::string& source_label);

// Joins values into JSONL using the canonical encoding.
std::string dump_jsonl(const std::vector<Json>& values);

// Formats one double exactly as canonical_dump would embed it.
std::string canonical_number(double value);

}  // namespace bevcoord
