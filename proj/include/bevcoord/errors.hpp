#pragma once

#include <stdexcept>
#include <string>

namespace bevcoord {

// Error taxonomy shared by the whole toolkit. Each class maps to a distinct
// process exit code in the CLI (see pipeline.hpp).

// Invalid or contradictory run configuration, including unknown config keys.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Input data violating a documented schema rule. Carries the JSON path of the
// offending field and the rule that failed so callers can report both.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::string path, std::string rule)
      : std::runtime_error(path + ": " + rule),
        path_(std::move(path)),
        rule_(std::move(rule)) {}

  const std::string& path() const noexcept { return path_; }
  const std::string& rule() const noexcept { return rule_; }

 private:
  std::string path_;
  std::string rule_;
};

// Failure talking to a remote reasoning backend (connect, timeout, HTTP
// status, or a response that stays malformed after the single retry).
class TransportError : public std::runtime_error {
 public:
  explicit TransportError(const std::string& what) : std::runtime_error(what) {}
};

// Internal invariant violation; indicates a bug, not bad input.
class InternalError : public std::logic_error {
 public:
  explicit InternalError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace bevcoord
