#pragma once

#include <stdexcept>
#include <string>

namespace weft {

// Error taxonomy, mirrored by the CLI exit codes:
//   config_error  -> 2   bad configuration, unknown keys, missing prerequisites
//   data_error    -> 3   unreadable or invalid input data
//   numeric_error -> 4   non-finite values reached the numerics
class config_error : public std::runtime_error {
public:
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

class data_error : public std::runtime_error {
public:
  explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Input line that does not parse at all.
class parse_error : public data_error {
public:
  explicit parse_error(const std::string& msg) : data_error(msg) {}
};

// Well-formed record that violates a task schema (labels, head kind, text).
class schema_error : public data_error {
public:
  explicit schema_error(const std::string& msg) : data_error(msg) {}
};

// Duplicate or conflicting ids, misaligned parallel lists.
class integrity_error : public data_error {
public:
  explicit integrity_error(const std::string& msg) : data_error(msg) {}
};

class numeric_error : public std::runtime_error {
public:
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace weft
