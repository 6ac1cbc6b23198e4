#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace conserva {

// Parse failures carry the 1-based line number of the offending line.
class ParseError : public std::runtime_error {
public:
  ParseError(int line, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  int line() const noexcept { return line_; }

private:
  int line_;
};

// A primitive was evaluated outside its domain (log of a nonpositive value,
// division by zero). When the failure happens inside a program the evaluator
// rethrows with the offending node id attached.
class DomainError : public std::runtime_error {
public:
  DomainError(std::string primitive, const std::string& msg)
      : std::runtime_error(primitive + ": " + msg), primitive_(std::move(primitive)) {}
  DomainError(std::string primitive, std::uint32_t node_id, const std::string& msg)
      : std::runtime_error("node " + std::to_string(node_id) + " (" + primitive + "): " + msg),
        node(node_id),
        primitive_(std::move(primitive)) {}
  const std::string& primitive() const noexcept { return primitive_; }

  std::optional<std::uint32_t> node;

private:
  std::string primitive_;
};

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// The Cartesian product of per-node derivative vertices exceeded the caller's cap.
class EnumerationOverflow : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace conserva
