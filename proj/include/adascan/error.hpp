#pragma once

#include <stdexcept>
#include <string>

namespace adascan {

// Violated precondition or shape contract.
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// Non-finite values or failed numeric checks.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input files; the message names the offending line.
class IngestionError : public std::runtime_error {
 public:
  explicit IngestionError(const std::string& what) : std::runtime_error(what) {}
};

// The const char* overload defers message construction to the throw path;
// checks on hot paths must not allocate when they pass.
inline void require(bool condition, const char* what) {
  if (!condition) throw ContractViolation(what);
}

inline void require(bool condition, const std::string& what) {
  if (!condition) throw ContractViolation(what);
}

}  // namespace adascan
