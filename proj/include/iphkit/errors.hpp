#pragma once

#include <stdexcept>
#include <string>

namespace iphkit {

// Bad user input: malformed files, inconsistent models, out-of-range arguments.
// CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally valid input that an engine or algorithm cannot handle
// (unsupported topology, missing divisibility, conditioning past the support).
// CLI maps this to exit code 2.
class PreconditionError : public std::runtime_error {
 public:
  explicit PreconditionError(const std::string& what) : std::runtime_error(what) {}
};

// A numerical routine ran out of budget before reaching its tolerance.
// CLI maps this to exit code 3.
class ConvergenceError : public std::runtime_error {
 public:
  explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace iphkit
