#pragma once

#include <stdexcept>
#include <string>

namespace graingraph {

enum class ErrorKind {
  config,      // invalid configuration or domain constants
  input,       // caller passed data violating a precondition
  format,      // malformed file or serialized document
  lookup,      // unknown vertex / tensor id
  topology,    // illegal topological edit
  numeric,     // NaN/Inf or out-of-range numeric value
  contract,    // a collaborator (predictor, weights) broke its output contract
  degenerate,  // graph collapsed or geometry is degenerate
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

const char* to_string(ErrorKind kind) noexcept;

/// Process exit code for the CLI: 2 config, 3 data-format, 4 numeric/contract.
int exit_code(ErrorKind kind) noexcept;

}  // namespace graingraph
