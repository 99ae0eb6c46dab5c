#include "graingraph/error.hpp"

namespace graingraph {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::input: return "input";
    case ErrorKind::format: return "format";
    case ErrorKind::lookup: return "lookup";
    case ErrorKind::topology: return "topology";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::contract: return "contract";
    case ErrorKind::degenerate: return "degenerate";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::input:
    case ErrorKind::format:
    case ErrorKind::lookup: return 3;
    default: return 4;
  }
}

}  // namespace graingraph
