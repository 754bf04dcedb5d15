#include "avdit/error.hpp"

namespace avdit {

DegenerateRowError::DegenerateRowError(std::size_t row)
    : Error("softmax_rows: row " + std::to_string(row) + " is fully masked"), row_(row) {}

DivergenceError::DivergenceError(std::string stage, int step)
    : Error(stage + ": non-finite state at step " + std::to_string(step)),
      stage_(std::move(stage)),
      step_(step) {}

CheckpointError::CheckpointError(CheckpointErrorKind kind, const std::string& what)
    : Error(std::string("checkpoint ") + to_string(kind) + " error: " + what), kind_(kind) {}

const char* to_string(CheckpointErrorKind kind) {
  switch (kind) {
    case CheckpointErrorKind::Io: return "io";
    case CheckpointErrorKind::Format: return "format";
    case CheckpointErrorKind::Version: return "version";
    case CheckpointErrorKind::Truncated: return "truncation";
    case CheckpointErrorKind::ShapeMismatch: return "shape-mismatch";
    case CheckpointErrorKind::MissingArray: return "missing-array";
  }
  return "unknown";
}

}  // namespace avdit
