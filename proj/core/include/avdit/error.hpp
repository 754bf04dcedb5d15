#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace avdit {

// Base for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Softmax row where every entry is masked out.
class DegenerateRowError : public Error {
 public:
  DegenerateRowError(std::size_t row);
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

class PatchError : public Error {
 public:
  using Error::Error;
};

class CoverageError : public Error {
 public:
  using Error::Error;
};

class VocabularyError : public Error {
 public:
  using Error::Error;
};

class PackingError : public Error {
 public:
  using Error::Error;
};

class RoutingError : public Error {
 public:
  using Error::Error;
};

// Non-finite values appeared during sampling or training.
class DivergenceError : public Error {
 public:
  DivergenceError(std::string stage, int step);
  const std::string& stage() const { return stage_; }
  int step() const { return step_; }

 private:
  std::string stage_;
  int step_;
};

enum class CheckpointErrorKind { Io, Format, Version, Truncated, ShapeMismatch, MissingArray };

class CheckpointError : public Error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what);
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

const char* to_string(CheckpointErrorKind kind);

}  // namespace avdit
