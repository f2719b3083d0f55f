#pragma once

#include <stdexcept>
#include <string>

namespace maps {

// Numeric values double as CLI exit codes and C API status codes.
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kConfig = 2,
  kDivergence = 3,
  kMissingArtifact = 4,
  kCorruptDataset = 5,
  kStateExhausted = 6,
  kSealedDataset = 7,
  kIo = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorCode::kInvalidArgument, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCode::kConfig, what) {}
};

class MissingArtifact : public Error {
 public:
  explicit MissingArtifact(const std::string& what) : Error(ErrorCode::kMissingArtifact, what) {}
};

class CorruptDataset : public Error {
 public:
  explicit CorruptDataset(const std::string& what) : Error(ErrorCode::kCorruptDataset, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::kIo, what) {}
};

/// Raised when a selection schedule has no rounds left; the trainer treats it
/// as normal loop termination.
class StateExhausted : public Error {
 public:
  explicit StateExhausted(const std::string& what) : Error(ErrorCode::kStateExhausted, what) {}
};

class SealedDatasetAccess : public Error {
 public:
  explicit SealedDatasetAccess(const std::string& what) : Error(ErrorCode::kSealedDataset, what) {}
};

/// A loss term became non-finite or exceeded the divergence bound.
class DivergenceError : public Error {
 public:
  DivergenceError(std::string stage, long step, std::string term, double value);

  const std::string& stage() const noexcept { return stage_; }
  long step() const noexcept { return step_; }
  const std::string& term() const noexcept { return term_; }
  double value() const noexcept { return value_; }

 private:
  std::string stage_;
  long step_;
  std::string term_;
  double value_;
};

}  // namespace maps
