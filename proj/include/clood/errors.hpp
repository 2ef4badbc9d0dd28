#pragma once

#include <stdexcept>
#include <string>

namespace clood {

// Precondition or value-range violation (bad ids, shapes, unsupported T/M).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Filesystem and container format failures. The message always names the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or schema-invalid experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A required artifact (dataset, checkpoint, results) is missing.
class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One or more runs of a grid failed; the others completed and were saved.
class RunFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace clood
