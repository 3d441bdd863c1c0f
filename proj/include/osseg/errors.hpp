#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace osseg {

// Malformed or truncated file content; offset is the byte position of the defect.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

// Numeric failure (zero norms, non-finite values) in an otherwise valid call.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training aborted; carries the iteration at which the failure occurred.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, long iteration)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}
  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

// Phantom generation could not satisfy the requested spec.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace osseg
