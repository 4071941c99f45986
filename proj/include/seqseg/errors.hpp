#pragma once

#include <stdexcept>
#include <string>

namespace seqseg {

// Raised when an on-disk artifact (dataset manifest, checkpoint, report)
// is missing, truncated, or fails its checksum.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when the training loss stops being finite.
class TrainingDivergenceError : public std::runtime_error {
 public:
  explicit TrainingDivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace seqseg
