#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vdst {

// Root of the toolkit's error hierarchy. Every failure the library raises on
// purpose derives from Error, so callers (and the CLI exit-code mapping) can
// distinguish our diagnostics from genuine bugs.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller handed us data that violates a documented precondition
// (shape mismatch, label outside range, empty batch, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// A configuration value (or combination of values) is unusable:
// unknown key, unparsable literal, schedule that breaks an invariant.
class InvalidConfig : public Error {
 public:
  using Error::Error;
};

// File-level problems: missing files, malformed artifacts, short reads.
class IoError : public Error {
 public:
  using Error::Error;
};

// Artifact-specific load failures, each its own type so tests can tell
// a bad magic from a bad checksum.
class BadMagic : public IoError {
 public:
  using IoError::IoError;
};
class BadVersion : public IoError {
 public:
  using IoError::IoError;
};
class Truncated : public IoError {
 public:
  using IoError::IoError;
};
class BadChecksum : public IoError {
 public:
  using IoError::IoError;
};

// An expert trajectory with zero start-to-target displacement cannot be
// matched against (the normalizer would divide by zero).
class DegenerateTrajectory : public Error {
 public:
  using Error::Error;
};

// Numerical blow-up: a loss or parameter became non-finite during a run.
class NonFinite : public Error {
 public:
  using Error::Error;
};

// An artifact exceeded the byte budget it was asked to respect.
class BudgetExceeded : public Error {
 public:
  BudgetExceeded(std::uint64_t bytes, std::uint64_t budget, const std::string& what_failed)
      : Error(what_failed + ": artifact needs " + std::to_string(bytes) +
              " bytes but the budget is " + std::to_string(budget) + " bytes"),
        bytes_(bytes),
        budget_(budget) {}

  std::uint64_t bytes() const { return bytes_; }
  std::uint64_t budget() const { return budget_; }

 private:
  std::uint64_t bytes_;
  std::uint64_t budget_;
};

inline void require_input(bool ok, const std::string& msg) {
  if (!ok) throw InvalidInput(msg);
}

inline void require_config(bool ok, const std::string& msg) {
  if (!ok) throw InvalidConfig(msg);
}

}  // namespace vdst
