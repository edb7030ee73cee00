#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace iball {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: wrong dimensions, out-of-range parameters, broken invariants.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A numerical routine failed (non-convergence, singular system).
class NumericError : public Error {
 public:
  explicit NumericError(std::string what, std::size_t iterations = 0)
      : Error(std::move(what)), iterations_(iterations) {}

  /// Iterations spent before giving up, when the failing routine is iterative.
  [[nodiscard]] std::size_t iterations() const noexcept { return iterations_; }

 private:
  std::size_t iterations_;
};

/// Unreadable or unwritable files and streams.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Collects non-fatal warnings from pipeline stages.
struct Diagnostics {
  std::vector<std::string> messages;

  void warn(std::string message) { messages.push_back(std::move(message)); }
  [[nodiscard]] std::size_t size() const noexcept { return messages.size(); }
  [[nodiscard]] bool empty() const noexcept { return messages.empty(); }
};

inline void warn(Diagnostics* diag, std::string message) {
  if (diag != nullptr) diag->warn(std::move(message));
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

}  // namespace iball
