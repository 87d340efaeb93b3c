#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace macrt {

// Raised when a caller breaks a documented precondition (bad index, mismatched
// dimensions, missing substitute). These indicate bugs in the calling code.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed input file. `line` is 1-based; 0 if the error is not tied to a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string path, std::size_t line, const std::string& what)
      : std::runtime_error(path + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        path_(std::move(path)),
        line_(line) {}

  const std::string& path() const noexcept { return path_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Not enough candidates to retain k of them.
class InsufficientPoolError : public std::runtime_error {
 public:
  InsufficientPoolError(const std::string& what, std::vector<std::string> unscorable = {})
      : std::runtime_error(what), unscorable_(std::move(unscorable)) {}

  const std::vector<std::string>& unscorable() const noexcept { return unscorable_; }

 private:
  std::vector<std::string> unscorable_;
};

class EmbeddingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure talking to a scoring target. Retryable errors are transport failures,
// timeouts and 5xx responses; everything else is permanent.
class TargetError : public std::runtime_error {
 public:
  TargetError(const std::string& what, bool retryable, int http_status = 0)
      : std::runtime_error(what), retryable_(retryable), http_status_(http_status) {}

  bool retryable() const noexcept { return retryable_; }
  int http_status() const noexcept { return http_status_; }

 private:
  bool retryable_;
  int http_status_;
};

}  // namespace macrt
