#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace loong {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (corpus rows, model output, snapshots).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class SequencingError : public Error {
 public:
  using Error::Error;
};

class RestoreError : public Error {
 public:
  using Error::Error;
};

class StepOverflowError : public Error {
 public:
  using Error::Error;
};

class RenderError : public Error {
 public:
  RenderError(const std::string& template_name, std::vector<std::string> missing);

  const std::vector<std::string>& missing() const noexcept { return missing_; }

 private:
  std::vector<std::string> missing_;
};

/// Failure talking to a chat, embedding or scoring service.
class BackendError : public Error {
 public:
  BackendError(const std::string& message, bool retryable,
               std::optional<int> status = std::nullopt, std::string body = {},
               int attempts = 1)
      : Error(message),
        retryable_(retryable),
        status_(status),
        body_(std::move(body)),
        attempts_(attempts) {}

  bool retryable() const noexcept { return retryable_; }
  std::optional<int> status() const noexcept { return status_; }
  const std::string& body() const noexcept { return body_; }
  int attempts() const noexcept { return attempts_; }

  /// Same error with a context prefix and the final attempt count.
  BackendError with_context(const std::string& context) const {
    return BackendError(context + ": " + what(), retryable_, status_, body_, attempts_);
  }
  BackendError with_attempts(int attempts) const {
    return BackendError(what(), retryable_, status_, body_, attempts);
  }

 private:
  bool retryable_;
  std::optional<int> status_;
  std::string body_;
  int attempts_;
};

/// The model kept producing output that could not be parsed into an action.
class ActionParseError : public ParseError {
 public:
  ActionParseError(const std::string& message, std::string raw)
      : ParseError(message), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

/// A run stopped early; its progress is stored in a checkpoint.
class PartialRunError : public Error {
 public:
  PartialRunError(const std::string& message, std::string checkpoint)
      : Error(message), checkpoint_(std::move(checkpoint)) {}
  const std::string& checkpoint() const noexcept { return checkpoint_; }

 private:
  std::string checkpoint_;
};

/// Non-fatal conditions collected while processing one document.
struct Diagnostics {
  std::vector<std::string> warnings;

  void warn(std::string message) { warnings.push_back(std::move(message)); }
};

inline void warn(Diagnostics* diag, std::string message) {
  if (diag != nullptr) diag->warn(std::move(message));
}

}  // namespace loong
