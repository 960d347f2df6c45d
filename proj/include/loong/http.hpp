#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <thread>

#include <json.hpp>

#include "loong/errors.hpp"

namespace loong {

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{8000};

  std::chrono::milliseconds delay_before(int attempt) const;
};

/// Runs `fn(attempt)` until it succeeds, a non-retryable BackendError is
/// thrown, or the policy is exhausted. The thrown error carries the number
/// of attempts made.
template <class Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn) -> decltype(fn(1)) {
  const int limit = policy.max_attempts < 1 ? 1 : policy.max_attempts;
  for (int attempt = 1;; ++attempt) {
    try {
      return fn(attempt);
    } catch (const BackendError& e) {
      if (!e.retryable() || attempt >= limit) throw e.with_attempts(attempt);
    }
    std::this_thread::sleep_for(policy.delay_before(attempt + 1));
  }
}

struct HttpEndpoint {
  std::string base_url;  // e.g. http://127.0.0.1:8000/v1
  std::string bearer_token;
  std::chrono::milliseconds timeout{120000};
  RetryPolicy retry;
  int max_in_flight = 8;
};

/// POST/GET JSON with retries on transport failures and 5xx responses.
/// 4xx responses are not retried; the error carries the response body.
/// Safe to call from many threads; concurrency is capped at max_in_flight.
class JsonHttpClient {
 public:
  explicit JsonHttpClient(HttpEndpoint endpoint);
  ~JsonHttpClient();
  JsonHttpClient(JsonHttpClient&&) noexcept;
  JsonHttpClient& operator=(JsonHttpClient&&) noexcept;

  struct Reply {
    nlohmann::json body;
    int attempts = 1;
  };

  Reply post(const std::string& path, const nlohmann::json& payload) const;
  /// Single attempt; returns the HTTP status, or nullopt on transport failure.
  std::optional<int> get_status(const std::string& path) const;

  const HttpEndpoint& endpoint() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace loong
