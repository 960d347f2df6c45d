#pragma once

#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "loong/http.hpp"

namespace loong {

struct SamplingParams {
  double temperature = 0.7;
  double top_p = 1.0;
  int max_tokens = 2048;
  std::optional<std::uint64_t> seed;

  void validate() const;
  /// Copy with a seed derived from this one and `salt`; stays unseeded if
  /// this one is unseeded.
  SamplingParams derive(std::uint64_t salt) const;
};

struct ChatRequest {
  std::optional<std::string> system;
  std::string user;
  SamplingParams params;
};

struct TokenUsage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
  int total_tokens = 0;
};

struct ChatResponse {
  std::string text;
  std::string finish_reason = "stop";
  TokenUsage usage;
  int attempts = 1;
};

/// One complete (non-streaming) chat completion per call. Implementations
/// must be callable from many threads at once.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

/// Convenience: send `prompt` as user content.
std::string ask(ChatBackend& llm, std::string prompt, const SamplingParams& params);

// ---------------------------------------------------------------------------
// OpenAI-compatible HTTP client

struct HttpChatConfig {
  std::string api_base = "http://127.0.0.1:8000/v1";
  std::string api_key;
  std::string model;
  RetryPolicy retry;
  int max_in_flight = 8;
  std::chrono::milliseconds timeout{300000};
  bool send_seed = true;

  /// Overrides fields from LOONG_API_BASE, LOONG_API_KEY and LOONG_MODEL.
  HttpChatConfig with_env() const;
};

class HttpChatBackend final : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpChatConfig config);
  ChatResponse complete(const ChatRequest& request) override;

  static nlohmann::json request_body(const HttpChatConfig& config, const ChatRequest& request);

 private:
  HttpChatConfig config_;
  JsonHttpClient client_;
};

// ---------------------------------------------------------------------------
// Scriptable mock

class Matcher {
 public:
  enum class Kind { substring, regex, any };

  static Matcher substring(std::string needle);
  static Matcher regex(std::string pattern);
  static Matcher any();

  bool matches(std::string_view prompt) const;
  /// True when some prompt could match both and neither rule would be
  /// reachable by precedence alone: identical patterns, nested substrings,
  /// or two catch-alls.
  bool overlaps(const Matcher& other) const;

  Kind kind() const noexcept { return kind_; }
  const std::string& pattern() const noexcept { return pattern_; }

 private:
  Matcher(Kind kind, std::string pattern);
  Kind kind_;
  std::string pattern_;
};

using Responder = std::function<std::string(const ChatRequest&)>;

struct TranscriptEntry {
  std::string prompt;
  std::string response;
  std::optional<std::size_t> rule;  // nullopt when served by the default
};

/// Deterministic chat backend for tests and offline runs. Rules are tried in
/// registration order; the first match serves the prompt. A rule with a
/// response list serves them in order and then repeats the last one.
class MockBackend final : public ChatBackend {
 public:
  using Handle = std::size_t;

  explicit MockBackend(bool strict = true);

  Handle register_rule(Matcher matcher, std::vector<std::string> responses);
  Handle register_responder(Matcher matcher, Responder responder);
  void set_default(std::string response);
  void set_default(Responder responder);

  ChatResponse complete(const ChatRequest& request) override;

  std::vector<TranscriptEntry> transcript() const;
  std::size_t calls(Handle rule) const;
  std::size_t total_calls() const;
  void clear_transcript();

 private:
  struct Rule {
    Matcher matcher;
    std::vector<std::string> responses;
    Responder responder;
    std::size_t served = 0;
  };

  Handle add(Rule rule);

  bool strict_;
  mutable std::mutex mu_;
  std::vector<Rule> rules_;
  Responder default_;
  std::vector<TranscriptEntry> transcript_;
};

/// Decorator counting calls and prompt sizes, e.g. per segment.
class CallMeter final : public ChatBackend {
 public:
  explicit CallMeter(ChatBackend& inner) : inner_(inner) {}
  ChatResponse complete(const ChatRequest& request) override;

  struct Counts {
    int calls = 0;
    std::size_t total_prompt_chars = 0;
    std::size_t peak_prompt_chars = 0;
  };
  Counts counts() const;
  Counts take();  // returns and resets

 private:
  ChatBackend& inner_;
  mutable std::mutex mu_;
  Counts counts_;
};

}  // namespace loong
