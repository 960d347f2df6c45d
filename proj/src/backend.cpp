#include "loong/backend.hpp"

#include <cstdlib>
#include <regex>

#include "loong/text.hpp"

namespace loong {

using nlohmann::json;

void SamplingParams::validate() const {
  if (!(temperature >= 0.0)) throw ValidationError("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ValidationError("top_p must be in (0, 1]");
  if (max_tokens < 1) throw ValidationError("max_tokens must be positive");
}

SamplingParams SamplingParams::derive(std::uint64_t salt) const {
  SamplingParams out = *this;
  if (seed) out.seed = text::mix(*seed, salt);
  return out;
}

std::string ask(ChatBackend& llm, std::string prompt, const SamplingParams& params) {
  ChatRequest req;
  req.user = std::move(prompt);
  req.params = params;
  return llm.complete(req).text;
}

// ---------------------------------------------------------------------------

HttpChatConfig HttpChatConfig::with_env() const {
  HttpChatConfig out = *this;
  if (const char* v = std::getenv("LOONG_API_BASE"); v && *v) out.api_base = v;
  if (const char* v = std::getenv("LOONG_API_KEY"); v && *v) out.api_key = v;
  if (const char* v = std::getenv("LOONG_MODEL"); v && *v) out.model = v;
  return out;
}

namespace {

HttpEndpoint chat_endpoint(const HttpChatConfig& c) {
  HttpEndpoint ep;
  ep.base_url = c.api_base;
  ep.bearer_token = c.api_key;
  ep.timeout = c.timeout;
  ep.retry = c.retry;
  ep.max_in_flight = c.max_in_flight;
  return ep;
}

}  // namespace

HttpChatBackend::HttpChatBackend(HttpChatConfig config)
    : config_(std::move(config)), client_(chat_endpoint(config_)) {}

json HttpChatBackend::request_body(const HttpChatConfig& config, const ChatRequest& request) {
  json messages = json::array();
  if (request.system) messages.push_back({{"role", "system"}, {"content", *request.system}});
  messages.push_back({{"role", "user"}, {"content", request.user}});
  json body = {
      {"model", config.model},
      {"messages", std::move(messages)},
      {"temperature", request.params.temperature},
      {"top_p", request.params.top_p},
      {"max_tokens", request.params.max_tokens},
      {"n", 1},
      {"stream", false},
  };
  if (config.send_seed && request.params.seed) body["seed"] = *request.params.seed;
  return body;
}

ChatResponse HttpChatBackend::complete(const ChatRequest& request) {
  const auto reply = client_.post("/chat/completions", request_body(config_, request));
  const auto& body = reply.body;
  ChatResponse out;
  out.attempts = reply.attempts;
  try {
    const auto& choice = body.at("choices").at(0);
    const auto& content = choice.at("message").at("content");
    out.text = content.is_string() ? content.get<std::string>() : std::string{};
    if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
      out.finish_reason = choice["finish_reason"].get<std::string>();
    }
    if (body.contains("usage") && body["usage"].is_object()) {
      const auto& u = body["usage"];
      out.usage.prompt_tokens = u.value("prompt_tokens", 0);
      out.usage.completion_tokens = u.value("completion_tokens", 0);
      out.usage.total_tokens = u.value("total_tokens", 0);
    }
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed chat completion response: ") + e.what(), false,
                       200, body.dump(), reply.attempts);
  }
  return out;
}

// ---------------------------------------------------------------------------

Matcher::Matcher(Kind kind, std::string pattern) : kind_(kind), pattern_(std::move(pattern)) {}

Matcher Matcher::substring(std::string needle) {
  if (needle.empty()) throw ValidationError("substring matcher needs a non-empty pattern");
  return Matcher(Kind::substring, std::move(needle));
}

Matcher Matcher::regex(std::string pattern) {
  try {
    std::regex probe(pattern);
  } catch (const std::regex_error& e) {
    throw ValidationError("invalid regex '" + pattern + "': " + e.what());
  }
  return Matcher(Kind::regex, std::move(pattern));
}

Matcher Matcher::any() { return Matcher(Kind::any, {}); }

bool Matcher::matches(std::string_view prompt) const {
  switch (kind_) {
    case Kind::any:
      return true;
    case Kind::substring:
      return prompt.find(pattern_) != std::string_view::npos;
    case Kind::regex: {
      const std::regex re(pattern_);
      return std::regex_search(prompt.begin(), prompt.end(), re);
    }
  }
  return false;
}

bool Matcher::overlaps(const Matcher& other) const {
  if (kind_ == Kind::any || other.kind_ == Kind::any) return kind_ == other.kind_;
  if (kind_ != other.kind_) return false;
  if (kind_ == Kind::regex) return pattern_ == other.pattern_;
  return pattern_.find(other.pattern_) != std::string::npos ||
         other.pattern_.find(pattern_) != std::string::npos;
}

MockBackend::MockBackend(bool strict) : strict_(strict) {}

MockBackend::Handle MockBackend::add(Rule rule) {
  std::lock_guard lock(mu_);
  for (const auto& existing : rules_) {
    if (existing.matcher.overlaps(rule.matcher)) {
      throw ValidationError("mock rule '" + rule.matcher.pattern() +
                            "' is ambiguous with existing rule '" + existing.matcher.pattern() +
                            "'");
    }
  }
  rules_.push_back(std::move(rule));
  return rules_.size() - 1;
}

MockBackend::Handle MockBackend::register_rule(Matcher matcher, std::vector<std::string> responses) {
  if (responses.empty()) throw ValidationError("mock rule needs at least one response");
  return add(Rule{std::move(matcher), std::move(responses), {}, 0});
}

MockBackend::Handle MockBackend::register_responder(Matcher matcher, Responder responder) {
  if (!responder) throw ValidationError("mock responder must be callable");
  return add(Rule{std::move(matcher), {}, std::move(responder), 0});
}

void MockBackend::set_default(std::string response) {
  std::lock_guard lock(mu_);
  default_ = [r = std::move(response)](const ChatRequest&) { return r; };
}

void MockBackend::set_default(Responder responder) {
  std::lock_guard lock(mu_);
  default_ = std::move(responder);
}

ChatResponse MockBackend::complete(const ChatRequest& request) {
  std::unique_lock lock(mu_);
  std::optional<std::size_t> hit;
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    if (rules_[i].matcher.matches(request.user)) {
      hit = i;
      break;
    }
  }
  ChatResponse out;
  if (hit) {
    auto& rule = rules_[*hit];
    const auto n = rule.served++;
    if (rule.responder) {
      auto responder = rule.responder;
      lock.unlock();
      out.text = responder(request);
      lock.lock();
    } else {
      out.text = rule.responses[std::min(n, rule.responses.size() - 1)];
    }
  } else if (default_ && !strict_) {
    auto responder = default_;
    lock.unlock();
    out.text = responder(request);
    lock.lock();
  } else {
    throw BackendError("mock backend: no rule matches prompt: " + request.user.substr(0, 120),
                       false);
  }
  transcript_.push_back(TranscriptEntry{request.user, out.text, hit});
  return out;
}

std::vector<TranscriptEntry> MockBackend::transcript() const {
  std::lock_guard lock(mu_);
  return transcript_;
}

std::size_t MockBackend::calls(Handle rule) const {
  std::lock_guard lock(mu_);
  return rule < rules_.size() ? rules_[rule].served : 0;
}

std::size_t MockBackend::total_calls() const {
  std::lock_guard lock(mu_);
  return transcript_.size();
}

void MockBackend::clear_transcript() {
  std::lock_guard lock(mu_);
  transcript_.clear();
}

// ---------------------------------------------------------------------------

ChatResponse CallMeter::complete(const ChatRequest& request) {
  {
    std::lock_guard lock(mu_);
    ++counts_.calls;
    counts_.total_prompt_chars += request.user.size();
    counts_.peak_prompt_chars = std::max(counts_.peak_prompt_chars, request.user.size());
  }
  return inner_.complete(request);
}

CallMeter::Counts CallMeter::counts() const {
  std::lock_guard lock(mu_);
  return counts_;
}

CallMeter::Counts CallMeter::take() {
  std::lock_guard lock(mu_);
  return std::exchange(counts_, Counts{});
}

}  // namespace loong
