#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <thread>

#include <httplib.h>

#include "loong/aligner.hpp"
#include "loong/backend.hpp"
#include "loong/corpus.hpp"
#include "loong/fake_agent.hpp"
#include "loong/text.hpp"

namespace loong::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("loong_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

/// Marked units of the span being translated.
inline std::vector<AlignedSentence> source_units(std::string_view prompt) {
  const auto at = prompt.rfind("source text>\n");
  return at == std::string_view::npos ? std::vector<AlignedSentence>{} : extract_units(prompt.substr(at));
}

inline std::string render_units(const std::vector<AlignedSentence>& units) {
  std::string out;
  for (const auto& u : units) out += "#" + std::to_string(u.index) + " <s>" + u.text + "</s>\n";
  return out;
}

/// Translation reply that keeps every marker: each unit is upper-cased.
inline std::string echo_translation(std::string_view prompt) {
  auto units = source_units(prompt);
  for (auto& u : units) {
    for (auto& c : u.text) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return render_units(units);
}

inline bool is_translate_prompt(std::string_view prompt) {
  return prompt.find("<TRANSLATION TASK RULES>") != std::string_view::npos;
}

/// ChatBackend built from a function; counts calls.
class FnBackend final : public ChatBackend {
 public:
  using Fn = std::function<std::string(const ChatRequest&)>;
  explicit FnBackend(Fn fn) : fn_(std::move(fn)) {}
  ChatResponse complete(const ChatRequest& r) override {
    ++calls_;
    return ChatResponse{fn_(r), "stop", {}, 1};
  }
  int calls() const { return calls_.load(); }

 private:
  Fn fn_;
  std::atomic<int> calls_{0};
};

/// httplib server on an ephemeral loopback port, served from a thread.
class StubServer {
 public:
  StubServer() = default;
  ~StubServer() { stop(); }

  httplib::Server& server() { return server_; }

  void start() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

/// Retry policy without sleeping.
inline RetryPolicy fast_retry(int attempts) {
  RetryPolicy p;
  p.max_attempts = attempts;
  p.initial_backoff = std::chrono::milliseconds(0);
  p.max_backoff = std::chrono::milliseconds(0);
  return p;
}

inline std::string random_word(std::mt19937_64& rng, int min_len = 1, int max_len = 8) {
  static constexpr std::string_view alphabet = "abcdefghijklmnopqrstuvwxyzABCDE";
  std::uniform_int_distribution<int> len(min_len, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string w;
  for (int i = len(rng); i > 0; --i) w += alphabet[pick(rng)];
  return w;
}

}  // namespace loong::testing
