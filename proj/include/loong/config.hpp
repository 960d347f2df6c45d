#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "loong/aligner.hpp"
#include "loong/backend.hpp"
#include "loong/embedding.hpp"
#include "loong/fake_agent.hpp"
#include "loong/http.hpp"
#include "loong/metrics.hpp"
#include "loong/prompts.hpp"
#include "loong/retrieval.hpp"

namespace loong {

enum class RunMode { loong, doc2doc };

struct PreferenceSettings {
  int actions = 7;                 // M
  int translations = 5;            // N
  int action_resample_budget = 2;  // extra samples allowed for unparsable actions
};

struct BackendSettings {
  std::string kind = "fake";  // http | mock | fake
  HttpChatConfig http;
  std::string mock_script;    // JSON rule file for kind = mock
  FakeAgentOptions fake;
};

struct EmbedderSettings {
  std::string kind = "hashing";  // hashing | remote
  std::size_t dim = 256;
  HttpEndpoint endpoint;
};

struct MetricSettings {
  std::string kind = "chrf";  // chrf | remote
  HttpEndpoint endpoint;
};

struct RunConfig {
  int segment_size = 5;
  RetrievalSizes retrieval;
  SamplingParams params;
  RunMode mode = RunMode::loong;
  PreferenceSettings preferences;
  AlignerOptions aligner;
  std::string src_lang = "English";
  std::string tgt_lang = "Chinese";
  std::string prompts_dir;  // JSON: prompts.dir (prompts_dir also accepted)
  std::string checkpoint;  // defaults to <out>/checkpoint.json
  std::size_t judge_window = 0;
  int workers = 1;
  BackendSettings backend;
  EmbedderSettings embedder;
  MetricSettings metric;

  /// Larger retrieval sets for very long documents (K_s = 8, K_x = 6).
  static RunConfig ultra_long();

  /// Unknown keys and out-of-range values raise ValidationError.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;

  /// Hash of every setting that changes outputs; a resume must match it.
  std::string fingerprint() const;
};

struct Services {
  std::unique_ptr<ChatBackend> llm;
  std::unique_ptr<EmbeddingProvider> embedder;
  std::unique_ptr<Metric> metric;
  PromptRegistry prompts;
};

Services make_services(const RunConfig& config);

/// Rules file: {"rules": [{"match": "substring"|"regex"|"any", "pattern": str,
/// "responses": [str]}], "default": str?}.
std::unique_ptr<MockBackend> load_mock_script(const std::filesystem::path& path);

std::string_view to_string(RunMode mode);

}  // namespace loong
