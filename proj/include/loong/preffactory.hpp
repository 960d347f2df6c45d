#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "loong/aligner.hpp"
#include "loong/config.hpp"
#include "loong/corpus.hpp"
#include "loong/memory.hpp"
#include "loong/metrics.hpp"
#include "loong/reasoning.hpp"

namespace loong {

/// M samples of one observation. An unparsable reply is replaced by a
/// fresh sample while `resample_budget` lasts and dropped afterwards, so
/// fewer than M actions may come back.
std::vector<Action> sample_actions(ChatBackend& llm, const Observation& obs, const PromptRegistry& prompts,
                                   int m, const SamplingParams& params, int resample_budget,
                                   Diagnostics* diag = nullptr);

/// N alignment-enforced translations of one span under one context.
std::vector<AlignedTranslation> sample_translations(ChatBackend& llm, std::span<const Sentence> sentences,
                                                    const TranslationContext& context,
                                                    const PromptRegistry& prompts, int n,
                                                    const SamplingParams& params,
                                                    const AlignerOptions& aligner = {});

/// Mean of per-sentence scores (mapped to [0, 1]) against per-sentence references.
double segment_score(Metric& metric, std::span<const Sentence> source, std::span<const std::string> hypothesis,
                     std::span<const std::string> references);

/// Arithmetic mean; throws on an empty list.
double utility(std::span<const double> scores);

inline constexpr double kTieTolerance = 1e-9;

/// (argmax, argmin) with the earliest index winning ties; nullopt when the
/// spread is within kTieTolerance. Needs at least two values.
std::optional<std::pair<std::size_t, std::size_t>> pick_preference(std::span<const double> utilities);

struct ActionSample {
  Action action;
  std::string translation_prompt;
  std::vector<AlignedTranslation> translations;
  std::vector<double> scores;
  double utility = 0.0;
};

std::optional<std::pair<std::size_t, std::size_t>> pick_preference(std::span<const ActionSample> samples);

struct SelTriple {
  std::string doc_id;
  int seg_index = 0;
  int step = 0;
  std::string prompt;
  std::string chosen;
  std::string rejected;
  double chosen_utility = 0.0;
  double rejected_utility = 0.0;

  nlohmann::json to_json() const;
};

struct UtilTriple {
  std::string doc_id;
  int seg_index = 0;
  int step = 0;
  int action = 0;
  std::string prompt;
  std::string chosen;
  std::string rejected;
  double chosen_score = 0.0;
  double rejected_score = 0.0;

  nlohmann::json to_json() const;
};

/// What happened at one (segment, step), for inspection by tests.
struct StepLog {
  std::string doc_id;
  int seg_index = 0;
  int step = 0;
  std::string observation;
  std::vector<Action> actions;
  std::vector<double> utilities;
  std::size_t best = 0;
};

struct BuildOptions {
  std::filesystem::path out_dir;
  bool resume = false;
  /// Return early after this many segments; the checkpoint stays valid.
  std::optional<int> stop_after_segments;
  std::vector<StepLog>* step_logs = nullptr;
};

struct BuildResult {
  bool complete = false;
  nlohmann::json report;
  std::filesystem::path checkpoint;
};

/// Writes dsel.jsonl, dutil.jsonl, report.json and checkpoint.json under
/// out_dir. Every document must carry references. Each completed segment is
/// checkpointed. A BackendError leaves the last checkpoint in place and is
/// rethrown as PartialRunError once any segment has completed.
BuildResult build_dataset(std::span<const Document> corpus, const RunConfig& config, ChatBackend& llm,
                          EmbeddingProvider& embedder, Metric& metric, const PromptRegistry& prompts,
                          const BuildOptions& options);

enum class ExportMode { sft, dpo };

/// Converts dsel.jsonl and dutil.jsonl into sft.jsonl ({prompt, response})
/// or dpo.jsonl ({prompt, chosen, rejected}); returns the row count.
std::size_t export_dataset(const std::filesystem::path& run_dir, ExportMode mode);

/// JSON schemas for the exported rows.
nlohmann::json export_schema(ExportMode mode);

}  // namespace loong
