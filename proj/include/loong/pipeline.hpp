#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "loong/config.hpp"
#include "loong/corpus.hpp"
#include "loong/memory.hpp"
#include "loong/metrics.hpp"
#include "loong/reasoning.hpp"

namespace loong {

struct RecordSentence {
  int index = 0;
  std::string src;
  std::string tgt;
  bool fallback = false;

  bool operator==(const RecordSentence&) const = default;
};

/// Per-segment counters. Prompt sizes are in bytes of user text sent.
struct SegmentTrace {
  int seg_index = 0;
  int start = 0;
  int end = 0;
  Selections selections;
  int llm_calls = 0;
  int translation_calls = 0;
  int fallbacks = 0;
  std::size_t prompt_chars = 0;
  std::size_t peak_prompt_chars = 0;

  bool operator==(const SegmentTrace&) const = default;
};

/// Exactly one target sentence per source sentence.
struct TranslationRecord {
  std::string doc_id;
  std::string src_lang;
  std::string tgt_lang;
  RunMode mode = RunMode::loong;
  std::vector<RecordSentence> sentences;
  std::vector<SegmentTrace> segments;

  nlohmann::json to_json() const;
  static TranslationRecord from_json(const nlohmann::json& j);
  std::vector<std::string> targets() const;

  bool operator==(const TranslationRecord&) const = default;
};

struct TranslateOptions {
  /// Per-document checkpoint file; written after every segment and removed
  /// once the document is finished. Empty disables checkpointing.
  std::filesystem::path checkpoint;
  bool resume = false;
  /// Receives the step trace rows of each segment, in order.
  std::function<void(const nlohmann::json&)> trace_sink;
  /// Stop after this many segments and throw PartialRunError.
  std::optional<int> stop_after_segments;
};

struct PipelineServices {
  ChatBackend& llm;
  EmbeddingProvider& embedder;
  const PromptRegistry& prompts;
};

/// Segment loop: retrieve -> select -> aligned translation -> memory update.
/// In doc2doc mode the whole prior conversation is prepended instead and
/// memory is not used. A BackendError after at least one completed segment
/// becomes PartialRunError naming the checkpoint that holds the prefix;
/// before that it propagates unchanged. `final_memory` receives the
/// memory after the last segment.
TranslationRecord translate_document(const Document& doc, const RunConfig& config,
                                     const PipelineServices& services, const TranslateOptions& options = {},
                                     MemoryState* final_memory = nullptr);

/// Documents in parallel on config.workers threads; results keep corpus
/// order. `options_for` supplies per-document options.
std::vector<TranslationRecord> translate_corpus(
    std::span<const Document> corpus, const RunConfig& config, const PipelineServices& services,
    const std::function<TranslateOptions(const Document&)>& options_for);

struct DocumentEvaluation {
  std::string doc_id;
  std::vector<double> sentence_scores;  // metric scale
  std::vector<double> segment_scores;   // mean over each segment's sentences
  std::vector<std::pair<int, int>> bounds;  // sentence range of each segment
  std::vector<double> curve;            // cumulative_curve(segment_scores)
  std::optional<JudgeReport> judge;
};

struct EvaluationReport {
  std::string metric;
  std::vector<DocumentEvaluation> documents;
  std::vector<std::string> notices;

  nlohmann::json to_json() const;
  /// One row per segment: doc_id,seg_index,start,end,score,cumulative.
  std::string to_csv() const;
};

struct JudgeSettings {
  ChatBackend* llm = nullptr;  // null disables judging
  const PromptRegistry* prompts = nullptr;
  std::size_t window = 0;
  SamplingParams params;
};

/// Scores every record against the references of the matching document.
/// Documents without references are skipped with a notice.
EvaluationReport evaluate_run(std::span<const TranslationRecord> records, std::span<const Document> corpus,
                              Metric& metric, const JudgeSettings& judge = {});

}  // namespace loong
