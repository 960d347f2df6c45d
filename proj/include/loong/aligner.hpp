#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "loong/backend.hpp"
#include "loong/corpus.hpp"
#include "loong/prompts.hpp"
#include "loong/reasoning.hpp"
#include "loong/retrieval.hpp"

namespace loong {

/// Sentences rendered one per line as `#i <s>text</s>`.
struct MarkedText {
  std::string text;
  std::vector<int> expected_indices;
};

MarkedText inject_markers(std::span<const Sentence> sentences);

struct AlignedSentence {
  int index = 0;
  std::string text;

  bool operator==(const AlignedSentence&) const = default;
};

struct AlignmentOutcome {
  bool aligned = false;
  std::vector<AlignedSentence> sentences;  // filled only when aligned
  std::string diagnostic;                  // filled only when not aligned
};

/// Every `#i <s>...</s>` unit in order of appearance. Text outside units is
/// ignored; a unit without an index marker gets index -1.
std::vector<AlignedSentence> extract_units(std::string_view output);

/// Aligned iff the units carry exactly `expected` in ascending order, each
/// with a non-empty body, and every `<s>` has its `</s>`.
AlignmentOutcome check_alignment(std::string_view output, std::span<const int> expected);

/// k = i - 1 + floor((j - i + 1) / 2); requires i < j and yields i <= k < j.
int split_point(int i, int j);

/// The rendered context shared by every recursion level of one segment.
struct TranslationContext {
  std::string src_lang;
  std::string tgt_lang;
  std::string summaries = "N/A";
  std::string exemplars = "N/A";
  std::string entities = "N/A";
  /// Full-history baseline only: prior conversation prepended to the prompt.
  std::string history;
};

/// Keeps the selected candidates of each memory type, in candidate order.
TranslationContext render_context(const CandidateContext& candidates, const Selections& selections,
                                  std::string src_lang, std::string tgt_lang);

std::string render_translation_prompt(const TranslationContext& ctx,
                                      std::span<const Sentence> sentences,
                                      const PromptRegistry& prompts);

struct AlignerOptions {
  int singleton_retries = 2;
  bool parallel_halves = false;
};

struct TranslationAttempt {
  int start = 0;
  int end = 0;
  int depth = 0;
  bool aligned = false;
  std::string diagnostic;
};

struct TranslatedSentence {
  int index = 0;
  std::string text;
  bool fallback = false;  // source text copied after the singleton retries ran out

  bool operator==(const TranslatedSentence&) const = default;
};

struct AlignedTranslation {
  std::vector<TranslatedSentence> sentences;
  std::vector<TranslationAttempt> attempts;  // pre-order: parent, left subtree, right subtree

  int llm_calls() const noexcept { return static_cast<int>(attempts.size()); }
  int fallbacks() const noexcept;
  std::vector<std::string> texts() const;
};

/// Translates a contiguous sentence span. A misaligned reply splits the span
/// at split_point and recurses on both halves; a single sentence takes the
/// reply with marker fragments removed. The output always holds one
/// sentence per input sentence, in input order.
AlignedTranslation recursive_translate(ChatBackend& llm, std::span<const Sentence> sentences,
                                       const TranslationContext& context,
                                       const PromptRegistry& prompts, const SamplingParams& params,
                                       const AlignerOptions& options = {});

/// Reply text with `#i`, `<s>` and `</s>` fragments removed and whitespace
/// collapsed.
std::string strip_markers(std::string_view output);

}  // namespace loong
