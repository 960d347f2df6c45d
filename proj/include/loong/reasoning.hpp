#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "loong/backend.hpp"
#include "loong/errors.hpp"
#include "loong/prompts.hpp"
#include "loong/retrieval.hpp"

namespace loong {

/// The three memory types, visited in this fixed order.
enum class ContextKind { essence = 1, exemplar = 2, entity = 3 };

inline constexpr int kSelectionSteps = 3;

std::string_view to_string(ContextKind kind);

/// A reasoning thought plus the chosen candidates (0-based, ascending).
struct Action {
  std::string reasoning;
  std::vector<std::size_t> selected;
  std::string raw;
  int attempts = 0;  // model calls spent producing this action

  bool operator==(const Action&) const = default;
};

struct HistoryEntry {
  ContextKind kind;
  std::vector<std::string> candidates;
  Action action;
};

struct Observation {
  int step = 1;
  ContextKind kind = ContextKind::essence;
  std::vector<HistoryEntry> history;
  std::vector<std::string> candidates;  // presented as [1]..[n]
  std::string segment_text;
};

/// Builds the observation for step |history| + 1.
Observation observe(std::vector<HistoryEntry> history, std::vector<std::string> candidates,
                    std::string segment_text);

std::string render_observation(const Observation& obs, const PromptRegistry& prompts);

/// Parses `{"analysis": str, "selected": [1-based ints]}` from the last
/// fenced JSON block (or a bare object when there is none). Indices must
/// lie in 1..n_candidates; duplicates are dropped with a warning. When
/// "analysis" is absent, the prose before the JSON becomes the reasoning.
Action parse_action(std::string_view raw, std::size_t n_candidates, Diagnostics* diag = nullptr);

/// Canonical serialization used as a training target.
std::string format_action(const Action& action);

/// One sampled completion parsed into an action. An unparsable reply gets
/// `repairs` re-prompts before ActionParseError is thrown.
Action act(ChatBackend& llm, const Observation& obs, const PromptRegistry& prompts,
           const SamplingParams& params, int repairs = 1, Diagnostics* diag = nullptr);

/// Candidate strings of one memory type, in retrieval order.
std::vector<std::string> candidate_items(const CandidateContext& ctx, ContextKind kind);

struct StepTrace {
  int step = 0;
  ContextKind kind = ContextKind::essence;
  std::string prompt;
  std::string raw;
  std::vector<std::size_t> selected;
  int llm_calls = 0;
};

using Selections = std::array<std::vector<std::size_t>, kSelectionSteps>;

struct SelectionResult {
  Selections selections;
  std::vector<StepTrace> trace;
  std::vector<HistoryEntry> history;
};

/// Inference-time selection: one action per step, Essence -> Exemplar ->
/// Entity. A step with no candidates records an empty action without
/// calling the model.
SelectionResult run_selection(ChatBackend& llm, const Segment& segment,
                              const CandidateContext& context, const PromptRegistry& prompts,
                              const SamplingParams& params, Diagnostics* diag = nullptr);

/// {doc_id, seg_index, step, prompt, raw, selected[]} with 0-based indices.
nlohmann::json trace_row(std::string_view doc_id, int seg_index, const StepTrace& step);

}  // namespace loong
