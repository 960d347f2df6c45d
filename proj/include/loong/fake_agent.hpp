#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "loong/backend.hpp"
#include "loong/corpus.hpp"
#include "loong/memory.hpp"

namespace loong {

/// Offline stand-in for a chat model that understands every built-in
/// template. Replies are a pure function of (prompt, seed), so runs with a
/// fixed seed are reproducible and resumable. Translation is a word-level
/// cipher (lexicon names, vowel rotation elsewhere) that the synthetic
/// corpus uses for its references.
struct FakeAgentOptions {
  enum class Fault { none, merge, split, reorder, preamble };
  enum class Selection { random, all, none, first };

  Fault fault = Fault::none;
  double fault_rate = 0.0;   // chance that an eligible translation reply is corrupted
  int fault_min_span = 2;    // spans shorter than this are never corrupted
  /// Chance of leaving a word untranslated; shrinks as more context lines
  /// are supplied. Zero makes every translation identical.
  double degradation = 0.0;
  Selection selection = Selection::random;
  double garbage_action_rate = 0.0;  // chance of an unparsable action reply
  int summary_words = 30;
  double judge_scores[5] = {80, 70, 90, 60, 100};
};

struct LexiconEntry {
  std::string src;
  std::string tgt;
  EntityCategory category;
};

/// Names used by the synthetic corpus and recognized by the fake agent.
const std::vector<LexiconEntry>& fake_lexicon();

/// The cipher applied to one source sentence.
std::string fake_translate_sentence(std::string_view sentence);

class FakeAgent final : public ChatBackend {
 public:
  explicit FakeAgent(FakeAgentOptions options = {});
  ChatResponse complete(const ChatRequest& request) override;

  const FakeAgentOptions& options() const noexcept { return options_; }
  std::uint64_t calls() const noexcept { return calls_.load(); }

 private:
  std::string translate(std::string_view prompt, std::uint64_t key) const;
  std::string act(std::string_view prompt, std::uint64_t key) const;

  FakeAgentOptions options_;
  std::atomic<std::uint64_t> calls_{0};
};

struct SyntheticOptions {
  /// Every sentence has eight fixed-width words, and sentence i names the
  /// lexicon entry i mod |lexicon|; segment prompts then have near-constant size.
  bool uniform = false;
  std::string src_lang = "English";
  std::string tgt_lang = "Cipher";
};

/// Reproducible document of `n_sentences` sentences with cipher references.
Document synthetic_document(std::string doc_id, int n_sentences, std::uint64_t seed,
                            const SyntheticOptions& options = {});

}  // namespace loong
