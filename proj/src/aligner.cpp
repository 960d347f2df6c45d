#include "loong/aligner.hpp"

#include <algorithm>
#include <future>
#include <regex>
#include <set>

#include "loong/text.hpp"

namespace loong {

namespace {

constexpr std::string_view kOpen = "<s>";
constexpr std::string_view kClose = "</s>";

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

/// Index from a `#i` marker ending right before `pos` (whitespace allowed), or -1.
int marker_before(std::string_view out, std::size_t pos) {
  std::size_t q = pos;
  while (q > 0 && is_blank(out[q - 1])) --q;
  const std::size_t digits_end = q;
  while (q > 0 && is_digit(out[q - 1])) --q;
  if (q == digits_end || digits_end - q > 9) return -1;
  if (q == 0 || out[q - 1] != '#') return -1;
  return std::stoi(std::string(out.substr(q, digits_end - q)));
}

struct Scan {
  std::vector<AlignedSentence> units;
  std::string error;
};

Scan scan_units(std::string_view out) {
  Scan scan;
  std::size_t pos = 0;
  for (;;) {
    const auto open = out.find(kOpen, pos);
    const auto close = out.find(kClose, pos);
    if (open == std::string_view::npos && close == std::string_view::npos) break;
    if (close < open) {
      if (scan.error.empty()) scan.error = "unmatched </s>";
      pos = close + kClose.size();
      continue;
    }
    const auto body_start = open + kOpen.size();
    const auto body_end = out.find(kClose, body_start);
    const auto next_open = out.find(kOpen, body_start);
    if (body_end == std::string_view::npos || next_open < body_end) {
      if (scan.error.empty()) scan.error = "unmatched <s>";
      if (next_open == std::string_view::npos) break;
      pos = next_open;
      continue;
    }
    scan.units.push_back(AlignedSentence{
        marker_before(out, open), std::string(text::trim(out.substr(body_start, body_end - body_start)))});
    pos = body_end + kClose.size();
  }
  return scan;
}

AlignmentOutcome misaligned(std::string reason) {
  AlignmentOutcome o;
  o.diagnostic = std::move(reason);
  return o;
}

std::string bullet_lines(const std::vector<std::string>& items) {
  if (items.empty()) return "N/A";
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += "\n";
    out += "- " + items[i];
  }
  return out;
}

}  // namespace

MarkedText inject_markers(std::span<const Sentence> sentences) {
  if (sentences.empty()) throw ValidationError("inject_markers: no sentences");
  MarkedText marked;
  std::set<int> seen;
  for (const auto& s : sentences) {
    if (!seen.insert(s.index).second) {
      throw ValidationError("inject_markers: duplicate index " + std::to_string(s.index));
    }
    if (!marked.expected_indices.empty() && s.index < marked.expected_indices.back()) {
      throw ValidationError("inject_markers: indices must ascend");
    }
    if (!marked.text.empty()) marked.text += "\n";
    marked.text += "#" + std::to_string(s.index) + " <s>" + s.text + "</s>";
    marked.expected_indices.push_back(s.index);
  }
  return marked;
}

std::vector<AlignedSentence> extract_units(std::string_view output) {
  return scan_units(output).units;
}

AlignmentOutcome check_alignment(std::string_view output, std::span<const int> expected) {
  auto scan = scan_units(output);
  if (!scan.error.empty()) return misaligned(scan.error);
  std::set<int> seen;
  for (const auto& u : scan.units) {
    if (u.index < 0) return misaligned("sentence unit without an index marker");
    if (u.text.empty()) return misaligned("empty sentence for index " + std::to_string(u.index));
    if (!seen.insert(u.index).second) return misaligned("duplicate index " + std::to_string(u.index));
  }
  const std::set<int> wanted(expected.begin(), expected.end());
  for (int e : expected) {
    if (!seen.count(e)) return misaligned("missing index " + std::to_string(e));
  }
  for (const auto& u : scan.units) {
    if (!wanted.count(u.index)) return misaligned("unexpected index " + std::to_string(u.index));
  }
  for (std::size_t i = 0; i < scan.units.size(); ++i) {
    if (scan.units[i].index != expected[i]) {
      return misaligned("index " + std::to_string(scan.units[i].index) + " out of order");
    }
  }
  AlignmentOutcome ok;
  ok.aligned = true;
  ok.sentences = std::move(scan.units);
  return ok;
}

int split_point(int i, int j) {
  if (i >= j) {
    throw ValidationError("split_point: need i < j, got " + std::to_string(i) + " and " + std::to_string(j));
  }
  return i - 1 + (j - i + 1) / 2;
}

TranslationContext render_context(const CandidateContext& candidates, const Selections& selections,
                                  std::string src_lang, std::string tgt_lang) {
  TranslationContext ctx;
  ctx.src_lang = std::move(src_lang);
  ctx.tgt_lang = std::move(tgt_lang);
  std::vector<std::string> items;
  for (auto i : selections[0]) items.push_back(candidates.essence.at(i).text);
  ctx.summaries = bullet_lines(items);
  items.clear();
  for (auto i : selections[1]) {
    const auto& e = candidates.exemplars.at(i);
    items.push_back(e.src_text + " => " + e.tgt_text);
  }
  ctx.exemplars = bullet_lines(items);
  items.clear();
  for (auto i : selections[2]) {
    const auto& e = candidates.entities.at(i);
    items.push_back(e.src_name + " => " + e.tgt_name + ": " + e.description);
  }
  ctx.entities = bullet_lines(items);
  return ctx;
}

std::string render_translation_prompt(const TranslationContext& ctx,
                                      std::span<const Sentence> sentences,
                                      const PromptRegistry& prompts) {
  auto prompt = prompts.render(TemplateName::translate,
                               {{"src_lang", ctx.src_lang},
                                {"tgt_lang", ctx.tgt_lang},
                                {"summaries", ctx.summaries},
                                {"exemplars", ctx.exemplars},
                                {"entities", ctx.entities},
                                {"src_content", inject_markers(sentences).text}});
  if (ctx.history.empty()) return prompt;
  return "<Previous conversation>\n" + ctx.history + "\n</Previous conversation>\n\n" + prompt;
}

std::string strip_markers(std::string_view output) {
  static const std::regex marker_open(R"(#\d+\s*<s>)");
  static const std::regex tags(R"(</?s>)");
  static const std::regex line_marker(R"((^|\n)[ \t]*#\d+[ \t]*)");
  static const std::regex spaces(R"(\s+)");
  std::string s(output);
  s = std::regex_replace(s, marker_open, " ");
  s = std::regex_replace(s, tags, " ");
  s = std::regex_replace(s, line_marker, "$1");
  s = std::regex_replace(s, spaces, " ");
  return std::string(text::trim(s));
}

int AlignedTranslation::fallbacks() const noexcept {
  return static_cast<int>(std::count_if(sentences.begin(), sentences.end(),
                                        [](const TranslatedSentence& s) { return s.fallback; }));
}

std::vector<std::string> AlignedTranslation::texts() const {
  std::vector<std::string> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(s.text);
  return out;
}

namespace {

struct Translator {
  ChatBackend& llm;
  const TranslationContext& context;
  const PromptRegistry& prompts;
  const SamplingParams& params;
  const AlignerOptions& options;

  std::string call(std::span<const Sentence> span, int retry) const {
    const auto salt = text::mix(
        text::mix(static_cast<std::uint64_t>(span.front().index), static_cast<std::uint64_t>(span.back().index)),
        static_cast<std::uint64_t>(retry));
    return ask(llm, render_translation_prompt(context, span, prompts), params.derive(salt));
  }

  AlignedTranslation singleton(const Sentence& s, int depth) const {
    AlignedTranslation out;
    const int expected[] = {s.index};
    for (int retry = 0; retry <= options.singleton_retries; ++retry) {
      const auto raw = call(std::span(&s, 1), retry);
      auto outcome = check_alignment(raw, expected);
      out.attempts.push_back(TranslationAttempt{s.index, s.index, depth, outcome.aligned, outcome.diagnostic});
      std::string text = outcome.aligned ? outcome.sentences.front().text : strip_markers(raw);
      if (!text.empty()) {
        out.sentences.push_back(TranslatedSentence{s.index, std::move(text), false});
        return out;
      }
      out.attempts.back().diagnostic = "empty output";
    }
    out.sentences.push_back(TranslatedSentence{s.index, s.text, true});
    return out;
  }

  AlignedTranslation run(std::span<const Sentence> span, int depth) const {
    if (span.size() == 1) return singleton(span.front(), depth);
    const auto raw = call(span, 0);
    std::vector<int> expected;
    expected.reserve(span.size());
    for (const auto& s : span) expected.push_back(s.index);
    auto outcome = check_alignment(raw, expected);
    AlignedTranslation out;
    out.attempts.push_back(
        TranslationAttempt{span.front().index, span.back().index, depth, outcome.aligned, outcome.diagnostic});
    if (outcome.aligned) {
      for (auto& u : outcome.sentences) out.sentences.push_back(TranslatedSentence{u.index, std::move(u.text), false});
      return out;
    }
    const int i = 1;
    const int j = static_cast<int>(span.size());
    const auto left_len = static_cast<std::size_t>(split_point(i, j));
    const auto left_span = span.first(left_len);
    const auto right_span = span.subspan(left_len);
    AlignedTranslation left, right;
    if (options.parallel_halves) {
      auto pending = std::async(std::launch::async, [&] { return run(left_span, depth + 1); });
      right = run(right_span, depth + 1);
      left = pending.get();
    } else {
      left = run(left_span, depth + 1);
      right = run(right_span, depth + 1);
    }
    for (auto* half : {&left, &right}) {
      out.attempts.insert(out.attempts.end(), std::make_move_iterator(half->attempts.begin()),
                          std::make_move_iterator(half->attempts.end()));
      out.sentences.insert(out.sentences.end(), std::make_move_iterator(half->sentences.begin()),
                           std::make_move_iterator(half->sentences.end()));
    }
    return out;
  }
};

}  // namespace

AlignedTranslation recursive_translate(ChatBackend& llm, std::span<const Sentence> sentences,
                                       const TranslationContext& context,
                                       const PromptRegistry& prompts, const SamplingParams& params,
                                       const AlignerOptions& options) {
  if (sentences.empty()) throw ValidationError("recursive_translate: no sentences");
  for (std::size_t n = 1; n < sentences.size(); ++n) {
    if (sentences[n].index != sentences[n - 1].index + 1) {
      throw ValidationError("recursive_translate: sentences must be contiguous");
    }
  }
  if (options.singleton_retries < 0) throw ValidationError("recursive_translate: negative retry budget");
  return Translator{llm, context, prompts, params, options}.run(sentences, 0);
}

}  // namespace loong
