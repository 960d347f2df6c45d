#include "loong/fake_agent.hpp"

#include <algorithm>
#include <cctype>
#include <random>

#include <json.hpp>

#include "loong/aligner.hpp"
#include "loong/metrics.hpp"
#include "loong/text.hpp"

namespace loong {

using nlohmann::json;

namespace {

constexpr std::string_view kVocabulary[] = {
    "river", "stone", "light", "house", "green", "quiet", "storm", "bread", "cloud", "field", "night",
    "dream", "brave", "sharp", "plain", "smoke", "train", "glass", "water", "metal", "piano", "chair",
    "table", "grass", "horse", "apple", "sugar", "money", "music", "voice", "heart", "earth"};

double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

std::uint64_t salted(std::uint64_t key, std::string_view purpose, std::uint64_t n = 0) {
  return text::mix(text::mix(key, text::fnv1a(purpose)), n);
}

/// Text between `open` and the next `close` (or the end); empty when `open` is absent.
std::string_view section(std::string_view s, std::string_view open, std::string_view close) {
  const auto a = s.find(open);
  if (a == std::string_view::npos) return {};
  const auto from = a + open.size();
  const auto b = close.empty() ? std::string_view::npos : s.find(close, from);
  return s.substr(from, b == std::string_view::npos ? std::string_view::npos : b - from);
}

std::string_view first_line(std::string_view s) {
  return s.substr(0, s.find('\n'));
}

char rotate_vowel(char c) {
  switch (c) {
    case 'a': return 'e';
    case 'e': return 'i';
    case 'i': return 'o';
    case 'o': return 'u';
    case 'u': return 'a';
    case 'A': return 'E';
    case 'E': return 'I';
    case 'I': return 'O';
    case 'O': return 'U';
    case 'U': return 'A';
    default: return c;
  }
}

const LexiconEntry* lookup(std::string_view name) {
  for (const auto& e : fake_lexicon()) {
    if (e.src == name) return &e;
  }
  return nullptr;
}

std::string translate_word(std::string_view word) {
  auto core_end = word.size();
  while (core_end > 0 && std::ispunct(static_cast<unsigned char>(word[core_end - 1]))) --core_end;
  const auto core = word.substr(0, core_end);
  const auto tail = word.substr(core_end);
  if (const auto* e = lookup(core)) return e->tgt + std::string(tail);
  std::string out(core);
  std::transform(out.begin(), out.end(), out.begin(), rotate_vowel);
  return out + std::string(tail);
}

std::vector<std::string_view> words(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    const auto start = i;
    while (i < s.size() && s[i] != ' ') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

std::size_t context_lines(std::string_view prompt) {
  const auto ctx = section(prompt, "<Summaries of previous pages>", "<TRANSLATION TASK RULES>");
  std::size_t n = 0;
  for (const auto& line : text::split_lines(ctx)) {
    if (line.rfind("- ", 0) == 0) ++n;
  }
  return n;
}

std::string render_units(const std::vector<AlignedSentence>& units) {
  std::string out;
  for (const auto& u : units) {
    if (!out.empty()) out += "\n";
    out += "#" + std::to_string(u.index) + " <s>" + u.text + "</s>";
  }
  return out;
}

std::string fenced(const json& j) { return "```json\n" + j.dump(2) + "\n```"; }

}  // namespace

const std::vector<LexiconEntry>& fake_lexicon() {
  static const std::vector<LexiconEntry> lexicon = {
      {"Marlo", "Merlu", EntityCategory::Character},    {"Veyra", "Wiyre", EntityCategory::Location},
      {"Ostra", "Ustre", EntityCategory::Organization}, {"Kelmi", "Kilmo", EntityCategory::Object},
      {"Tessa", "Tisse", EntityCategory::Character},    {"Brund", "Brant", EntityCategory::Event},
  };
  return lexicon;
}

std::string fake_translate_sentence(std::string_view sentence) {
  std::string out;
  for (auto w : words(sentence)) {
    if (!out.empty()) out += " ";
    out += translate_word(w);
  }
  return out;
}

FakeAgent::FakeAgent(FakeAgentOptions options) : options_(std::move(options)) {}

ChatResponse FakeAgent::complete(const ChatRequest& request) {
  ++calls_;
  std::string_view p = request.user;
  const auto key = text::mix(text::fnv1a(p), request.params.seed.value_or(0));
  auto starts = [&](std::string_view prefix) { return p.substr(0, prefix.size()) == prefix; };
  std::string reply;
  if (p.find("<TRANSLATION TASK RULES>") != std::string_view::npos) {
    reply = translate(p, key);
  } else if (starts("You are translating a long document")) {
    reply = act(p, key);
  } else if (starts("You are an expert linguist")) {
    const auto& s = options_.judge_scores;
    reply = "### Evaluation Report\n";
    for (std::size_t d = 0; d < 5; ++d) {
      reply += "**" + std::to_string(d + 1) + ". " + std::string(kJudgeDimensions[d]) + "**\n";
      reply += "Score: " + json(s[d]).dump() + "\nRationale: Consistent with the reference.\n";
    }
  } else if (starts("Please provide a summary")) {
    const auto ws = words(section(p, "<Paragraph>\n", ""));
    const auto n = std::min<std::size_t>(ws.size(), static_cast<std::size_t>(std::max(0, options_.summary_words)));
    for (std::size_t i = 0; i < n; ++i) reply += (i ? " " : "") + std::string(ws[i]);
  } else if (starts("Given a text passage and a specified entity, classify")) {
    const auto* e = lookup(text::trim(first_line(section(p, "<Entity>\n", ""))));
    reply = std::string(to_string(e ? e->category : EntityCategory::Character));
  } else if (starts("Given a text passage and a specified entity,")) {
    const auto entity = std::string(text::trim(first_line(section(p, "<Entity>\n", ""))));
    const auto items = first_line(section(p, "following items:\n", ""));
    json obj = json::object();
    std::size_t pos = 0;
    while (pos <= items.size()) {
      const auto comma = items.find(", ", pos);
      const auto field = items.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
      obj[std::string(field)] = entity + " " + std::string(field) + " noted";
      if (comma == std::string_view::npos) break;
      pos = comma + 2;
    }
    reply = fenced(obj);
  } else if (starts("Given a source text in")) {
    const auto source = section(p, "<Source text>\n", "\n\n<Translation>");
    json arr = json::array();
    for (const auto& e : fake_lexicon()) {
      if (source.find(e.src) != std::string_view::npos) arr.push_back({{"src", e.src}, {"tgt", e.tgt}});
    }
    reply = fenced(arr);
  } else if (starts("Given a text passage and the stored record")) {
    const auto line = std::string(text::trim(first_line(section(p, "<Entity>\n", ""))));
    reply = line + " is a recurring name; keep its established rendering.";
  } else {
    reply = "I cannot help with that request.";
  }
  return ChatResponse{std::move(reply), "stop", TokenUsage{}, 1};
}

std::string FakeAgent::translate(std::string_view prompt, std::uint64_t key) const {
  const auto marker = prompt.rfind("source text>\n");
  if (marker == std::string_view::npos) return "";
  auto units = extract_units(prompt.substr(marker));
  const double p_drop = options_.degradation / (1.0 + 0.25 * static_cast<double>(context_lines(prompt)));
  for (auto& u : units) {
    std::string out;
    const auto ws = words(u.text);
    for (std::size_t w = 0; w < ws.size(); ++w) {
      if (!out.empty()) out += " ";
      const bool keep_source =
          p_drop > 0.0 && unit(salted(key, "drop", static_cast<std::uint64_t>(u.index) * 1000 + w)) < p_drop;
      out += keep_source ? std::string(ws[w]) : translate_word(ws[w]);
    }
    u.text = std::move(out);
  }
  const bool eligible = static_cast<int>(units.size()) >= std::max(1, options_.fault_min_span);
  if (options_.fault == FakeAgentOptions::Fault::none || !eligible ||
      unit(salted(key, "fault")) >= options_.fault_rate) {
    return render_units(units);
  }
  const auto n = units.size();
  const auto k = n > 1 ? static_cast<std::size_t>(salted(key, "where") % (n - 1)) : 0;
  switch (options_.fault) {
    case FakeAgentOptions::Fault::merge:
      if (n > 1) {
        units[k].text += " " + units[k + 1].text;
        units.erase(units.begin() + static_cast<std::ptrdiff_t>(k) + 1);
      }
      return render_units(units);
    case FakeAgentOptions::Fault::split: {
      auto& u = units[k];
      const auto ws = words(u.text);
      const auto half = std::max<std::size_t>(1, ws.size() / 2);
      std::string a, b;
      for (std::size_t w = 0; w < ws.size(); ++w) (w < half ? a : b) += (w == 0 || w == half ? "" : " ") + std::string(ws[w]);
      u.text = a + "</s> <s>" + (b.empty() ? a : b);
      return render_units(units);
    }
    case FakeAgentOptions::Fault::reorder:
      if (n > 1) std::swap(units[k], units[k + 1]);
      return render_units(units);
    case FakeAgentOptions::Fault::preamble:
      return "Sure! Here is the translation, keeping every marker:\n\n" + render_units(units) +
             "\n\nNote: names follow the #glossary conventions.";
    case FakeAgentOptions::Fault::none:
      break;
  }
  return render_units(units);
}

std::string FakeAgent::act(std::string_view prompt, std::uint64_t key) const {
  if (options_.garbage_action_rate > 0.0 && unit(salted(key, "garbage")) < options_.garbage_action_rate) {
    return "All of these look relevant to me.";
  }
  const auto block = section(prompt, "<Candidates>\n", "\n</Candidates>");
  std::size_t n = 0;
  for (const auto& line : text::split_lines(block)) {
    if (line.size() > 1 && line[0] == '[' && std::isdigit(static_cast<unsigned char>(line[1]))) ++n;
  }
  std::vector<std::size_t> chosen;
  for (std::size_t i = 1; i <= n; ++i) {
    switch (options_.selection) {
      case FakeAgentOptions::Selection::all: chosen.push_back(i); break;
      case FakeAgentOptions::Selection::first:
        if (i == 1) chosen.push_back(i);
        break;
      case FakeAgentOptions::Selection::none: break;
      case FakeAgentOptions::Selection::random:
        if (unit(salted(key, "pick", i)) < 0.5) chosen.push_back(i);
        break;
    }
  }
  const json obj = {{"analysis", "Checked " + std::to_string(n) + " candidates against the segment; kept " +
                                     std::to_string(chosen.size()) + " (pass " +
                                     std::to_string(salted(key, "pass") % 1000) + ")."},
                    {"selected", chosen}};
  return "Reviewing the candidates.\n\n```json\n" + obj.dump() + "\n```";
}

Document synthetic_document(std::string doc_id, int n_sentences, std::uint64_t seed,
                            const SyntheticOptions& options) {
  if (n_sentences < 1) throw ValidationError("synthetic_document: need at least one sentence");
  std::mt19937_64 rng(seed);
  const auto& lexicon = fake_lexicon();
  const auto vocab = std::size(kVocabulary);
  std::vector<std::string> src, ref;
  for (int i = 0; i < n_sentences; ++i) {
    std::vector<std::string> ws;
    if (options.uniform) {
      ws.push_back(lexicon[static_cast<std::size_t>(i) % lexicon.size()].src);
      for (int w = 0; w < 7; ++w) ws.emplace_back(kVocabulary[rng() % vocab]);
    } else {
      const int len = 4 + static_cast<int>(rng() % 11);
      for (int w = 0; w < len; ++w) ws.emplace_back(kVocabulary[rng() % vocab]);
      if (rng() % 10 < 6) {
        ws[rng() % ws.size()] = lexicon[rng() % lexicon.size()].src;
      }
    }
    ws.back() += ".";
    std::string sentence = text::join(ws, " ");
    ref.push_back(fake_translate_sentence(sentence));
    src.push_back(std::move(sentence));
  }
  return make_document(std::move(doc_id), options.src_lang, options.tgt_lang, src, std::move(ref));
}

}  // namespace loong
