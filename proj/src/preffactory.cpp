#include "loong/preffactory.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <future>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include "loong/json_util.hpp"
#include "loong/parallel.hpp"
#include "loong/retrieval.hpp"
#include "loong/text.hpp"

namespace loong {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<Action> sample_actions(ChatBackend& llm, const Observation& obs, const PromptRegistry& prompts,
                                   int m, const SamplingParams& params, int resample_budget,
                                   Diagnostics* diag) {
  if (m < 2) throw ValidationError("sample_actions: need at least 2 samples");
  const auto prompt = render_observation(obs, prompts);
  std::vector<Action> out;
  int draws = 0;
  int budget = resample_budget;
  for (int i = 0; i < m; ++i) {
    for (;;) {
      const auto raw = ask(llm, prompt, params.derive(static_cast<std::uint64_t>(draws++)));
      try {
        auto action = parse_action(raw, obs.candidates.size(), diag);
        action.attempts = 1;
        out.push_back(std::move(action));
        break;
      } catch (const ActionParseError& e) {
        if (budget > 0) {
          --budget;
          warn(diag, std::string("action sample resampled: ") + e.what());
          continue;
        }
        warn(diag, std::string("action sample dropped: ") + e.what());
        break;
      }
    }
  }
  return out;
}

std::vector<AlignedTranslation> sample_translations(ChatBackend& llm, std::span<const Sentence> sentences,
                                                    const TranslationContext& context,
                                                    const PromptRegistry& prompts, int n,
                                                    const SamplingParams& params,
                                                    const AlignerOptions& aligner) {
  if (n < 2) throw ValidationError("sample_translations: need at least 2 samples");
  std::vector<AlignedTranslation> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    out.push_back(recursive_translate(llm, sentences, context, prompts,
                                      params.derive(static_cast<std::uint64_t>(j)), aligner));
  }
  return out;
}

double segment_score(Metric& metric, std::span<const Sentence> source, std::span<const std::string> hypothesis,
                     std::span<const std::string> references) {
  if (source.size() != hypothesis.size() || source.size() != references.size()) {
    throw ValidationError("segment_score: source, hypothesis and reference lengths differ");
  }
  std::vector<ScoreRequest> requests;
  requests.reserve(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    requests.push_back(ScoreRequest{source[i].text, hypothesis[i], references[i]});
  }
  std::vector<double> values;
  for (const auto& s : metric.score_batch(requests)) values.push_back(s.unit());
  return mean(values);
}

double utility(std::span<const double> scores) {
  if (scores.empty()) throw ValidationError("utility: no scores");
  return mean(scores);
}

std::optional<std::pair<std::size_t, std::size_t>> pick_preference(std::span<const double> utilities) {
  if (utilities.size() < 2) throw ValidationError("pick_preference: need at least 2 samples");
  std::size_t hi = 0, lo = 0;
  for (std::size_t i = 1; i < utilities.size(); ++i) {
    if (utilities[i] > utilities[hi]) hi = i;
    if (utilities[i] < utilities[lo]) lo = i;
  }
  if (utilities[hi] - utilities[lo] <= kTieTolerance) return std::nullopt;
  return std::pair{hi, lo};
}

std::optional<std::pair<std::size_t, std::size_t>> pick_preference(std::span<const ActionSample> samples) {
  std::vector<double> u;
  u.reserve(samples.size());
  for (const auto& s : samples) u.push_back(s.utility);
  return pick_preference(u);
}

json SelTriple::to_json() const {
  return {{"doc_id", doc_id},         {"seg_index", seg_index}, {"step", step},
          {"prompt", prompt},         {"chosen", chosen},       {"rejected", rejected},
          {"chosen_utility", chosen_utility}, {"rejected_utility", rejected_utility}};
}

json UtilTriple::to_json() const {
  return {{"doc_id", doc_id},     {"seg_index", seg_index}, {"step", step},
          {"action", action},     {"prompt", prompt},       {"chosen", chosen},
          {"rejected", rejected}, {"chosen_score", chosen_score}, {"rejected_score", rejected_score}};
}

namespace {

std::size_t argmax_earliest(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::string marked_output(std::span<const Sentence> source, const AlignedTranslation& t) {
  std::vector<Sentence> out;
  out.reserve(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    out.push_back(Sentence{source[i].doc_id, source[i].index, t.sentences[i].text});
  }
  return inject_markers(out).text;
}

json fresh_report() {
  return {{"documents", 0},
          {"segments", 0},
          {"steps", 0},
          {"sel_triples", 0},
          {"util_triples", 0},
          {"action_samples", 0},
          {"translation_samples", 0},
          {"alignment_fallbacks", 0},
          {"skipped",
           {{"sel_tie", 0}, {"sel_identical", 0}, {"sel_few_actions", 0}, {"util_tie", 0}, {"util_duplicate", 0}}},
          {"warnings", json::array()}};
}

void bump(json& j, const char* key, long by = 1) { j[key] = j[key].get<long>() + by; }

std::string corpus_fingerprint(std::span<const Document> corpus) {
  std::uint64_t h = 0;
  for (const auto& d : corpus) h = text::mix(h, text::fnv1a(to_jsonl_row(d)));
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

void append_rows(const fs::path& path, const std::vector<json>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw ValidationError("cannot append to " + path.string());
  for (const auto& r : rows) out << r.dump() << "\n";
  out.flush();
  if (!out) throw ValidationError("write failed for " + path.string());
}

struct Cursor {
  std::size_t doc = 0;
  int next_segment = 0;
  MemoryState memory;
  std::uintmax_t dsel_bytes = 0;
  std::uintmax_t dutil_bytes = 0;
  json report = fresh_report();
};

json cursor_json(const Cursor& c, const std::string& fingerprint, const std::string& corpus_fp, bool complete) {
  return {{"version", 1},
          {"config_fingerprint", fingerprint},
          {"corpus_fingerprint", corpus_fp},
          {"doc", c.doc},
          {"next_segment", c.next_segment},
          {"memory", json::parse(snapshot(c.memory))},
          {"dsel_bytes", c.dsel_bytes},
          {"dutil_bytes", c.dutil_bytes},
          {"report", c.report},
          {"complete", complete}};
}

Cursor load_cursor(const fs::path& path, const std::string& fingerprint, const std::string& corpus_fp) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RestoreError("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(in);
    if (j.at("version").get<int>() != 1) throw RestoreError("unsupported checkpoint version");
    if (j.at("config_fingerprint").get<std::string>() != fingerprint) {
      throw RestoreError("checkpoint was written with a different configuration");
    }
    if (j.at("corpus_fingerprint").get<std::string>() != corpus_fp) {
      throw RestoreError("checkpoint was written for a different corpus");
    }
    Cursor c;
    c.doc = j.at("doc").get<std::size_t>();
    c.next_segment = j.at("next_segment").get<int>();
    c.memory = restore(j.at("memory").dump());
    c.dsel_bytes = j.at("dsel_bytes").get<std::uintmax_t>();
    c.dutil_bytes = j.at("dutil_bytes").get<std::uintmax_t>();
    c.report = j.at("report");
    return c;
  } catch (const json::exception& e) {
    throw RestoreError("corrupt checkpoint " + path.string() + ": " + e.what());
  }
}

void truncate_to(const fs::path& path, std::uintmax_t bytes) {
  if (!fs::exists(path)) {
    if (bytes != 0) throw RestoreError(path.string() + " is missing but the checkpoint expects data");
    std::ofstream(path, std::ios::binary).flush();
    return;
  }
  if (fs::file_size(path) < bytes) throw RestoreError(path.string() + " is shorter than the checkpoint records");
  fs::resize_file(path, bytes);
}

struct SegmentOutput {
  std::vector<json> sel_rows;
  std::vector<json> util_rows;
  std::vector<std::string> final_translation;
};

class SegmentBuilder {
 public:
  SegmentBuilder(const RunConfig& config, ChatBackend& llm, EmbeddingProvider& embedder, Metric& metric,
                 const PromptRegistry& prompts, json& report, Diagnostics& diag,
                 std::vector<StepLog>* step_logs)
      : config_(config),
        llm_(llm),
        embedder_(embedder),
        metric_(metric),
        prompts_(prompts),
        report_(report),
        diag_(diag),
        step_logs_(step_logs) {}

  SegmentOutput run(const Document& doc, const Segment& seg, const MemoryState& memory) {
    SegmentOutput out;
    const auto seg_params = config_.params.derive(
        text::mix(text::fnv1a(doc.doc_id), static_cast<std::uint64_t>(seg.seg_index)));
    const auto candidates = retrieve(memory, seg, embedder_, llm_, prompts_, config_.retrieval,
                                     seg_params.derive(text::fnv1a("retrieve")));
    const auto refs = std::span(*doc.references).subspan(static_cast<std::size_t>(seg.start - 1), seg.size());
    const auto seg_text = seg.joined_text();
    std::vector<HistoryEntry> history;
    Selections chosen{};
    const auto& pref = config_.preferences;

    for (int k = 1; k <= kSelectionSteps; ++k) {
      const auto kind = static_cast<ContextKind>(k);
      auto items = candidate_items(candidates, kind);
      const auto obs = observe(history, items, seg_text);
      const auto obs_prompt = render_observation(obs, prompts_);
      const auto step_params = seg_params.derive(static_cast<std::uint64_t>(k));
      auto actions = sample_actions(llm_, obs, prompts_, pref.actions, step_params.derive(text::fnv1a("act")),
                                    pref.action_resample_budget, &diag_);
      bump(report_, "action_samples", static_cast<long>(actions.size()));
      const bool enough = actions.size() >= 2;
      if (!enough) {
        report_["skipped"]["sel_few_actions"] = report_["skipped"]["sel_few_actions"].get<long>() + 1;
        warn(&diag_, doc.doc_id + " segment " + std::to_string(seg.seg_index) + " step " + std::to_string(k) +
                         ": fewer than 2 usable actions; no selection pair");
      }
      const bool placeholder = actions.empty();
      if (placeholder) actions.push_back(Action{});

      auto samples = parallel_map(actions.size(), config_.workers, [&](std::size_t i) {
        ActionSample s;
        s.action = actions[i];
        auto sel = chosen;
        sel[static_cast<std::size_t>(k - 1)] = s.action.selected;
        const auto tctx = render_context(candidates, sel, doc.src_lang, doc.tgt_lang);
        s.translation_prompt = render_translation_prompt(tctx, seg.sentences, prompts_);
        s.translations = sample_translations(llm_, seg.sentences, tctx, prompts_, pref.translations,
                                             step_params.derive(text::mix(text::fnv1a("translate"), i)),
                                             config_.aligner);
        for (const auto& t : s.translations) {
          const auto texts = t.texts();
          s.scores.push_back(segment_score(metric_, seg.sentences, texts, refs));
        }
        s.utility = utility(s.scores);
        return s;
      });

      std::vector<double> utilities;
      for (const auto& s : samples) {
        utilities.push_back(s.utility);
        bump(report_, "translation_samples", static_cast<long>(s.translations.size()));
        for (const auto& t : s.translations) bump(report_, "alignment_fallbacks", t.fallbacks());
      }

      if (!placeholder) emit_util_triples(doc, seg, k, samples, out);

      if (enough) {
        if (const auto pair = pick_preference(utilities)) {
          const auto chosen_text = format_action(samples[pair->first].action);
          const auto rejected_text = format_action(samples[pair->second].action);
          if (chosen_text == rejected_text) {
            report_["skipped"]["sel_identical"] = report_["skipped"]["sel_identical"].get<long>() + 1;
          } else {
            out.sel_rows.push_back(SelTriple{doc.doc_id, seg.seg_index, k, obs_prompt, chosen_text, rejected_text,
                                             utilities[pair->first], utilities[pair->second]}
                                       .to_json());
          }
        } else {
          report_["skipped"]["sel_tie"] = report_["skipped"]["sel_tie"].get<long>() + 1;
        }
      }

      const auto best = argmax_earliest(utilities);
      if (step_logs_ != nullptr) {
        StepLog log{doc.doc_id, seg.seg_index, k, obs_prompt, {}, utilities, best};
        for (const auto& s : samples) log.actions.push_back(s.action);
        step_logs_->push_back(std::move(log));
      }
      chosen[static_cast<std::size_t>(k - 1)] = samples[best].action.selected;
      history.push_back(HistoryEntry{kind, std::move(items), samples[best].action});
      if (k == kSelectionSteps) {
        const auto& s = samples[best];
        out.final_translation = s.translations[argmax_earliest(s.scores)].texts();
      }
      bump(report_, "steps");
    }
    return out;
  }

 private:
  void emit_util_triples(const Document& doc, const Segment& seg, int k, const std::vector<ActionSample>& samples,
                         SegmentOutput& out) {
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      const auto pair = pick_preference(s.scores);
      if (!pair) {
        report_["skipped"]["util_tie"] = report_["skipped"]["util_tie"].get<long>() + 1;
        continue;
      }
      auto chosen = marked_output(seg.sentences, s.translations[pair->first]);
      auto rejected = marked_output(seg.sentences, s.translations[pair->second]);
      if (chosen == rejected || !seen.emplace(s.translation_prompt, chosen, rejected).second) {
        report_["skipped"]["util_duplicate"] = report_["skipped"]["util_duplicate"].get<long>() + 1;
        continue;
      }
      out.util_rows.push_back(UtilTriple{doc.doc_id, seg.seg_index, k, static_cast<int>(i), s.translation_prompt,
                                         std::move(chosen), std::move(rejected), s.scores[pair->first],
                                         s.scores[pair->second]}
                                  .to_json());
    }
  }

  const RunConfig& config_;
  ChatBackend& llm_;
  EmbeddingProvider& embedder_;
  Metric& metric_;
  const PromptRegistry& prompts_;
  json& report_;
  Diagnostics& diag_;
  std::vector<StepLog>* step_logs_;
};

}  // namespace

BuildResult build_dataset(std::span<const Document> corpus, const RunConfig& config, ChatBackend& llm,
                          EmbeddingProvider& embedder, Metric& metric, const PromptRegistry& prompts,
                          const BuildOptions& options) {
  config.validate();
  for (const auto& d : corpus) {
    if (!d.has_references()) {
      throw ValidationError("document '" + d.doc_id + "' has no references; preference data needs them");
    }
  }
  fs::create_directories(options.out_dir);
  const auto dsel = options.out_dir / "dsel.jsonl";
  const auto dutil = options.out_dir / "dutil.jsonl";
  const auto checkpoint = config.checkpoint.empty() ? options.out_dir / "checkpoint.json" : fs::path(config.checkpoint);
  const auto fp = config.fingerprint();
  const auto corpus_fp = corpus_fingerprint(corpus);

  Cursor cur;
  if (options.resume && fs::exists(checkpoint)) {
    cur = load_cursor(checkpoint, fp, corpus_fp);
    truncate_to(dsel, cur.dsel_bytes);
    truncate_to(dutil, cur.dutil_bytes);
  } else {
    std::ofstream(dsel, std::ios::binary | std::ios::trunc).flush();
    std::ofstream(dutil, std::ios::binary | std::ios::trunc).flush();
    cur.memory = corpus.empty() ? new_state("") : new_state(corpus.front().doc_id);
    write_file_atomic(checkpoint, cursor_json(cur, fp, corpus_fp, false).dump());
  }

  BuildResult result;
  result.checkpoint = checkpoint;
  int processed = 0;
  try {
    while (cur.doc < corpus.size()) {
      const auto& doc = corpus[cur.doc];
      const auto segments = segment(doc, config.segment_size);
      while (cur.next_segment < static_cast<int>(segments.size())) {
        if (options.stop_after_segments && processed >= *options.stop_after_segments) {
          result.report = cur.report;
          return result;
        }
        const auto& seg = segments[static_cast<std::size_t>(cur.next_segment)];
        Diagnostics diag;
        json report = cur.report;
        SegmentBuilder builder(config, llm, embedder, metric, prompts, report, diag, options.step_logs);
        auto out = builder.run(doc, seg, cur.memory);
        const MemoryServices services{llm, embedder, prompts, config.params, doc.src_lang, doc.tgt_lang};
        auto memory = update_after_segment(cur.memory, seg, out.final_translation, services, &diag);

        append_rows(dsel, out.sel_rows);
        append_rows(dutil, out.util_rows);
        bump(report, "sel_triples", static_cast<long>(out.sel_rows.size()));
        bump(report, "util_triples", static_cast<long>(out.util_rows.size()));
        bump(report, "segments");
        for (auto& w : diag.warnings) report["warnings"].push_back(std::move(w));

        cur.report = std::move(report);
        cur.memory = std::move(memory);
        cur.dsel_bytes = fs::file_size(dsel);
        cur.dutil_bytes = fs::file_size(dutil);
        ++cur.next_segment;
        if (cur.next_segment == static_cast<int>(segments.size())) {
          bump(cur.report, "documents");
          ++cur.doc;
          cur.next_segment = 0;
          cur.memory = new_state(cur.doc < corpus.size() ? corpus[cur.doc].doc_id : "");
        }
        write_file_atomic(checkpoint, cursor_json(cur, fp, corpus_fp, false).dump());
        ++processed;
        if (cur.next_segment == 0) break;
      }
    }
  } catch (const BackendError& e) {
    if (cur.doc == 0 && cur.next_segment == 0) throw;
    throw PartialRunError(std::string("backend failure: ") + e.what(), checkpoint.string());
  }
  write_file_atomic(checkpoint, cursor_json(cur, fp, corpus_fp, true).dump());
  write_file_atomic(options.out_dir / "report.json", cur.report.dump(2) + "\n");
  result.complete = true;
  result.report = cur.report;
  return result;
}

std::size_t export_dataset(const fs::path& run_dir, ExportMode mode) {
  const auto target = run_dir / (mode == ExportMode::sft ? "sft.jsonl" : "dpo.jsonl");
  std::ostringstream buf;
  std::size_t rows = 0;
  for (const char* name : {"dsel.jsonl", "dutil.jsonl"}) {
    std::ifstream in(run_dir / name, std::ios::binary);
    if (!in) throw ValidationError("missing " + (run_dir / name).string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (text::trim(line).empty()) continue;
      json row;
      try {
        row = json::parse(line);
      } catch (const json::exception& e) {
        throw ParseError(std::string(name) + " line " + std::to_string(lineno) + ": " + e.what());
      }
      json outrow;
      if (mode == ExportMode::sft) {
        outrow = {{"prompt", row.at("prompt")}, {"response", row.at("chosen")}};
      } else {
        outrow = {{"prompt", row.at("prompt")}, {"chosen", row.at("chosen")}, {"rejected", row.at("rejected")}};
      }
      buf << outrow.dump() << "\n";
      ++rows;
    }
  }
  write_file_atomic(target, buf.str());
  return rows;
}

json export_schema(ExportMode mode) {
  const json str = {{"type", "string"}, {"minLength", 1}};
  if (mode == ExportMode::sft) {
    return {{"$schema", "https://json-schema.org/draft/2020-12/schema"},
            {"title", "SFT row"},
            {"type", "object"},
            {"required", {"prompt", "response"}},
            {"additionalProperties", false},
            {"properties", {{"prompt", str}, {"response", str}}}};
  }
  return {{"$schema", "https://json-schema.org/draft/2020-12/schema"},
          {"title", "DPO row"},
          {"type", "object"},
          {"required", {"prompt", "chosen", "rejected"}},
          {"additionalProperties", false},
          {"properties", {{"prompt", str}, {"chosen", str}, {"rejected", str}}}};
}

}  // namespace loong
