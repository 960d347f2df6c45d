#include "loong/pipeline.hpp"

#include <iomanip>
#include <map>
#include <sstream>

#include "loong/aligner.hpp"
#include "loong/json_util.hpp"
#include "loong/parallel.hpp"
#include "loong/retrieval.hpp"
#include "loong/text.hpp"

namespace loong {

using nlohmann::json;
namespace fs = std::filesystem;

json TranslationRecord::to_json() const {
  json sents = json::array();
  for (const auto& s : sentences) {
    sents.push_back({{"index", s.index}, {"src", s.src}, {"tgt", s.tgt}, {"fallback", s.fallback}});
  }
  json segs = json::array();
  for (const auto& t : segments) {
    segs.push_back({{"seg_index", t.seg_index},
                    {"start", t.start},
                    {"end", t.end},
                    {"selections", t.selections},
                    {"llm_calls", t.llm_calls},
                    {"translation_calls", t.translation_calls},
                    {"fallbacks", t.fallbacks},
                    {"prompt_chars", t.prompt_chars},
                    {"peak_prompt_chars", t.peak_prompt_chars}});
  }
  return {{"doc_id", doc_id},     {"src_lang", src_lang},          {"tgt_lang", tgt_lang},
          {"mode", std::string(to_string(mode))}, {"sentences", sents}, {"segments", segs}};
}

TranslationRecord TranslationRecord::from_json(const json& j) {
  try {
    TranslationRecord r;
    r.doc_id = j.at("doc_id").get<std::string>();
    r.src_lang = j.at("src_lang").get<std::string>();
    r.tgt_lang = j.at("tgt_lang").get<std::string>();
    const auto mode = j.at("mode").get<std::string>();
    if (mode != "loong" && mode != "doc2doc") throw ParseError("record mode '" + mode + "' is unknown");
    r.mode = mode == "loong" ? RunMode::loong : RunMode::doc2doc;
    for (const auto& s : j.at("sentences")) {
      r.sentences.push_back(RecordSentence{s.at("index").get<int>(), s.at("src").get<std::string>(),
                                           s.at("tgt").get<std::string>(), s.at("fallback").get<bool>()});
    }
    for (const auto& t : j.at("segments")) {
      SegmentTrace st;
      st.seg_index = t.at("seg_index").get<int>();
      st.start = t.at("start").get<int>();
      st.end = t.at("end").get<int>();
      st.selections = t.at("selections").get<Selections>();
      st.llm_calls = t.at("llm_calls").get<int>();
      st.translation_calls = t.at("translation_calls").get<int>();
      st.fallbacks = t.at("fallbacks").get<int>();
      st.prompt_chars = t.at("prompt_chars").get<std::size_t>();
      st.peak_prompt_chars = t.at("peak_prompt_chars").get<std::size_t>();
      r.segments.push_back(std::move(st));
    }
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("translation record: ") + e.what());
  }
}

std::vector<std::string> TranslationRecord::targets() const {
  std::vector<std::string> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(s.tgt);
  return out;
}

namespace {

struct DocProgress {
  int next_segment = 0;
  MemoryState memory;
  TranslationRecord record;
  std::string history;
};

json progress_json(const DocProgress& p, const std::string& fingerprint) {
  return {{"version", 1},
          {"config_fingerprint", fingerprint},
          {"doc_id", p.record.doc_id},
          {"next_segment", p.next_segment},
          {"memory", json::parse(snapshot(p.memory))},
          {"record", p.record.to_json()},
          {"history", p.history}};
}

DocProgress load_progress(const fs::path& path, const std::string& fingerprint, const std::string& doc_id) {
  json j;
  try {
    j = json::parse(read_file(path));
    if (j.at("version").get<int>() != 1) throw RestoreError("unsupported checkpoint version");
    if (j.at("config_fingerprint").get<std::string>() != fingerprint) {
      throw RestoreError("checkpoint was written with a different configuration");
    }
    if (j.at("doc_id").get<std::string>() != doc_id) {
      throw RestoreError("checkpoint belongs to document '" + j.at("doc_id").get<std::string>() + "'");
    }
    DocProgress p;
    p.next_segment = j.at("next_segment").get<int>();
    p.memory = restore(j.at("memory").dump());
    p.record = TranslationRecord::from_json(j.at("record"));
    p.history = j.at("history").get<std::string>();
    return p;
  } catch (const json::exception& e) {
    throw RestoreError("corrupt checkpoint " + path.string() + ": " + e.what());
  } catch (const ParseError& e) {
    throw RestoreError("corrupt checkpoint " + path.string() + ": " + e.what());
  }
}

std::string marked(std::span<const Sentence> src, std::span<const std::string> texts) {
  std::vector<Sentence> out;
  for (std::size_t i = 0; i < src.size(); ++i) out.push_back(Sentence{src[i].doc_id, src[i].index, texts[i]});
  return inject_markers(out).text;
}

}  // namespace

TranslationRecord translate_document(const Document& doc, const RunConfig& config,
                                     const PipelineServices& services, const TranslateOptions& options,
                                     MemoryState* final_memory) {
  config.validate();
  const auto segments = segment(doc, config.segment_size);
  const auto src_lang = doc.src_lang.empty() ? config.src_lang : doc.src_lang;
  const auto tgt_lang = doc.tgt_lang.empty() ? config.tgt_lang : doc.tgt_lang;
  const auto fingerprint = config.fingerprint();

  DocProgress p;
  if (options.resume && !options.checkpoint.empty() && fs::exists(options.checkpoint)) {
    p = load_progress(options.checkpoint, fingerprint, doc.doc_id);
  } else {
    p.memory = new_state(doc.doc_id);
    p.record.doc_id = doc.doc_id;
    p.record.src_lang = src_lang;
    p.record.tgt_lang = tgt_lang;
    p.record.mode = config.mode;
  }

  CallMeter meter(services.llm);
  const MemoryServices memory_services{meter, services.embedder, services.prompts, config.params, src_lang, tgt_lang};
  int processed = 0;
  for (auto t = static_cast<std::size_t>(p.next_segment); t < segments.size(); ++t) {
    if (options.stop_after_segments && processed >= *options.stop_after_segments) {
      throw PartialRunError("stopped after " + std::to_string(processed) + " segments", options.checkpoint.string());
    }
    const auto& seg = segments[t];
    const auto seg_params =
        config.params.derive(text::mix(text::fnv1a(doc.doc_id), static_cast<std::uint64_t>(seg.seg_index)));
    SegmentTrace trace{seg.seg_index, seg.start, seg.end, {}, 0, 0, 0, 0, 0};
    AlignedTranslation translation;
    meter.take();
    try {
      if (config.mode == RunMode::loong) {
        const auto candidates = retrieve(p.memory, seg, services.embedder, meter, services.prompts,
                                         config.retrieval, seg_params.derive(text::fnv1a("retrieve")));
        Diagnostics diag;
        auto selection = run_selection(meter, seg, candidates, services.prompts,
                                       seg_params.derive(text::fnv1a("select")), &diag);
        const auto ctx = render_context(candidates, selection.selections, src_lang, tgt_lang);
        translation = recursive_translate(meter, seg.sentences, ctx, services.prompts,
                                          seg_params.derive(text::fnv1a("translate")), config.aligner);
        p.memory = update_after_segment(std::move(p.memory), seg, translation.texts(), memory_services, &diag);
        trace.selections = selection.selections;
        if (options.trace_sink) {
          for (const auto& step : selection.trace) options.trace_sink(trace_row(doc.doc_id, seg.seg_index, step));
        }
      } else {
        TranslationContext ctx;
        ctx.src_lang = src_lang;
        ctx.tgt_lang = tgt_lang;
        ctx.history = p.history;
        translation = recursive_translate(meter, seg.sentences, ctx, services.prompts,
                                          seg_params.derive(text::fnv1a("translate")), config.aligner);
        const auto texts = translation.texts();
        if (!p.history.empty()) p.history += "\n\n";
        p.history += "<Source>\n" + inject_markers(seg.sentences).text + "\n<Translation>\n" +
                     marked(seg.sentences, texts);
      }
    } catch (const BackendError& e) {
      if (p.next_segment == 0) throw e.with_context(doc.doc_id + " segment " + std::to_string(seg.seg_index));
      throw PartialRunError(doc.doc_id + " segment " + std::to_string(seg.seg_index) + ": " + e.what(),
                            options.checkpoint.string());
    }

    const auto counts = meter.take();
    trace.llm_calls = counts.calls;
    trace.translation_calls = translation.llm_calls();
    trace.fallbacks = translation.fallbacks();
    trace.prompt_chars = counts.total_prompt_chars;
    trace.peak_prompt_chars = counts.peak_prompt_chars;
    for (std::size_t i = 0; i < seg.size(); ++i) {
      const auto& out = translation.sentences[i];
      p.record.sentences.push_back(RecordSentence{seg.sentences[i].index, seg.sentences[i].text, out.text, out.fallback});
    }
    p.record.segments.push_back(std::move(trace));
    p.next_segment = static_cast<int>(t) + 1;
    if (!options.checkpoint.empty()) {
      fs::create_directories(options.checkpoint.parent_path().empty() ? fs::path(".")
                                                                       : options.checkpoint.parent_path());
      write_file_atomic(options.checkpoint, progress_json(p, fingerprint).dump());
    }
    ++processed;
  }

  if (p.record.sentences.size() != doc.size()) {
    throw ValidationError("translate_document: produced " + std::to_string(p.record.sentences.size()) +
                          " sentences for " + std::to_string(doc.size()));
  }
  if (!options.checkpoint.empty() && fs::exists(options.checkpoint)) fs::remove(options.checkpoint);
  if (final_memory != nullptr) *final_memory = p.memory;
  return p.record;
}

std::vector<TranslationRecord> translate_corpus(
    std::span<const Document> corpus, const RunConfig& config, const PipelineServices& services,
    const std::function<TranslateOptions(const Document&)>& options_for) {
  return parallel_map(corpus.size(), config.workers, [&](std::size_t i) {
    return translate_document(corpus[i], config, services, options_for ? options_for(corpus[i]) : TranslateOptions{});
  });
}

json EvaluationReport::to_json() const {
  json docs = json::array();
  for (const auto& d : documents) {
    json row = {{"doc_id", d.doc_id},
                {"sentence_scores", d.sentence_scores},
                {"segment_scores", d.segment_scores},
                {"curve", d.curve}};
    if (d.judge) {
      const auto& r = *d.judge;
      row["judge"] = {{"general_quality", r.general_quality},
                      {"cohesion", r.cohesion},
                      {"coherence", r.coherence},
                      {"style_consistency", r.style_consistency},
                      {"terminology_consistency", r.terminology_consistency},
                      {"meta", r.meta},
                      {"attempts", r.attempts}};
    }
    docs.push_back(std::move(row));
  }
  return {{"metric", metric}, {"documents", docs}, {"notices", notices}};
}

std::string EvaluationReport::to_csv() const {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "doc_id,seg_index,start,end,score,cumulative\n";
  for (const auto& d : documents) {
    std::string id = d.doc_id;
    if (id.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : id) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
      id = quoted + "\"";
    }
    for (std::size_t s = 0; s < d.segment_scores.size(); ++s) {
      out << id << ',' << s + 1 << ',' << d.bounds[s].first << ',' << d.bounds[s].second << ','
          << d.segment_scores[s] << ',' << d.curve[s] << '\n';
    }
  }
  return out.str();
}

EvaluationReport evaluate_run(std::span<const TranslationRecord> records, std::span<const Document> corpus,
                              Metric& metric, const JudgeSettings& judge) {
  EvaluationReport report;
  report.metric = metric.name();
  std::map<std::string, const Document*, std::less<>> by_id;
  for (const auto& d : corpus) by_id[d.doc_id] = &d;
  for (const auto& rec : records) {
    const auto it = by_id.find(rec.doc_id);
    const Document* doc = it == by_id.end() ? nullptr : it->second;
    const bool has_refs = doc != nullptr && doc->has_references();
    if (metric.needs_reference() && !has_refs) {
      report.notices.push_back(rec.doc_id + ": no references; metric skipped");
      continue;
    }
    if (has_refs && doc->references->size() != rec.sentences.size()) {
      report.notices.push_back(rec.doc_id + ": reference count differs from the record; metric skipped");
      continue;
    }
    std::vector<ScoreRequest> requests;
    for (std::size_t i = 0; i < rec.sentences.size(); ++i) {
      requests.push_back(ScoreRequest{rec.sentences[i].src, rec.sentences[i].tgt,
                                      has_refs ? std::optional((*doc->references)[i]) : std::nullopt});
    }
    DocumentEvaluation ev;
    ev.doc_id = rec.doc_id;
    for (const auto& s : metric.score_batch(requests)) ev.sentence_scores.push_back(s.value);
    for (const auto& seg : rec.segments) {
      const auto first = static_cast<std::size_t>(seg.start - 1);
      const auto len = static_cast<std::size_t>(seg.end - seg.start + 1);
      ev.segment_scores.push_back(mean(std::span(ev.sentence_scores).subspan(first, len)));
      ev.bounds.emplace_back(seg.start, seg.end);
    }
    if (!ev.segment_scores.empty()) ev.curve = cumulative_curve(ev.segment_scores);
    if (judge.llm != nullptr && has_refs && !rec.sentences.empty()) {
      std::vector<std::string> src;
      for (const auto& s : rec.sentences) src.push_back(s.src);
      Diagnostics diag;
      ev.judge = judge_windowed(*judge.llm, judge.prompts ? *judge.prompts : PromptRegistry(), rec.src_lang,
                                rec.tgt_lang, src, *doc->references, rec.targets(), judge.window, judge.params,
                                &diag);
      for (auto& w : diag.warnings) report.notices.push_back(rec.doc_id + ": " + w);
    } else if (judge.llm != nullptr) {
      report.notices.push_back(rec.doc_id + ": no references; judge skipped");
    }
    report.documents.push_back(std::move(ev));
  }
  return report;
}

}  // namespace loong
