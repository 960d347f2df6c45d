// Command-line front end: translate, build-prefs, eval, memory inspect, and
// synth (a reproducible corpus for the offline fake backend).
// Exit codes: 0 success, 1 invalid input, 2 backend failure, 3 partial run
// with a checkpoint to resume from.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <variant>

#include <CLI11.hpp>
#include <json.hpp>

#include "loong/config.hpp"
#include "loong/corpus.hpp"
#include "loong/fake_agent.hpp"
#include "loong/json_util.hpp"
#include "loong/memory.hpp"
#include "loong/parallel.hpp"
#include "loong/pipeline.hpp"
#include "loong/preffactory.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace loong;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitBackend = 2;
constexpr int kExitPartial = 3;

std::string file_safe(std::string_view id) {
  std::string out;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.';
    out += ok ? c : '_';
  }
  return out.empty() ? "_" : out;
}

RunConfig load_config(const std::string& path) {
  return path.empty() ? RunConfig{} : RunConfig::load(path);
}

std::vector<Document> load_docs(const std::string& path, const std::string& format, const RunConfig& config) {
  const auto fmt = parse_corpus_format(format);
  if (!fmt) throw ValidationError("unknown corpus format '" + format + "'");
  return load_corpus(path, *fmt, CorpusDefaults{config.src_lang, config.tgt_lang, "doc"});
}

void write_jsonl(const fs::path& path, const std::vector<json>& rows) {
  std::string bytes;
  for (const auto& r : rows) bytes += r.dump() + "\n";
  write_file_atomic(path, bytes);
}

struct TranslateArgs {
  std::string corpus, config, out, format = "jsonl";
  bool resume = false;
};

int run_translate(const TranslateArgs& a) {
  auto config = load_config(a.config);
  const auto docs = load_docs(a.corpus, a.format, config);
  const fs::path out(a.out);
  fs::create_directories(out / "checkpoints");
  fs::create_directories(out / "memory");
  auto services = make_services(config);
  const PipelineServices ps{*services.llm, *services.embedder, services.prompts};

  struct Outcome {
    std::optional<TranslationRecord> record;
    std::vector<json> traces;
    std::string error;
    int code = kExitOk;
    double seconds = 0.0;
  };
  const auto started = std::chrono::steady_clock::now();
  auto outcomes = parallel_map(docs.size(), config.workers, [&](std::size_t i) {
    Outcome o;
    const auto& doc = docs[i];
    TranslateOptions opts;
    opts.checkpoint = out / "checkpoints" / (file_safe(doc.doc_id) + ".json");
    opts.resume = a.resume;
    opts.trace_sink = [&o](const json& row) { o.traces.push_back(row); };
    const auto t0 = std::chrono::steady_clock::now();
    try {
      MemoryState memory;
      o.record = translate_document(doc, config, ps, opts, &memory);
      write_file_atomic(out / "memory" / (file_safe(doc.doc_id) + ".json"), snapshot(memory));
    } catch (const PartialRunError& e) {
      o.error = std::string(e.what()) + " (checkpoint: " + e.checkpoint() + ")";
      o.code = kExitPartial;
    }
    o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return o;
  });

  std::vector<json> records, traces, corpus_rows;
  json timing = {{"total_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()},
                 {"documents", json::object()}};
  int code = kExitOk;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    auto& o = outcomes[i];
    timing["documents"][docs[i].doc_id] = o.seconds;
    if (o.record) records.push_back(o.record->to_json());
    for (auto& t : o.traces) traces.push_back(std::move(t));
    corpus_rows.push_back(json::parse(to_jsonl_row(docs[i])));
    if (o.code != kExitOk) {
      std::cerr << "error: " << o.error << "\n";
      code = o.code;
    }
  }
  write_jsonl(out / "records.jsonl", records);
  write_jsonl(out / "traces.jsonl", traces);
  write_jsonl(out / "corpus.jsonl", corpus_rows);
  write_file_atomic(out / "config.json", config.to_json().dump(2) + "\n");
  write_file_atomic(out / "timing.json", timing.dump(2) + "\n");
  std::cout << "translated " << records.size() << " of " << docs.size() << " documents into " << out.string()
            << "\n";
  return code;
}

struct PrefArgs {
  std::string corpus, config, out, format = "jsonl";
  bool resume = false;
};

int run_build_prefs(const PrefArgs& a) {
  auto config = load_config(a.config);
  const auto docs = load_docs(a.corpus, a.format, config);
  auto services = make_services(config);
  BuildOptions opts;
  opts.out_dir = a.out;
  opts.resume = a.resume;
  const auto result =
      build_dataset(docs, config, *services.llm, *services.embedder, *services.metric, services.prompts, opts);
  const auto sft = export_dataset(a.out, ExportMode::sft);
  const auto dpo = export_dataset(a.out, ExportMode::dpo);
  fs::create_directories(fs::path(a.out) / "schemas");
  write_file_atomic(fs::path(a.out) / "schemas" / "sft.schema.json", export_schema(ExportMode::sft).dump(2) + "\n");
  write_file_atomic(fs::path(a.out) / "schemas" / "dpo.schema.json", export_schema(ExportMode::dpo).dump(2) + "\n");
  std::cout << "selection pairs: " << result.report["sel_triples"] << ", utilization pairs: "
            << result.report["util_triples"] << ", exported " << sft << " sft and " << dpo << " dpo rows\n";
  return kExitOk;
}

struct EvalArgs {
  std::string run, config;
  bool judge = false;
};

int run_eval(const EvalArgs& a) {
  const fs::path run(a.run);
  auto config = a.config.empty() ? (fs::exists(run / "config.json") ? RunConfig::load(run / "config.json") : RunConfig{})
                                 : RunConfig::load(a.config);
  const auto docs = load_corpus(run / "corpus.jsonl", CorpusFormat::jsonl);
  std::vector<TranslationRecord> records;
  {
    std::ifstream in(run / "records.jsonl");
    if (!in) throw ValidationError("no records.jsonl in " + run.string());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        records.push_back(TranslationRecord::from_json(json::parse(line)));
      } catch (const json::exception& e) {
        throw ParseError(std::string("records.jsonl: ") + e.what());
      }
    }
  }
  auto services = make_services(config);
  JudgeSettings judge;
  if (a.judge) {
    judge.llm = services.llm.get();
    judge.prompts = &services.prompts;
    judge.window = config.judge_window;
    judge.params = config.params;
  }
  const auto report = evaluate_run(records, docs, *services.metric, judge);
  write_file_atomic(run / "evaluation.json", report.to_json().dump(2) + "\n");
  write_file_atomic(run / "evaluation.csv", report.to_csv());
  for (const auto& n : report.notices) std::cerr << "notice: " << n << "\n";
  for (const auto& d : report.documents) {
    std::cout << d.doc_id << ": " << report.metric << " "
              << (d.curve.empty() ? 0.0 : d.curve.back());
    if (d.judge) std::cout << ", judge meta " << d.judge->meta;
    std::cout << "\n";
  }
  return kExitOk;
}

int run_inspect(const std::string& path, bool as_json) {
  const auto state = restore(read_file(path));
  if (as_json) {
    std::cout << snapshot(state) << "\n";
    return kExitOk;
  }
  std::cout << "document: " << state.doc_id << "\n"
            << "segments: " << state.completed_segments() << "\n"
            << "summaries: " << state.summaries.size() << "\n"
            << "exemplars: " << state.exemplars.size() << "\n"
            << "entities: " << state.entities.size() << "\n";
  for (const auto& [name, e] : state.entities) {
    std::cout << "  " << name << " -> " << e.tgt_name << " [" << to_string(e.category) << "], last seen in segment "
              << e.last_seen_seg << "\n";
  }
  return kExitOk;
}

int run_synth(const std::string& out, int docs, int sentences, std::uint64_t seed, bool uniform) {
  if (docs < 1) throw ValidationError("--docs must be at least 1");
  std::vector<Document> corpus;
  SyntheticOptions opts;
  opts.uniform = uniform;
  for (int d = 0; d < docs; ++d) {
    corpus.push_back(synthetic_document("doc" + std::to_string(d + 1), sentences, seed + static_cast<std::uint64_t>(d), opts));
  }
  std::ofstream file(out, std::ios::binary | std::ios::trunc);
  if (!file) throw ValidationError("cannot write " + out);
  write_jsonl_corpus(file, corpus);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Document-level translation agent with 3E memory"};
  app.require_subcommand(1);

  TranslateArgs ta;
  auto* translate = app.add_subcommand("translate", "Translate a corpus");
  translate->add_option("--corpus", ta.corpus, "Corpus file")->required();
  translate->add_option("--config", ta.config, "Run configuration (JSON)");
  translate->add_option("--out", ta.out, "Output directory")->required();
  translate->add_option("--format", ta.format, "Corpus format: jsonl or lines");
  translate->add_flag("--resume", ta.resume, "Continue from per-document checkpoints");

  PrefArgs pa;
  auto* prefs = app.add_subcommand("build-prefs", "Build selection and utilization preference data");
  prefs->add_option("--corpus", pa.corpus, "Corpus file with references")->required();
  prefs->add_option("--config", pa.config, "Run configuration (JSON)");
  prefs->add_option("--out", pa.out, "Output directory")->required();
  prefs->add_option("--format", pa.format, "Corpus format: jsonl or lines");
  prefs->add_flag("--resume", pa.resume, "Continue from checkpoint.json");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Score a translate run");
  eval->add_option("--run", ea.run, "Directory written by translate")->required();
  eval->add_option("--config", ea.config, "Configuration (defaults to the run's config.json)");
  eval->add_flag("--judge", ea.judge, "Also run the document-level judge");

  std::string snapshot_path;
  bool as_json = false;
  auto* memory = app.add_subcommand("memory", "Memory snapshot tools");
  memory->require_subcommand(1);
  auto* inspect = memory->add_subcommand("inspect", "Summarize a memory snapshot");
  inspect->add_option("--snapshot", snapshot_path, "Snapshot file")->required();
  inspect->add_flag("--json", as_json, "Print the normalized snapshot");

  std::string synth_out;
  int synth_docs = 1, synth_sentences = 20;
  std::uint64_t synth_seed = 1;
  bool synth_uniform = false;
  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus understood by the fake backend");
  synth->add_option("--out", synth_out, "Corpus file (JSONL)")->required();
  synth->add_option("--docs", synth_docs, "Number of documents");
  synth->add_option("--sentences", synth_sentences, "Sentences per document");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_flag("--uniform", synth_uniform, "Fixed-width sentences");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (translate->parsed()) return run_translate(ta);
    if (prefs->parsed()) return run_build_prefs(pa);
    if (eval->parsed()) return run_eval(ea);
    if (inspect->parsed()) return run_inspect(snapshot_path, as_json);
    if (synth->parsed()) return run_synth(synth_out, synth_docs, synth_sentences, synth_seed, synth_uniform);
  } catch (const PartialRunError& e) {
    std::cerr << "partial: " << e.what() << " (resume from " << e.checkpoint() << ")\n";
    return kExitPartial;
  } catch (const BackendError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}
