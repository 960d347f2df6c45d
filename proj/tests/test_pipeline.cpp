#include <doctest.h>

#include <json.hpp>
#include <sstream>

#include "loong/config.hpp"
#include "loong/embedding.hpp"
#include "loong/pipeline.hpp"
#include "support.hpp"

using namespace loong;
using namespace loong::testing;
using nlohmann::json;

namespace {

RunConfig seeded() {
  RunConfig c;
  c.params.seed = 7;
  return c;
}

struct Rig {
  explicit Rig(FakeAgentOptions o = {}) : agent(o) {}
  FakeAgent agent;
  HashingEmbedder embedder{64};
  PromptRegistry prompts;
  PipelineServices services() { return {agent, embedder, prompts}; }
};

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("12 sentences in segments of 5: three segments, twelve targets, full memory") {
    Rig rig;
    const auto doc = synthetic_document("d", 12, 3);
    MemoryState memory;
    std::vector<json> traces;
    TranslateOptions opts;
    opts.trace_sink = [&](const json& row) { traces.push_back(row); };
    const auto rec = translate_document(doc, seeded(), rig.services(), opts, &memory);
    CHECK(rec.segments.size() == 3);
    REQUIRE(rec.sentences.size() == 12);
    for (std::size_t i = 0; i < 12; ++i) {
      CHECK(rec.sentences[i].index == static_cast<int>(i) + 1);
      CHECK(rec.sentences[i].tgt == fake_translate_sentence(doc.sentences[i].text));
    }
    CHECK(rec.targets() == *doc.references);
    CHECK(memory.summaries.size() == 3);
    CHECK(memory.exemplars.size() == 12);
    CHECK(traces.size() == 9);
    for (const auto& s : rec.segments) CHECK(s.translation_calls == 1);
  }

  TEST_CASE("cold start: the first segment has nothing to select") {
    Rig rig;
    const auto rec = translate_document(synthetic_document("d", 7, 1), seeded(), rig.services());
    for (const auto& s : rec.segments[0].selections) CHECK(s.empty());
    CHECK(rec.sentences.size() == 7);
  }

  TEST_CASE("selecting nothing still translates every sentence") {
    FakeAgentOptions none;
    none.selection = FakeAgentOptions::Selection::none;
    Rig rig(none);
    const auto rec = translate_document(synthetic_document("d", 11, 1), seeded(), rig.services());
    CHECK(rec.sentences.size() == 11);
    for (const auto& s : rec.segments) {
      for (const auto& sel : s.selections) CHECK(sel.empty());
    }
  }

  TEST_CASE("faulty model still yields one target per source sentence") {
    for (auto fault : {FakeAgentOptions::Fault::merge, FakeAgentOptions::Fault::split,
                       FakeAgentOptions::Fault::reorder, FakeAgentOptions::Fault::preamble}) {
      FakeAgentOptions o;
      o.fault = fault;
      o.fault_rate = 1.0;
      Rig rig(o);
      const auto doc = synthetic_document("d", 13, 2);
      const auto rec = translate_document(doc, seeded(), rig.services());
      CHECK(rec.sentences.size() == 13);
      if (fault != FakeAgentOptions::Fault::preamble) CHECK(rec.segments[0].translation_calls == 9);
    }
  }

  TEST_CASE("record JSON round trip") {
    Rig rig;
    const auto rec = translate_document(synthetic_document("d", 6, 1), seeded(), rig.services());
    CHECK(TranslationRecord::from_json(rec.to_json()) == rec);
  }

  TEST_CASE("checkpoint resume equals an uninterrupted run") {
    const auto doc = synthetic_document("d", 23, 9);
    Rig a;
    const auto full = translate_document(doc, seeded(), a.services());
    TempDir dir("resume");
    TranslateOptions opts;
    opts.checkpoint = dir / "cp.json";
    opts.stop_after_segments = 2;
    Rig b;
    CHECK_THROWS_AS(translate_document(doc, seeded(), b.services(), opts), PartialRunError);
    CHECK(std::filesystem::exists(opts.checkpoint));
    opts.stop_after_segments.reset();
    opts.resume = true;
    Rig c;
    const auto resumed = translate_document(doc, seeded(), c.services(), opts);
    CHECK(resumed.to_json().dump() == full.to_json().dump());
    CHECK_FALSE(std::filesystem::exists(opts.checkpoint));
    CHECK(c.agent.calls() < a.agent.calls());
  }

  TEST_CASE("backend failure before and after the first completed segment") {
    const auto doc = synthetic_document("d", 10, 1);
    HashingEmbedder emb(32);
    const PromptRegistry prompts;
    auto outage_after = [](int limit) {
      return [limit, n = std::make_shared<std::atomic<int>>(0), inner = std::make_shared<FakeAgent>()](
                 const ChatRequest& r) {
        if (++*n > limit) throw BackendError("down", true);
        return inner->complete(r).text;
      };
    };
    FnBackend early(outage_after(0));
    CHECK_THROWS_AS(translate_document(doc, seeded(), {early, emb, prompts}), BackendError);
    TempDir dir("outage");
    TranslateOptions opts;
    opts.checkpoint = dir / "cp.json";
    FnBackend late(outage_after(12));
    CHECK_THROWS_AS(translate_document(doc, seeded(), {late, emb, prompts}, opts), PartialRunError);
    CHECK(std::filesystem::exists(opts.checkpoint));
  }

  TEST_CASE("doc2doc carries the whole conversation") {
    Rig rig;
    auto config = seeded();
    config.mode = RunMode::doc2doc;
    const auto rec = translate_document(synthetic_document("d", 20, 4), config, rig.services());
    REQUIRE(rec.segments.size() == 4);
    for (std::size_t i = 1; i < rec.segments.size(); ++i) {
      CHECK(rec.segments[i].llm_calls == 1);
      CHECK(rec.segments[i].peak_prompt_chars > rec.segments[i - 1].peak_prompt_chars);
    }
    CHECK(rec.mode == RunMode::doc2doc);
  }

  TEST_CASE("corpus translation keeps order across workers") {
    Rig rig;
    auto config = seeded();
    config.workers = 3;
    std::vector<Document> docs;
    for (int i = 0; i < 5; ++i) docs.push_back(synthetic_document("doc" + std::to_string(i), 6 + i, i));
    const auto recs = translate_corpus(docs, config, rig.services(), nullptr);
    REQUIRE(recs.size() == 5);
    for (int i = 0; i < 5; ++i) {
      CHECK(recs[i].doc_id == "doc" + std::to_string(i));
      CHECK(recs[i].sentences.size() == static_cast<std::size_t>(6 + i));
    }
  }

  TEST_CASE("evaluation: curve composition, CSV rows, judge") {
    Rig rig;
    const std::vector<Document> docs = {synthetic_document("a", 12, 1), synthetic_document("b", 5, 2),
                                        make_document("noref", "en", "zh", std::vector<std::string>{"x."})};
    std::vector<TranslationRecord> recs;
    for (const auto& d : docs) recs.push_back(translate_document(d, seeded(), rig.services()));
    ChrfMetric metric;
    JudgeSettings judge;
    judge.llm = &rig.agent;
    judge.prompts = &rig.prompts;
    const auto report = evaluate_run(recs, docs, metric, judge);
    REQUIRE(report.documents.size() == 2);
    CHECK(report.notices.size() == 1);
    const auto& a = report.documents[0];
    CHECK(a.segment_scores.size() == 3);
    CHECK(a.curve == cumulative_curve(a.segment_scores));
    for (double v : a.curve) CHECK(v == doctest::Approx(100.0));
    REQUIRE(a.judge);
    CHECK(a.judge->meta == 80.0);

    std::istringstream csv(report.to_csv());
    std::string line;
    int rows = -1;
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == 4);
    CHECK(report.to_csv().find("a,1,1,5,") != std::string::npos);
  }
}
