#include <doctest.h>

#include <json.hpp>
#include <numeric>
#include <sstream>

#include "loong/config.hpp"
#include "loong/embedding.hpp"
#include "loong/preffactory.hpp"
#include "support.hpp"

using namespace loong;
using namespace loong::testing;
using nlohmann::json;

namespace {

std::vector<json> read_rows(const std::filesystem::path& p) {
  std::vector<json> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(json::parse(line));
  }
  return rows;
}

/// Enough of JSON Schema for the exported rows: object type, required
/// keys, closed properties, string type and minLength.
bool conforms(const json& row, const json& schema, std::string* why) {
  if (schema.value("type", "") == "object" && !row.is_object()) return *why = "not an object", false;
  for (const auto& key : schema.at("required")) {
    if (!row.contains(key.get<std::string>())) return *why = "missing " + key.get<std::string>(), false;
  }
  const auto& props = schema.at("properties");
  for (const auto& [key, value] : row.items()) {
    if (!props.contains(key)) {
      if (!schema.value("additionalProperties", true)) return *why = "extra " + key, false;
      continue;
    }
    const auto& p = props.at(key);
    if (p.value("type", "") == "string") {
      if (!value.is_string()) return *why = key + " not a string", false;
      if (value.get<std::string>().size() < p.value("minLength", 0u)) return *why = key + " too short", false;
    }
  }
  return true;
}

RunConfig factory_config() {
  RunConfig c;
  c.params.seed = 1234;
  c.src_lang = "English";
  c.tgt_lang = "Cipher";
  return c;
}

struct Rig {
  explicit Rig(FakeAgentOptions o) : agent(o) {}
  FakeAgent agent;
  HashingEmbedder embedder{64};
  ChrfMetric metric;
  PromptRegistry prompts;

  BuildResult run(std::span<const Document> docs, const RunConfig& config, BuildOptions opts) {
    return build_dataset(docs, config, agent, embedder, metric, prompts, opts);
  }
};

FakeAgentOptions varied() {
  FakeAgentOptions o;
  o.degradation = 0.5;
  o.selection = FakeAgentOptions::Selection::random;
  return o;
}

}  // namespace

TEST_SUITE("preffactory") {
  TEST_CASE("sampling counts default to seven actions and five translations") {
    const PreferenceSettings p;
    CHECK(p.actions == 7);
    CHECK(p.translations == 5);
  }

  TEST_CASE("sample_actions keeps parsable samples") {
    const PromptRegistry prompts;
    const auto obs = observe({}, {"a", "b"}, "seg");
    int n = 0;
    FnBackend seven([&](const ChatRequest&) {
      return "```json\n{\"analysis\": \"s" + std::to_string(++n) + "\", \"selected\": [1]}\n```";
    });
    CHECK(sample_actions(seven, obs, prompts, 7, {}, 0).size() == 7);

    int m = 0;
    auto six_and_junk = [&](const ChatRequest&) -> std::string {
      return ++m == 4 ? "no json" : "```json\n{\"analysis\": \"ok\", \"selected\": [2]}\n```";
    };
    FnBackend a(six_and_junk);
    CHECK(sample_actions(a, obs, prompts, 7, {}, 0).size() == 6);
    m = 0;
    FnBackend b(six_and_junk);
    CHECK(sample_actions(b, obs, prompts, 7, {}, 1).size() == 7);
    CHECK(b.calls() == 8);
  }

  TEST_CASE("sample_translations: deterministic mock gives identical full-length samples") {
    const PromptRegistry prompts;
    FnBackend llm([](const ChatRequest& r) { return echo_translation(r.user); });
    const auto doc = synthetic_document("d", 5, 2);
    const auto seg = segment(doc, 5)[0];
    SamplingParams p;
    p.seed = 3;
    const auto t = sample_translations(llm, seg.sentences, TranslationContext{"English", "Upper"}, prompts, 5, p);
    REQUIRE(t.size() == 5);
    for (const auto& x : t) {
      CHECK(x.sentences.size() == seg.size());
      CHECK(x.texts() == t[0].texts());
    }
  }

  TEST_CASE("utility is the mean") {
    const std::vector<double> u = {80, 90, 70, 100, 60};
    CHECK(utility(u) == 80.0);
    const std::vector<double> one = {0.37};
    CHECK(utility(one) == 0.37);
    CHECK_THROWS_AS(utility(std::vector<double>{}), ValidationError);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> d(0, 1);
    for (int t = 0; t < 100; ++t) {
      std::vector<double> xs(1 + t % 13);
      for (auto& x : xs) x = d(rng);
      double sum = 0;
      for (double x : xs) sum += x;
      CHECK(std::abs(utility(xs) - sum / static_cast<double>(xs.size())) <= 1e-12);
    }
  }

  TEST_CASE("preference pick: argmax and argmin, earliest wins, ties give none") {
    using P = std::pair<std::size_t, std::size_t>;
    CHECK(pick_preference(std::vector<double>{0.7, 0.9, 0.8}) == P{1, 0});
    CHECK_FALSE(pick_preference(std::vector<double>{0.5, 0.5, 0.5}).has_value());
    CHECK(pick_preference(std::vector<double>{0.9, 0.9, 0.1}) == P{0, 2});
    CHECK(pick_preference(std::vector<double>{0.1, 0.9, 0.1}) == P{1, 0});
  }

  TEST_CASE("two segments: six selection pairs, between six and forty-two utilization pairs") {
    Rig rig(varied());
    TempDir dir("prefs");
    const auto doc = synthetic_document("d", 10, 77);
    std::vector<StepLog> logs;
    BuildOptions opts;
    opts.out_dir = dir.path();
    opts.step_logs = &logs;
    const auto result = rig.run(std::span(&doc, 1), factory_config(), opts);
    CHECK(result.complete);
    const auto sel = read_rows(dir / "dsel.jsonl");
    const auto util = read_rows(dir / "dutil.jsonl");
    CHECK(sel.size() == 6);
    CHECK(util.size() >= 6);
    CHECK(util.size() <= 42);
    for (const auto& r : sel) {
      CHECK(r["chosen_utility"].get<double>() > r["rejected_utility"].get<double>());
      CHECK(r["chosen"] != r["rejected"]);
    }
    for (const auto& r : util) {
      CHECK(r["chosen_score"].get<double>() > r["rejected_score"].get<double>());
      CHECK(r["chosen"] != r["rejected"]);
    }
    CHECK(result.report["sel_triples"] == 6);
    CHECK(result.report["segments"] == 2);
    REQUIRE(logs.size() == 6);
  }

  TEST_CASE("chain rule: the best action of each step feeds the next observation") {
    Rig rig(varied());
    TempDir dir("chain");
    const auto doc = synthetic_document("d", 15, 5);
    std::vector<StepLog> logs;
    BuildOptions opts;
    opts.out_dir = dir.path();
    opts.step_logs = &logs;
    rig.run(std::span(&doc, 1), factory_config(), opts);
    REQUIRE(logs.size() == 9);
    for (std::size_t i = 0; i < logs.size(); ++i) {
      const auto& log = logs[i];
      CHECK(log.step == static_cast<int>(i % 3) + 1);
      REQUIRE(log.utilities.size() == log.actions.size());
      const auto best = static_cast<std::size_t>(
          std::max_element(log.utilities.begin(), log.utilities.end()) - log.utilities.begin());
      CHECK(log.best == best);
      if (log.step < 3) {
        const auto& next = logs[i + 1];
        CHECK(next.observation.find(log.actions[log.best].reasoning) != std::string::npos);
        for (std::size_t a = 0; a < log.actions.size(); ++a) {
          if (log.actions[a].reasoning != log.actions[log.best].reasoning) {
            CHECK(next.observation.find(log.actions[a].reasoning) == std::string::npos);
          }
        }
      }
    }
  }

  TEST_CASE("identical outputs produce no pairs") {
    FakeAgentOptions flat;
    flat.degradation = 0.0;
    Rig rig(flat);
    TempDir dir("ties");
    const auto doc = synthetic_document("d", 10, 8);
    BuildOptions opts;
    opts.out_dir = dir.path();
    const auto result = rig.run(std::span(&doc, 1), factory_config(), opts);
    CHECK(read_rows(dir / "dsel.jsonl").empty());
    CHECK(read_rows(dir / "dutil.jsonl").empty());
    CHECK(result.report["skipped"]["sel_tie"] == 6);
  }

  TEST_CASE("resume reproduces the uninterrupted output byte for byte") {
    const std::vector<Document> docs = {synthetic_document("a", 12, 1), synthetic_document("b", 7, 2)};
    const auto config = factory_config();
    TempDir full("full"), cut("cut");
    {
      Rig rig(varied());
      BuildOptions opts;
      opts.out_dir = full.path();
      CHECK(rig.run(docs, config, opts).complete);
    }
    {
      Rig rig(varied());
      BuildOptions opts;
      opts.out_dir = cut.path();
      opts.stop_after_segments = 2;
      CHECK_FALSE(rig.run(docs, config, opts).complete);
    }
    // Simulate a crash mid-append: bytes past the checkpoint must be discarded.
    {
      std::ofstream junk(cut / "dsel.jsonl", std::ios::app);
      junk << "{\"half\": ";
    }
    {
      Rig rig(varied());
      BuildOptions opts;
      opts.out_dir = cut.path();
      opts.resume = true;
      CHECK(rig.run(docs, config, opts).complete);
    }
    CHECK(slurp(full / "dsel.jsonl") == slurp(cut / "dsel.jsonl"));
    CHECK(slurp(full / "dutil.jsonl") == slurp(cut / "dutil.jsonl"));
    CHECK(slurp(full / "report.json") == slurp(cut / "report.json"));
  }

  TEST_CASE("resume refuses a different configuration") {
    const auto doc = synthetic_document("a", 10, 1);
    TempDir dir("fp");
    Rig rig(varied());
    BuildOptions opts;
    opts.out_dir = dir.path();
    opts.stop_after_segments = 1;
    rig.run(std::span(&doc, 1), factory_config(), opts);
    auto other = factory_config();
    other.params.seed = 99;
    opts.resume = true;
    opts.stop_after_segments.reset();
    CHECK_THROWS_AS(rig.run(std::span(&doc, 1), other, opts), RestoreError);
  }

  TEST_CASE("documents need references") {
    Rig rig(varied());
    TempDir dir("noref");
    const auto doc = make_document("d", "en", "zh", std::vector<std::string>{"a."});
    BuildOptions opts;
    opts.out_dir = dir.path();
    CHECK_THROWS_AS(rig.run(std::span(&doc, 1), factory_config(), opts), ValidationError);
  }

  TEST_CASE("backend failure: rethrown before progress, partial after") {
    const auto doc = synthetic_document("d", 10, 4);
    HashingEmbedder emb(32);
    ChrfMetric metric;
    const PromptRegistry prompts;
    auto failing_after = [](int limit) {
      return [limit, n = std::make_shared<std::atomic<int>>(0), inner = std::make_shared<FakeAgent>(varied())](
                 const ChatRequest& r) {
        if (++*n > limit) throw BackendError("scripted outage", true);
        return inner->complete(r).text;
      };
    };
    TempDir a("fail0"), b("fail1");
    FnBackend early(failing_after(3));
    BuildOptions oa;
    oa.out_dir = a.path();
    CHECK_THROWS_AS(build_dataset(std::span(&doc, 1), factory_config(), early, emb, metric, prompts, oa),
                    BackendError);

    // Count the calls of exactly one segment, then fail a few calls later.
    int first_segment_calls = 0;
    {
      TempDir probe("probe");
      FnBackend counter(failing_after(1 << 30));
      BuildOptions op;
      op.out_dir = probe.path();
      op.stop_after_segments = 1;
      build_dataset(std::span(&doc, 1), factory_config(), counter, emb, metric, prompts, op);
      first_segment_calls = counter.calls();
    }
    FnBackend late(failing_after(first_segment_calls + 5));
    BuildOptions ob;
    ob.out_dir = b.path();
    try {
      build_dataset(std::span(&doc, 1), factory_config(), late, emb, metric, prompts, ob);
      FAIL("expected PartialRunError");
    } catch (const PartialRunError& e) {
      CHECK(e.checkpoint() == (b / "checkpoint.json").string());
      const auto cp = json::parse(slurp(b / "checkpoint.json"));
      CHECK(cp["next_segment"] == 1);
    }
  }

  TEST_CASE("exports: row counts agree and rows match the published schemas") {
    Rig rig(varied());
    TempDir dir("export");
    const auto doc = synthetic_document("d", 10, 21);
    BuildOptions opts;
    opts.out_dir = dir.path();
    rig.run(std::span(&doc, 1), factory_config(), opts);
    const auto sft = export_dataset(dir.path(), ExportMode::sft);
    const auto dpo = export_dataset(dir.path(), ExportMode::dpo);
    CHECK(sft == dpo);
    CHECK(sft == read_rows(dir / "dsel.jsonl").size() + read_rows(dir / "dutil.jsonl").size());
    const auto sft_schema = json::parse(slurp(std::filesystem::path(LOONG_SOURCE_DIR) / "schemas/sft.schema.json"));
    const auto dpo_schema = json::parse(slurp(std::filesystem::path(LOONG_SOURCE_DIR) / "schemas/dpo.schema.json"));
    CHECK(sft_schema == export_schema(ExportMode::sft));
    CHECK(dpo_schema == export_schema(ExportMode::dpo));
    std::string why;
    for (const auto& row : read_rows(dir / "sft.jsonl")) CHECK_MESSAGE(conforms(row, sft_schema, &why), why);
    for (const auto& row : read_rows(dir / "dpo.jsonl")) {
      CHECK_MESSAGE(conforms(row, dpo_schema, &why), why);
      CHECK(row["chosen"] != row["rejected"]);
    }
    CHECK_FALSE(conforms(json{{"prompt", "p"}}, dpo_schema, &why));
    CHECK_FALSE(conforms(json{{"prompt", "p"}, {"chosen", ""}, {"rejected", "r"}}, dpo_schema, &why));
  }
}
