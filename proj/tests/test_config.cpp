#include <doctest.h>

#include <json.hpp>

#include "loong/config.hpp"
#include "support.hpp"

using namespace loong;
using namespace loong::testing;
using nlohmann::json;

TEST_SUITE("config") {
  TEST_CASE("defaults") {
    const RunConfig c;
    CHECK(c.segment_size == 5);
    CHECK(c.retrieval.summaries == 4);
    CHECK(c.retrieval.exemplars == 4);
    CHECK(c.preferences.actions == 7);
    CHECK(c.preferences.translations == 5);
    CHECK(c.aligner.singleton_retries == 2);
    CHECK_NOTHROW(c.validate());
  }

  TEST_CASE("ultra-long profile widens retrieval") {
    const auto u = RunConfig::ultra_long();
    CHECK(u.retrieval.summaries == 8);
    CHECK(u.retrieval.exemplars == 6);
    const auto parsed = RunConfig::from_json(json{{"profile", "ultra_long"}});
    CHECK(parsed.retrieval.summaries == 8);
  }

  TEST_CASE("JSON round trip") {
    auto c = RunConfig::from_json(json{{"segment_size", 3},
                                       {"mode", "doc2doc"},
                                       {"sampling", {{"seed", 11}, {"temperature", 0.2}}},
                                       {"preferences", {{"actions", 4}}},
                                       {"backend", {{"kind", "fake"}, {"fake", {{"degradation", 0.25}}}}}});
    CHECK(c.segment_size == 3);
    CHECK(c.mode == RunMode::doc2doc);
    CHECK(c.params.seed == 11u);
    CHECK(c.preferences.actions == 4);
    CHECK(c.backend.fake.degradation == 0.25);
    const auto back = RunConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(back.fingerprint() == c.fingerprint());
  }

  TEST_CASE("template override directory key") {
    TempDir dir("cfg_prompts");
    CHECK(RunConfig::from_json(json{{"prompts", {{"dir", dir.path().string()}}}}).prompts_dir == dir.path().string());
    CHECK(RunConfig::from_json(json{{"prompts_dir", "x"}}).prompts_dir == "x");
    CHECK_THROWS_AS(RunConfig::from_json(json{{"prompts", {{"folder", "x"}}}}), ValidationError);
  }

  TEST_CASE("unknown keys and bad values are rejected") {
    CHECK_THROWS_AS(RunConfig::from_json(json{{"segmnet_size", 5}}), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(json{{"retrieval", {{"sumaries", 2}}}}), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(json{{"segment_size", 0}}), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(json{{"mode", "sentence"}}), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(json{{"preferences", {{"actions", 1}}}}), ValidationError);
    CHECK_THROWS_AS(RunConfig::from_json(json{{"segment_size", "five"}}), ValidationError);
  }

  TEST_CASE("fingerprint tracks output-relevant settings only") {
    RunConfig a;
    RunConfig b = a;
    b.workers = 8;
    b.judge_window = 40;
    b.checkpoint = "elsewhere.json";
    CHECK(a.fingerprint() == b.fingerprint());
    b.params.seed = 3;
    CHECK(a.fingerprint() != b.fingerprint());
  }

  TEST_CASE("mock script file") {
    TempDir dir("mock");
    spit(dir / "rules.json", R"({"rules": [{"match": "substring", "pattern": "hello", "responses": ["one", "two"]},
                                           {"match": "regex", "pattern": "^bye", "responses": ["ciao"]}]})");
    auto mock = load_mock_script(dir / "rules.json");
    CHECK(ask(*mock, "say hello", {}) == "one");
    CHECK(ask(*mock, "bye now", {}) == "ciao");
    CHECK(ask(*mock, "hello again", {}) == "two");
    CHECK_THROWS_AS(ask(*mock, "other", {}), BackendError);

    spit(dir / "lenient.json", R"({"rules": [], "default": "fallback"})");
    CHECK(ask(*load_mock_script(dir / "lenient.json"), "x", {}) == "fallback");
    spit(dir / "bad.json", R"({"rules": [{"match": "glob", "pattern": "*", "responses": ["x"]}]})");
    CHECK_THROWS_AS(load_mock_script(dir / "bad.json"), ValidationError);
  }

  TEST_CASE("service construction follows the configured kinds") {
    RunConfig c;
    auto s = make_services(c);
    CHECK(dynamic_cast<FakeAgent*>(s.llm.get()) != nullptr);
    CHECK(s.metric->name() == "chrf");
    CHECK(s.embedder->dim() == 256);
    c.backend.kind = "carrier-pigeon";
    CHECK_THROWS_AS(make_services(c), ValidationError);
  }
}
