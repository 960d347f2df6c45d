#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <json.hpp>

#include "support.hpp"

using namespace loong::testing;
using nlohmann::json;

namespace {

int run(const std::string& args, const std::filesystem::path& log) {
  const auto cmd = std::string(LOONG_CLI_PATH) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("translate, eval, inspect and build-prefs with the fake backend") {
    TempDir dir("cli");
    const auto log = dir / "log.txt";
    REQUIRE(run("synth --out " + q(dir / "c.jsonl") + " --docs 2 --sentences 8 --seed 4", log) == 0);
    spit(dir / "cfg.json", R"({"sampling": {"seed": 5}, "backend": {"fake": {"degradation": 0.3}}})");
    CHECK(run("translate --corpus " + q(dir / "c.jsonl") + " --config " + q(dir / "cfg.json") + " --out " +
                  q(dir / "run"),
              log) == 0);
    for (const char* f : {"records.jsonl", "traces.jsonl", "corpus.jsonl", "config.json", "timing.json"}) {
      CHECK_MESSAGE(std::filesystem::exists(dir / "run" / f), f);
    }
    CHECK(run("eval --run " + q(dir / "run") + " --judge", log) == 0);
    CHECK(std::filesystem::exists(dir / "run" / "evaluation.csv"));
    CHECK(run("memory inspect --snapshot " + q(dir / "run" / "memory" / "doc1.json"), log) == 0);
    CHECK(slurp(log).find("summaries: 2") != std::string::npos);
    CHECK(run("build-prefs --corpus " + q(dir / "c.jsonl") + " --config " + q(dir / "cfg.json") + " --out " +
                  q(dir / "prefs"),
              log) == 0);
    CHECK(std::filesystem::exists(dir / "prefs" / "dpo.jsonl"));
    CHECK(std::filesystem::exists(dir / "prefs" / "schemas" / "sft.schema.json"));
  }

  TEST_CASE("exit codes") {
    TempDir dir("exit");
    const auto log = dir / "log.txt";
    spit(dir / "c.jsonl", R"({"doc_id": "d", "src_lines": ["Alpha.", "Beta."]})" "\n");

    spit(dir / "typo.json", R"({"segmnet_size": 5})");
    CHECK(run("translate --corpus " + q(dir / "c.jsonl") + " --config " + q(dir / "typo.json") + " --out " +
                  q(dir / "a"),
              log) == 1);
    CHECK(run("translate --corpus " + q(dir / "missing.jsonl") + " --out " + q(dir / "a"), log) == 1);

    spit(dir / "down.json", R"({"backend": {"kind": "http", "http": {"api_base": "http://127.0.0.1:9/v1",
                                                                     "max_attempts": 1}}})");
    CHECK(run("translate --corpus " + q(dir / "c.jsonl") + " --config " + q(dir / "down.json") + " --out " +
                  q(dir / "b"),
              log) == 2);

    // The script covers segment 1 only; segment 2 asks for a selection it cannot answer.
    spit(dir / "rules.json", json{{"rules",
                                   {{{"match", "substring"}, {"pattern", "Please provide a summary"}, {"responses", {"Alpha."}}},
                                    {{"match", "substring"}, {"pattern", "Given a source text in"}, {"responses", {"```json\n[]\n```"}}},
                                    {{"match", "substring"}, {"pattern", "#1 <s>Alpha.</s>"}, {"responses", {"#1 <s>A.</s>"}}}}}}
                                 .dump());
    spit(dir / "partial.json", json{{"segment_size", 1}, {"backend", {{"kind", "mock"}, {"mock_script", (dir / "rules.json").string()}}}}.dump());
    CHECK(run("translate --corpus " + q(dir / "c.jsonl") + " --config " + q(dir / "partial.json") + " --out " +
                  q(dir / "c"),
              log) == 3);
    CHECK(std::filesystem::exists(dir / "c" / "checkpoints" / "d.json"));
  }
}
