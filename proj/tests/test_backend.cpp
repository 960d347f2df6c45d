#include <doctest.h>

#include <json.hpp>

#include "loong/backend.hpp"
#include "loong/embedding.hpp"
#include "loong/metrics.hpp"
#include "loong/prompts.hpp"
#include "support.hpp"

using namespace loong;
using namespace loong::testing;
using nlohmann::json;

namespace {

HttpEndpoint endpoint(const std::string& url, int attempts = 3) {
  HttpEndpoint ep;
  ep.base_url = url;
  ep.retry = fast_retry(attempts);
  ep.timeout = std::chrono::milliseconds(5000);
  return ep;
}

json completion(const std::string& text) {
  return {{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}, {"finish_reason", "stop"}}}},
          {"usage", {{"prompt_tokens", 3}, {"completion_tokens", 2}, {"total_tokens", 5}}}};
}

}  // namespace

TEST_SUITE("backend") {
  TEST_CASE("scripted rule serves its responses, then repeats the last") {
    MockBackend mock;
    const auto h = mock.register_rule(Matcher::substring("Translate"), {"r1", "r2"});
    CHECK(ask(mock, "Translate this", {}) == "r1");
    CHECK(ask(mock, "Translate that", {}) == "r2");
    CHECK(ask(mock, "Translate again", {}) == "r2");
    CHECK(mock.calls(h) == 3);
  }

  TEST_CASE("strict mock rejects unmatched prompts; lenient one uses the default") {
    MockBackend strict;
    strict.register_rule(Matcher::substring("a"), {"x"});
    CHECK_THROWS_AS(ask(strict, "zzz", {}), BackendError);
    MockBackend lenient(false);
    lenient.set_default("fallback");
    CHECK(ask(lenient, "zzz", {}) == "fallback");
  }

  TEST_CASE("transcript records every exchange in order") {
    MockBackend mock;
    mock.register_rule(Matcher::regex("^q[0-9]$"), {"a1", "a2", "a3"});
    for (int i = 1; i <= 3; ++i) ask(mock, "q" + std::to_string(i), {});
    const auto t = mock.transcript();
    REQUIRE(t.size() == 3);
    for (int i = 0; i < 3; ++i) {
      CHECK(t[i].prompt == "q" + std::to_string(i + 1));
      CHECK(t[i].response == "a" + std::to_string(i + 1));
      CHECK(t[i].rule == 0u);
    }
    mock.clear_transcript();
    CHECK(mock.transcript().empty());
  }

  TEST_CASE("overlapping rules are rejected at registration") {
    MockBackend mock;
    mock.register_rule(Matcher::substring("Translate"), {"x"});
    CHECK_THROWS_AS(mock.register_rule(Matcher::substring("Translate the"), {"y"}), ValidationError);
    mock.register_rule(Matcher::any(), {"z"});
    CHECK_THROWS_AS(mock.register_rule(Matcher::any(), {"w"}), ValidationError);
    CHECK_THROWS_AS(Matcher::regex("(unclosed"), ValidationError);
  }

  TEST_CASE("responder rules see the request") {
    MockBackend mock;
    mock.register_responder(Matcher::any(), [](const ChatRequest& r) { return std::to_string(r.params.seed.value_or(0)); });
    SamplingParams p;
    p.seed = 42;
    CHECK(ask(mock, "x", p) == "42");
  }

  TEST_CASE("seed derivation is deterministic and salt-sensitive") {
    SamplingParams p;
    CHECK_FALSE(p.derive(1).seed.has_value());
    p.seed = 7;
    CHECK(p.derive(1).seed == p.derive(1).seed);
    CHECK(p.derive(1).seed != p.derive(2).seed);
    SamplingParams bad;
    bad.top_p = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
  }

  TEST_CASE("call meter counts calls and prompt sizes") {
    MockBackend mock(false);
    mock.set_default("ok");
    CallMeter meter(mock);
    ask(meter, "abc", {});
    ask(meter, "abcdef", {});
    const auto c = meter.take();
    CHECK(c.calls == 2);
    CHECK(c.total_prompt_chars == 9);
    CHECK(c.peak_prompt_chars == 6);
    CHECK(meter.counts().calls == 0);
  }

  TEST_CASE("retry policy backs off geometrically up to the cap") {
    RetryPolicy p;
    p.initial_backoff = std::chrono::milliseconds(100);
    p.multiplier = 2.0;
    p.max_backoff = std::chrono::milliseconds(300);
    CHECK(p.delay_before(2).count() == 100);
    CHECK(p.delay_before(3).count() == 200);
    CHECK(p.delay_before(4).count() == 300);
  }
}

TEST_SUITE("http") {
  TEST_CASE("chat client round trip against a stub server") {
    StubServer stub;
    json seen;
    stub.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
      seen = json::parse(req.body);
      res.set_content(completion("stub says hi").dump(), "application/json");
    });
    stub.start();
    HttpChatConfig cfg;
    cfg.api_base = stub.url() + "/v1";
    cfg.model = "m";
    cfg.retry = fast_retry(3);
    HttpChatBackend chat(cfg);
    ChatRequest req;
    req.user = "hello";
    req.params.seed = 9;
    const auto r = chat.complete(req);
    CHECK(r.text == "stub says hi");
    CHECK(r.usage.total_tokens == 5);
    CHECK(r.attempts == 1);
    CHECK(seen["messages"][0]["content"] == "hello");
    CHECK(seen["seed"] == 9);
    CHECK(seen["model"] == "m");
  }

  TEST_CASE("two 500s then success within a limit of three") {
    StubServer stub;
    std::atomic<int> hits{0};
    stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
      if (++hits <= 2) {
        res.status = 500;
        res.set_content("boom", "text/plain");
        return;
      }
      res.set_content(completion("third time").dump(), "application/json");
    });
    stub.start();
    HttpChatConfig cfg;
    cfg.api_base = stub.url() + "/v1";
    cfg.retry = fast_retry(3);
    HttpChatBackend chat(cfg);
    ChatRequest req;
    req.user = "x";
    const auto r = chat.complete(req);
    CHECK(r.text == "third time");
    CHECK(r.attempts == 3);
    CHECK(hits == 3);
  }

  TEST_CASE("4xx is not retried and keeps the body") {
    StubServer stub;
    std::atomic<int> hits{0};
    stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
      ++hits;
      res.status = 400;
      res.set_content("{\"error\":\"bad\"}", "application/json");
    });
    stub.start();
    HttpChatConfig cfg;
    cfg.api_base = stub.url() + "/v1";
    cfg.retry = fast_retry(3);
    HttpChatBackend chat(cfg);
    ChatRequest req;
    req.user = "x";
    try {
      chat.complete(req);
      FAIL("expected BackendError");
    } catch (const BackendError& e) {
      CHECK(e.status() == 400);
      CHECK(e.body().find("bad") != std::string::npos);
      CHECK_FALSE(e.retryable());
    }
    CHECK(hits == 1);
  }

  TEST_CASE("sidecar clients: score, embed, health") {
    StubServer stub;
    stub.server().Post("/score", [](const httplib::Request& req, httplib::Response& res) {
      const auto j = json::parse(req.body);
      const auto hyp = j.at("hyp").get<std::string>();
      const double score = hyp == "good" ? 0.87 : hyp == "mid" ? 0.5 : 0.1;
      res.set_content(json{{"score", score}, {"model", "stub"}}.dump(), "application/json");
    });
    stub.server().Post("/embed", [](const httplib::Request& req, httplib::Response& res) {
      const auto j = json::parse(req.body);
      json vectors = json::array();
      for (const auto& t : j.at("texts")) vectors.push_back({static_cast<double>(t.get<std::string>().size()), 1.0});
      res.set_content(json{{"vectors", vectors}, {"dim", 2}}.dump(), "application/json");
    });
    stub.server().Get("/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"models":["stub"]})", "application/json");
    });
    stub.start();

    RemoteScorer scorer(endpoint(stub.url()));
    CHECK(scorer.healthy());
    CHECK(scorer.score("s", "good", std::string("r")).value == doctest::Approx(0.87));
    const std::vector<ScoreRequest> batch = {{"s", "bad", {}}, {"s", "good", {}}, {"s", "mid", {}}};
    const auto scores = scorer.score_batch(batch);
    REQUIRE(scores.size() == 3);
    CHECK(scores[0].value == doctest::Approx(0.1));
    CHECK(scores[1].value == doctest::Approx(0.87));
    CHECK(scores[2].value == doctest::Approx(0.5));
    CHECK(scores[1].unit() == doctest::Approx(0.87));

    RemoteEmbedder emb(endpoint(stub.url()));
    CHECK(emb.dim() == 0);
    const std::vector<std::string> texts = {"a", "abc"};
    const auto v = emb.embed(texts);
    REQUIRE(v.size() == 2);
    CHECK(v[1].values[0] == 3.0f);
    CHECK(emb.dim() == 2);
  }

  TEST_CASE("malformed sidecar replies are backend errors") {
    StubServer stub;
    stub.server().Post("/score", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"score":"high"})", "application/json");
    });
    stub.server().Post("/embed", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"vectors":[[1.0]]})", "application/json");
    });
    stub.start();
    RemoteScorer scorer(endpoint(stub.url()));
    CHECK_THROWS_AS(scorer.score("s", "h"), BackendError);
    RemoteEmbedder emb(endpoint(stub.url()));
    const std::vector<std::string> two = {"a", "b"};
    CHECK_THROWS_AS(emb.embed(two), BackendError);
  }

  TEST_CASE("sidecar down: error after the retries run out") {
    // Nothing listens on the discard port in the test environment.
    RemoteScorer scorer(endpoint("http://127.0.0.1:9", 2));
    CHECK_FALSE(scorer.healthy());
    try {
      scorer.score("s", "h");
      FAIL("expected BackendError");
    } catch (const BackendError& e) {
      CHECK(e.attempts() == 2);
    }
  }
}

TEST_SUITE("prompts") {
  TEST_CASE("summary prompt carries the text and the 50-word limit") {
    const PromptRegistry reg;
    const auto s = reg.render(TemplateName::summary, {{"text", "X marks the spot"}});
    CHECK(s.find("X marks the spot") != std::string::npos);
    CHECK(s.find("should not exceed 50 words") != std::string::npos);
  }

  TEST_CASE("missing variables are named") {
    const PromptRegistry reg;
    try {
      reg.render(TemplateName::entity_classify, {{"text", "t"}});
      FAIL("expected RenderError");
    } catch (const RenderError& e) {
      REQUIRE(e.missing().size() == 1);
      CHECK(e.missing()[0] == "entity");
    }
  }

  TEST_CASE("substitution is single pass and leaves JSON braces alone") {
    CHECK(render_template("t", "{a} {\"k\": 1} {b}", {{"a", "{b}"}, {"b", "B"}}) == "{b} {\"k\": 1} B");
  }

  TEST_CASE("override directory wins over the built-in") {
    TempDir dir("prompts");
    spit(dir / "summary.txt", "Summarize briefly: {text}\n");
    const auto reg = PromptRegistry::with_overrides(dir.path());
    CHECK(reg.render(TemplateName::summary, {{"text", "abc"}}) == "Summarize briefly: abc");
    CHECK(reg.get(TemplateName::judge).body == PromptRegistry::builtin_body(TemplateName::judge));
    spit(dir / "summary.txt", "{undocumented}");
    CHECK_THROWS_AS(PromptRegistry::with_overrides(dir.path()), ValidationError);
  }

  TEST_CASE("built-in templates validate and use only documented placeholders") {
    const PromptRegistry reg;
    CHECK_NOTHROW(reg.validate());
    for (auto name : kAllTemplates) {
      const auto documented = PromptRegistry::documented_vars(name);
      for (const auto& p : reg.get(name).placeholders()) {
        CHECK_MESSAGE(std::find(documented.begin(), documented.end(), p) != documented.end(), p);
      }
      CHECK(parse_template_name(to_string(name)) == name);
    }
  }
}
