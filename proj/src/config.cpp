#include "loong/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "loong/text.hpp"

namespace loong {

using nlohmann::json;

namespace {

/// Reads fields of one JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ValidationError(where_ + ": expected an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ValidationError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* object(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  std::string path(const char* key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ValidationError(where_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

constexpr std::pair<FakeAgentOptions::Fault, std::string_view> kFaults[] = {
    {FakeAgentOptions::Fault::none, "none"},       {FakeAgentOptions::Fault::merge, "merge"},
    {FakeAgentOptions::Fault::split, "split"},     {FakeAgentOptions::Fault::reorder, "reorder"},
    {FakeAgentOptions::Fault::preamble, "preamble"}};

constexpr std::pair<FakeAgentOptions::Selection, std::string_view> kSelections[] = {
    {FakeAgentOptions::Selection::random, "random"},
    {FakeAgentOptions::Selection::all, "all"},
    {FakeAgentOptions::Selection::none, "none"},
    {FakeAgentOptions::Selection::first, "first"}};

template <class E, std::size_t N>
E parse_enum(const std::pair<E, std::string_view> (&table)[N], const std::string& name,
             const std::string& where) {
  for (const auto& [value, label] : table) {
    if (label == name) return value;
  }
  throw ValidationError(where + ": unknown value '" + name + "'");
}

template <class E, std::size_t N>
std::string enum_name(const std::pair<E, std::string_view> (&table)[N], E value) {
  for (const auto& [v, label] : table) {
    if (v == value) return std::string(label);
  }
  return "";
}

HttpEndpoint read_endpoint(const json& j, const std::string& where) {
  HttpEndpoint ep;
  Fields f(j, where);
  f.read("base_url", ep.base_url);
  std::string token_env;
  f.read("token_env", token_env);
  if (!token_env.empty()) {
    if (const char* v = std::getenv(token_env.c_str())) ep.bearer_token = v;
  }
  long timeout_ms = ep.timeout.count();
  f.read("timeout_ms", timeout_ms);
  ep.timeout = std::chrono::milliseconds(timeout_ms);
  f.read("max_attempts", ep.retry.max_attempts);
  f.read("max_in_flight", ep.max_in_flight);
  f.finish();
  return ep;
}

json endpoint_json(const HttpEndpoint& ep) {
  return {{"base_url", ep.base_url},
          {"timeout_ms", ep.timeout.count()},
          {"max_attempts", ep.retry.max_attempts},
          {"max_in_flight", ep.max_in_flight}};
}

FakeAgentOptions read_fake(const json& j, const std::string& where) {
  FakeAgentOptions o;
  Fields f(j, where);
  std::string fault = "none", selection = "random";
  f.read("fault", fault);
  o.fault = parse_enum(kFaults, fault, f.path("fault"));
  f.read("fault_rate", o.fault_rate);
  f.read("fault_min_span", o.fault_min_span);
  f.read("degradation", o.degradation);
  f.read("selection", selection);
  o.selection = parse_enum(kSelections, selection, f.path("selection"));
  f.read("garbage_action_rate", o.garbage_action_rate);
  f.read("summary_words", o.summary_words);
  std::vector<double> scores;
  f.read("judge_scores", scores);
  if (!scores.empty()) {
    if (scores.size() != 5) throw ValidationError(f.path("judge_scores") + ": expected 5 values");
    std::copy(scores.begin(), scores.end(), o.judge_scores);
  }
  f.finish();
  return o;
}

json fake_json(const FakeAgentOptions& o) {
  return {{"fault", enum_name(kFaults, o.fault)},
          {"fault_rate", o.fault_rate},
          {"fault_min_span", o.fault_min_span},
          {"degradation", o.degradation},
          {"selection", enum_name(kSelections, o.selection)},
          {"garbage_action_rate", o.garbage_action_rate},
          {"summary_words", o.summary_words},
          {"judge_scores", std::vector<double>(std::begin(o.judge_scores), std::end(o.judge_scores))}};
}

void check_unit(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) throw ValidationError(std::string(name) + " must lie in [0, 1]");
}

}  // namespace

std::string_view to_string(RunMode mode) { return mode == RunMode::loong ? "loong" : "doc2doc"; }

RunConfig RunConfig::ultra_long() {
  RunConfig c;
  c.retrieval = RetrievalSizes{8, 6};
  return c;
}

RunConfig RunConfig::from_json(const json& j) {
  Fields f(j, "config");
  std::string profile = "default";
  f.read("profile", profile);
  RunConfig c;
  if (profile == "ultra_long") {
    c = ultra_long();
  } else if (profile != "default") {
    throw ValidationError("config.profile: unknown profile '" + profile + "'");
  }
  f.read("segment_size", c.segment_size);
  if (const auto* r = f.object("retrieval")) {
    Fields rf(*r, "config.retrieval");
    rf.read("summaries", c.retrieval.summaries);
    rf.read("exemplars", c.retrieval.exemplars);
    rf.finish();
  }
  if (const auto* s = f.object("sampling")) {
    Fields sf(*s, "config.sampling");
    sf.read("temperature", c.params.temperature);
    sf.read("top_p", c.params.top_p);
    sf.read("max_tokens", c.params.max_tokens);
    std::optional<std::uint64_t> seed;
    if (const auto* sv = sf.object("seed"); sv && !sv->is_null()) {
      try {
        seed = sv->get<std::uint64_t>();
      } catch (const json::exception& e) {
        throw ValidationError(std::string("config.sampling.seed: ") + e.what());
      }
    }
    c.params.seed = seed;
    sf.finish();
  }
  std::string mode = "loong";
  f.read("mode", mode);
  if (mode == "loong") {
    c.mode = RunMode::loong;
  } else if (mode == "doc2doc") {
    c.mode = RunMode::doc2doc;
  } else {
    throw ValidationError("config.mode: unknown mode '" + mode + "'");
  }
  if (const auto* p = f.object("preferences")) {
    Fields pf(*p, "config.preferences");
    pf.read("actions", c.preferences.actions);
    pf.read("translations", c.preferences.translations);
    pf.read("action_resample_budget", c.preferences.action_resample_budget);
    pf.finish();
  }
  if (const auto* a = f.object("aligner")) {
    Fields af(*a, "config.aligner");
    af.read("singleton_retries", c.aligner.singleton_retries);
    af.read("parallel_halves", c.aligner.parallel_halves);
    af.finish();
  }
  f.read("src_lang", c.src_lang);
  f.read("tgt_lang", c.tgt_lang);
  f.read("prompts_dir", c.prompts_dir);
  if (const auto* pr = f.object("prompts")) {
    Fields pf(*pr, "config.prompts");
    pf.read("dir", c.prompts_dir);
    pf.finish();
  }
  f.read("checkpoint", c.checkpoint);
  f.read("judge_window", c.judge_window);
  f.read("workers", c.workers);
  if (const auto* b = f.object("backend")) {
    Fields bf(*b, "config.backend");
    bf.read("kind", c.backend.kind);
    bf.read("mock_script", c.backend.mock_script);
    if (const auto* h = bf.object("http")) {
      Fields hf(*h, "config.backend.http");
      hf.read("api_base", c.backend.http.api_base);
      hf.read("model", c.backend.http.model);
      std::string key_env;
      hf.read("api_key_env", key_env);
      if (!key_env.empty()) {
        if (const char* v = std::getenv(key_env.c_str())) c.backend.http.api_key = v;
      }
      long timeout_ms = c.backend.http.timeout.count();
      hf.read("timeout_ms", timeout_ms);
      c.backend.http.timeout = std::chrono::milliseconds(timeout_ms);
      hf.read("max_attempts", c.backend.http.retry.max_attempts);
      hf.read("max_in_flight", c.backend.http.max_in_flight);
      hf.read("send_seed", c.backend.http.send_seed);
      hf.finish();
    }
    if (const auto* fk = bf.object("fake")) c.backend.fake = read_fake(*fk, "config.backend.fake");
    bf.finish();
  }
  if (const auto* e = f.object("embedder")) {
    Fields ef(*e, "config.embedder");
    ef.read("kind", c.embedder.kind);
    ef.read("dim", c.embedder.dim);
    if (const auto* ep = ef.object("endpoint")) c.embedder.endpoint = read_endpoint(*ep, "config.embedder.endpoint");
    ef.finish();
  }
  if (const auto* m = f.object("metric")) {
    Fields mf(*m, "config.metric");
    mf.read("kind", c.metric.kind);
    if (const auto* ep = mf.object("endpoint")) c.metric.endpoint = read_endpoint(*ep, "config.metric.endpoint");
    mf.finish();
  }
  f.finish();
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

void RunConfig::validate() const {
  if (segment_size < 1) throw ValidationError("segment_size must be at least 1");
  params.validate();
  if (preferences.actions < 2) throw ValidationError("preferences.actions must be at least 2");
  if (preferences.translations < 2) throw ValidationError("preferences.translations must be at least 2");
  if (preferences.action_resample_budget < 0) throw ValidationError("preferences.action_resample_budget must be >= 0");
  if (aligner.singleton_retries < 0) throw ValidationError("aligner.singleton_retries must be >= 0");
  if (workers < 1) throw ValidationError("workers must be at least 1");
  if (backend.kind != "http" && backend.kind != "mock" && backend.kind != "fake") {
    throw ValidationError("backend.kind must be http, mock or fake");
  }
  if (backend.kind == "mock" && backend.mock_script.empty()) {
    throw ValidationError("backend.mock_script is required for the mock backend");
  }
  if (embedder.kind != "hashing" && embedder.kind != "remote") {
    throw ValidationError("embedder.kind must be hashing or remote");
  }
  if (embedder.kind == "hashing" && embedder.dim == 0) throw ValidationError("embedder.dim must be positive");
  if (metric.kind != "chrf" && metric.kind != "remote") throw ValidationError("metric.kind must be chrf or remote");
  check_unit(backend.fake.fault_rate, "backend.fake.fault_rate");
  check_unit(backend.fake.degradation, "backend.fake.degradation");
  check_unit(backend.fake.garbage_action_rate, "backend.fake.garbage_action_rate");
}

json RunConfig::to_json() const {
  json sampling = {{"temperature", params.temperature},
                   {"top_p", params.top_p},
                   {"max_tokens", params.max_tokens},
                   {"seed", params.seed ? json(*params.seed) : json(nullptr)}};
  return {{"segment_size", segment_size},
          {"retrieval", {{"summaries", retrieval.summaries}, {"exemplars", retrieval.exemplars}}},
          {"sampling", sampling},
          {"mode", std::string(to_string(mode))},
          {"preferences",
           {{"actions", preferences.actions},
            {"translations", preferences.translations},
            {"action_resample_budget", preferences.action_resample_budget}}},
          {"aligner", {{"singleton_retries", aligner.singleton_retries}, {"parallel_halves", aligner.parallel_halves}}},
          {"src_lang", src_lang},
          {"tgt_lang", tgt_lang},
          {"prompts", {{"dir", prompts_dir}}},
          {"checkpoint", checkpoint},
          {"judge_window", judge_window},
          {"workers", workers},
          {"backend",
           {{"kind", backend.kind},
            {"mock_script", backend.mock_script},
            {"http",
             {{"api_base", backend.http.api_base},
              {"model", backend.http.model},
              {"timeout_ms", backend.http.timeout.count()},
              {"max_attempts", backend.http.retry.max_attempts},
              {"max_in_flight", backend.http.max_in_flight},
              {"send_seed", backend.http.send_seed}}},
            {"fake", fake_json(backend.fake)}}},
          {"embedder", {{"kind", embedder.kind}, {"dim", embedder.dim}, {"endpoint", endpoint_json(embedder.endpoint)}}},
          {"metric", {{"kind", metric.kind}, {"endpoint", endpoint_json(metric.endpoint)}}}};
}

std::string RunConfig::fingerprint() const {
  auto j = to_json();
  j.erase("checkpoint");
  j.erase("workers");
  j.erase("judge_window");
  std::ostringstream out;
  out << std::hex << text::fnv1a(j.dump());
  return out.str();
}

std::unique_ptr<MockBackend> load_mock_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open mock script " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("mock script " + path.string() + ": " + e.what());
  }
  Fields f(j, "mock script");
  const json* fallback = f.object("default");
  if (fallback && !fallback->is_string()) throw ValidationError("mock script: default must be a string");
  auto mock = std::make_unique<MockBackend>(fallback == nullptr);
  if (const auto* rules = f.object("rules")) {
    if (!rules->is_array()) throw ValidationError("mock script: rules must be an array");
    for (std::size_t i = 0; i < rules->size(); ++i) {
      const auto where = "mock script rule " + std::to_string(i);
      Fields rf((*rules)[i], where);
      std::string match = "substring", pattern;
      std::vector<std::string> responses;
      rf.read("match", match);
      rf.read("pattern", pattern);
      rf.read("responses", responses);
      rf.finish();
      if (responses.empty()) throw ValidationError(where + ": needs at least one response");
      if (match == "substring") {
        mock->register_rule(Matcher::substring(pattern), std::move(responses));
      } else if (match == "regex") {
        mock->register_rule(Matcher::regex(pattern), std::move(responses));
      } else if (match == "any") {
        mock->register_rule(Matcher::any(), std::move(responses));
      } else {
        throw ValidationError(where + ": unknown match kind '" + match + "'");
      }
    }
  }
  if (fallback) mock->set_default(fallback->get<std::string>());
  f.finish();
  return mock;
}

Services make_services(const RunConfig& config) {
  config.validate();
  Services s{nullptr, nullptr, nullptr,
             config.prompts_dir.empty() ? PromptRegistry() : PromptRegistry::with_overrides(config.prompts_dir)};
  if (config.backend.kind == "http") {
    s.llm = std::make_unique<HttpChatBackend>(config.backend.http.with_env());
  } else if (config.backend.kind == "mock") {
    s.llm = load_mock_script(config.backend.mock_script);
  } else {
    s.llm = std::make_unique<FakeAgent>(config.backend.fake);
  }
  if (config.embedder.kind == "remote") {
    s.embedder = std::make_unique<RemoteEmbedder>(config.embedder.endpoint);
  } else {
    s.embedder = std::make_unique<HashingEmbedder>(config.embedder.dim);
  }
  if (config.metric.kind == "remote") {
    s.metric = std::make_unique<RemoteScorer>(config.metric.endpoint);
  } else {
    s.metric = std::make_unique<ChrfMetric>();
  }
  return s;
}

}  // namespace loong
