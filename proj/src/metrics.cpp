#include "loong/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <numeric>
#include <unordered_map>

#include "loong/text.hpp"

namespace loong {

using nlohmann::json;

namespace {

std::u32string without_spaces(std::string_view s) {
  auto chars = text::decode_utf8(s);
  std::erase_if(chars, [](char32_t c) { return text::is_space(c); });
  return chars;
}

std::unordered_map<std::u32string, int> ngram_counts(const std::u32string& s, std::size_t n) {
  std::unordered_map<std::u32string, int> counts;
  if (s.size() < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[s.substr(i, n)];
  return counts;
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

}  // namespace

MetricScore chrf(std::string_view hyp, std::string_view ref) {
  const auto r = without_spaces(ref);
  if (r.empty()) throw ValidationError("chrf: empty reference");
  const auto h = without_spaces(hyp);
  const double beta2 = kChrfBeta * kChrfBeta;
  double total = 0.0;
  int orders = 0;
  for (std::size_t n = 1; n <= kChrfOrder; ++n) {
    const auto hc = ngram_counts(h, n);
    const auto rc = ngram_counts(r, n);
    if (hc.empty() && rc.empty()) continue;
    ++orders;
    long matches = 0;
    for (const auto& [gram, count] : hc) {
      if (auto it = rc.find(gram); it != rc.end()) matches += std::min(count, it->second);
    }
    if (matches == 0) continue;
    const double p = static_cast<double>(matches) / static_cast<double>(h.size() - n + 1);
    const double rec = static_cast<double>(matches) / static_cast<double>(r.size() - n + 1);
    total += (1.0 + beta2) * p * rec / (beta2 * p + rec);
  }
  const double value = orders == 0 ? 0.0 : 100.0 * total / orders;
  return MetricScore{std::clamp(value, 0.0, 100.0), Scale::zero_hundred, "chrf"};
}

MetricScore Metric::score(std::string src, std::string hyp, std::optional<std::string> ref) {
  const ScoreRequest req{std::move(src), std::move(hyp), std::move(ref)};
  return score_batch(std::span(&req, 1)).front();
}

std::vector<MetricScore> ChrfMetric::score_batch(std::span<const ScoreRequest> requests) {
  std::vector<MetricScore> out;
  out.reserve(requests.size());
  for (const auto& r : requests) {
    if (!r.ref) throw ValidationError("chrf needs a reference");
    out.push_back(chrf(r.hyp, *r.ref));
  }
  return out;
}

RemoteScorer::RemoteScorer(HttpEndpoint endpoint) : client_(std::move(endpoint)) {}

MetricScore RemoteScorer::score_one(const ScoreRequest& request) const {
  json payload = {{"src", request.src}, {"hyp", request.hyp}};
  if (request.ref) payload["ref"] = *request.ref;
  const auto reply = client_.post("/score", payload);
  const auto& body = reply.body;
  if (!body.is_object() || !body.contains("score") || !body["score"].is_number()) {
    throw BackendError("scorer reply has no numeric 'score'", false, std::nullopt, body.dump(),
                       reply.attempts);
  }
  const double v = body["score"].get<double>();
  if (!std::isfinite(v)) {
    throw BackendError("scorer returned a non-finite score", false, std::nullopt, body.dump(), reply.attempts);
  }
  // Model scores can stray slightly past the unit interval.
  return MetricScore{std::clamp(v, 0.0, 1.0), Scale::zero_one, "remote"};
}

std::vector<MetricScore> RemoteScorer::score_batch(std::span<const ScoreRequest> requests) {
  std::vector<std::optional<MetricScore>> slots(requests.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (auto i = next.fetch_add(1); i < requests.size(); i = next.fetch_add(1)) {
      slots[i] = score_one(requests[i]);
    }
  };
  const auto workers = std::min<std::size_t>(
      requests.size(), static_cast<std::size_t>(std::max(1, client_.endpoint().max_in_flight)));
  std::vector<std::future<void>> pending;
  for (std::size_t w = 0; w < workers; ++w) pending.push_back(std::async(std::launch::async, worker));
  std::exception_ptr failure;
  for (auto& f : pending) {
    try {
      f.get();
    } catch (...) {
      if (!failure) failure = std::current_exception();
      next.store(requests.size());
    }
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<MetricScore> out;
  out.reserve(requests.size());
  for (auto& s : slots) out.push_back(*s);
  return out;
}

bool RemoteScorer::healthy() const {
  const auto status = client_.get_status("/health");
  return status && *status == 200;
}

JudgeReport parse_judge_report(std::string_view raw, Diagnostics* diag) {
  const auto lower = lower_ascii(raw);
  double values[5] = {};
  std::size_t pos = 0;
  for (std::size_t d = 0; d < 5; ++d) {
    const auto name = lower_ascii(kJudgeDimensions[d]);
    const auto heading = lower.find(name, pos);
    if (heading == std::string::npos) {
      throw ParseError("judge report: no heading for " + std::string(kJudgeDimensions[d]));
    }
    auto at = lower.find("score:", heading + name.size());
    if (at == std::string::npos) {
      throw ParseError("judge report: no score for " + std::string(kJudgeDimensions[d]));
    }
    at += 6;
    while (at < raw.size() && (raw[at] == ' ' || raw[at] == '\t' || raw[at] == '[' || raw[at] == '*')) ++at;
    const std::string tail(raw.substr(at, 32));
    char* end = nullptr;
    const double v = std::strtod(tail.c_str(), &end);
    if (end == tail.c_str() || !std::isfinite(v)) {
      throw ParseError("judge report: unreadable score for " + std::string(kJudgeDimensions[d]));
    }
    values[d] = v;
    if (v < 0.0 || v > 100.0) {
      values[d] = std::clamp(v, 0.0, 100.0);
      warn(diag, "judge score " + tail.substr(0, static_cast<std::size_t>(end - tail.c_str())) + " for " +
                     std::string(kJudgeDimensions[d]) + " clamped to [0, 100]");
    }
    pos = at;
  }
  JudgeReport report;
  report.general_quality = values[0];
  report.cohesion = values[1];
  report.coherence = values[2];
  report.style_consistency = values[3];
  report.terminology_consistency = values[4];
  report.meta = (values[0] + values[1] + values[2] + values[3] + values[4]) / 5.0;
  return report;
}

JudgeReport judge(ChatBackend& llm, const PromptRegistry& prompts, const JudgeInput& input,
                  const SamplingParams& params, Diagnostics* diag) {
  if (input.src_doc.empty() || input.ref_doc.empty() || input.hyp_doc.empty()) {
    throw ValidationError("judge: documents must be non-empty");
  }
  const auto prompt = prompts.render(TemplateName::judge, {{"src_language", input.src_lang},
                                                           {"tgt_language", input.tgt_lang},
                                                           {"src_doc", input.src_doc},
                                                           {"ref_doc", input.ref_doc},
                                                           {"hyp_doc", input.hyp_doc}});
  const auto first = ask(llm, prompt, params);
  try {
    return parse_judge_report(first, diag);
  } catch (const ParseError& e) {
    warn(diag, std::string("judge: re-prompting after unusable report (") + e.what() + ")");
    const auto repair = prompt + "\n\nYour previous reply could not be used (" + e.what() +
                        "). Reply again and follow the required format exactly, with one "
                        "\"Score:\" line under each of the five dimensions.";
    auto report = parse_judge_report(ask(llm, repair, params.derive(1)), diag);
    report.attempts = 2;
    return report;
  }
}

JudgeReport judge_windowed(ChatBackend& llm, const PromptRegistry& prompts, std::string src_lang,
                           std::string tgt_lang, std::span<const std::string> src,
                           std::span<const std::string> ref, std::span<const std::string> hyp,
                           std::size_t window, const SamplingParams& params, Diagnostics* diag) {
  if (src.size() != ref.size() || src.size() != hyp.size()) {
    throw ValidationError("judge_windowed: source, reference and hypothesis lengths differ");
  }
  if (src.empty()) throw ValidationError("judge_windowed: empty document");
  const std::size_t step = window == 0 ? src.size() : window;
  JudgeReport sum;
  sum.attempts = 0;
  std::size_t windows = 0;
  for (std::size_t start = 0; start < src.size(); start += step) {
    const auto len = std::min(step, src.size() - start);
    const JudgeInput input{src_lang, tgt_lang, text::join(src.subspan(start, len), "\n"),
                           text::join(ref.subspan(start, len), "\n"),
                           text::join(hyp.subspan(start, len), "\n")};
    const auto r = judge(llm, prompts, input, params.derive(windows), diag);
    sum.general_quality += r.general_quality;
    sum.cohesion += r.cohesion;
    sum.coherence += r.coherence;
    sum.style_consistency += r.style_consistency;
    sum.terminology_consistency += r.terminology_consistency;
    sum.attempts += r.attempts;
    ++windows;
  }
  const auto n = static_cast<double>(windows);
  sum.general_quality /= n;
  sum.cohesion /= n;
  sum.coherence /= n;
  sum.style_consistency /= n;
  sum.terminology_consistency /= n;
  sum.meta = (sum.general_quality + sum.cohesion + sum.coherence + sum.style_consistency +
              sum.terminology_consistency) /
             5.0;
  return sum;
}

std::vector<double> cumulative_curve(std::span<const double> scores) {
  if (scores.empty()) throw ValidationError("cumulative_curve: no scores");
  std::vector<double> out;
  out.reserve(scores.size());
  double running = 0.0;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    running += scores[t];
    out.push_back(running / static_cast<double>(t + 1));
  }
  return out;
}

double mean(std::span<const double> values) {
  if (values.empty()) throw ValidationError("mean of an empty list");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

}  // namespace loong
