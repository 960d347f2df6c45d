#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "loong/backend.hpp"
#include "loong/errors.hpp"
#include "loong/http.hpp"
#include "loong/prompts.hpp"

namespace loong {

enum class Scale { zero_one, zero_hundred };

struct MetricScore {
  double value = 0.0;  // within the declared scale
  Scale scale = Scale::zero_hundred;
  std::string metric_name;

  /// Value mapped onto [0, 1].
  double unit() const noexcept { return scale == Scale::zero_hundred ? value / 100.0 : value; }
  bool operator==(const MetricScore&) const = default;
};

inline constexpr int kChrfOrder = 6;
inline constexpr double kChrfBeta = 2.0;

/// Character n-gram F-score (n = 1..6, beta = 2) on whitespace-free text,
/// averaged over orders. An order present in either side but without
/// matches scores 0; an order absent from both sides is left out.
MetricScore chrf(std::string_view hyp, std::string_view ref);

struct ScoreRequest {
  std::string src;
  std::string hyp;
  std::optional<std::string> ref;
};

/// Sentence-level quality metric. Implementations are stateless and safe
/// to call concurrently.
class Metric {
 public:
  virtual ~Metric() = default;
  virtual std::string name() const = 0;
  virtual Scale scale() const = 0;
  virtual bool needs_reference() const = 0;
  /// One score per request, in request order.
  virtual std::vector<MetricScore> score_batch(std::span<const ScoreRequest> requests) = 0;

  MetricScore score(std::string src, std::string hyp, std::optional<std::string> ref = std::nullopt);
};

class ChrfMetric final : public Metric {
 public:
  std::string name() const override { return "chrf"; }
  Scale scale() const override { return Scale::zero_hundred; }
  bool needs_reference() const override { return true; }
  std::vector<MetricScore> score_batch(std::span<const ScoreRequest> requests) override;
};

/// Client for the scorer sidecar: POST /score {src, hyp, ref?} -> {score}.
/// Batches are sent as concurrent single requests, capped by the endpoint's
/// max_in_flight; results keep request order.
class RemoteScorer final : public Metric {
 public:
  explicit RemoteScorer(HttpEndpoint endpoint);
  std::string name() const override { return "remote"; }
  Scale scale() const override { return Scale::zero_one; }
  bool needs_reference() const override { return false; }
  std::vector<MetricScore> score_batch(std::span<const ScoreRequest> requests) override;

  /// GET /health answered with 200.
  bool healthy() const;

 private:
  MetricScore score_one(const ScoreRequest& request) const;
  JsonHttpClient client_;
};

struct JudgeReport {
  double general_quality = 0.0;
  double cohesion = 0.0;
  double coherence = 0.0;
  double style_consistency = 0.0;
  double terminology_consistency = 0.0;
  double meta = 0.0;  // mean of the five dimensions
  int attempts = 1;

  bool operator==(const JudgeReport&) const = default;
};

inline constexpr std::string_view kJudgeDimensions[] = {
    "General Quality", "Cohesion", "Coherence", "Style Consistency", "Terminology Consistency"};

/// Reads the five "Score:" values, each after its dimension heading and in
/// heading order. Values outside [0, 100] are clamped with a warning.
/// Throws ParseError naming the first dimension that has no score.
JudgeReport parse_judge_report(std::string_view raw, Diagnostics* diag = nullptr);

struct JudgeInput {
  std::string src_lang;
  std::string tgt_lang;
  std::string src_doc;
  std::string ref_doc;
  std::string hyp_doc;
};

/// Renders the judge prompt and parses the report, with one repair
/// re-prompt when the first reply cannot be parsed.
JudgeReport judge(ChatBackend& llm, const PromptRegistry& prompts, const JudgeInput& input,
                  const SamplingParams& params, Diagnostics* diag = nullptr);

/// Judges consecutive windows of `window` sentences and averages the
/// dimension scores; attempts are summed. window = 0 judges the whole
/// document at once.
JudgeReport judge_windowed(ChatBackend& llm, const PromptRegistry& prompts, std::string src_lang,
                           std::string tgt_lang, std::span<const std::string> src,
                           std::span<const std::string> ref, std::span<const std::string> hyp,
                           std::size_t window, const SamplingParams& params,
                           Diagnostics* diag = nullptr);

/// out[t] = mean(scores[0..t]).
std::vector<double> cumulative_curve(std::span<const double> scores);

double mean(std::span<const double> values);

}  // namespace loong
