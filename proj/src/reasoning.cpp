#include "loong/reasoning.hpp"

#include <algorithm>

#include "loong/json_util.hpp"
#include "loong/text.hpp"

namespace loong {

using nlohmann::json;

std::string_view to_string(ContextKind kind) {
  switch (kind) {
    case ContextKind::essence: return "essence";
    case ContextKind::exemplar: return "exemplar";
    case ContextKind::entity: return "entity";
  }
  return "unknown";
}

namespace {

std::string_view step_name(ContextKind kind) {
  switch (kind) {
    case ContextKind::essence: return "summary";
    case ContextKind::exemplar: return "sentence pair";
    case ContextKind::entity: return "entity record";
  }
  return "";
}

std::string numbered(const std::vector<std::string>& items) {
  if (items.empty()) return "(none)";
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += "\n";
    out += "[" + std::to_string(i + 1) + "] " + items[i];
  }
  return out;
}

std::string one_based(const std::vector<std::size_t>& selected) {
  std::string out = "[";
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (i > 0) out += ", ";
    out += std::to_string(selected[i] + 1);
  }
  return out + "]";
}

bool has_selected_list(const json& j) {
  return j.is_object() && j.contains("selected") && j["selected"].is_array();
}

}  // namespace

Observation observe(std::vector<HistoryEntry> history, std::vector<std::string> candidates,
                    std::string segment_text) {
  const int step = static_cast<int>(history.size()) + 1;
  if (step > kSelectionSteps) {
    throw StepOverflowError("observe: step " + std::to_string(step) + " exceeds " +
                            std::to_string(kSelectionSteps));
  }
  Observation obs;
  obs.step = step;
  obs.kind = static_cast<ContextKind>(step);
  obs.history = std::move(history);
  obs.candidates = std::move(candidates);
  obs.segment_text = std::move(segment_text);
  return obs;
}

std::string render_observation(const Observation& obs, const PromptRegistry& prompts) {
  std::string history;
  for (std::size_t i = 0; i < obs.history.size(); ++i) {
    const auto& h = obs.history[i];
    if (i > 0) history += "\n\n";
    history += "Step " + std::to_string(i + 1) + " (" + std::string(step_name(h.kind)) + " candidates):\n";
    history += numbered(h.candidates) + "\n";
    history += "Analysis: " + (h.action.reasoning.empty() ? std::string("(none)") : h.action.reasoning) + "\n";
    history += "Selected: " + one_based(h.action.selected);
  }
  if (history.empty()) history = "(none)";
  return prompts.render(TemplateName::observe_act,
                        {{"step", std::to_string(obs.step)},
                         {"step_name", std::string(step_name(obs.kind))},
                         {"segment", obs.segment_text},
                         {"history", history},
                         {"candidates", numbered(obs.candidates)}});
}

Action parse_action(std::string_view raw, std::size_t n_candidates, Diagnostics* diag) {
  std::optional<json> parsed;
  std::size_t prefix_end = 0;
  const auto blocks = text::fenced_blocks(raw);
  for (auto it = blocks.rbegin(); it != blocks.rend() && !parsed; ++it) {
    auto j = parse_lenient(text::trim(*it));
    if (j && has_selected_list(*j)) {
      parsed = std::move(j);
      const auto body_offset = static_cast<std::size_t>(it->data() - raw.data());
      const auto fence = raw.rfind("```", body_offset);
      prefix_end = fence == std::string_view::npos ? body_offset : fence;
    }
  }
  if (!parsed) {
    parsed = extract_json(raw, has_selected_list);
    if (parsed) prefix_end = raw.find('{');
  }
  if (!parsed) {
    throw ActionParseError("no JSON object with a 'selected' list in model output", std::string(raw));
  }

  Action action;
  action.raw = std::string(raw);
  if (parsed->contains("analysis") && (*parsed)["analysis"].is_string()) {
    action.reasoning = std::string(text::trim((*parsed)["analysis"].get<std::string>()));
  } else {
    action.reasoning = std::string(text::trim(raw.substr(0, std::min(prefix_end, raw.size()))));
  }
  for (const auto& v : (*parsed)["selected"]) {
    long long idx = 0;
    if (v.is_number_integer()) {
      idx = v.get<long long>();
    } else if (v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<long long>(v.get<double>()))) {
      idx = static_cast<long long>(v.get<double>());
    } else if (v.is_string() && !v.get<std::string>().empty() &&
               std::all_of(v.get<std::string>().begin(), v.get<std::string>().end(),
                           [](char c) { return c >= '0' && c <= '9'; })) {
      idx = std::stoll(v.get<std::string>());
    } else {
      throw ActionParseError("selection entry " + v.dump() + " is not an integer", std::string(raw));
    }
    if (idx < 1 || idx > static_cast<long long>(n_candidates)) {
      throw ActionParseError("selection index " + std::to_string(idx) + " is outside 1.." +
                                 std::to_string(n_candidates),
                             std::string(raw));
    }
    const auto zero = static_cast<std::size_t>(idx - 1);
    if (std::find(action.selected.begin(), action.selected.end(), zero) != action.selected.end()) {
      warn(diag, "duplicate selection index " + std::to_string(idx) + " dropped");
      continue;
    }
    action.selected.push_back(zero);
  }
  std::sort(action.selected.begin(), action.selected.end());
  return action;
}

std::string format_action(const Action& action) {
  json sel = json::array();
  for (auto i : action.selected) sel.push_back(i + 1);
  json obj = {{"analysis", action.reasoning}, {"selected", std::move(sel)}};
  return "```json\n" + obj.dump() + "\n```";
}

Action act(ChatBackend& llm, const Observation& obs, const PromptRegistry& prompts,
           const SamplingParams& params, int repairs, Diagnostics* diag) {
  const auto prompt = render_observation(obs, prompts);
  auto raw = ask(llm, prompt, params);
  for (int attempt = 1;; ++attempt) {
    try {
      auto action = parse_action(raw, obs.candidates.size(), diag);
      action.attempts = attempt;
      return action;
    } catch (const ActionParseError& e) {
      if (attempt > repairs) throw;
      warn(diag, "step " + std::to_string(obs.step) + ": re-prompting after unusable reply (" + e.what() + ")");
      auto repair = prompt;
      repair += "\n\nYour previous reply could not be used: ";
      repair += e.what();
      repair += ".\n<Previous reply>\n" + raw +
                "\n\nReply again. Only use candidate numbers from 1 to " +
                std::to_string(obs.candidates.size()) +
                " and end with the JSON code snippet in the required format.";
      raw = ask(llm, repair, params.derive(static_cast<std::uint64_t>(attempt)));
    }
  }
}

std::vector<std::string> candidate_items(const CandidateContext& ctx, ContextKind kind) {
  std::vector<std::string> out;
  switch (kind) {
    case ContextKind::essence:
      for (const auto& s : ctx.essence) out.push_back(s.text);
      break;
    case ContextKind::exemplar:
      for (const auto& e : ctx.exemplars) out.push_back("Source: " + e.src_text + " | Translation: " + e.tgt_text);
      break;
    case ContextKind::entity:
      for (const auto& e : ctx.entities) out.push_back(e.src_name + " (" + e.tgt_name + "): " + e.description);
      break;
  }
  return out;
}

SelectionResult run_selection(ChatBackend& llm, const Segment& segment,
                              const CandidateContext& context, const PromptRegistry& prompts,
                              const SamplingParams& params, Diagnostics* diag) {
  SelectionResult result;
  const auto seg_text = segment.joined_text();
  for (int k = 1; k <= kSelectionSteps; ++k) {
    const auto kind = static_cast<ContextKind>(k);
    auto items = candidate_items(context, kind);
    const auto obs = observe(result.history, items, seg_text);
    StepTrace trace;
    trace.step = k;
    trace.kind = kind;
    trace.prompt = render_observation(obs, prompts);
    Action action;
    if (!items.empty()) {
      action = act(llm, obs, prompts, params.derive(static_cast<std::uint64_t>(k)), 1, diag);
    }
    trace.raw = action.raw;
    trace.selected = action.selected;
    trace.llm_calls = action.attempts;
    result.selections[static_cast<std::size_t>(k - 1)] = action.selected;
    result.history.push_back(HistoryEntry{kind, std::move(items), std::move(action)});
    result.trace.push_back(std::move(trace));
  }
  return result;
}

json trace_row(std::string_view doc_id, int seg_index, const StepTrace& step) {
  return json{{"doc_id", doc_id},
              {"seg_index", seg_index},
              {"step", step.step},
              {"kind", std::string(to_string(step.kind))},
              {"prompt", step.prompt},
              {"raw", step.raw},
              {"selected", step.selected},
              {"llm_calls", step.llm_calls}};
}

}  // namespace loong
