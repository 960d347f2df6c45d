#include "loong/prompts.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "loong/errors.hpp"

namespace loong {

namespace {

constexpr std::string_view kSummary =
    R"(Please provide a summary of the given paragraph, preserving key information as much as possible. Note that the length of the summary should not exceed 50 words.

<Paragraph>
{text})";

constexpr std::string_view kEntityClassify =
    R"(Given a text passage and a specified entity, classify the entity into one of these categories: Character, Organization, Location, Event, Object, or Other. Only output the category name.

<Text passage>
{text}

<Entity>
{entity})";

constexpr std::string_view kEntityFill =
    R"(Given a text passage and a specified entity, summarize the relevant information about the entity including the following items:
{info_items}

<Text passage>
{text}

<Entity>
{entity}

The output should be a Markdown code snippet formatted in the following schema, including the leading and trailing "```json" and "```", and without any comments:

```json
{schema}
```
If an entry has no corresponding content, just fill in "N/A".)";

constexpr std::string_view kEntityUpdate =
    R"(Given a text passage and a specified entity, update the existing information about this entity including the following items:
{info_items}

<Text passage>
{text}

<Entity>
{entity}

<Existing Information>
{exist_info}

```json
{schema}
```
If an entry has no corresponding content, just fill in "N/A".)";

constexpr std::string_view kEntityExtract =
    R"(Given a source text in {src_lang} and its translation in {tgt_lang}, list the named entities (characters, organizations, locations, events, objects and other proper names) mentioned in the source text, together with how each one is rendered in the translation. Only include entities that occur in this source text, and copy each source name exactly as it is written there.

<Source text>
{source}

<Translation>
{target}

The output should be a Markdown code snippet containing a JSON array, including the leading and trailing "```json" and "```":

```json
[{"src": "name in the source text", "tgt": "name in the translation"}]
```
If there are no entities, output an empty array.)";

constexpr std::string_view kEntityDescribe =
    R"(Given a text passage and the stored record of an entity, write a brief description of the entity (no more than 40 words) focusing on what matters for translating this passage. Only output the description.

<Text passage>
{text}

<Entity>
{entity} ({tgt_entity})

<Entity record>
{attributes})";

constexpr std::string_view kObserveAct =
    R"(You are translating a long document segment by segment. Before translating the current segment, decide which of the retrieved {step_name} candidates will help to translate it. This is step {step} of 3 (1: summaries of previous segments, 2: previously translated sentence pairs, 3: entity records).

<Current segment>
{segment}

<Previous steps>
{history}

<Candidates>
{candidates}
</Candidates>

Analyze the relevance of each candidate to the current segment, then select only the candidates that are useful for translating it. Selecting none of them is allowed.
End your reply with a Markdown code snippet in the following format, using the candidate numbers shown above:

```json
{"analysis": "your reasoning", "selected": [1, 3]}
```)";

constexpr std::string_view kTranslate =
    R"(Given some auxiliary information, translate the current page of source text from {src_lang} to {tgt_lang}.

<Summaries of previous pages>
{summaries}

<Original texts of previous pages>
{exemplars}

<Entity Records>
{entities}

Now please translate the given {src_lang} text into {tgt_lang}. Make sure to obey the TRANSLATION TASK RULES.

<TRANSLATION TASK RULES>
1. Each sentence in the text is marked with "#i" to indicate its order.
2. The beginning and end of an independent sentences are marked by "<s>" and "</s>", respectively.
3. Output MUST:
- Preserve ALL sequence, beginning and end marks ("#i", "<s>" and "</s>")
- Maintain EXACT 1:1 sentence correspondence
- NEVER merge/split/reorder/omit sentences

<{src_lang} source text>
{src_content})";

constexpr std::string_view kJudge =
    R"(You are an expert linguist and translation quality evaluator. Your task is to evaluate the quality of a document-level translation from {src_language} to {tgt_language} based solely on the Source Document, the Reference Document (Gold Standard), and the Hypothesis Document (Model Output).

Please assess the [Hypothesis] text as a whole against the [Source] and [Reference]. Provide a holistic score from 0 to 100 for the following five specific dimensions, where 0 represents a complete failure and 100 represents a perfect, native-level professional translation.

[Source]:
{src_doc}

[Reference]:
{ref_doc}

[Hypothesis]:
{hyp_doc}

[Evaluation Dimensions]:

1. **General Quality**:
   - Focuses on accuracy (faithfulness to the source meaning) and fluency (grammatical correctness and natural flow).
   - A high score means the translation is precise, preserves the original meaning without omission or hallucination, and reads naturally in the target language.
2. **Cohesion**:
   - Focuses on the explicit linking words and grammatical connections between sentences and clauses (e.g., correct use of pronouns, conjunctions, substitution, and ellipsis).
   - A high score means the text is syntactically well-connected, and references (anaphora/cataphora) are clear and unambiguous throughout the document.
3. **Coherence**:
   - Focuses on the logical arrangement and semantic relationships of ideas. It assesses whether the text "makes sense" as a whole narrative or argument.
   - A high score means the discourse flows logically, follows the thought patterns/conventions of the target culture, and is easy for a reader to understand without referring to the source.
4. **Style Consistency**:
   - Focuses on the maintenance of tone, register (formal/informal), and voice throughout the document.
   - A high score means the translation maintains a unified style that matches the source text's intent (e.g., not switching between academic and slang phrasing).
5. **Terminology Consistency**:
   - Focuses on the consistent translation of specific terms, entities, and keywords across the entire document.
   - A high score means the same concept is translated using the same term throughout, avoiding confusion caused by using multiple synonyms for the same specific entity.

[Output Requirement]:
For each dimension, provide a score (0-100) and a brief justification based on the whole document.
Your response must strictly follow this format:
### Evaluation Report
**1. General Quality**
Score: [0-100]
Rationale: ...
**2. Cohesion**
Score: [0-100]
Rationale: ...
**3. Coherence**
Score: [0-100]
Rationale: ...
**4. Style Consistency**
Score: [0-100]
Rationale: ...
**5. Terminology Consistency**
Score: [0-100]
Rationale: ...)";

constexpr std::string_view kSummaryVars[] = {"text"};
constexpr std::string_view kClassifyVars[] = {"text", "entity"};
constexpr std::string_view kFillVars[] = {"info_items", "text", "entity", "schema"};
constexpr std::string_view kUpdateVars[] = {"info_items", "text", "entity", "exist_info", "schema"};
constexpr std::string_view kExtractVars[] = {"src_lang", "tgt_lang", "source", "target"};
constexpr std::string_view kDescribeVars[] = {"text", "entity", "tgt_entity", "attributes"};
constexpr std::string_view kObserveVars[] = {"step", "step_name", "segment", "history", "candidates"};
constexpr std::string_view kTranslateVars[] = {"src_lang",  "tgt_lang", "summaries",
                                               "exemplars", "entities", "src_content"};
constexpr std::string_view kJudgeVars[] = {"src_language", "tgt_language", "src_doc", "ref_doc",
                                           "hyp_doc"};

bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }

/// Calls `on_text(sv)` for literal runs and `on_var(name)` for placeholders.
template <class OnText, class OnVar>
void scan(std::string_view body, OnText&& on_text, OnVar&& on_var) {
  std::size_t i = 0;
  std::size_t lit = 0;
  while (i < body.size()) {
    if (body[i] == '{' && i + 1 < body.size() && is_ident_start(body[i + 1])) {
      std::size_t j = i + 1;
      while (j < body.size() && is_ident_char(body[j])) ++j;
      if (j < body.size() && body[j] == '}') {
        on_text(body.substr(lit, i - lit));
        on_var(body.substr(i + 1, j - i - 1));
        i = j + 1;
        lit = i;
        continue;
      }
    }
    ++i;
  }
  on_text(body.substr(lit));
}

}  // namespace

std::string_view to_string(TemplateName name) {
  switch (name) {
    case TemplateName::summary: return "summary";
    case TemplateName::entity_classify: return "entity_classify";
    case TemplateName::entity_fill: return "entity_fill";
    case TemplateName::entity_update: return "entity_update";
    case TemplateName::entity_extract: return "entity_extract";
    case TemplateName::entity_describe: return "entity_describe";
    case TemplateName::observe_act: return "observe_act";
    case TemplateName::translate: return "translate";
    case TemplateName::judge: return "judge";
  }
  return "unknown";
}

std::optional<TemplateName> parse_template_name(std::string_view name) {
  for (auto t : kAllTemplates) {
    if (to_string(t) == name) return t;
  }
  return std::nullopt;
}

std::vector<std::string> PromptTemplate::placeholders() const {
  std::vector<std::string> out;
  scan(
      body, [](std::string_view) {},
      [&](std::string_view var) {
        if (std::find(out.begin(), out.end(), var) == out.end()) out.emplace_back(var);
      });
  return out;
}

std::string render_template(std::string_view template_name, std::string_view body,
                            const PromptVars& vars) {
  std::vector<std::string> missing;
  std::string out;
  out.reserve(body.size() * 2);
  scan(
      body, [&](std::string_view t) { out += t; },
      [&](std::string_view var) {
        auto it = vars.find(var);
        if (it == vars.end()) {
          if (std::find(missing.begin(), missing.end(), var) == missing.end()) {
            missing.emplace_back(var);
          }
        } else {
          out += it->second;
        }
      });
  if (!missing.empty()) throw RenderError(std::string(template_name), std::move(missing));
  return out;
}

RenderError::RenderError(const std::string& template_name, std::vector<std::string> missing)
    : Error([&] {
        std::string msg = "template '" + template_name + "' is missing variables:";
        for (const auto& m : missing) msg += " " + m;
        return msg;
      }()),
      missing_(std::move(missing)) {}

std::span<const std::string_view> PromptRegistry::documented_vars(TemplateName name) {
  switch (name) {
    case TemplateName::summary: return kSummaryVars;
    case TemplateName::entity_classify: return kClassifyVars;
    case TemplateName::entity_fill: return kFillVars;
    case TemplateName::entity_update: return kUpdateVars;
    case TemplateName::entity_extract: return kExtractVars;
    case TemplateName::entity_describe: return kDescribeVars;
    case TemplateName::observe_act: return kObserveVars;
    case TemplateName::translate: return kTranslateVars;
    case TemplateName::judge: return kJudgeVars;
  }
  return {};
}

std::string_view PromptRegistry::builtin_body(TemplateName name) {
  switch (name) {
    case TemplateName::summary: return kSummary;
    case TemplateName::entity_classify: return kEntityClassify;
    case TemplateName::entity_fill: return kEntityFill;
    case TemplateName::entity_update: return kEntityUpdate;
    case TemplateName::entity_extract: return kEntityExtract;
    case TemplateName::entity_describe: return kEntityDescribe;
    case TemplateName::observe_act: return kObserveAct;
    case TemplateName::translate: return kTranslate;
    case TemplateName::judge: return kJudge;
  }
  return {};
}

PromptRegistry::PromptRegistry() {
  for (std::size_t i = 0; i < kAllTemplates.size(); ++i) {
    templates_[i] = PromptTemplate{kAllTemplates[i], std::string(builtin_body(kAllTemplates[i]))};
  }
}

PromptRegistry PromptRegistry::with_overrides(const std::filesystem::path& dir) {
  PromptRegistry reg;
  if (!std::filesystem::is_directory(dir)) {
    throw ValidationError("prompt override directory does not exist: " + dir.string());
  }
  for (auto& t : reg.templates_) {
    const auto file = dir / (std::string(to_string(t.name)) + ".txt");
    if (!std::filesystem::exists(file)) continue;
    std::ifstream in(file, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    t.body = ss.str();
    while (!t.body.empty() && (t.body.back() == '\n' || t.body.back() == '\r')) t.body.pop_back();
  }
  reg.validate();
  return reg;
}

const PromptTemplate& PromptRegistry::get(TemplateName name) const {
  return templates_[static_cast<std::size_t>(name)];
}

std::string PromptRegistry::render(TemplateName name, const PromptVars& vars) const {
  return render_template(to_string(name), get(name).body, vars);
}

void PromptRegistry::validate() const {
  for (const auto& t : templates_) {
    const auto documented = documented_vars(t.name);
    PromptVars vars;
    for (auto v : documented) vars.emplace(std::string(v), "<" + std::string(v) + ">");
    std::vector<std::string> unknown;
    for (const auto& p : t.placeholders()) {
      if (std::find(documented.begin(), documented.end(), p) == documented.end()) {
        unknown.push_back(p);
      }
    }
    if (!unknown.empty()) {
      std::string msg = "template '" + std::string(to_string(t.name)) + "' uses undocumented placeholders:";
      for (const auto& u : unknown) msg += " " + u;
      throw ValidationError(msg);
    }
    (void)render(t.name, vars);
  }
}

}  // namespace loong
