#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace loong {

enum class TemplateName {
  summary,
  entity_classify,
  entity_fill,
  entity_update,
  entity_extract,
  entity_describe,
  observe_act,
  translate,
  judge,
};

inline constexpr std::array<TemplateName, 9> kAllTemplates = {
    TemplateName::summary,         TemplateName::entity_classify, TemplateName::entity_fill,
    TemplateName::entity_update,   TemplateName::entity_extract,  TemplateName::entity_describe,
    TemplateName::observe_act,     TemplateName::translate,       TemplateName::judge,
};

std::string_view to_string(TemplateName name);
std::optional<TemplateName> parse_template_name(std::string_view name);

using PromptVars = std::map<std::string, std::string, std::less<>>;

struct PromptTemplate {
  TemplateName name;
  std::string body;

  /// Distinct `{identifier}` placeholders in order of first appearance.
  std::vector<std::string> placeholders() const;
};

/// Single-pass `{identifier}` substitution. Braces not enclosing an
/// identifier (JSON examples, for instance) are left untouched and
/// substituted values are never rescanned.
std::string render_template(std::string_view template_name, std::string_view body,
                            const PromptVars& vars);

class PromptRegistry {
 public:
  /// Built-in templates only.
  PromptRegistry();

  /// Built-ins overridden by `<dir>/<name>.txt` where present. Validates
  /// every template.
  static PromptRegistry with_overrides(const std::filesystem::path& dir);

  const PromptTemplate& get(TemplateName name) const;
  std::string render(TemplateName name, const PromptVars& vars) const;

  /// Renders every template with its documented variable set; throws on the
  /// first template that uses an undocumented placeholder.
  void validate() const;

  static std::span<const std::string_view> documented_vars(TemplateName name);
  static std::string_view builtin_body(TemplateName name);

 private:
  std::array<PromptTemplate, kAllTemplates.size()> templates_;
};

}  // namespace loong
