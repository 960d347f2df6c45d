#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "loong/backend.hpp"
#include "loong/corpus.hpp"
#include "loong/embedding.hpp"
#include "loong/errors.hpp"
#include "loong/prompts.hpp"

namespace loong {

enum class EntityCategory { Character, Organization, Location, Event, Object, Other };

std::string_view to_string(EntityCategory c);
std::optional<EntityCategory> parse_category(std::string_view name);

/// Attribute field names of a category, in schema order.
std::span<const std::string_view> attribute_fields(EntityCategory c);

/// Field name -> value, kept in the category's schema order.
using AttributeMap = std::vector<std::pair<std::string, std::string>>;

struct SummaryRecord {
  int seg_index = 0;
  std::string text;
  EmbeddingVector embedding;
  bool over_length = false;  // summary exceeded the 50-word instruction

  bool operator==(const SummaryRecord&) const = default;
};

struct ExemplarRecord {
  std::string src_text;
  std::string tgt_text;
  EmbeddingVector src_embedding;
  int seg_index = 0;
  int sent_index = 0;

  bool operator==(const ExemplarRecord&) const = default;
};

struct EntityRecord {
  std::string src_name;
  std::string tgt_name;
  EntityCategory category = EntityCategory::Other;
  AttributeMap attributes;
  int last_seen_seg = 0;

  const std::string* attribute(std::string_view field) const;
  bool operator==(const EntityRecord&) const = default;
};

struct MemoryState {
  std::string doc_id;
  std::vector<SummaryRecord> summaries;
  std::vector<ExemplarRecord> exemplars;
  std::map<std::string, EntityRecord> entities;  // keyed by exact source name

  int completed_segments() const noexcept { return static_cast<int>(summaries.size()); }
  bool operator==(const MemoryState&) const = default;
};

MemoryState new_state(std::string doc_id);

struct MemoryServices {
  ChatBackend& llm;
  EmbeddingProvider& embedder;
  const PromptRegistry& prompts;
  SamplingParams params;
  std::string src_lang;
  std::string tgt_lang;
};

/// Folds a finished segment into the store: one summary, one exemplar per
/// sentence pair, and entity extraction/classification/attribute upkeep.
/// Segments must arrive in order. Entity output that cannot be parsed is
/// skipped with a warning.
MemoryState update_after_segment(MemoryState state, const Segment& segment,
                                 std::span<const std::string> target_sentences,
                                 const MemoryServices& services, Diagnostics* diag = nullptr);

/// Versioned JSON snapshot; embeddings round-trip bit-exactly.
std::string snapshot(const MemoryState& state);
MemoryState restore(std::string_view bytes);

inline constexpr int kSnapshotVersion = 1;
inline constexpr std::size_t kSummaryWordLimit = 50;

// Helpers shared with the prompt-building code.

/// "Role, Description, ..." for the {info_items} placeholder.
std::string info_items(EntityCategory c);
/// JSON schema block shown to the model for a category.
std::string attribute_schema(EntityCategory c);
/// Compact "Field: value" lines.
std::string format_attributes(const AttributeMap& attributes);

/// Parses the model's attribute JSON and projects it onto the category's
/// schema: unknown keys are dropped, absent or empty fields become "N/A".
std::optional<AttributeMap> parse_attributes(std::string_view raw, EntityCategory c);

}  // namespace loong
