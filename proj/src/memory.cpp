#include "loong/memory.hpp"

#include <algorithm>
#include <cctype>

#include "loong/json_util.hpp"
#include "loong/text.hpp"

namespace loong {

using nlohmann::json;

namespace {

constexpr std::string_view kCharacterFields[] = {"Role", "Description", "Relationships",
                                                 "Motivation/Goals", "Development"};
constexpr std::string_view kOrganizationFields[] = {"Type", "Purpose", "Members", "Location",
                                                    "Significance"};
constexpr std::string_view kLocationFields[] = {"Type", "Description", "Inhabitants", "Events",
                                                "Symbolism"};
constexpr std::string_view kEventFields[] = {"Title",    "Description",  "Participants",
                                             "Location", "Consequences", "Timeline"};
constexpr std::string_view kObjectFields[] = {"Type", "Appearance", "Purpose", "Owner/Creator",
                                              "Significance"};
constexpr std::string_view kOtherFields[] = {"Label",       "Type",        "Description",
                                             "Significance", "Interaction", "Impact"};

constexpr EntityCategory kCategories[] = {EntityCategory::Character, EntityCategory::Organization,
                                          EntityCategory::Location,  EntityCategory::Event,
                                          EntityCategory::Object,    EntityCategory::Other};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

constexpr std::string_view kNotAvailable = "N/A";

std::string value_to_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return {};
  return v.dump();
}

}  // namespace

std::string_view to_string(EntityCategory c) {
  switch (c) {
    case EntityCategory::Character: return "Character";
    case EntityCategory::Organization: return "Organization";
    case EntityCategory::Location: return "Location";
    case EntityCategory::Event: return "Event";
    case EntityCategory::Object: return "Object";
    case EntityCategory::Other: return "Other";
  }
  return "Other";
}

std::optional<EntityCategory> parse_category(std::string_view name) {
  // Earliest category word in the text wins, so "Category: Location." and
  // "location" both parse.
  const auto hay = lower(name);
  std::optional<EntityCategory> best;
  std::size_t best_pos = std::string::npos;
  for (auto c : kCategories) {
    const auto pos = hay.find(lower(to_string(c)));
    if (pos != std::string::npos && pos < best_pos) {
      best_pos = pos;
      best = c;
    }
  }
  return best;
}

std::span<const std::string_view> attribute_fields(EntityCategory c) {
  switch (c) {
    case EntityCategory::Character: return kCharacterFields;
    case EntityCategory::Organization: return kOrganizationFields;
    case EntityCategory::Location: return kLocationFields;
    case EntityCategory::Event: return kEventFields;
    case EntityCategory::Object: return kObjectFields;
    case EntityCategory::Other: return kOtherFields;
  }
  return kOtherFields;
}

const std::string* EntityRecord::attribute(std::string_view field) const {
  for (const auto& [k, v] : attributes) {
    if (k == field) return &v;
  }
  return nullptr;
}

std::string info_items(EntityCategory c) {
  std::string out;
  for (auto f : attribute_fields(c)) {
    if (!out.empty()) out += ", ";
    out += f;
  }
  return out;
}

std::string attribute_schema(EntityCategory c) {
  std::string out = "{\n";
  for (auto f : attribute_fields(c)) {
    out += "        \"";
    out += f;
    out += "\": string  // a string\n";
  }
  out += "}";
  return out;
}

std::string format_attributes(const AttributeMap& attributes) {
  std::string out;
  for (const auto& [k, v] : attributes) {
    if (!out.empty()) out += "\n";
    out += k + ": " + v;
  }
  return out;
}

std::optional<AttributeMap> parse_attributes(std::string_view raw, EntityCategory c) {
  const auto j = extract_json(raw, [](const json& v) { return v.is_object(); });
  if (!j) return std::nullopt;
  AttributeMap out;
  for (auto field : attribute_fields(c)) {
    std::string value;
    if (auto it = j->find(std::string(field)); it != j->end()) {
      value = value_to_string(*it);
    } else {
      const auto want = lower(field);
      for (const auto& [k, v] : j->items()) {
        if (lower(k) == want) {
          value = value_to_string(v);
          break;
        }
      }
    }
    auto trimmed = std::string(text::trim(value));
    out.emplace_back(std::string(field), trimmed.empty() ? std::string(kNotAvailable) : trimmed);
  }
  return out;
}

MemoryState new_state(std::string doc_id) {
  MemoryState s;
  s.doc_id = std::move(doc_id);
  return s;
}

namespace {

struct ExtractedEntity {
  std::string src;
  std::string tgt;
};

std::optional<std::vector<ExtractedEntity>> parse_extraction(std::string_view raw) {
  const auto j = extract_json(raw, [](const json& v) { return v.is_array(); });
  if (!j) return std::nullopt;
  std::vector<ExtractedEntity> out;
  for (const auto& item : *j) {
    if (!item.is_object()) continue;
    const auto src = item.contains("src") ? value_to_string(item["src"]) : std::string{};
    const auto tgt = item.contains("tgt") ? value_to_string(item["tgt"]) : std::string{};
    out.push_back({std::string(text::trim(src)), std::string(text::trim(tgt))});
  }
  return out;
}

std::string existing_info_json(const EntityRecord& e) {
  std::string out = "{\n";
  for (std::size_t i = 0; i < e.attributes.size(); ++i) {
    const auto& [k, v] = e.attributes[i];
    out += "        " + json(k).dump() + ": " + json(v).dump();
    out += i + 1 < e.attributes.size() ? ",\n" : "\n";
  }
  out += "}";
  return out;
}

}  // namespace

MemoryState update_after_segment(MemoryState state, const Segment& segment,
                                 std::span<const std::string> target_sentences,
                                 const MemoryServices& services, Diagnostics* diag) {
  const int tau = segment.seg_index;
  if (tau != state.completed_segments() + 1) {
    throw SequencingError("memory for '" + state.doc_id + "' expects segment " +
                          std::to_string(state.completed_segments() + 1) + ", got " +
                          std::to_string(tau));
  }
  if (target_sentences.size() != segment.size()) {
    throw ValidationError("segment " + std::to_string(tau) + " has " +
                          std::to_string(segment.size()) + " source sentences but " +
                          std::to_string(target_sentences.size()) + " targets");
  }
  const auto where = "memory update for segment " + std::to_string(tau) + " of '" + state.doc_id + "'";
  const auto src_text = segment.joined_text();
  const auto tgt_text = text::join(target_sentences, " ");
  const auto doc_salt = text::fnv1a(state.doc_id);
  auto params_for = [&](std::string_view purpose, std::uint64_t extra = 0) {
    return services.params.derive(
        text::mix(text::mix(doc_salt, static_cast<std::uint64_t>(tau)), text::fnv1a(purpose) ^ extra));
  };

  try {
    // Essence
    auto summary = std::string(text::trim(
        ask(services.llm, services.prompts.render(TemplateName::summary, {{"text", src_text}}),
            params_for("summary"))));
    const bool over = text::word_count(summary) > kSummaryWordLimit;
    if (over) {
      warn(diag, where + ": summary has " + std::to_string(text::word_count(summary)) +
                     " words (limit " + std::to_string(kSummaryWordLimit) + ")");
    }

    // One embedding batch for the summary and every source sentence.
    std::vector<std::string> to_embed;
    to_embed.reserve(segment.size() + 1);
    to_embed.push_back(summary);
    for (const auto& s : segment.sentences) to_embed.push_back(s.text);
    auto vectors = services.embedder.embed(to_embed);
    if (vectors.size() != to_embed.size()) {
      throw BackendError(where + ": embedder returned the wrong number of vectors", false);
    }

    state.summaries.push_back(SummaryRecord{tau, std::move(summary), std::move(vectors[0]), over});

    // Exemplars
    for (std::size_t i = 0; i < segment.size(); ++i) {
      state.exemplars.push_back(ExemplarRecord{segment.sentences[i].text, target_sentences[i],
                                               std::move(vectors[i + 1]), tau,
                                               segment.sentences[i].index});
    }

    // Entities
    const auto extraction_raw = ask(
        services.llm,
        services.prompts.render(TemplateName::entity_extract, {{"src_lang", services.src_lang},
                                                               {"tgt_lang", services.tgt_lang},
                                                               {"source", src_text},
                                                               {"target", tgt_text}}),
        params_for("entity_extract"));
    const auto extracted = parse_extraction(extraction_raw);
    if (!extracted) {
      warn(diag, where + ": entity extraction output is not a JSON array; no entities recorded");
      return state;
    }

    std::vector<std::string> seen;
    for (const auto& ent : *extracted) {
      if (ent.src.empty() || ent.tgt.empty()) {
        warn(diag, where + ": skipped entity with empty source or target name");
        continue;
      }
      if (std::find(seen.begin(), seen.end(), ent.src) != seen.end()) continue;
      seen.push_back(ent.src);
      if (src_text.find(ent.src) == std::string::npos) {
        warn(diag, where + ": skipped entity '" + ent.src + "' not found in the segment");
        continue;
      }
      const auto salt = text::fnv1a(ent.src);

      if (auto it = state.entities.find(ent.src); it != state.entities.end()) {
        auto& record = it->second;
        const auto raw = ask(services.llm,
                             services.prompts.render(
                                 TemplateName::entity_update,
                                 {{"info_items", info_items(record.category)},
                                  {"text", src_text},
                                  {"entity", ent.src},
                                  {"exist_info", existing_info_json(record)},
                                  {"schema", attribute_schema(record.category)}}),
                             params_for("entity_update", salt));
        auto attrs = parse_attributes(raw, record.category);
        if (!attrs) {
          warn(diag, where + ": could not parse updated attributes for '" + ent.src + "'; kept previous");
          continue;
        }
        record.attributes = std::move(*attrs);
        record.last_seen_seg = tau;
        continue;
      }

      const auto class_raw = ask(
          services.llm,
          services.prompts.render(TemplateName::entity_classify,
                                  {{"text", src_text}, {"entity", ent.src}}),
          params_for("entity_classify", salt));
      auto category = parse_category(class_raw);
      if (!category) {
        warn(diag, where + ": unrecognized category for '" + ent.src + "', using Other");
        category = EntityCategory::Other;
      }
      const auto fill_raw = ask(services.llm,
                                services.prompts.render(TemplateName::entity_fill,
                                                        {{"info_items", info_items(*category)},
                                                         {"text", src_text},
                                                         {"entity", ent.src},
                                                         {"schema", attribute_schema(*category)}}),
                                params_for("entity_fill", salt));
      auto attrs = parse_attributes(fill_raw, *category);
      if (!attrs) {
        warn(diag, where + ": could not parse attributes for '" + ent.src + "'; entity skipped");
        continue;
      }
      state.entities.emplace(ent.src,
                             EntityRecord{ent.src, ent.tgt, *category, std::move(*attrs), tau});
    }
  } catch (const BackendError& e) {
    throw e.with_context(where);
  }
  return state;
}

// ---------------------------------------------------------------------------

std::string snapshot(const MemoryState& state) {
  json summaries = json::array();
  for (const auto& s : state.summaries) {
    summaries.push_back({{"seg_index", s.seg_index},
                         {"text", s.text},
                         {"over_length", s.over_length},
                         {"embedding", s.embedding.values}});
  }
  json exemplars = json::array();
  for (const auto& e : state.exemplars) {
    exemplars.push_back({{"seg_index", e.seg_index},
                         {"sent_index", e.sent_index},
                         {"src_text", e.src_text},
                         {"tgt_text", e.tgt_text},
                         {"src_embedding", e.src_embedding.values}});
  }
  json entities = json::array();
  for (const auto& [key, e] : state.entities) {
    json attrs = json::object();
    for (const auto& [k, v] : e.attributes) attrs[k] = v;
    entities.push_back({{"src_name", e.src_name},
                        {"tgt_name", e.tgt_name},
                        {"category", std::string(to_string(e.category))},
                        {"attributes", std::move(attrs)},
                        {"last_seen_seg", e.last_seen_seg}});
  }
  json root = {{"version", kSnapshotVersion},
               {"doc_id", state.doc_id},
               {"summaries", std::move(summaries)},
               {"exemplars", std::move(exemplars)},
               {"entities", std::move(entities)}};
  return root.dump();
}

namespace {

EmbeddingVector read_vector(const json& j) {
  EmbeddingVector v;
  v.values.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw RestoreError("embedding entries must be numbers");
    v.values.push_back(x.get<float>());
  }
  return v;
}

}  // namespace

MemoryState restore(std::string_view bytes) {
  const auto root = json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (root.is_discarded() || !root.is_object()) throw RestoreError("snapshot is not valid JSON");
  try {
    const int version = root.at("version").get<int>();
    if (version != kSnapshotVersion) {
      throw RestoreError("snapshot version " + std::to_string(version) + " is not supported (expected " +
                         std::to_string(kSnapshotVersion) + ")");
    }
    MemoryState state = new_state(root.at("doc_id").get<std::string>());
    for (const auto& s : root.at("summaries")) {
      state.summaries.push_back(SummaryRecord{s.at("seg_index").get<int>(),
                                              s.at("text").get<std::string>(),
                                              read_vector(s.at("embedding")),
                                              s.value("over_length", false)});
    }
    for (const auto& e : root.at("exemplars")) {
      state.exemplars.push_back(ExemplarRecord{
          e.at("src_text").get<std::string>(), e.at("tgt_text").get<std::string>(),
          read_vector(e.at("src_embedding")), e.at("seg_index").get<int>(),
          e.at("sent_index").get<int>()});
    }
    for (const auto& e : root.at("entities")) {
      EntityRecord rec;
      rec.src_name = e.at("src_name").get<std::string>();
      rec.tgt_name = e.at("tgt_name").get<std::string>();
      const auto cat_name = e.at("category").get<std::string>();
      const auto cat = parse_category(cat_name);
      if (!cat || to_string(*cat) != cat_name) throw RestoreError("unknown entity category '" + cat_name + "'");
      rec.category = *cat;
      const auto& attrs = e.at("attributes");
      const auto fields = attribute_fields(rec.category);
      if (!attrs.is_object() || attrs.size() != fields.size()) {
        throw RestoreError("entity '" + rec.src_name + "' attributes do not match its category");
      }
      for (auto f : fields) {
        rec.attributes.emplace_back(std::string(f), attrs.at(std::string(f)).get<std::string>());
      }
      rec.last_seen_seg = e.at("last_seen_seg").get<int>();
      auto key = rec.src_name;
      if (!state.entities.emplace(std::move(key), std::move(rec)).second) {
        throw RestoreError("duplicate entity in snapshot");
      }
    }
    return state;
  } catch (const json::exception& e) {
    throw RestoreError(std::string("corrupt snapshot: ") + e.what());
  }
}

}  // namespace loong
