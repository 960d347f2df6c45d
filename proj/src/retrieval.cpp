#include "loong/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "loong/text.hpp"

namespace loong {

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw ValidationError("cosine: dimension mismatch (" + std::to_string(a.dim()) + " vs " +
                          std::to_string(b.dim()) + ")");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double x = a.values[i];
    const double y = b.values[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) throw ValidationError("cosine: zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

namespace {

/// Indices of the k best items under (similarity desc, position asc).
/// `position` maps an item to its document-order key.
template <class Items, class Embedding, class Position>
std::vector<std::size_t> rank(const Items& items, const EmbeddingVector& query, std::size_t k,
                              Embedding&& embedding, Position&& position) {
  std::vector<double> sims(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) sims[i] = cosine(embedding(items[i]), query);
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  const auto take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::size_t l, std::size_t r) {
                      if (sims[l] != sims[r]) return sims[l] > sims[r];
                      return position(items[l]) < position(items[r]);
                    });
  order.resize(take);
  return order;
}

}  // namespace

std::vector<SummaryRecord> topk_summaries(const MemoryState& state, const EmbeddingVector& query,
                                          std::size_t k) {
  const auto idx = rank(
      state.summaries, query, k, [](const SummaryRecord& s) -> const EmbeddingVector& { return s.embedding; },
      [](const SummaryRecord& s) { return s.seg_index; });
  std::vector<SummaryRecord> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(state.summaries[i]);
  return out;
}

std::vector<ExemplarRecord> topk_exemplars(const MemoryState& state, const EmbeddingVector& query,
                                           std::size_t k) {
  const auto idx = rank(
      state.exemplars, query, k,
      [](const ExemplarRecord& e) -> const EmbeddingVector& { return e.src_embedding; },
      [](const ExemplarRecord& e) { return std::pair{e.seg_index, e.sent_index}; });
  std::vector<ExemplarRecord> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(state.exemplars[i]);
  return out;
}

std::vector<EntityCandidate> entity_candidates(const MemoryState& state, const Segment& segment,
                                               ChatBackend& llm, const PromptRegistry& prompts,
                                               const SamplingParams& params) {
  const auto seg_text = segment.joined_text();
  std::vector<EntityCandidate> out;
  for (const auto& [name, record] : state.entities) {
    if (name.empty() || seg_text.find(name) == std::string::npos) continue;
    const auto prompt = prompts.render(TemplateName::entity_describe,
                                       {{"text", seg_text},
                                        {"entity", record.src_name},
                                        {"tgt_entity", record.tgt_name},
                                        {"attributes", format_attributes(record.attributes)}});
    auto description = std::string(text::trim(ask(
        llm, prompt,
        params.derive(text::mix(text::fnv1a(name), static_cast<std::uint64_t>(segment.seg_index))))));
    out.push_back(EntityCandidate{record.src_name, record.tgt_name, std::move(description)});
  }
  return out;
}

CandidateContext retrieve(const MemoryState& state, const Segment& segment,
                          EmbeddingProvider& embedder, ChatBackend& llm,
                          const PromptRegistry& prompts, const RetrievalSizes& sizes,
                          const SamplingParams& params) {
  CandidateContext ctx;
  if (!state.summaries.empty() || !state.exemplars.empty()) {
    const auto query = embedder.embed_one(segment.joined_text());
    ctx.essence = topk_summaries(state, query, sizes.summaries);
    ctx.exemplars = topk_exemplars(state, query, sizes.exemplars);
  }
  ctx.entities = entity_candidates(state, segment, llm, prompts, params);
  return ctx;
}

}  // namespace loong
