#pragma once

#include <string>
#include <vector>

#include "loong/backend.hpp"
#include "loong/corpus.hpp"
#include "loong/embedding.hpp"
#include "loong/memory.hpp"
#include "loong/prompts.hpp"

namespace loong {

/// dot(a, b) / (|a| |b|), accumulated in double. Throws on dimension
/// mismatch or a zero vector.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

/// Top-k summaries by cosine similarity to `query`, most similar first.
/// Ties go to the earlier segment.
std::vector<SummaryRecord> topk_summaries(const MemoryState& state, const EmbeddingVector& query,
                                          std::size_t k);

/// Top-k exemplars by source-sentence similarity; ties go to the earlier
/// (seg_index, sent_index).
std::vector<ExemplarRecord> topk_exemplars(const MemoryState& state, const EmbeddingVector& query,
                                           std::size_t k);

struct EntityCandidate {
  std::string src_name;
  std::string tgt_name;
  std::string description;

  bool operator==(const EntityCandidate&) const = default;
};

/// Every stored entity whose source name occurs verbatim (case-sensitive) in
/// the segment, with a description generated for this segment.
std::vector<EntityCandidate> entity_candidates(const MemoryState& state, const Segment& segment,
                                               ChatBackend& llm, const PromptRegistry& prompts,
                                               const SamplingParams& params);

struct CandidateContext {
  std::vector<SummaryRecord> essence;
  std::vector<ExemplarRecord> exemplars;
  std::vector<EntityCandidate> entities;
};

struct RetrievalSizes {
  std::size_t summaries = 4;
  std::size_t exemplars = 4;
};

/// Retrieval step for one segment: the joined segment text is embedded once
/// and used as the query for both banks.
CandidateContext retrieve(const MemoryState& state, const Segment& segment,
                          EmbeddingProvider& embedder, ChatBackend& llm,
                          const PromptRegistry& prompts, const RetrievalSizes& sizes,
                          const SamplingParams& params);

}  // namespace loong
