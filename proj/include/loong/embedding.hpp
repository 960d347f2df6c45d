#pragma once

#include <atomic>
#include <span>
#include <string>
#include <vector>

#include "loong/http.hpp"

namespace loong {

struct EmbeddingVector {
  std::vector<float> values;

  std::size_t dim() const noexcept { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

/// Contract: one vector per input text, constant dimension, finite entries.
/// Implementations must tolerate concurrent calls.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) = 0;
  virtual std::size_t dim() const = 0;

  EmbeddingVector embed_one(const std::string& text);
};

/// Offline embedder: character 2..4-grams of the boundary-padded text are
/// feature-hashed into `dim` buckets, then L2-normalized. Deterministic
/// across runs and platforms.
class HashingEmbedder final : public EmbeddingProvider {
 public:
  explicit HashingEmbedder(std::size_t dim = 256);
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;
  std::size_t dim() const override { return dim_; }

  EmbeddingVector embed_text(std::string_view text) const;

 private:
  std::size_t dim_;
};

/// Client for the scorer sidecar: POST /embed {texts} -> {vectors}.
class RemoteEmbedder final : public EmbeddingProvider {
 public:
  explicit RemoteEmbedder(HttpEndpoint endpoint);
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;
  /// Zero until the first successful call.
  std::size_t dim() const override { return dim_.load(); }

 private:
  JsonHttpClient client_;
  std::atomic<std::size_t> dim_{0};
};

}  // namespace loong
