#include "loong/embedding.hpp"

#include <cmath>

#include "loong/errors.hpp"
#include "loong/text.hpp"

namespace loong {

using nlohmann::json;

EmbeddingVector EmbeddingProvider::embed_one(const std::string& t) {
  auto out = embed(std::span<const std::string>(&t, 1));
  if (out.size() != 1) throw BackendError("embedding provider returned wrong count", false);
  return std::move(out.front());
}

HashingEmbedder::HashingEmbedder(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw ValidationError("embedding dimension must be positive");
}

EmbeddingVector HashingEmbedder::embed_text(std::string_view s) const {
  std::u32string padded = U"\u0002";
  padded += text::decode_utf8(s);
  padded += U'\u0003';

  std::vector<double> acc(dim_, 0.0);
  for (std::size_t n = 2; n <= 4; ++n) {
    if (padded.size() < n) break;
    for (std::size_t i = 0; i + n <= padded.size(); ++i) {
      const auto gram = std::u32string_view(padded).substr(i, n);
      const auto bytes = text::encode_utf8(gram);
      const auto h = text::fnv1a(bytes, text::mix(14695981039346656037ull, n));
      acc[h % dim_] += 1.0;
    }
  }
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  EmbeddingVector out;
  out.values.resize(dim_);
  for (std::size_t i = 0; i < dim_; ++i) {
    out.values[i] = static_cast<float>(norm > 0.0 ? acc[i] / norm : 0.0);
  }
  return out;
}

std::vector<EmbeddingVector> HashingEmbedder::embed(std::span<const std::string> texts) {
  if (texts.empty()) throw ValidationError("embed() needs at least one text");
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_text(t));
  return out;
}

RemoteEmbedder::RemoteEmbedder(HttpEndpoint endpoint) : client_(std::move(endpoint)) {}

std::vector<EmbeddingVector> RemoteEmbedder::embed(std::span<const std::string> texts) {
  if (texts.empty()) throw ValidationError("embed() needs at least one text");
  const auto reply = client_.post("/embed", json{{"texts", texts}});
  const auto& body = reply.body;
  std::vector<EmbeddingVector> out;
  try {
    for (const auto& row : body.at("vectors")) {
      EmbeddingVector v;
      v.values = row.get<std::vector<float>>();
      for (float f : v.values) {
        if (!std::isfinite(f)) throw BackendError("sidecar returned a non-finite embedding", false);
      }
      out.push_back(std::move(v));
    }
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed /embed response: ") + e.what(), false, 200,
                       body.dump(), reply.attempts);
  }
  if (out.size() != texts.size()) {
    throw BackendError("/embed returned " + std::to_string(out.size()) + " vectors for " +
                           std::to_string(texts.size()) + " texts",
                       false, 200, body.dump(), reply.attempts);
  }
  for (const auto& v : out) {
    if (v.dim() == 0 || v.dim() != out.front().dim()) {
      throw BackendError("/embed returned vectors of inconsistent dimension", false);
    }
  }
  dim_.store(out.front().dim());
  return out;
}

}  // namespace loong
