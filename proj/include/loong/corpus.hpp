#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace loong {

struct Sentence {
  std::string doc_id;
  int index = 0;  // 1-based position in the document
  std::string text;

  bool operator==(const Sentence&) const = default;
};

struct Document {
  std::string doc_id;
  std::string src_lang;
  std::string tgt_lang;
  std::vector<Sentence> sentences;
  std::optional<std::vector<std::string>> references;

  std::size_t size() const noexcept { return sentences.size(); }
  bool has_references() const noexcept { return references.has_value(); }

  bool operator==(const Document&) const = default;
};

/// A contiguous run of sentences [start, end] (1-based, inclusive).
struct Segment {
  std::string doc_id;
  int seg_index = 0;
  int start = 0;
  int end = 0;
  std::vector<Sentence> sentences;

  std::size_t size() const noexcept { return sentences.size(); }
  /// Sentence texts joined by a single space; the unit that gets embedded.
  std::string joined_text() const;
  std::vector<std::string> texts() const;
};

enum class CorpusFormat { jsonl, lines };

std::optional<CorpusFormat> parse_corpus_format(std::string_view name);

/// Builds a validated document. Texts are trimmed; empty texts, texts with
/// line breaks and reference-count mismatches are rejected.
Document make_document(std::string doc_id, std::string src_lang, std::string tgt_lang,
                       std::span<const std::string> src_lines,
                       std::optional<std::vector<std::string>> ref_lines = std::nullopt);

struct CorpusDefaults {
  std::string src_lang;
  std::string tgt_lang;
  std::string doc_prefix = "doc";
};

std::vector<Document> read_jsonl_corpus(std::istream& in, const CorpusDefaults& defaults = {});
std::vector<Document> read_lines_corpus(std::istream& in, const CorpusDefaults& defaults = {});
std::vector<Document> load_corpus(const std::filesystem::path& path, CorpusFormat format,
                                  const CorpusDefaults& defaults = {});

std::string to_jsonl_row(const Document& doc);
void write_jsonl_corpus(std::ostream& out, std::span<const Document> docs);

/// Splits a document into ceil(N/l) segments; only the last may be short.
std::vector<Segment> segment(const Document& doc, int l);

}  // namespace loong
