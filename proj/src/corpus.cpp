#include "loong/corpus.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "loong/errors.hpp"
#include "loong/text.hpp"

namespace loong {

using nlohmann::json;

std::string Segment::joined_text() const {
  return text::join(texts(), " ");
}

std::vector<std::string> Segment::texts() const {
  std::vector<std::string> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(s.text);
  return out;
}

std::optional<CorpusFormat> parse_corpus_format(std::string_view name) {
  if (name == "jsonl") return CorpusFormat::jsonl;
  if (name == "lines") return CorpusFormat::lines;
  return std::nullopt;
}

namespace {

std::string clean_line(std::string_view raw, const std::string& doc_id, std::size_t pos,
                       const char* what) {
  auto t = text::trim(raw);
  if (t.empty()) {
    throw ValidationError("document '" + doc_id + "': " + what + " " + std::to_string(pos) +
                          " is empty");
  }
  if (t.find_first_of("\r\n") != std::string_view::npos) {
    throw ValidationError("document '" + doc_id + "': " + what + " " + std::to_string(pos) +
                          " contains a line break");
  }
  return std::string(t);
}

}  // namespace

Document make_document(std::string doc_id, std::string src_lang, std::string tgt_lang,
                       std::span<const std::string> src_lines,
                       std::optional<std::vector<std::string>> ref_lines) {
  Document doc;
  doc.doc_id = std::move(doc_id);
  doc.src_lang = std::move(src_lang);
  doc.tgt_lang = std::move(tgt_lang);
  if (ref_lines && ref_lines->size() != src_lines.size()) {
    throw ValidationError("document '" + doc.doc_id + "': " + std::to_string(src_lines.size()) +
                          " source lines but " + std::to_string(ref_lines->size()) +
                          " reference lines");
  }
  doc.sentences.reserve(src_lines.size());
  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    doc.sentences.push_back(
        Sentence{doc.doc_id, static_cast<int>(i + 1), clean_line(src_lines[i], doc.doc_id, i + 1, "source line")});
  }
  if (ref_lines) {
    std::vector<std::string> refs;
    refs.reserve(ref_lines->size());
    for (std::size_t i = 0; i < ref_lines->size(); ++i) {
      refs.push_back(clean_line((*ref_lines)[i], doc.doc_id, i + 1, "reference line"));
    }
    doc.references = std::move(refs);
  }
  return doc;
}

std::vector<Document> read_jsonl_corpus(std::istream& in, const CorpusDefaults& defaults) {
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto where = "line " + std::to_string(line_no);
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + ": invalid JSON: " + e.what());
    }
    if (!row.is_object()) throw ParseError(where + ": expected a JSON object");
    auto string_field = [&](const char* key, const std::string& fallback) -> std::string {
      if (!row.contains(key)) return fallback;
      if (!row[key].is_string()) throw ParseError(where + ": field '" + key + "' must be a string");
      return row[key].get<std::string>();
    };
    auto string_list = [&](const char* key) -> std::vector<std::string> {
      const auto& v = row[key];
      if (!v.is_array()) throw ParseError(where + ": field '" + key + "' must be an array");
      std::vector<std::string> out;
      for (const auto& item : v) {
        if (!item.is_string()) throw ParseError(where + ": '" + key + "' entries must be strings");
        out.push_back(item.get<std::string>());
      }
      return out;
    };
    if (!row.contains("doc_id")) throw ParseError(where + ": missing 'doc_id'");
    if (!row.contains("src_lines")) throw ParseError(where + ": missing 'src_lines'");
    auto doc_id = string_field("doc_id", "");
    auto src = string_list("src_lines");
    std::optional<std::vector<std::string>> refs;
    if (row.contains("ref_lines") && !row["ref_lines"].is_null()) refs = string_list("ref_lines");
    try {
      docs.push_back(make_document(std::move(doc_id), string_field("src_lang", defaults.src_lang),
                                   string_field("tgt_lang", defaults.tgt_lang), src,
                                   std::move(refs)));
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
  return docs;
}

std::vector<Document> read_lines_corpus(std::istream& in, const CorpusDefaults& defaults) {
  std::vector<Document> docs;
  std::vector<std::string> pending;
  auto flush = [&] {
    if (pending.empty()) return;
    const auto id = defaults.doc_prefix + std::to_string(docs.size() + 1);
    docs.push_back(make_document(id, defaults.src_lang, defaults.tgt_lang, pending));
    pending.clear();
  };
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) {
      flush();
    } else {
      pending.push_back(line);
    }
  }
  flush();
  return docs;
}

std::vector<Document> load_corpus(const std::filesystem::path& path, CorpusFormat format,
                                  const CorpusDefaults& defaults) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open corpus file: " + path.string());
  return format == CorpusFormat::jsonl ? read_jsonl_corpus(in, defaults)
                                       : read_lines_corpus(in, defaults);
}

std::string to_jsonl_row(const Document& doc) {
  json row;
  row["doc_id"] = doc.doc_id;
  row["src_lang"] = doc.src_lang;
  row["tgt_lang"] = doc.tgt_lang;
  json src = json::array();
  for (const auto& s : doc.sentences) src.push_back(s.text);
  row["src_lines"] = std::move(src);
  if (doc.references) row["ref_lines"] = *doc.references;
  return row.dump();
}

void write_jsonl_corpus(std::ostream& out, std::span<const Document> docs) {
  for (const auto& d : docs) out << to_jsonl_row(d) << '\n';
}

std::vector<Segment> segment(const Document& doc, int l) {
  if (l < 1) throw ValidationError("segment length must be >= 1, got " + std::to_string(l));
  if (doc.sentences.empty()) throw ValidationError("document '" + doc.doc_id + "' is empty");
  std::vector<Segment> out;
  const int n = static_cast<int>(doc.sentences.size());
  for (int start = 1, tau = 1; start <= n; start += l, ++tau) {
    const int end = std::min(n, start + l - 1);
    Segment seg{doc.doc_id, tau, start, end, {}};
    seg.sentences.assign(doc.sentences.begin() + (start - 1), doc.sentences.begin() + end);
    out.push_back(std::move(seg));
  }
  return out;
}

}  // namespace loong
