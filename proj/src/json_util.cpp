#include "loong/json_util.hpp"

#include <fstream>
#include <sstream>

#include "loong/errors.hpp"
#include "loong/text.hpp"

namespace loong {

using nlohmann::json;

std::optional<json> parse_lenient(std::string_view s) {
  auto j = json::parse(s.begin(), s.end(), nullptr, /*allow_exceptions=*/false,
                       /*ignore_comments=*/true);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

std::optional<json> extract_json(std::string_view raw,
                                 const std::function<bool(const json&)>& accept) {
  const auto blocks = text::fenced_blocks(raw);
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
    if (auto j = parse_lenient(text::trim(*it)); j && accept(*j)) return j;
  }
  // Bare JSON: for each opening bracket, try the closing brackets of the
  // same kind from the far end inwards.
  constexpr std::size_t kMaxTries = 256;
  std::size_t tries = 0;
  for (std::size_t open = 0; open < raw.size(); ++open) {
    const char o = raw[open];
    if (o != '{' && o != '[') continue;
    const char c = o == '{' ? '}' : ']';
    for (auto close = raw.rfind(c); close != std::string_view::npos && close > open;
         close = close == 0 ? std::string_view::npos : raw.rfind(c, close - 1)) {
      if (++tries > kMaxTries) return std::nullopt;
      if (auto j = parse_lenient(raw.substr(open, close - open + 1)); j && accept(*j)) return j;
    }
  }
  return std::nullopt;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw ValidationError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace loong
