#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace loong {

/// Parses JSON, tolerating // and /* */ comments. nullopt on failure.
std::optional<nlohmann::json> parse_lenient(std::string_view s);

/// Finds JSON embedded in model output. Fenced blocks are tried last to
/// first; when none qualifies, bare objects/arrays are tried in order of
/// their opening bracket. The first candidate satisfying `accept` wins.
std::optional<nlohmann::json> extract_json(
    std::string_view raw,
    const std::function<bool(const nlohmann::json&)>& accept = [](const nlohmann::json&) {
      return true;
    });

/// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Whole file as bytes; throws ValidationError when it cannot be read.
std::string read_file(const std::filesystem::path& path);

}  // namespace loong
