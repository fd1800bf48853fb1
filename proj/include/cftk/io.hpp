#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

namespace cftk {

// Writes to a sibling temp file, then renames over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);
// Parse errors are rethrown as LoadError naming the file.
nlohmann::json read_json(const std::filesystem::path& path);
// FNV-1a content fingerprint as 16 hex digits.
std::string content_hash(const std::string& contents);

}  // namespace cftk
