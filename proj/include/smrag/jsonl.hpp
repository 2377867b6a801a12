#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace smrag {

using json = nlohmann::json;

struct JsonlRecord {
    std::size_t line = 0;  // 1-based
    json value;
};

/// Parses line-delimited JSON. Blank lines are skipped; a malformed line
/// raises DataError naming its line number.
std::vector<JsonlRecord> read_jsonl(std::istream& in);
std::vector<JsonlRecord> read_jsonl_file(const std::filesystem::path& path);

/// Compact single-line dump with keys in sorted order (nlohmann's default).
std::string dump_line(const json& value);

/// Writes `content` to `path` via a sibling temp file and rename, so a crash
/// never leaves a half-written file behind.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::uint64_t fnv1a64(std::string_view data) noexcept;
std::string content_digest(std::string_view data);

}  // namespace smrag
