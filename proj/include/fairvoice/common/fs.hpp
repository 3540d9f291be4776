#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace fairvoice {

// Writes to a sibling temporary and renames it into place, so a failed write
// never leaves a partial file at `path`. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace fairvoice
