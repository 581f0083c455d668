#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>

namespace fedcvar {

/// Writes to a sibling temp file, then renames over `path`, so readers only
/// ever see the old or the complete new content.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace fedcvar
