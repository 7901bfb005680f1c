#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace smpcl {

/// Writes to a sibling temporary file, then renames over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

/// Whole-file read; throws ValidationError naming the path on failure.
std::string read_file(const std::filesystem::path& path);

}  // namespace smpcl
