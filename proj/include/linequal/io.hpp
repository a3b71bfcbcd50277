#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

namespace linequal::io {

// Writes `contents` to a sibling temp file, flushes it to disk and renames it
// over `path`. Readers observe either the old or the new file, never a mix.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

// Calls `fn(line, line_number)` for each line of a text file (1-based line
// numbers). Trailing '\r' is stripped.
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(std::string_view, std::size_t)>& fn);

// Fixed-point rendering used wherever a score is serialized.
std::string format_fixed(double value, int decimals);

// FNV-1a, 64 bit. Used for feature hashing and content fingerprints.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string hex64(std::uint64_t value);

} // namespace linequal::io
