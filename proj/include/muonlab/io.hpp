#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace muonlab::io {

/// Writes `contents` to a sibling temporary file and renames it over `path`,
/// so readers never observe a partially written file.
void write_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

/// Shortest round-trippable decimal form of a double (17 significant digits).
std::string format_double(double value);

}  // namespace muonlab::io
