#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace tarnet {

// printf-style %.<digits>g rendering; 17 digits round-trips a double.
std::string format_double(double value, int digits = 17);

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary and renames, so readers never observe a
// half-written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace tarnet
