#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace cohertrace::detail {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

/// Parses the whole string as a double; throws cohertrace::Error otherwise.
double parse_double(std::string_view text);

std::string read_file(const std::filesystem::path& path);

/// Writes via a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace cohertrace::detail
