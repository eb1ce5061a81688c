#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cohertrace::csv {

using Row = std::vector<std::string>;

/// Parses RFC-4180 text: comma separated, double-quote quoting with "" as the
/// escaped quote, CRLF or LF record ends. Quoted fields may span lines.
/// Throws cohertrace::Error on an unterminated quote.
std::vector<Row> parse(std::string_view text);

/// Quotes a field only when it needs it.
std::string escape(std::string_view field);

std::string format_row(const Row& row);

}  // namespace cohertrace::csv
