#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace muze::csvio {

using Row = std::vector<std::string>;

// RFC 4180 style: cells containing commas, quotes or newlines are quoted,
// quotes are doubled. UTF-8 passes through untouched.
std::string escape_cell(const std::string& cell);
std::string format_row(const Row& row);

std::vector<Row> parse(const std::string& text);
std::vector<Row> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<Row>& rows);

}  // namespace muze::csvio
