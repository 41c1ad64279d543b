#include "csv.hpp"

#include <fstream>
#include <sstream>

#include "errors.hpp"

namespace muze::csvio {

std::string escape_cell(const std::string& cell) {
  bool needs_quotes = cell.find_first_of(",\"\n\r") != std::string::npos;
  if (!needs_quotes) return cell;
  std::string out;
  out.reserve(cell.size() + 2);
  out.push_back('"');
  for (char c : cell) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_row(const Row& row) {
  std::string out;
  for (size_t i = 0; i < row.size(); ++i) {
    if (i) out.push_back(',');
    out += escape_cell(row[i]);
  }
  out.push_back('\n');
  return out;
}

std::vector<Row> parse(const std::string& text) {
  std::vector<Row> rows;
  Row row;
  std::string cell;
  bool in_quotes = false;
  bool cell_started = false;
  size_t i = 0;
  const size_t n = text.size();
  auto end_cell = [&] {
    row.push_back(cell);
    cell.clear();
    cell_started = false;
  };
  auto end_row = [&] {
    end_cell();
    rows.push_back(std::move(row));
    row.clear();
  };
  while (i < n) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < n && text[i + 1] == '"') {
          cell.push_back('"');
          i += 2;
        } else {
          in_quotes = false;
          ++i;
        }
      } else {
        cell.push_back(c);
        ++i;
      }
    } else if (c == '"' && cell.empty() && !cell_started) {
      in_quotes = true;
      cell_started = true;
      ++i;
    } else if (c == ',') {
      end_cell();
      ++i;
    } else if (c == '\r') {
      if (i + 1 < n && text[i + 1] == '\n') ++i;
      end_row();
      ++i;
    } else if (c == '\n') {
      end_row();
      ++i;
    } else {
      cell.push_back(c);
      cell_started = true;
      ++i;
    }
  }
  if (in_quotes) throw MalformedCellError("unterminated quoted CSV cell");
  if (cell_started || !row.empty()) end_row();
  return rows;
}

std::vector<Row> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open CSV file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void write_file(const std::filesystem::path& path, const std::vector<Row>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write CSV file: " + path.string());
  for (const auto& row : rows) out << format_row(row);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace muze::csvio
