#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace muze::plot {

struct Series {
  std::string label;
  std::string color;  // SVG color
  std::vector<std::pair<double, double>> points;
};

// Static SVG renderings for run reports: a connected line chart and a scatter
// plot. Output is deterministic for identical inputs.
void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series);

void write_scatter(const std::filesystem::path& path, const std::string& title,
                   const std::string& x_label, const std::string& y_label,
                   const std::vector<Series>& series);

}  // namespace muze::plot
