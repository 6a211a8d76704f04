#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace maf {

struct ChartSeries {
  std::string name;
  std::vector<double> x, y;
};

// standalone SVG line chart with axes, ticks and a legend
void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::vector<ChartSeries>& series);

// first CSV column is x, every other numeric column becomes a series
void csv_to_svg(const std::filesystem::path& csv_path, const std::filesystem::path& svg_path,
                const std::string& title);

}  // namespace maf
