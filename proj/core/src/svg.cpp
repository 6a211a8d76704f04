#include "maf/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace maf {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::vector<ChartSeries>& series) {
  if (series.empty()) throw std::invalid_argument("chart: no series");

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("chart: x/y length mismatch");
    for (double v : s.x) { xmin = std::min(xmin, v); xmax = std::max(xmax, v); }
    for (double v : s.y) { ymin = std::min(ymin, v); ymax = std::max(ymax, v); }
  }
  if (!std::isfinite(xmin) || !std::isfinite(ymin)) {
    throw std::invalid_argument("chart: series are empty");
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;

  const double width = 720, height = 440;
  const double ml = 64, mr = 150, mt = 40, mb = 48;
  const double pw = width - ml - mr, ph = height - mt - mb;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

  std::ofstream f(path);
  if (!f) throw std::runtime_error("chart: cannot open " + path.string());
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  f << "<text x=\"" << ml << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">" << title
    << "</text>\n";

  // axes + ticks
  f << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\"" << mt + ph
    << "\" stroke=\"black\"/>\n";
  f << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
    << "\" stroke=\"black\"/>\n";
  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    const double tx = xmin + (xmax - xmin) * i / ticks;
    const double ty = ymin + (ymax - ymin) * i / ticks;
    f << "<line x1=\"" << px(tx) << "\" y1=\"" << mt + ph << "\" x2=\"" << px(tx) << "\" y2=\""
      << mt + ph + 5 << "\" stroke=\"black\"/>\n";
    f << "<text x=\"" << px(tx) << "\" y=\"" << mt + ph + 20
      << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << fmt(tx)
      << "</text>\n";
    f << "<line x1=\"" << ml - 5 << "\" y1=\"" << py(ty) << "\" x2=\"" << ml << "\" y2=\"" << py(ty)
      << "\" stroke=\"black\"/>\n";
    f << "<text x=\"" << ml - 8 << "\" y=\"" << py(ty) + 4
      << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << fmt(ty)
      << "</text>\n";
  }
  f << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 8
    << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" << x_label
    << "</text>\n";

  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    f << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (i) f << " ";
      f << fmt(px(s.x[i])) << "," << fmt(py(s.y[i]));
    }
    f << "\"/>\n";
    if (s.x.size() <= 50) {  // markers only on sparse charts
      for (size_t i = 0; i < s.x.size(); ++i) {
        f << "<circle cx=\"" << fmt(px(s.x[i])) << "\" cy=\"" << fmt(py(s.y[i]))
          << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
      }
    }
    const double ly = mt + 16 + 18 * static_cast<double>(si);
    f << "<line x1=\"" << ml + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << ml + pw + 30
      << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    f << "<text x=\"" << ml + pw + 36 << "\" y=\"" << ly + 4
      << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.name << "</text>\n";
  }
  f << "</svg>\n";
  if (!f) throw std::runtime_error("chart: write failed for " + path.string());
}

void csv_to_svg(const std::filesystem::path& csv_path, const std::filesystem::path& svg_path,
                const std::string& title) {
  std::ifstream f(csv_path);
  if (!f) throw std::runtime_error("plot: cannot open " + csv_path.string());
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("plot: empty CSV " + csv_path.string());

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 2) throw std::runtime_error("plot: CSV needs at least two columns");

  std::vector<ChartSeries> series(header.size() - 1);
  for (size_t i = 1; i < header.size(); ++i) series[i - 1].name = header[i];

  int rows = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() != header.size()) {
      throw std::runtime_error("plot: ragged CSV row in " + csv_path.string());
    }
    for (size_t i = 1; i < vals.size(); ++i) {
      series[i - 1].x.push_back(vals[0]);
      series[i - 1].y.push_back(vals[i]);
    }
    ++rows;
  }
  if (rows == 0) throw std::runtime_error("plot: no data rows in " + csv_path.string());
  write_line_chart(svg_path, title, header[0], series);
}

}  // namespace maf
