#include "svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "errors.hpp"

namespace muze::plot {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 420;
constexpr int kMarginLeft = 64;
constexpr int kMarginRight = 140;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 48;

struct Range {
  double lo = 0, hi = 1;
};

Range axis_range(const std::vector<Series>& series, bool y_axis) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      const double v = y_axis ? y : x;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {0, 1};
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = (hi - lo) * 0.05;
  return {lo - pad, hi + pad};
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out.push_back(c);
  }
  return out;
}

class SvgWriter {
public:
  SvgWriter(const std::filesystem::path& path, const std::string& title,
            const std::string& x_label, const std::string& y_label,
            const std::vector<Series>& series)
      : out_(path, std::ios::binary | std::ios::trunc),
        xr_(axis_range(series, false)),
        yr_(axis_range(series, true)) {
    if (!out_) throw IoError("cannot write plot: " + path.string());
    out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
         << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    out_ << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out_ << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
         << escape(title) << "</text>\n";
    axes(x_label, y_label);
  }

  double px(double x) const {
    return kMarginLeft + (x - xr_.lo) / (xr_.hi - xr_.lo) * (kWidth - kMarginLeft - kMarginRight);
  }
  double py(double y) const {
    return kHeight - kMarginBottom -
           (y - yr_.lo) / (yr_.hi - yr_.lo) * (kHeight - kMarginTop - kMarginBottom);
  }

  void polyline(const Series& s) {
    if (s.points.empty()) return;
    out_ << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : s.points) out_ << fmt(px(x)) << "," << fmt(py(y)) << " ";
    out_ << "\"/>\n";
    dots(s, 3.0);
  }

  void dots(const Series& s, double r) {
    for (const auto& [x, y] : s.points) {
      out_ << "<circle cx=\"" << fmt(px(x)) << "\" cy=\"" << fmt(py(y)) << "\" r=\"" << r
           << "\" fill=\"" << s.color << "\"/>\n";
    }
  }

  void legend(const std::vector<Series>& series) {
    int y = kMarginTop + 8;
    for (const auto& s : series) {
      out_ << "<rect x=\"" << kWidth - kMarginRight + 12 << "\" y=\"" << y - 9
           << "\" width=\"12\" height=\"12\" fill=\"" << s.color << "\"/>\n";
      out_ << "<text x=\"" << kWidth - kMarginRight + 30 << "\" y=\"" << y + 2
           << "\" font-size=\"12\">" << escape(s.label) << "</text>\n";
      y += 20;
    }
  }

  void finish() { out_ << "</svg>\n"; }

private:
  void axes(const std::string& x_label, const std::string& y_label) {
    out_ << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kHeight - kMarginBottom << "\" x2=\""
         << kWidth - kMarginRight << "\" y2=\"" << kHeight - kMarginBottom
         << "\" stroke=\"black\"/>\n";
    out_ << "<line x1=\"" << kMarginLeft << "\" y1=\"" << kMarginTop << "\" x2=\"" << kMarginLeft
         << "\" y2=\"" << kHeight - kMarginBottom << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
      const double fx = xr_.lo + (xr_.hi - xr_.lo) * i / 4.0;
      const double fy = yr_.lo + (yr_.hi - yr_.lo) * i / 4.0;
      out_ << "<text x=\"" << fmt(px(fx)) << "\" y=\"" << kHeight - kMarginBottom + 18
           << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(fx) << "</text>\n";
      out_ << "<text x=\"" << kMarginLeft - 8 << "\" y=\"" << fmt(py(fy) + 4)
           << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(fy) << "</text>\n";
    }
    out_ << "<text x=\"" << (kMarginLeft + kWidth - kMarginRight) / 2 << "\" y=\""
         << kHeight - 12 << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(x_label)
         << "</text>\n";
    out_ << "<text x=\"16\" y=\"" << (kMarginTop + kHeight - kMarginBottom) / 2
         << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
         << (kMarginTop + kHeight - kMarginBottom) / 2 << ")\">" << escape(y_label)
         << "</text>\n";
  }

  std::ofstream out_;
  Range xr_, yr_;
};

}  // namespace

void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series) {
  SvgWriter svg(path, title, x_label, y_label, series);
  for (const auto& s : series) svg.polyline(s);
  svg.legend(series);
  svg.finish();
}

void write_scatter(const std::filesystem::path& path, const std::string& title,
                   const std::string& x_label, const std::string& y_label,
                   const std::vector<Series>& series) {
  SvgWriter svg(path, title, x_label, y_label, series);
  for (const auto& s : series) svg.dots(s, 2.5);
  svg.legend(series);
  svg.finish();
}

}  // namespace muze::plot
