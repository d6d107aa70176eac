#include "sgds/svg_chart.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <sstream>

namespace sgds {

namespace {

std::string escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(ch);
        }
    }
    return out;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

constexpr std::array<const char*, 6> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

}  // namespace

std::string line_chart_svg(const std::vector<ChartSeries>& series, const std::string& title,
                           const std::string& x_label, const std::string& y_label, double y_min, double y_max) {
    const double width = 640, height = 400;
    const double left = 60, right = 150, top = 40, bottom = 50;
    const double pw = width - left - right, ph = height - top - bottom;
    if (!(y_max > y_min)) y_max = y_min + 1.0;

    std::size_t n = 1;
    for (const auto& s : series) n = std::max(n, s.values.size());
    const auto x_at = [&](std::size_t i) { return left + (n == 1 ? pw / 2 : pw * static_cast<double>(i) / (n - 1)); };
    const auto y_at = [&](double v) {
        v = std::clamp(v, y_min, y_max);
        return top + ph * (1.0 - (v - y_min) / (y_max - y_min));
    };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n";

    for (int g = 0; g <= 5; ++g) {
        const double v = y_min + (y_max - y_min) * g / 5.0;
        const double y = y_at(v);
        o << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(y) << "\" x2=\"" << fmt(left + pw) << "\" y2=\"" << fmt(y)
          << "\" stroke=\"#ddd\"/>\n";
        o << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(y + 4) << "\" text-anchor=\"end\">" << fmt(v)
          << "</text>\n";
    }
    for (std::size_t i = 0; i < n; ++i)
        o << "<text x=\"" << fmt(x_at(i)) << "\" y=\"" << fmt(top + ph + 18) << "\" text-anchor=\"middle\">" << i + 1
          << "</text>\n";
    o << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(pw) << "\" height=\"" << fmt(ph)
      << "\" fill=\"none\" stroke=\"#333\"/>\n";
    o << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"" << fmt(height - 12) << "\" text-anchor=\"middle\">"
      << escape(x_label) << "</text>\n";
    o << "<text transform=\"translate(16," << fmt(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(y_label) << "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % kPalette.size()];
        const auto& vals = series[s].values;
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < vals.size(); ++i) o << (i ? " " : "") << fmt(x_at(i)) << "," << fmt(y_at(vals[i]));
        o << "\"/>\n";
        for (std::size_t i = 0; i < vals.size(); ++i)
            o << "<circle cx=\"" << fmt(x_at(i)) << "\" cy=\"" << fmt(y_at(vals[i])) << "\" r=\"3\" fill=\"" << color
              << "\"/>\n";
        const double ly = top + 10 + 18.0 * static_cast<double>(s);
        o << "<line x1=\"" << fmt(left + pw + 12) << "\" y1=\"" << fmt(ly) << "\" x2=\"" << fmt(left + pw + 32)
          << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << fmt(left + pw + 38) << "\" y=\"" << fmt(ly + 4) << "\">" << escape(series[s].name)
          << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace sgds
