#pragma once

#include <string>
#include <vector>

namespace sgds {

struct ChartSeries {
    std::string name;
    std::vector<double> values;  // y at x = 1..n
};

// Static SVG line chart; y axis spans [y_min, y_max].
std::string line_chart_svg(const std::vector<ChartSeries>& series, const std::string& title,
                           const std::string& x_label, const std::string& y_label, double y_min = 0.0,
                           double y_max = 100.0);

}  // namespace sgds
