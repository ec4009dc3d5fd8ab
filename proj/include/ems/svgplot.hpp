#pragma once

#include <string>
#include <vector>

namespace ems {

// Minimal multi-series line plot. CSV stays the authoritative output; these
// figures exist for quick human inspection only.
struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "#1f77b4";
    bool dashed = false;
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<PlotSeries> series;
    int width = 720;
    int height = 360;
};

std::string render_svg(const PlotSpec& spec);

} // namespace ems
