#include "ems/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace ems {
namespace {

struct Range {
    double lo = 0.0, hi = 1.0;
    double span() const { return hi - lo; }
};

Range axis_range(double lo, double hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) throw std::invalid_argument("non-finite plot data");
    if (hi - lo < 1e-12) {
        const double pad = std::max(1e-6, std::abs(lo) * 1e-3);
        return {lo - pad, hi + pad};
    }
    const double pad = (hi - lo) * 0.05;
    return {lo - pad, hi + pad};
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

} // namespace

std::string render_svg(const PlotSpec& spec) {
    if (spec.series.empty()) throw std::invalid_argument("plot needs at least one series");
    double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
    for (const auto& s : spec.series) {
        if (s.x.size() != s.y.size()) throw std::invalid_argument("series x/y length mismatch");
        if (s.x.empty()) throw std::invalid_argument("empty series " + s.label);
        for (double v : s.x) { x_lo = std::min(x_lo, v); x_hi = std::max(x_hi, v); }
        for (double v : s.y) { y_lo = std::min(y_lo, v); y_hi = std::max(y_hi, v); }
    }
    const Range xr = axis_range(x_lo, x_hi);
    const Range yr = axis_range(y_lo, y_hi);

    const double ml = 64, mr = 16, mt = 32, mb = 44;
    const double pw = spec.width - ml - mr;
    const double ph = spec.height - mt - mb;
    auto px = [&](double x) { return ml + (x - xr.lo) / xr.span() * pw; };
    auto py = [&](double y) { return mt + ph - (y - yr.lo) / yr.span() * ph; };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width
       << "\" height=\"" << spec.height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << spec.width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">"
       << escape(spec.title) << "</text>\n";

    // Gridlines and tick labels, five per axis.
    for (int i = 0; i <= 4; ++i) {
        const double xv = xr.lo + xr.span() * i / 4.0;
        const double yv = yr.lo + yr.span() * i / 4.0;
        os << "<line x1=\"" << px(xv) << "\" y1=\"" << mt << "\" x2=\"" << px(xv)
           << "\" y2=\"" << mt + ph << "\" stroke=\"#dddddd\"/>\n";
        os << "<line x1=\"" << ml << "\" y1=\"" << py(yv) << "\" x2=\"" << ml + pw
           << "\" y2=\"" << py(yv) << "\" stroke=\"#dddddd\"/>\n";
        os << "<text x=\"" << px(xv) << "\" y=\"" << mt + ph + 16
           << "\" text-anchor=\"middle\">" << fmt(xv) << "</text>\n";
        os << "<text x=\"" << ml - 6 << "\" y=\"" << py(yv) + 4
           << "\" text-anchor=\"end\">" << fmt(yv) << "</text>\n";
    }
    os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"#444444\"/>\n";
    os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << spec.height - 8
       << "\" text-anchor=\"middle\">" << escape(spec.x_label) << "</text>\n";
    os << "<text x=\"14\" y=\"" << mt + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
       << mt + ph / 2 << ")\">" << escape(spec.y_label) << "</text>\n";

    for (const auto& s : spec.series) {
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\"";
        if (s.dashed) os << " stroke-dasharray=\"5,3\"";
        os << " points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            os << fmt(px(s.x[i])) << ',' << fmt(py(s.y[i])) << ' ';
        os << "\"/>\n";
    }

    double ly = mt + 14;
    for (const auto& s : spec.series) {
        os << "<line x1=\"" << ml + 8 << "\" y1=\"" << ly - 4 << "\" x2=\"" << ml + 32
           << "\" y2=\"" << ly - 4 << "\" stroke=\"" << s.color << "\" stroke-width=\"1.5\"";
        if (s.dashed) os << " stroke-dasharray=\"5,3\"";
        os << "/>\n";
        os << "<text x=\"" << ml + 38 << "\" y=\"" << ly << "\">" << escape(s.label) << "</text>\n";
        ly += 14;
    }

    os << "</svg>\n";
    return os.str();
}

} // namespace ems
