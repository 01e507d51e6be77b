#pragma once

// Minimal SVG emitter: histogram-style bars plus two density polylines on a
// fixed canvas. No plotting dependency; output bytes are deterministic.

#include <algorithm>
#include <string>
#include <vector>

#include "dmskew/csv.hpp"

namespace dmskew::io {

struct DensityPlot {
    std::vector<double> x;       // shared abscissae
    std::vector<double> bars;    // bar heights, may be empty
    std::vector<double> curve_a; // primary density
    std::vector<double> curve_b; // reference density
    std::string label_a = "corrected";
    std::string label_b = "normal";
};

namespace detail {
inline std::string svg_points(const std::vector<double>& xs, const std::vector<double>& ys,
                              double x0, double x1, double ymax, double w, double h,
                              double margin) {
    std::string pts;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double px = margin + (xs[i] - x0) / (x1 - x0) * (w - 2 * margin);
        const double py = h - margin - std::max(0.0, ys[i]) / ymax * (h - 2 * margin);
        pts += format_double(px) + "," + format_double(py) + " ";
    }
    return pts;
}
} // namespace detail

inline std::string render_density_plot(const DensityPlot& plot) {
    const double w = 640, h = 400, margin = 40;
    const double x0 = plot.x.front(), x1 = plot.x.back();
    double ymax = 1e-12;
    for (double v : plot.bars) ymax = std::max(ymax, v);
    for (double v : plot.curve_a) ymax = std::max(ymax, v);
    for (double v : plot.curve_b) ymax = std::max(ymax, v);
    ymax *= 1.05;

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
           "viewBox=\"0 0 640 400\">\n";
    svg += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    if (!plot.bars.empty()) {
        const double bw = (w - 2 * margin) / static_cast<double>(plot.bars.size());
        for (std::size_t i = 0; i < plot.bars.size(); ++i) {
            const double bh = std::max(0.0, plot.bars[i]) / ymax * (h - 2 * margin);
            svg += "<rect x=\"" + format_double(margin + i * bw) + "\" y=\"" +
                   format_double(h - margin - bh) + "\" width=\"" + format_double(bw) +
                   "\" height=\"" + format_double(bh) +
                   "\" fill=\"#cfd8e3\" stroke=\"#9aa7b8\" stroke-width=\"0.5\"/>\n";
        }
    }
    svg += "<polyline fill=\"none\" stroke=\"#b03030\" stroke-width=\"1.5\" points=\"" +
           detail::svg_points(plot.x, plot.curve_a, x0, x1, ymax, w, h, margin) + "\"/>\n";
    svg += "<polyline fill=\"none\" stroke=\"#305090\" stroke-width=\"1.5\" "
           "stroke-dasharray=\"5,3\" points=\"" +
           detail::svg_points(plot.x, plot.curve_b, x0, x1, ymax, w, h, margin) + "\"/>\n";
    svg += "<line x1=\"" + format_double(margin) + "\" y1=\"" + format_double(h - margin) +
           "\" x2=\"" + format_double(w - margin) + "\" y2=\"" + format_double(h - margin) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + format_double(w - margin - 150) + "\" y=\"" + format_double(margin) +
           "\" fill=\"#b03030\" font-size=\"12\">" + plot.label_a + "</text>\n";
    svg += "<text x=\"" + format_double(w - margin - 150) + "\" y=\"" +
           format_double(margin + 16) + "\" fill=\"#305090\" font-size=\"12\">" + plot.label_b +
           "</text>\n";
    svg += "</svg>\n";
    return svg;
}

} // namespace dmskew::io
