// Minimal SVG line plots.
#pragma once

#include <exospin/detail/csv.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

namespace exospin::detail {

struct PlotSeries {
    std::vector<double> x, y;
    std::string label;
    std::string color = "#1f5fa8";
};

struct PlotOptions {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    bool log_y = false;
    int width = 720;
    int height = 440;
};

inline std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

inline std::string svg_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

inline std::string line_plot(const std::vector<PlotSeries>& series, const PlotOptions& opt) {
    const double left = 80, right = 20, top = 40, bottom = 60;
    const double w = opt.width - left - right;
    const double h = opt.height - top - bottom;
    auto tx = [&](double v) { return opt.log_x ? std::log10(v) : v; };
    auto ty = [&](double v) { return opt.log_y ? std::log10(v) : v; };
    auto usable = [&](double x, double y) {
        return std::isfinite(x) && std::isfinite(y) && (!opt.log_x || x > 0) && (!opt.log_y || y > 0);
    };

    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!usable(s.x[i], s.y[i])) continue;
            x0 = std::min(x0, tx(s.x[i]));
            x1 = std::max(x1, tx(s.x[i]));
            y0 = std::min(y0, ty(s.y[i]));
            y1 = std::max(y1, ty(s.y[i]));
        }
    }
    if (!std::isfinite(x0)) {
        x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    }
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    auto px = [&](double v) { return left + (tx(v) - x0) / (x1 - x0) * w; };
    auto py = [&](double v) { return top + h - (ty(v) - y0) / (y1 - y0) * h; };

    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(opt.width) +
                      "\" height=\"" + std::to_string(opt.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + svg_number(left + w / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
           svg_escape(opt.title) + "</text>\n";
    out += "<rect x=\"" + svg_number(left) + "\" y=\"" + svg_number(top) + "\" width=\"" + svg_number(w) +
           "\" height=\"" + svg_number(h) + "\" fill=\"none\" stroke=\"#333\"/>\n";

    for (int i = 0; i <= 5; ++i) {
        const double fx = x0 + (x1 - x0) * i / 5.0;
        const double fy = y0 + (y1 - y0) * i / 5.0;
        const double sx = left + w * i / 5.0;
        const double sy = top + h - h * i / 5.0;
        out += "<line x1=\"" + svg_number(sx) + "\" y1=\"" + svg_number(top + h) + "\" x2=\"" + svg_number(sx) +
               "\" y2=\"" + svg_number(top + h + 5) + "\" stroke=\"#333\"/>\n";
        out += "<text x=\"" + svg_number(sx) + "\" y=\"" + svg_number(top + h + 18) + "\" text-anchor=\"middle\">" +
               tick_label(opt.log_x ? std::pow(10.0, fx) : fx) + "</text>\n";
        out += "<line x1=\"" + svg_number(left - 5) + "\" y1=\"" + svg_number(sy) + "\" x2=\"" + svg_number(left) +
               "\" y2=\"" + svg_number(sy) + "\" stroke=\"#333\"/>\n";
        out += "<text x=\"" + svg_number(left - 8) + "\" y=\"" + svg_number(sy + 4) + "\" text-anchor=\"end\">" +
               tick_label(opt.log_y ? std::pow(10.0, fy) : fy) + "</text>\n";
    }
    out += "<text x=\"" + svg_number(left + w / 2) + "\" y=\"" + svg_number(opt.height - 15.0) +
           "\" text-anchor=\"middle\">" + svg_escape(opt.x_label) + "</text>\n";
    out += "<text transform=\"translate(18," + svg_number(top + h / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
           svg_escape(opt.y_label) + "</text>\n";

    double legend_y = top + 16;
    for (const auto& s : series) {
        std::string points;
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!usable(s.x[i], s.y[i])) continue;
            points += svg_number(px(s.x[i])) + "," + svg_number(py(s.y[i])) + " ";
        }
        out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.2\" points=\"" + points + "\"/>\n";
        if (!s.label.empty()) {
            out += "<text x=\"" + svg_number(left + w - 8) + "\" y=\"" + svg_number(legend_y) +
                   "\" text-anchor=\"end\" fill=\"" + s.color + "\">" + svg_escape(s.label) + "</text>\n";
            legend_y += 16;
        }
    }
    out += "</svg>\n";
    return out;
}

} // namespace exospin::detail
