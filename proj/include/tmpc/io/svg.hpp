#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "csv.hpp"

namespace tmpc::io {

struct Series {
    std::string label;
    std::vector<double> x, y;
    std::string color = "#1f77b4";
    bool dashed = false;
    bool step = false; // hold each value until the next x
    double width = 1.5;
};

/// Shaded area between two curves sharing the x samples.
struct Band {
    std::vector<double> x, lo, hi;
    std::string color = "#1f77b4";
    double opacity = 0.25;
};

struct HLine {
    double y = 0.0;
    std::string label;
    std::string color = "#d62728";
};

struct LineChart {
    std::string title, x_label, y_label;
    std::vector<Series> series;
    std::vector<Band> bands;
    std::vector<HLine> hlines;
    double width = 760, height = 240;
};

namespace detail {

inline std::string num(double v) { return format_number(v, 2); }

inline std::string escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

/// Round tick step: 1, 2 or 5 times a power of ten.
inline double tick_step(double span, int target = 6)
{
    if (!(span > 0)) return 1.0;
    const double raw = span / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double f : {1.0, 2.0, 5.0, 10.0})
        if (f * mag >= raw) return f * mag;
    return 10.0 * mag;
}

struct Frame {
    double x0, x1, y0, y1;   // data range
    double left, top, w, h;  // plot area in pixels
    double px(double x) const { return left + (x - x0) / (x1 - x0) * w; }
    double py(double y) const { return top + h - (y - y0) / (y1 - y0) * h; }
};

inline void render_chart(std::ostream& os, const LineChart& c, double offset_y)
{
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    const auto take = [&](const std::vector<double>& xs, const std::vector<double>& ys) {
        for (std::size_t i = 0; i < std::min(xs.size(), ys.size()); ++i) {
            if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) continue;
            x0 = std::min(x0, xs[i]);
            x1 = std::max(x1, xs[i]);
            y0 = std::min(y0, ys[i]);
            y1 = std::max(y1, ys[i]);
        }
    };
    for (const auto& s : c.series) take(s.x, s.y);
    for (const auto& b : c.bands) {
        take(b.x, b.lo);
        take(b.x, b.hi);
    }
    for (const auto& l : c.hlines) {
        y0 = std::min(y0, l.y);
        y1 = std::max(y1, l.y);
    }
    if (!(x1 >= x0)) x0 = 0, x1 = 1;
    if (!(y1 >= y0)) y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    const double pad = y1 > y0 ? 0.05 * (y1 - y0) : 0.5;
    y0 -= pad;
    y1 += pad;

    const Frame f{x0, x1, y0, y1, 70, offset_y + 30, c.width - 190, c.height - 70};
    os << "<g>\n";
    os << "<text x=\"" << num(f.left + f.w / 2) << "\" y=\"" << num(offset_y + 18)
       << "\" text-anchor=\"middle\" font-size=\"14\">" << escape(c.title) << "</text>\n";
    os << "<rect x=\"" << num(f.left) << "\" y=\"" << num(f.top) << "\" width=\"" << num(f.w) << "\" height=\""
       << num(f.h) << "\" fill=\"none\" stroke=\"#444\"/>\n";

    const double xs = tick_step(x1 - x0), ys = tick_step(y1 - y0, 5);
    for (double t = std::ceil(x0 / xs) * xs; t <= x1 + 1e-9 * xs; t += xs) {
        os << "<line x1=\"" << num(f.px(t)) << "\" y1=\"" << num(f.top) << "\" x2=\"" << num(f.px(t)) << "\" y2=\""
           << num(f.top + f.h) << "\" stroke=\"#ddd\"/>\n";
        os << "<text x=\"" << num(f.px(t)) << "\" y=\"" << num(f.top + f.h + 14)
           << "\" text-anchor=\"middle\" font-size=\"10\">" << format_number(t, xs < 1 ? 2 : 0) << "</text>\n";
    }
    const int ydec = std::max(0, static_cast<int>(-std::floor(std::log10(ys))));
    for (double t = std::ceil(y0 / ys) * ys; t <= y1 + 1e-9 * ys; t += ys) {
        os << "<line x1=\"" << num(f.left) << "\" y1=\"" << num(f.py(t)) << "\" x2=\"" << num(f.left + f.w)
           << "\" y2=\"" << num(f.py(t)) << "\" stroke=\"#ddd\"/>\n";
        os << "<text x=\"" << num(f.left - 5) << "\" y=\"" << num(f.py(t) + 3)
           << "\" text-anchor=\"end\" font-size=\"10\">" << format_number(t, ydec) << "</text>\n";
    }
    os << "<text x=\"" << num(f.left + f.w / 2) << "\" y=\"" << num(f.top + f.h + 30)
       << "\" text-anchor=\"middle\" font-size=\"11\">" << escape(c.x_label) << "</text>\n";
    os << "<text transform=\"translate(" << num(f.left - 48) << "," << num(f.top + f.h / 2)
       << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"11\">" << escape(c.y_label) << "</text>\n";

    for (const auto& b : c.bands) {
        os << "<polygon fill=\"" << b.color << "\" fill-opacity=\"" << num(b.opacity) << "\" stroke=\"none\" points=\"";
        for (std::size_t i = 0; i < b.x.size(); ++i) os << num(f.px(b.x[i])) << ',' << num(f.py(b.hi[i])) << ' ';
        for (std::size_t i = b.x.size(); i-- > 0;) os << num(f.px(b.x[i])) << ',' << num(f.py(b.lo[i])) << ' ';
        os << "\"/>\n";
    }
    for (const auto& l : c.hlines) {
        os << "<line x1=\"" << num(f.left) << "\" y1=\"" << num(f.py(l.y)) << "\" x2=\"" << num(f.left + f.w)
           << "\" y2=\"" << num(f.py(l.y)) << "\" stroke=\"" << l.color << "\" stroke-dasharray=\"6,4\"/>\n";
    }
    for (const auto& s : c.series) {
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"" << num(s.width) << '"';
        if (s.dashed) os << " stroke-dasharray=\"4,3\"";
        os << " points=\"";
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            if (s.step && i > 0) os << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i - 1])) << ' ';
            os << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i])) << ' ';
        }
        os << "\"/>\n";
    }

    // legend
    double ly = f.top + 8;
    const auto entry = [&](const std::string& label, const std::string& color, bool dashed) {
        if (label.empty()) return;
        os << "<line x1=\"" << num(f.left + f.w + 10) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(f.left + f.w + 30)
           << "\" y2=\"" << num(ly) << "\" stroke=\"" << color << '"' << (dashed ? " stroke-dasharray=\"4,3\"" : "")
           << " stroke-width=\"2\"/>\n";
        os << "<text x=\"" << num(f.left + f.w + 34) << "\" y=\"" << num(ly + 4) << "\" font-size=\"10\">"
           << escape(label) << "</text>\n";
        ly += 15;
    };
    for (const auto& s : c.series) entry(s.label, s.color, s.dashed);
    for (const auto& l : c.hlines) entry(l.label, l.color, true);
    os << "</g>\n";
}

} // namespace detail

/// Charts stacked vertically in one document.
inline std::string render_svg(const std::vector<LineChart>& charts)
{
    double W = 0, H = 0;
    for (const auto& c : charts) {
        W = std::max(W, c.width);
        H += c.height;
    }
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::num(W) << "\" height=\"" << detail::num(H)
       << "\" viewBox=\"0 0 " << detail::num(W) << ' ' << detail::num(H) << "\" font-family=\"sans-serif\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    double y = 0;
    for (const auto& c : charts) {
        detail::render_chart(os, c, y);
        y += c.height;
    }
    os << "</svg>\n";
    return os.str();
}

inline void save_svg(const std::string& path, const std::vector<LineChart>& charts)
{
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path);
    f << render_svg(charts);
}

} // namespace tmpc::io
