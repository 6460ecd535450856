#include "attnscope/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "attnscope/util.hpp"

namespace attnscope::svg {

namespace {

using util::fmt_double;

struct Stop {
    int r, g, b;
};

const Stop kStops[8] = {{0x44, 0x01, 0x54}, {0x46, 0x32, 0x7e}, {0x36, 0x5c, 0x8d},
                        {0x27, 0x7f, 0x8e}, {0x1f, 0xa1, 0x87}, {0x4a, 0xc1, 0x6d},
                        {0xa0, 0xda, 0x39}, {0xfd, 0xe7, 0x25}};

std::string hex_rgb(int r, int g, int b) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

}  // namespace

std::string ramp_color(double t) {
    if (!(t >= 0.0)) t = 0.0;
    if (t > 1.0) t = 1.0;
    double x = t * 7.0;
    int i = std::min(6, static_cast<int>(x));
    double f = x - i;
    const Stop& a = kStops[i];
    const Stop& b = kStops[i + 1];
    auto mix = [f](int u, int v) { return static_cast<int>(std::lround(u + f * (v - u))); };
    return hex_rgb(mix(a.r, b.r), mix(a.g, b.g), mix(a.b, b.b));
}

std::string render_heatmap(const heatmap::Heatmap& m, int cell_px) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double v : m.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double range = hi - lo;
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << m.grid.cols * cell_px
        << "\" height=\"" << m.grid.rows * cell_px << "\">\n";
    for (int r = 0; r < m.grid.rows; ++r)
        for (int c = 0; c < m.grid.cols; ++c) {
            double t = range > 0 ? (m.at(r, c) - lo) / range : 0.0;
            out << "<rect x=\"" << c * cell_px << "\" y=\"" << r * cell_px << "\" width=\""
                << cell_px << "\" height=\"" << cell_px << "\" fill=\"" << ramp_color(t)
                << "\"/>\n";
        }
    out << "</svg>\n";
    return out.str();
}

std::string render_scatter(const std::vector<Series>& series, const std::string& x_label,
                           const std::string& y_label, const std::string& title) {
    const int width = 640, height = 480;
    const int px0 = 70, px1 = width - 24;
    const int py0 = 40, py1 = height - 56;
    const double plot_w = px1 - px0, plot_h = py1 - py0;

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series)
        for (auto [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (!(xmin <= xmax)) {
        xmin = 0;
        xmax = 1;
        ymin = 0;
        ymax = 1;
    }
    if (xmax - xmin < 1e-12) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (ymax - ymin < 1e-12) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    double xpad = 0.05 * (xmax - xmin), ypad = 0.05 * (ymax - ymin);
    xmin -= xpad;
    xmax += xpad;
    ymin -= ypad;
    ymax += ypad;

    auto sx = [&](double x) { return px0 + (x - xmin) / (xmax - xmin) * plot_w; };
    auto sy = [&](double y) { return py1 - (y - ymin) / (ymax - ymin) * plot_h; };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" font-family=\"sans-serif\">\n";
    out << "<defs><clipPath id=\"plot\"><rect x=\"" << px0 << "\" y=\"" << py0 << "\" width=\""
        << px1 - px0 << "\" height=\"" << py1 - py0 << "\"/></clipPath></defs>\n";
    out << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    if (!title.empty())
        out << "<text x=\"" << (px0 + px1) / 2 << "\" y=\"24\" text-anchor=\"middle\" "
            << "font-size=\"15\">" << title << "</text>\n";

    out << "<line x1=\"" << px0 << "\" y1=\"" << py1 << "\" x2=\"" << px1 << "\" y2=\"" << py1
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << px0 << "\" y1=\"" << py0 << "\" x2=\"" << px0 << "\" y2=\"" << py1
        << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        double fx = xmin + (xmax - xmin) * i / 4.0;
        double fy = ymin + (ymax - ymin) * i / 4.0;
        std::string tx = fmt_double(sx(fx)), ty = fmt_double(sy(fy));
        out << "<line x1=\"" << tx << "\" y1=\"" << py1 << "\" x2=\"" << tx << "\" y2=\""
            << py1 + 5 << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << tx << "\" y=\"" << py1 + 20
            << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt_double(fx, 3) << "</text>\n";
        out << "<line x1=\"" << px0 - 5 << "\" y1=\"" << ty << "\" x2=\"" << px0 << "\" y2=\""
            << ty << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << px0 - 8 << "\" y=\"" << ty
            << "\" text-anchor=\"end\" dominant-baseline=\"middle\" font-size=\"11\">"
            << fmt_double(fy, 3) << "</text>\n";
    }
    out << "<text x=\"" << (px0 + px1) / 2 << "\" y=\"" << height - 12
        << "\" text-anchor=\"middle\" font-size=\"13\">" << x_label << "</text>\n";
    out << "<text x=\"18\" y=\"" << (py0 + py1) / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
        << (py0 + py1) / 2 << ")\">" << y_label << "</text>\n";

    out << "<g clip-path=\"url(#plot)\">\n";
    for (const auto& s : series) {
        for (auto [x, y] : s.points)
            out << "<circle cx=\"" << fmt_double(sx(x)) << "\" cy=\"" << fmt_double(sy(y))
                << "\" r=\"3.5\" fill=\"" << s.color << "\" fill-opacity=\"0.75\"/>\n";
        if (s.fit && !s.points.empty()) {
            double lo = s.points.front().first, hi = lo;
            for (auto [x, y] : s.points) {
                lo = std::min(lo, x);
                hi = std::max(hi, x);
            }
            double y0 = s.fit->slope * lo + s.fit->intercept;
            double y1 = s.fit->slope * hi + s.fit->intercept;
            out << "<line x1=\"" << fmt_double(sx(lo)) << "\" y1=\"" << fmt_double(sy(y0))
                << "\" x2=\"" << fmt_double(sx(hi)) << "\" y2=\"" << fmt_double(sy(y1))
                << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
        }
    }
    out << "</g>\n";

    int ly = py0 + 14;
    for (const auto& s : series) {
        out << "<rect x=\"" << px1 - 160 << "\" y=\"" << ly - 9
            << "\" width=\"10\" height=\"10\" fill=\"" << s.color << "\"/>\n";
        out << "<text x=\"" << px1 - 146 << "\" y=\"" << ly << "\" font-size=\"12\">" << s.label
            << "</text>\n";
        ly += 18;
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace attnscope::svg
