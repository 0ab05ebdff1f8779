#ifndef MFG_SVG_HPP
#define MFG_SVG_HPP

// Tiny static SVG writer for the batch plots: line series and shaded
// quantile bands, linear or log-scaled ordinate. No dependencies.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace mfg::svg {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "#1f6fb4";
};

struct Band {
    std::vector<double> x;
    std::vector<double> lo;
    std::vector<double> hi;
    std::string color = "#a6c9e6";
};

struct Plot {
    std::string title;
    std::string xlabel;
    std::string ylabel;
    std::vector<Series> series;
    std::vector<Band> bands;
    bool log_y = false;
    int width = 720;
    int height = 480;
};

namespace detail {
inline std::string num(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}
} // namespace detail

inline void write(const std::string& path, const Plot& p) {
    const double ml = 70, mr = 20, mt = 40, mb = 55;
    const double pw = p.width - ml - mr, ph = p.height - mt - mb;
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    auto take = [&](double x, double y) {
        if (p.log_y && y <= 0.0) return;
        const double yy = p.log_y ? std::log10(y) : y;
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, yy);
        y1 = std::max(y1, yy);
    };
    for (const auto& s : p.series)
        for (std::size_t i = 0; i < s.x.size(); ++i) take(s.x[i], s.y[i]);
    for (const auto& b : p.bands)
        for (std::size_t i = 0; i < b.x.size(); ++i) {
            take(b.x[i], b.lo[i]);
            take(b.x[i], b.hi[i]);
        }
    if (x0 > x1) { x0 = 0; x1 = 1; }
    if (y0 > y1) { y0 = 0; y1 = 1; }
    if (x1 - x0 < 1e-12) x1 = x0 + 1;
    if (y1 - y0 < 1e-12) y1 = y0 + 1;

    auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) {
        const double yy = p.log_y ? std::log10(std::max(y, 1e-300)) : y;
        return mt + ph - (yy - y0) / (y1 - y0) * ph;
    };

    std::ofstream out(path);
    if (!out) throw std::runtime_error("svg::write: cannot open " + path);
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << p.width << "\" height=\""
        << p.height << "\" viewBox=\"0 0 " << p.width << " " << p.height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << p.width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"16\">" << p.title << "</text>\n";

    // Axes and ticks.
    out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int t = 0; t <= 5; ++t) {
        const double fx = x0 + (x1 - x0) * t / 5.0;
        const double fy = y0 + (y1 - y0) * t / 5.0;
        out << "<line x1=\"" << px(fx) << "\" y1=\"" << mt + ph << "\" x2=\"" << px(fx)
            << "\" y2=\"" << mt + ph + 5 << "\" stroke=\"#444\"/>\n";
        out << "<text x=\"" << px(fx) << "\" y=\"" << mt + ph + 20
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << detail::num(fx) << "</text>\n";
        const double ylab = p.log_y ? std::pow(10.0, fy) : fy;
        const double ypix = mt + ph - ph * t / 5.0;
        out << "<line x1=\"" << ml - 5 << "\" y1=\"" << ypix << "\" x2=\"" << ml << "\" y2=\""
            << ypix << "\" stroke=\"#444\"/>\n";
        out << "<text x=\"" << ml - 8 << "\" y=\"" << ypix + 4
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
            << detail::num(ylab) << "</text>\n";
    }
    out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << p.height - 12
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << p.xlabel
        << "</text>\n";
    out << "<text x=\"16\" y=\"" << mt + ph / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
        << "transform=\"rotate(-90 16 " << mt + ph / 2 << ")\">" << p.ylabel << "</text>\n";

    for (const auto& b : p.bands) {
        out << "<polygon fill=\"" << b.color << "\" fill-opacity=\"0.55\" stroke=\"none\" points=\"";
        for (std::size_t i = 0; i < b.x.size(); ++i)
            out << px(b.x[i]) << "," << py(b.hi[i]) << " ";
        for (std::size_t i = b.x.size(); i-- > 0;)
            out << px(b.x[i]) << "," << py(b.lo[i]) << " ";
        out << "\"/>\n";
    }
    int li = 0;
    for (const auto& s : p.series) {
        out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.6\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (p.log_y && s.y[i] <= 0.0) continue;
            out << px(s.x[i]) << "," << py(s.y[i]) << " ";
        }
        out << "\"/>\n";
        out << "<text x=\"" << ml + pw - 6 << "\" y=\"" << mt + 16 + 16 * li
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" fill=\""
            << s.color << "\">" << s.label << "</text>\n";
        ++li;
    }
    out << "</svg>\n";
}

} // namespace mfg::svg

#endif
