#include "slowfast/svg.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <vector>

#include "slowfast/csv.hpp"
#include "slowfast/error.hpp"

namespace slowfast {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

std::string escape(const std::string& s) {
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

std::string num(double v) {
    // Two decimals keep the file small and stable.
    return format_double(std::round(v * 100.0) / 100.0);
}

}  // namespace

void write_loglog_svg(std::ostream& os, const std::string& title, const std::string& x_label,
                      const std::string& y_label, std::span<const double> xs,
                      std::span<const double> ys, std::optional<LogLogLine> line) {
    if (xs.size() != ys.size()) throw ArgumentError("plot coordinates differ in length");
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < xs.size(); ++i)
        if (xs[i] > 0.0 && ys[i] > 0.0 && std::isfinite(xs[i]) && std::isfinite(ys[i])) {
            lx.push_back(std::log10(xs[i]));
            ly.push_back(std::log10(ys[i]));
        }
    double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
    if (!lx.empty()) {
        x0 = std::floor(*std::min_element(lx.begin(), lx.end()));
        x1 = std::ceil(*std::max_element(lx.begin(), lx.end()));
        y0 = std::floor(*std::min_element(ly.begin(), ly.end()));
        y1 = std::ceil(*std::max_element(ly.begin(), ly.end()));
    }
    if (x1 <= x0) x1 = x0 + 1.0;
    if (y1 <= y0) y1 = y0 + 1.0;
    const double pw = kWidth - kLeft - kRight;
    const double ph = kHeight - kTop - kBottom;
    auto px = [&](double v) { return kLeft + (v - x0) / (x1 - x0) * pw; };
    auto py = [&](double v) { return kTop + (y1 - v) / (y1 - y0) * ph; };

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\""
       << num(kHeight) << "\" viewBox=\"0 0 " << num(kWidth) << ' ' << num(kHeight) << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << num(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" "
       << "font-family=\"sans-serif\" font-size=\"15\">" << escape(title) << "</text>\n";
    os << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(pw)
       << "\" height=\"" << num(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (double d = x0; d <= x1 + 1e-9; d += 1.0) {
        os << "<line x1=\"" << num(px(d)) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(px(d))
           << "\" y2=\"" << num(kTop + ph) << "\" stroke=\"#ddd\"/>\n";
        os << "<text x=\"" << num(px(d)) << "\" y=\"" << num(kTop + ph + 18)
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">1e"
           << static_cast<int>(d) << "</text>\n";
    }
    for (double d = y0; d <= y1 + 1e-9; d += 1.0) {
        os << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(py(d)) << "\" x2=\""
           << num(kLeft + pw) << "\" y2=\"" << num(py(d)) << "\" stroke=\"#ddd\"/>\n";
        os << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(py(d) + 4)
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">1e"
           << static_cast<int>(d) << "</text>\n";
    }
    os << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kHeight - 10)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
       << escape(x_label) << "</text>\n";
    os << "<text x=\"16\" y=\"" << num(kTop + ph / 2) << "\" text-anchor=\"middle\" "
       << "font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 16 "
       << num(kTop + ph / 2) << ")\">" << escape(y_label) << "</text>\n";
    if (line && !lx.empty()) {
        const double a = *std::min_element(lx.begin(), lx.end());
        const double b = *std::max_element(lx.begin(), lx.end());
        // log10 y = slope log10 x + intercept / ln 10
        auto fy = [&](double v) { return line->slope * v + line->intercept / std::log(10.0); };
        os << "<line x1=\"" << num(px(a)) << "\" y1=\"" << num(py(fy(a))) << "\" x2=\""
           << num(px(b)) << "\" y2=\"" << num(py(fy(b)))
           << "\" stroke=\"#c0392b\" stroke-width=\"1.5\"/>\n";
        os << "<text x=\"" << num(kLeft + pw - 6) << "\" y=\"" << num(kTop + 16)
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" "
           << "fill=\"#c0392b\">slope " << format_double(std::round(line->slope * 1000) / 1000)
           << "</text>\n";
    }
    for (std::size_t i = 0; i < lx.size(); ++i)
        os << "<circle cx=\"" << num(px(lx[i])) << "\" cy=\"" << num(py(ly[i]))
           << "\" r=\"4\" fill=\"#2c3e50\"/>\n";
    os << "</svg>\n";
}

}  // namespace slowfast
