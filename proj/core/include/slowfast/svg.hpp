#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>

namespace slowfast {

/// Straight line log y = slope * log x + intercept drawn over the data range.
struct LogLogLine {
    double slope = 0.0;
    double intercept = 0.0;
};

/// Self-contained SVG scatter plot on log-log axes with an optional fitted
/// line. Points with non-positive coordinates are skipped.
void write_loglog_svg(std::ostream& os, const std::string& title, const std::string& x_label,
                      const std::string& y_label, std::span<const double> xs,
                      std::span<const double> ys, std::optional<LogLogLine> line = std::nullopt);

}  // namespace slowfast
