#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace slowfast {

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double v);

/// Small CSV emitter: `# key: value` comment lines, one header row, then rows.
/// Output is a pure function of the calls made (no timestamps, no locale).
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& os) : os_(os) {}

    void comment(std::string_view key, std::string_view value);
    void header(std::span<const std::string> columns);
    void header(std::initializer_list<std::string_view> columns);
    void row(std::span<const double> values);
    void row(std::initializer_list<double> values);
    /// Mixed row: pre-formatted cells.
    void raw_row(std::span<const std::string> cells);

private:
    std::ostream& os_;
};

/// 64-bit FNV-1a, used for config fingerprints.
std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

}  // namespace slowfast
