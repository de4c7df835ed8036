#pragma once

// Small helpers for the plain-text and CSV files the toolkit reads and writes.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace normwatch {

// Shortest decimal form that parses back to the same double.
inline std::string format_double(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) throw std::runtime_error("format_double failed");
    return std::string(buf, end);
}

// Fixed-point rendering for human-facing tables.
std::string format_fixed(double value, int decimals);

inline double parse_double(std::string_view text) {
    double value = 0.0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || end != text.data() + text.size())
        throw std::invalid_argument("not a number: '" + std::string(text) + "'");
    return value;
}

inline std::int64_t parse_int(std::string_view text) {
    std::int64_t value = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || end != text.data() + text.size())
        throw std::invalid_argument("not an integer: '" + std::string(text) + "'");
    return value;
}

std::vector<std::string> split(std::string_view text, char sep);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Index of a header column; throws when absent.
    std::size_t column(std::string_view name) const;
};

// Minimal CSV: comma separated, no quoting. Header row required.
CsvTable read_csv(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace normwatch
