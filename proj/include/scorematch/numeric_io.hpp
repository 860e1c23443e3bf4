#pragma once

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace scorematch {

// Shortest decimal form that round-trips to the same double. Used for all
// CSV output so repeated runs produce byte-identical files.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc()) throw std::runtime_error("format_double: to_chars failed");
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw std::runtime_error("parse_double: not a number: '" + s + "'");
    }
    return v;
}

// Hexadecimal float form for model files: exact, no rounding on round-trip.
inline std::string double_to_hex(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return std::string(buf);
}

inline double hex_to_double(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) {
        throw std::runtime_error("hex_to_double: bad literal: '" + s + "'");
    }
    return v;
}

}  // namespace scorematch
