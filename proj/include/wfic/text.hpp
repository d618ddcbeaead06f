#pragma once

#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "wfic/error.hpp"

namespace wfic::text {

/// Shortest decimal form that round-trips to the same double.
inline std::string fmt(double x) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s) {
    double x = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
        throw ContractError("cannot parse number '" + std::string(s) + "'");
    }
    return x;
}

inline long long parse_int(std::string_view s) {
    long long x = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
        throw ContractError("cannot parse integer '" + std::string(s) + "'");
    }
    return x;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace wfic::text
