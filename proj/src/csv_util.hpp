#pragma once

#include <charconv>
#include <string>
#include <vector>

#include "matchdiag/errors.hpp"

namespace matchdiag::csv {

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            out.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    out.push_back(field);
    return out;
}

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

// '*' wildcards only
inline bool glob_match(const std::string& pattern, const std::string& name) {
    std::size_t p = 0, n = 0, star = std::string::npos, mark = 0;
    while (n < name.size()) {
        if (p < pattern.size() && (pattern[p] == name[n])) {
            ++p;
            ++n;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = n;
        } else if (star != std::string::npos) {
            p = star + 1;
            n = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

inline double parse_double(const std::string& raw, std::size_t line_no, const std::string& col) {
    const std::string s = trim(raw);
    if (s.empty())
        throw ParseError(ParseError::Kind::NonFiniteCovariate,
                         "row " + std::to_string(line_no) + ": empty value in column " + col);
    double value = 0.0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end)
        throw ParseError(ParseError::Kind::NonFiniteCovariate,
                         "row " + std::to_string(line_no) + ": cannot parse '" + s +
                             "' in column " + col);
    return value;
}

}  // namespace matchdiag::csv
