#pragma once

// Helpers shared by the line-oriented text formats.

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "splate/error.hpp"

namespace splate::text {

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double x)
{
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    if (ec != std::errc{}) {
        throw format_error("cannot format number");
    }
    return {buf, end};
}

inline std::string format_fixed(double x, int precision)
{
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::fixed, precision);
    if (ec != std::errc{}) {
        throw format_error("cannot format number");
    }
    return {buf, end};
}

template <class T>
T parse_number(std::string_view s, const std::string& where)
{
    T value{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
        throw format_error(where + ": cannot parse number \"" + std::string(s) + "\"");
    }
    return value;
}

inline std::vector<std::string_view> split(std::string_view s, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

/// Splits on runs of spaces; no empty fields.
inline std::vector<std::string_view> split_ws(std::string_view s)
{
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) {
            ++i;
        }
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t') {
            ++j;
        }
        if (j > i) {
            out.push_back(s.substr(i, j - i));
        }
        i = j;
    }
    return out;
}

/// Lines without trailing '\r'; a final empty line is dropped.
inline std::vector<std::string_view> lines(std::string_view s)
{
    auto out = split(s, '\n');
    if (!out.empty() && out.back().empty()) {
        out.pop_back();
    }
    for (auto& l : out) {
        if (!l.empty() && l.back() == '\r') {
            l.remove_suffix(1);
        }
    }
    return out;
}

}  // namespace splate::text
