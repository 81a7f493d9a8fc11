#include "skelimg/keyvalue.hpp"

#include <charconv>

#include "skelimg/error.hpp"

namespace skelimg {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void bad(std::string_view key, std::string_view value, const char* what) {
    throw Error(ErrorCode::invalid_spec,
                "'" + std::string(key) + "': '" + std::string(value) + "' is not " + what);
}

}  // namespace

std::map<std::string, std::string> parse_key_values(std::string_view text) {
    std::map<std::string, std::string> out;
    int line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorCode::invalid_spec, "line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key(trim(line.substr(0, eq)));
        if (!out.emplace(key, std::string(trim(line.substr(eq + 1)))).second) {
            throw Error(ErrorCode::invalid_spec, "line " + std::to_string(line_no) + ": repeated key '" + key + "'");
        }
    }
    return out;
}

int parse_int(std::string_view key, std::string_view value) {
    int v = 0;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || p != value.data() + value.size()) bad(key, value, "an integer");
    return v;
}

std::uint64_t parse_seed(std::string_view key, std::string_view value) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || p != value.data() + value.size()) bad(key, value, "an unsigned 64-bit integer");
    return v;
}

double parse_real(std::string_view key, std::string_view value) {
    double v = 0;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || p != value.data() + value.size()) bad(key, value, "a number");
    return v;
}

std::vector<int> parse_int_list(std::string_view key, std::string_view value) {
    std::vector<int> out;
    while (!value.empty()) {
        const auto comma = value.find(',');
        const std::string_view item = trim(value.substr(0, comma));
        value.remove_prefix(comma == std::string_view::npos ? value.size() : comma + 1);
        if (item.empty()) continue;
        if (const auto dash = item.find('-'); dash != std::string_view::npos && dash > 0) {
            const int lo = parse_int(key, trim(item.substr(0, dash)));
            const int hi = parse_int(key, trim(item.substr(dash + 1)));
            if (hi < lo) bad(key, item, "an increasing range");
            for (int v = lo; v <= hi; ++v) out.push_back(v);
        } else {
            out.push_back(parse_int(key, item));
        }
    }
    return out;
}

}  // namespace skelimg
