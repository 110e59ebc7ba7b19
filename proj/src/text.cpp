#include "dermdx/text.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace dermdx::text {

bool is_alpha(char c) noexcept {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

bool is_alnum(char c) noexcept { return is_alpha(c) || (c >= '0' && c <= '9'); }

bool is_space(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

std::vector<std::string> split_lines(std::string_view s) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto nl = s.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.emplace_back(s.substr(start));
            break;
        }
        auto line = s.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.emplace_back(line);
        start = nl + 1;
    }
    return lines;
}

bool istarts_with(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    return to_lower(s.substr(0, prefix.size())) == to_lower(prefix);
}

std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        auto open = tmpl.find("{{", i);
        if (open == std::string_view::npos) {
            out.append(tmpl.substr(i));
            break;
        }
        auto close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos) {
            out.append(tmpl.substr(i));
            break;
        }
        out.append(tmpl.substr(i, open - i));
        auto key = std::string(tmpl.substr(open + 2, close - open - 2));
        if (auto it = vars.find(key); it != vars.end()) {
            out.append(it->second);
        } else {
            out.append(tmpl.substr(open, close + 2 - open));
        }
        i = close + 2;
    }
    return out;
}

std::vector<Mention> find_mentions(std::string_view haystack,
                                   const std::vector<std::string>& needles) {
    std::vector<std::size_t> order(needles.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return needles[a].size() > needles[b].size();
    });

    std::vector<bool> claimed(haystack.size(), false);
    std::vector<Mention> found;
    for (auto idx : order) {
        const auto& needle = needles[idx];
        if (needle.empty()) continue;
        std::size_t from = 0;
        while (from < haystack.size()) {
            auto pos = haystack.find(needle, from);
            if (pos == std::string_view::npos) break;
            auto end = pos + needle.size();
            bool left_ok = pos == 0 || !is_alnum(haystack[pos - 1]);
            bool right_ok = end >= haystack.size() || !is_alnum(haystack[end]);
            bool free = std::none_of(claimed.begin() + static_cast<std::ptrdiff_t>(pos),
                                     claimed.begin() + static_cast<std::ptrdiff_t>(end),
                                     [](bool b) { return b; });
            if (left_ok && right_ok && free) {
                std::fill(claimed.begin() + static_cast<std::ptrdiff_t>(pos),
                          claimed.begin() + static_cast<std::ptrdiff_t>(end), true);
                found.push_back({idx, pos, needle.size()});
            }
            from = pos + 1;
        }
    }
    std::sort(found.begin(), found.end(),
              [](const Mention& a, const Mention& b) { return a.pos < b.pos; });
    return found;
}

long long read_integer(std::string_view s, std::size_t& pos) {
    constexpr long long cap = std::numeric_limits<long long>::max() / 10 - 10;
    long long v = 0;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
        if (v < cap) v = v * 10 + (s[pos] - '0');
        ++pos;
    }
    return v;
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace dermdx::text
