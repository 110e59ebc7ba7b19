#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace dermdx::text {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
bool istarts_with(std::string_view s, std::string_view prefix);

/// ASCII letter/digit test that is safe for any byte value.
bool is_alnum(char c) noexcept;
bool is_alpha(char c) noexcept;
bool is_space(char c) noexcept;

/// Substitutes `{{key}}` placeholders. Unknown keys are left in place so a
/// template edit shows up in the rendered prompt instead of vanishing.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars);

/// A candidate name occurrence inside a lowercased haystack.
struct Mention {
    std::size_t candidate = 0; ///< index into the needle list
    std::size_t pos = 0;
    std::size_t len = 0;
};

/// Finds whole-word occurrences of `needles` (already lowercase) in `haystack`
/// (already lowercase). Longer needles claim their spans first, so "eczema"
/// never matches inside "chronic eczema". Result is ordered by position.
std::vector<Mention> find_mentions(std::string_view haystack,
                                   const std::vector<std::string>& needles);

/// Reads a decimal integer starting at `pos` (digits only). Saturates instead
/// of overflowing so absurd inputs still produce an out-of-range value.
long long read_integer(std::string_view s, std::size_t& pos);

std::uint64_t fnv1a64(std::string_view bytes) noexcept;

} // namespace dermdx::text
