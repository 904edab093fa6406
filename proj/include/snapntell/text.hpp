#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace snt::text {

/// Lowercase, split on non-alphanumerics, drop empties. Shared by every
/// metric and by the anonymity check so that they agree on what a token is.
inline std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

inline std::vector<std::string> split_whitespace(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        std::size_t j = i;
        while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
        if (j > i) out.emplace_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

inline std::string join(std::span<const std::string> parts, std::string_view sep = " ") {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out.append(sep);
        out.append(parts[i]);
    }
    return out;
}

/// Function words. Interrogatives are kept as content: they carry the
/// question's intent.
inline bool is_stopword(std::string_view token) {
    static const std::set<std::string, std::less<>> words = {
        "a",    "about", "all",   "an",    "and",   "any",   "are",  "as",   "at",
        "be",   "been",  "but",   "by",    "can",   "could", "did",  "do",   "does",
        "for",  "from",  "had",   "has",   "have",  "he",    "her",  "him",  "his",
        "i",    "if",    "in",    "into",  "is",    "it",    "its",  "me",   "my",
        "of",   "on",    "or",    "our",   "she",   "should", "so",  "than", "that",
        "the",  "their", "them",  "then",  "there", "these", "they", "this", "those",
        "to",   "was",   "we",    "were",  "will",  "with",  "would", "you", "your",
    };
    return words.contains(token);
}

/// Tokens that survive stopword removal.
inline std::vector<std::string> content_tokens(std::string_view s) {
    auto toks = tokenize(s);
    std::erase_if(toks, [](const std::string& t) { return is_stopword(t); });
    return toks;
}

/// Position of the first occurrence of `needle` as a contiguous run inside
/// `haystack`, or npos. An empty needle never matches.
inline std::size_t find_subsequence(std::span<const std::string> haystack,
                                    std::span<const std::string> needle) {
    if (needle.empty() || needle.size() > haystack.size()) return std::string::npos;
    auto it = std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end());
    return it == haystack.end() ? std::string::npos
                                : static_cast<std::size_t>(it - haystack.begin());
}

inline bool contains_phrase(std::span<const std::string> haystack, std::string_view phrase) {
    auto needle = tokenize(phrase);
    return find_subsequence(haystack, needle) != std::string::npos;
}

namespace detail {
inline constexpr std::string_view kB64 =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

inline std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += detail::kB64[(v >> 18) & 63];
        out += detail::kB64[(v >> 12) & 63];
        out += detail::kB64[(v >> 6) & 63];
        out += detail::kB64[v & 63];
    }
    if (std::size_t rest = bytes.size() - i; rest > 0) {
        std::uint32_t v = bytes[i] << 16;
        if (rest == 2) v |= bytes[i + 1] << 8;
        out += detail::kB64[(v >> 18) & 63];
        out += detail::kB64[(v >> 12) & 63];
        out += rest == 2 ? detail::kB64[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view s) {
    std::array<int, 256> lut{};
    lut.fill(-1);
    for (std::size_t i = 0; i < detail::kB64.size(); ++i)
        lut[static_cast<unsigned char>(detail::kB64[i])] = static_cast<int>(i);

    std::vector<std::uint8_t> out;
    std::uint32_t acc = 0;
    int bits = 0;
    for (char ch : s) {
        if (ch == '=') break;
        if (std::isspace(static_cast<unsigned char>(ch))) continue;
        int v = lut[static_cast<unsigned char>(ch)];
        if (v < 0) throw Error(ErrorKind::ParseError, "invalid base64 character");
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
        }
    }
    return out;
}

} // namespace snt::text
