#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ttransport {

namespace detail {

inline bool is_token_byte(unsigned char c) noexcept {
    // Bytes >= 0x80 belong to multi-byte UTF-8 sequences and stay inside tokens.
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

inline bool is_space(unsigned char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline char to_lower_ascii(char c) noexcept {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

} // namespace detail

/// Lowercases ASCII letters and splits on every non-alphanumeric byte. Empty tokens are dropped.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        if (detail::is_token_byte(static_cast<unsigned char>(ch))) {
            current.push_back(detail::to_lower_ascii(ch));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

/// Splits after '.', '!' or '?' when followed by whitespace or end of text.
/// Returns the whole (trimmed) text as one sentence when no boundary exists.
inline std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    auto push_trimmed = [&out](std::string_view s) {
        std::size_t b = 0, e = s.size();
        while (b < e && detail::is_space(static_cast<unsigned char>(s[b]))) ++b;
        while (e > b && detail::is_space(static_cast<unsigned char>(s[e - 1]))) --e;
        if (e > b) out.emplace_back(s.substr(b, e - b));
    };
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c != '.' && c != '!' && c != '?') continue;
        const bool boundary = i + 1 == text.size() || detail::is_space(static_cast<unsigned char>(text[i + 1]));
        if (boundary) {
            push_trimmed(text.substr(start, i + 1 - start));
            start = i + 1;
        }
    }
    if (start < text.size()) push_trimmed(text.substr(start));
    return out;
}

} // namespace ttransport
