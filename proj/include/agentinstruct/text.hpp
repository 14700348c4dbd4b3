#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "agentinstruct/util.hpp"

namespace agentinstruct {

enum class ParserId {
    identity,
    first_number,
    first_letter,
    last_letter_concat,
    yes_no_to_true_false,
};

inline std::string parser_id_name(ParserId id) {
    switch (id) {
        case ParserId::identity: return "identity";
        case ParserId::first_number: return "first-number";
        case ParserId::first_letter: return "first-letter";
        case ParserId::last_letter_concat: return "last-letter-concat";
        case ParserId::yes_no_to_true_false: return "yes-no-to-true-false";
    }
    return "identity";
}

inline std::optional<ParserId> parser_id_from_name(std::string_view name) {
    if (name == "identity") return ParserId::identity;
    if (name == "first-number" || name == "first_number") return ParserId::first_number;
    if (name == "first-letter" || name == "first_letter") return ParserId::first_letter;
    if (name == "last-letter-concat" || name == "last_letter_concat") return ParserId::last_letter_concat;
    if (name == "yes-no-to-true-false" || name == "yes_no_to_true_false") return ParserId::yes_no_to_true_false;
    return std::nullopt;
}

namespace detail {

// Decodes one UTF-8 code point; malformed bytes pass through as single units.
inline uint32_t next_codepoint(std::string_view s, size_t& i) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    if (c < 0x80) {
        ++i;
        return c;
    }
    int extra = 0;
    uint32_t cp = 0;
    if ((c & 0xE0) == 0xC0) { extra = 1; cp = c & 0x1F; }
    else if ((c & 0xF0) == 0xE0) { extra = 2; cp = c & 0x0F; }
    else if ((c & 0xF8) == 0xF0) { extra = 3; cp = c & 0x07; }
    else { ++i; return c; }
    size_t j = i + 1;
    for (int k = 0; k < extra; ++k, ++j) {
        if (j >= s.size() || (static_cast<unsigned char>(s[j]) & 0xC0) != 0x80) {
            ++i;
            return c;
        }
        cp = (cp << 6) | (static_cast<unsigned char>(s[j]) & 0x3F);
    }
    i = j;
    return cp;
}

inline void append_codepoint(std::string& out, uint32_t cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

inline bool is_space_cp(uint32_t cp) {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v' ||
           cp == 0x00A0 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 || cp == 0x2029 ||
           cp == 0x202F || cp == 0x205F || cp == 0x3000;
}

// ASCII punctuation plus the common Unicode punctuation blocks (general
// punctuation, supplemental, CJK symbols, fullwidth forms, latin-1 marks).
inline bool is_punct_cp(uint32_t cp) {
    if (cp < 0x80) {
        return std::ispunct(static_cast<int>(cp)) != 0;
    }
    if (is_space_cp(cp)) {
        return false;
    }
    if (cp >= 0x2000 && cp <= 0x206F) return true;
    if (cp >= 0x2E00 && cp <= 0x2E7F) return true;
    if (cp >= 0x3001 && cp <= 0x303F) return true;
    if (cp >= 0xFF01 && cp <= 0xFF0F) return true;
    if (cp >= 0xFF1A && cp <= 0xFF20) return true;
    if (cp >= 0xFF3B && cp <= 0xFF40) return true;
    if (cp >= 0xFF5B && cp <= 0xFF65) return true;
    switch (cp) {
        case 0x00A1: case 0x00A6: case 0x00A7: case 0x00AB: case 0x00B6:
        case 0x00B7: case 0x00BB: case 0x00BF:
            return true;
        default:
            return false;
    }
}

}  // namespace detail

// SQuAD-style answer normalization: lowercase, drop punctuation, drop the
// articles a/an/the, collapse whitespace runs, trim.
inline std::string normalize(std::string_view s) {
    std::string lowered;
    lowered.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) {
        uint32_t cp = detail::next_codepoint(s, i);
        if (detail::is_punct_cp(cp)) {
            continue;
        }
        if (detail::is_space_cp(cp)) {
            lowered += ' ';
            continue;
        }
        if (cp < 0x80) {
            lowered += static_cast<char>(std::tolower(static_cast<int>(cp)));
        } else {
            detail::append_codepoint(lowered, cp);
        }
    }
    std::string out;
    out.reserve(lowered.size());
    size_t pos = 0;
    while (pos < lowered.size()) {
        while (pos < lowered.size() && lowered[pos] == ' ') ++pos;
        size_t end = pos;
        while (end < lowered.size() && lowered[end] != ' ') ++end;
        if (end > pos) {
            std::string_view tok(lowered.data() + pos, end - pos);
            if (tok != "a" && tok != "an" && tok != "the") {
                if (!out.empty()) out += ' ';
                out.append(tok);
            }
        }
        pos = end;
    }
    return out;
}

inline std::vector<std::string> normalized_tokens(std::string_view s) {
    std::vector<std::string> tokens;
    std::string n = normalize(s);
    size_t pos = 0;
    while (pos < n.size()) {
        size_t end = n.find(' ', pos);
        if (end == std::string::npos) end = n.size();
        tokens.emplace_back(n.substr(pos, end - pos));
        pos = end + 1;
    }
    return tokens;
}

// Models tend to lead their final answer with a label such as "Answer:",
// "Answer (yes or no):" or "Sentiment:".  Strip one such tag when present and
// something remains after it.
inline std::string strip_answer_tag(std::string_view s) {
    static const std::array<std::string_view, 7> kTags = {
        "final answer", "answer", "sentiment", "label", "output", "prediction", "response",
    };
    std::string trimmed = trim(s);
    std::string lowered = trimmed;
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (std::string_view tag : kTags) {
        if (!starts_with(lowered, tag)) {
            continue;
        }
        size_t pos = tag.size();
        while (pos < trimmed.size() && trimmed[pos] == ' ') ++pos;
        if (pos < trimmed.size() && trimmed[pos] == '(') {
            size_t close = trimmed.find(')', pos);
            if (close == std::string::npos) continue;
            pos = close + 1;
            while (pos < trimmed.size() && trimmed[pos] == ' ') ++pos;
        }
        if (pos >= trimmed.size() || trimmed[pos] != ':') {
            continue;
        }
        std::string rest = trim(std::string_view(trimmed).substr(pos + 1));
        if (!rest.empty()) {
            return rest;
        }
    }
    return trimmed;
}

// First decimal numeral: optional sign, thousands separators removed,
// optional fraction part.  No scientific notation.
inline std::optional<std::string> parse_first_number(std::string_view raw) {
    std::string s = strip_answer_tag(raw);
    for (size_t i = 0; i < s.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) {
            continue;
        }
        std::string num;
        if (i > 0 && (s[i - 1] == '-' || s[i - 1] == '+')) {
            if (s[i - 1] == '-') num += '-';
        }
        size_t j = i;
        while (j < s.size()) {
            char c = s[j];
            if (std::isdigit(static_cast<unsigned char>(c))) {
                num += c;
                ++j;
            } else if (c == ',' && j + 1 < s.size() &&
                       std::isdigit(static_cast<unsigned char>(s[j + 1]))) {
                ++j;  // thousands separator
            } else {
                break;
            }
        }
        if (j < s.size() && s[j] == '.' && j + 1 < s.size() &&
            std::isdigit(static_cast<unsigned char>(s[j + 1]))) {
            num += '.';
            ++j;
            while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) {
                num += s[j];
                ++j;
            }
        }
        return num;
    }
    return std::nullopt;
}

// First alphabetic character, uppercased ("Answer: (G" -> "G").
inline std::optional<std::string> parse_first_letter(std::string_view raw) {
    std::string s = strip_answer_tag(raw);
    for (char c : s) {
        if (std::isalpha(static_cast<unsigned char>(c))) {
            return std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
        }
    }
    return std::nullopt;
}

// Strip whitespace and punctuation, keep the first two characters, lowercased.
// Fewer than two characters left -> return what remains.
inline std::string parse_last_letter_concat(std::string_view raw) {
    std::string s = strip_answer_tag(raw);
    std::string kept;
    size_t i = 0;
    while (i < s.size() && kept.size() < 2) {
        size_t before = i;
        uint32_t cp = detail::next_codepoint(s, i);
        if (detail::is_space_cp(cp) || detail::is_punct_cp(cp)) {
            continue;
        }
        if (cp < 0x80) {
            kept += static_cast<char>(std::tolower(static_cast<int>(cp)));
        } else {
            kept.append(s.substr(before, i - before));
        }
    }
    return kept;
}

// Normalized "yes"/"no" map to the given label pair; anything else passes
// through untouched (modulo tag stripping).
inline std::string map_yes_no(std::string_view raw, std::string_view affirmative = "True",
                              std::string_view negative = "False") {
    std::string s = strip_answer_tag(raw);
    std::string n = normalize(s);
    if (n == "yes") return std::string(affirmative);
    if (n == "no") return std::string(negative);
    return s;
}

// Applies the task's parser; an absent value scores as a wrong answer, never
// as a failure.
inline std::string parse_answer(ParserId id, std::string_view text,
                                std::string_view affirmative = "True",
                                std::string_view negative = "False") {
    switch (id) {
        case ParserId::identity:
            return strip_answer_tag(text);
        case ParserId::first_number:
            return parse_first_number(text).value_or("");
        case ParserId::first_letter:
            return parse_first_letter(text).value_or("");
        case ParserId::last_letter_concat:
            return parse_last_letter_concat(text);
        case ParserId::yes_no_to_true_false:
            return map_yes_no(text, affirmative, negative);
    }
    return std::string(text);
}

}  // namespace agentinstruct
