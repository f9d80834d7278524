#pragma once

// UTF-8 and word-level text utilities shared by every module.
//
// Character classes are table-driven approximations of the Unicode general
// categories (L*, Nd, Zs/Cc whitespace) covering Latin, Greek, Cyrillic,
// Hebrew, Arabic, Devanagari, kana, Hangul and CJK ideographs. That is enough
// for the English/Spanish corpora this toolkit targets and keeps the library
// free of an ICU dependency.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace exposure::text {

inline constexpr char32_t kReplacement = 0xFFFD;

struct DecodedChar {
  char32_t cp;        // kReplacement for an invalid byte
  std::size_t length; // bytes consumed (>= 1)
};

/// Decodes one code point starting at `pos`. Invalid or truncated sequences
/// consume exactly one byte and report kReplacement.
DecodedChar decode_at(std::string_view s, std::size_t pos) noexcept;

std::vector<char32_t> decode(std::string_view s);
void append_utf8(std::string& out, char32_t cp);

bool is_letter(char32_t cp) noexcept;
bool is_mark(char32_t cp) noexcept;
bool is_digit(char32_t cp) noexcept;
bool is_space(char32_t cp) noexcept;
bool is_apostrophe(char32_t cp) noexcept;  // ' U+2018 U+2019

/// Lowercases ASCII and the Latin-1 supplement; other code points unchanged.
char32_t fold_char(char32_t cp) noexcept;
std::string fold_case(std::string_view s);

std::string trim(std::string_view s);

/// Regex-word scan: maximal runs of letters, digits and combining marks, with
/// apostrophes allowed only between two word characters. The two-character
/// newline escape (backslash, 'n') is treated as a separator.
std::vector<std::string_view> regex_words(std::string_view s);
std::size_t count_regex_words(std::string_view s);

/// Rule-based linguistic tokenizer: whitespace split, leading openers
/// (¿ ¡ " ' ( [) and trailing punctuation split off as separate tokens, and
/// English clitics (n't 's 'll 're 've 'd 'm) split from their host.
std::vector<std::string> linguistic_tokens(std::string_view s);

/// True when the token contains at least one letter or digit.
bool is_content_token(std::string_view token);

/// GPT-2-style reversible byte escape: every byte maps to one printable code
/// point, so escaped tokens never contain whitespace, tabs or newlines.
std::string escape_bytes(std::string_view raw);
std::string unescape_bytes(std::string_view escaped);

}  // namespace exposure::text
