#include "exposure/text.hpp"

#include <array>
#include <stdexcept>

namespace exposure::text {
namespace {

struct Range {
  char32_t lo;
  char32_t hi;
};

constexpr Range kLetterRanges[] = {
    {0x0041, 0x005A}, {0x0061, 0x007A}, {0x00AA, 0x00AA}, {0x00B5, 0x00B5},
    {0x00BA, 0x00BA}, {0x00C0, 0x00D6}, {0x00D8, 0x00F6}, {0x00F8, 0x02C1},
    {0x02C6, 0x02D1}, {0x02E0, 0x02E4}, {0x0370, 0x0374}, {0x0376, 0x037D},
    {0x0386, 0x0386}, {0x0388, 0x03FF}, {0x0400, 0x0481}, {0x048A, 0x052F},
    {0x0531, 0x0556}, {0x0561, 0x0587}, {0x05D0, 0x05EA}, {0x0620, 0x064A},
    {0x0671, 0x06D3}, {0x0904, 0x0939}, {0x0E01, 0x0E30}, {0x10A0, 0x10FF},
    {0x1E00, 0x1FBC}, {0x1FC2, 0x1FFC}, {0x3041, 0x3096}, {0x30A1, 0x30FA},
    {0x3400, 0x4DBF}, {0x4E00, 0x9FFF}, {0xAC00, 0xD7A3}, {0xFF21, 0xFF3A},
    {0xFF41, 0xFF5A},
};

constexpr Range kMarkRanges[] = {
    {0x0300, 0x036F}, {0x0483, 0x0489}, {0x0591, 0x05BD}, {0x064B, 0x065F},
    {0x093A, 0x094F}, {0x1AB0, 0x1AFF}, {0x1DC0, 0x1DFF}, {0x20D0, 0x20FF},
    {0xFE20, 0xFE2F},
};

constexpr Range kDigitRanges[] = {
    {0x0030, 0x0039}, {0x0660, 0x0669}, {0x06F0, 0x06F9},
    {0x0966, 0x096F}, {0xFF10, 0xFF19},
};

template <std::size_t N>
bool in_ranges(const Range (&ranges)[N], char32_t cp) noexcept {
  for (const auto& r : ranges) {
    if (cp < r.lo) return false;
    if (cp <= r.hi) return true;
  }
  return false;
}

bool is_word_char(char32_t cp) noexcept {
  return is_letter(cp) || is_digit(cp) || is_mark(cp);
}

bool is_opener(char32_t cp) noexcept {
  switch (cp) {
    case U'¿': case U'¡': case U'"': case U'\'': case U'(': case U'[':
    case U'“': case U'‘': case U'«':
      return true;
    default:
      return false;
  }
}

bool is_trailing_punct(char32_t cp) noexcept {
  switch (cp) {
    case U'.': case U',': case U'!': case U'?': case U';': case U':':
    case U')': case U']': case U'"': case U'\'': case U'…':
    case U'”': case U'’': case U'»':
      return true;
    default:
      return false;
  }
}

// Splits on whitespace and on the literal "\n" escape.
std::vector<std::string_view> whitespace_chunks(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = std::string_view::npos;
  std::size_t pos = 0;
  auto flush = [&](std::size_t end) {
    if (start != std::string_view::npos && end > start) out.push_back(s.substr(start, end - start));
    start = std::string_view::npos;
  };
  while (pos < s.size()) {
    if (s[pos] == '\\' && pos + 1 < s.size() && s[pos + 1] == 'n') {
      flush(pos);
      pos += 2;
      continue;
    }
    auto d = decode_at(s, pos);
    if (is_space(d.cp)) {
      flush(pos);
    } else if (start == std::string_view::npos) {
      start = pos;
    }
    pos += d.length;
  }
  flush(pos);
  return out;
}

std::array<char32_t, 256> build_byte_table() {
  std::array<char32_t, 256> table{};
  std::array<bool, 256> direct{};
  for (int b = '!'; b <= '~'; ++b) direct[b] = true;
  for (int b = 0xA1; b <= 0xAC; ++b) direct[b] = true;
  for (int b = 0xAE; b <= 0xFF; ++b) direct[b] = true;
  char32_t next = 256;
  for (int b = 0; b < 256; ++b) table[b] = direct[b] ? static_cast<char32_t>(b) : next++;
  return table;
}

const std::array<char32_t, 256>& byte_table() {
  static const auto table = build_byte_table();
  return table;
}

}  // namespace

DecodedChar decode_at(std::string_view s, std::size_t pos) noexcept {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  if (b0 < 0x80) return {b0, 1};
  std::size_t len;
  char32_t cp;
  char32_t min;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2; cp = b0 & 0x1F; min = 0x80;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3; cp = b0 & 0x0F; min = 0x800;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4; cp = b0 & 0x07; min = 0x10000;
  } else {
    return {kReplacement, 1};
  }
  if (pos + len > s.size()) return {kReplacement, 1};
  for (std::size_t i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    if ((b & 0xC0) != 0x80) return {kReplacement, 1};
    cp = (cp << 6) | (b & 0x3F);
  }
  if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return {kReplacement, 1};
  return {cp, len};
}

std::vector<char32_t> decode(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  for (std::size_t pos = 0; pos < s.size();) {
    auto d = decode_at(s, pos);
    out.push_back(d.cp);
    pos += d.length;
  }
  return out;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool is_letter(char32_t cp) noexcept { return in_ranges(kLetterRanges, cp); }
bool is_mark(char32_t cp) noexcept { return in_ranges(kMarkRanges, cp); }
bool is_digit(char32_t cp) noexcept { return in_ranges(kDigitRanges, cp); }

bool is_space(char32_t cp) noexcept {
  return cp == U' ' || (cp >= 0x09 && cp <= 0x0D) || cp == 0x85 || cp == 0xA0 ||
         cp == 0x1680 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 ||
         cp == 0x2029 || cp == 0x202F || cp == 0x205F || cp == 0x3000;
}

bool is_apostrophe(char32_t cp) noexcept {
  return cp == U'\'' || cp == 0x2018 || cp == 0x2019;
}

char32_t fold_char(char32_t cp) noexcept {
  if (cp >= U'A' && cp <= U'Z') return cp + 32;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
  return cp;
}

std::string fold_case(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t pos = 0; pos < s.size();) {
    auto d = decode_at(s, pos);
    if (d.cp == kReplacement) {
      out.append(s.substr(pos, d.length));
    } else {
      append_utf8(out, fold_char(d.cp));
    }
    pos += d.length;
  }
  return out;
}

std::string trim(std::string_view s) {
  std::size_t begin = 0;
  while (begin < s.size()) {
    auto d = decode_at(s, begin);
    if (!is_space(d.cp)) break;
    begin += d.length;
  }
  std::size_t end = begin;
  for (std::size_t pos = begin; pos < s.size();) {
    auto d = decode_at(s, pos);
    pos += d.length;
    if (!is_space(d.cp)) end = pos;
  }
  return std::string(s.substr(begin, end - begin));
}

std::vector<std::string_view> regex_words(std::string_view s) {
  std::vector<std::string_view> words;
  std::size_t pos = 0;
  std::size_t start = std::string_view::npos;
  std::size_t last_word_end = 0;
  while (pos < s.size()) {
    if (s[pos] == '\\' && pos + 1 < s.size() && s[pos + 1] == 'n') {
      if (start != std::string_view::npos) words.push_back(s.substr(start, last_word_end - start));
      start = std::string_view::npos;
      pos += 2;
      continue;
    }
    auto d = decode_at(s, pos);
    if (is_word_char(d.cp)) {
      if (start == std::string_view::npos) start = pos;
      pos += d.length;
      last_word_end = pos;
      continue;
    }
    if (start != std::string_view::npos && is_apostrophe(d.cp) && pos + d.length < s.size()) {
      auto next = decode_at(s, pos + d.length);
      if (is_word_char(next.cp)) {
        pos += d.length;
        continue;
      }
    }
    if (start != std::string_view::npos) words.push_back(s.substr(start, last_word_end - start));
    start = std::string_view::npos;
    pos += d.length;
  }
  if (start != std::string_view::npos) words.push_back(s.substr(start, last_word_end - start));
  return words;
}

std::size_t count_regex_words(std::string_view s) { return regex_words(s).size(); }

std::vector<std::string> linguistic_tokens(std::string_view s) {
  static constexpr std::string_view kClitics[] = {"n't", "'ll", "'re", "'ve", "'s", "'d", "'m"};
  std::vector<std::string> out;
  for (auto chunk : whitespace_chunks(s)) {
    auto cps = decode(chunk);
    std::size_t begin = 0;
    std::size_t end = cps.size();
    std::vector<std::string> trailing;
    while (begin < end && is_opener(cps[begin])) {
      std::string tok;
      append_utf8(tok, cps[begin]);
      out.push_back(std::move(tok));
      ++begin;
    }
    while (end > begin && is_trailing_punct(cps[end - 1])) {
      // a run of periods stays together as one ellipsis token
      std::size_t run_begin = end - 1;
      if (cps[end - 1] == U'.') {
        while (run_begin > begin && cps[run_begin - 1] == U'.') --run_begin;
      }
      std::string tok;
      for (std::size_t i = run_begin; i < end; ++i) append_utf8(tok, cps[i]);
      trailing.push_back(std::move(tok));
      end = run_begin;
    }
    if (end > begin) {
      std::string core;
      for (std::size_t i = begin; i < end; ++i) {
        // typographic apostrophes are treated like ASCII ones for clitic splitting
        append_utf8(core, cps[i] == 0x2019 ? U'\'' : cps[i]);
      }
      std::string lowered = fold_case(core);
      bool split = false;
      for (auto clitic : kClitics) {
        if (lowered.size() > clitic.size() && lowered.ends_with(clitic)) {
          out.push_back(core.substr(0, core.size() - clitic.size()));
          out.push_back(core.substr(core.size() - clitic.size()));
          split = true;
          break;
        }
      }
      if (!split) out.push_back(std::move(core));
    }
    for (auto it = trailing.rbegin(); it != trailing.rend(); ++it) out.push_back(std::move(*it));
  }
  return out;
}

bool is_content_token(std::string_view token) {
  for (std::size_t pos = 0; pos < token.size();) {
    auto d = decode_at(token, pos);
    if (is_letter(d.cp) || is_digit(d.cp)) return true;
    pos += d.length;
  }
  return false;
}

std::string escape_bytes(std::string_view raw) {
  const auto& table = byte_table();
  std::string out;
  out.reserve(raw.size() * 2);
  for (unsigned char b : raw) append_utf8(out, table[b]);
  return out;
}

std::string unescape_bytes(std::string_view escaped) {
  static const auto reverse = [] {
    std::array<int, 512> r{};
    r.fill(-1);
    const auto& table = byte_table();
    for (int b = 0; b < 256; ++b) r[table[b]] = b;
    return r;
  }();
  std::string out;
  out.reserve(escaped.size());
  for (std::size_t pos = 0; pos < escaped.size();) {
    auto d = decode_at(escaped, pos);
    if (d.cp >= reverse.size() || reverse[d.cp] < 0) {
      throw std::invalid_argument("unescape_bytes: code point outside the byte alphabet");
    }
    out.push_back(static_cast<char>(reverse[d.cp]));
    pos += d.length;
  }
  return out;
}

}  // namespace exposure::text
