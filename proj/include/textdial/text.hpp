#pragma once

// Text primitives shared by every module: NFC normalization, the single
// tokenizer behind all token-based metrics and statistics, whitespace
// normalization and the rule-based sentence splitter.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "textdial/error.hpp"

namespace textdial {

namespace detail {

struct CodePoint {
  UChar32 value;    // negative for ill-formed input
  std::size_t end;  // byte offset one past the code point
};

inline CodePoint decode_at(std::string_view text, std::size_t pos) {
  auto i = static_cast<int32_t>(pos);
  UChar32 c = 0;
  U8_NEXT(reinterpret_cast<const uint8_t*>(text.data()), i,
          static_cast<int32_t>(text.size()), c);
  return {c, static_cast<std::size_t>(i)};
}

inline void append_utf8(std::string& out, UChar32 c) {
  std::array<uint8_t, U8_MAX_LENGTH> buf{};
  int32_t len = 0;
  U8_APPEND_UNSAFE(buf.data(), len, c);
  out.append(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::size_t>(len));
}

inline bool is_word_char(UChar32 c) {
  if (c < 0) return false;
  if (c < 0x80) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
           (c >= '0' && c <= '9');
  }
  // Combining marks stay attached to the letter they decorate.
  return u_isalnum(c) || (U_GET_GC_MASK(c) & U_GC_M_MASK) != 0;
}

inline bool is_apostrophe(UChar32 c) { return c == '\'' || c == 0x2019; }

inline bool is_space(UChar32 c) {
  if (c < 0) return false;
  if (c < 0x80) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
           c == '\v';
  }
  return u_isUWhiteSpace(c);
}

}  // namespace detail

/// Canonical composition (NFC). Throws on input that is not valid UTF-8.
inline std::string nfc(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) {
    throw Error(ErrorKind::Io, "ICU NFC normalizer unavailable");
  }
  icu::UnicodeString in = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  if (norm->isNormalized(in, status) && U_SUCCESS(status)) {
    return std::string(text);
  }
  status = U_ZERO_ERROR;
  icu::UnicodeString out = norm->normalize(in, status);
  if (U_FAILURE(status)) {
    throw Error(ErrorKind::Schema, "string is not valid UTF-8");
  }
  std::string result;
  out.toUTF8String(result);
  return result;
}

/// A token and the byte range it was read from.
struct TokenSpan {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Lowercased maximal runs of letters/digits. One apostrophe between two word
/// characters is kept inside the token, so "don't" stays whole.
inline std::vector<TokenSpan> tokenize_spans(std::string_view text) {
  std::vector<TokenSpan> tokens;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto cp = detail::decode_at(text, pos);
    if (!detail::is_word_char(cp.value)) {
      pos = cp.end;
      continue;
    }
    TokenSpan tok;
    tok.begin = pos;
    bool used_apostrophe = false;
    while (pos < text.size()) {
      cp = detail::decode_at(text, pos);
      if (detail::is_word_char(cp.value)) {
        detail::append_utf8(tok.text, u_tolower(cp.value));
        pos = cp.end;
        continue;
      }
      if (!used_apostrophe && detail::is_apostrophe(cp.value) &&
          cp.end < text.size() &&
          detail::is_word_char(detail::decode_at(text, cp.end).value)) {
        used_apostrophe = true;
        tok.text.push_back('\'');
        pos = cp.end;
        continue;
      }
      break;
    }
    tok.end = pos;
    tokens.push_back(std::move(tok));
  }
  return tokens;
}

inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  for (auto& t : tokenize_spans(text)) out.push_back(std::move(t.text));
  return out;
}

/// Collapses every whitespace run to one ASCII space and trims both ends.
inline std::string normalize_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto cp = detail::decode_at(text, pos);
    if (detail::is_space(cp.value)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.append(text.substr(pos, cp.end - pos));
    }
    pos = cp.end;
  }
  return out;
}

inline std::string trim(std::string_view text) {
  auto ascii_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
           c == '\v';
  };
  std::size_t b = 0;
  std::size_t e = text.size();
  while (b < e && ascii_space(text[b])) ++b;
  while (e > b && ascii_space(text[e - 1])) --e;
  return std::string(text.substr(b, e - b));
}

inline std::string join(const std::vector<std::string>& parts,
                        std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

inline std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

namespace detail {

inline constexpr std::array<std::string_view, 9> kAbbreviations = {
    "dr.", "mr.", "mrs.", "e.g.", "i.e.", "etc.", "fig.", "eq.", "vs."};

inline bool is_closing(char c) {
  return c == ')' || c == ']' || c == '"' || c == '\'';
}

inline bool starts_sentence(std::string_view text, std::size_t pos) {
  if (pos >= text.size()) return false;
  auto cp = decode_at(text, pos);
  if (cp.value == '"' || cp.value == '\'' || cp.value == 0x201C ||
      cp.value == 0x2018) {
    return true;
  }
  return cp.value >= 0 && (u_isupper(cp.value) || u_istitle(cp.value));
}

// Word ending at `punct` (inclusive), lowercased, opening brackets stripped.
inline std::string word_before(std::string_view text, std::size_t punct) {
  std::size_t b = text.rfind(' ', punct);
  b = (b == std::string_view::npos) ? 0 : b + 1;
  while (b < punct && (text[b] == '(' || text[b] == '[' || text[b] == '"')) ++b;
  return to_lower_ascii(text.substr(b, punct - b + 1));
}

}  // namespace detail

/// Rule-based splitter: a boundary is a run of [.?!] (plus closing quotes or
/// brackets) followed by a space and an uppercase letter or opening quote.
/// A lone period ending a known abbreviation never ends a sentence; decimals
/// ("3.5") are safe because the period is not followed by a space.
/// Sentences come back whitespace-normalized.
inline std::vector<std::string> segment_sentences(std::string_view raw) {
  const std::string text = normalize_whitespace(raw);
  std::vector<std::string> sentences;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c != '.' && c != '?' && c != '!') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() &&
           (text[j] == '.' || text[j] == '?' || text[j] == '!')) {
      ++j;
    }
    std::size_t k = j;
    while (k < text.size() && detail::is_closing(text[k])) ++k;
    // U+201D / U+2019 closing quotes.
    while (k + 2 < text.size() && static_cast<unsigned char>(text[k]) == 0xE2 &&
           static_cast<unsigned char>(text[k + 1]) == 0x80 &&
           (static_cast<unsigned char>(text[k + 2]) == 0x9D ||
            static_cast<unsigned char>(text[k + 2]) == 0x99)) {
      k += 3;
    }
    bool boundary = k < text.size() && text[k] == ' ' &&
                    detail::starts_sentence(text, k + 1);
    if (boundary && j - i == 1 && c == '.') {
      const std::string word = detail::word_before(text, i);
      for (auto abbr : detail::kAbbreviations) {
        if (word == abbr) {
          boundary = false;
          break;
        }
      }
    }
    if (boundary) {
      sentences.push_back(text.substr(start, k - start));
      start = k + 1;
      i = start;
    } else {
      i = j;
    }
  }
  if (start < text.size()) sentences.push_back(text.substr(start));
  return sentences;
}

}  // namespace textdial
