/*
 * Copyright 2026 The Rarefind Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "rarefind/tokenize.hpp"

#include <algorithm>

#include "rarefind/common.hpp"

namespace rarefind {

namespace {

struct CodePoint {
  char32_t value;
  std::size_t length;
};

// Lenient UTF-8 decoder: invalid bytes decode as themselves, one byte long.
CodePoint decode(std::string_view s, std::size_t pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  if (b0 < 0x80) return {b0, 1};
  auto cont = [&](std::size_t i) {
    return pos + i < s.size() &&
           (static_cast<unsigned char>(s[pos + i]) & 0xC0) == 0x80;
  };
  auto bits = [&](std::size_t i) {
    return static_cast<char32_t>(static_cast<unsigned char>(s[pos + i]) & 0x3F);
  };
  if ((b0 & 0xE0) == 0xC0 && cont(1)) {
    return {(static_cast<char32_t>(b0 & 0x1F) << 6) | bits(1), 2};
  }
  if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
    return {(static_cast<char32_t>(b0 & 0x0F) << 12) | (bits(1) << 6) | bits(2), 3};
  }
  if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
    return {(static_cast<char32_t>(b0 & 0x07) << 18) | (bits(1) << 12) |
                (bits(2) << 6) | bits(3),
            4};
  }
  return {b0, 1};
}

bool is_space(char32_t c);

// Code point that ends at byte offset pos (pos > 0).
CodePoint previous(std::string_view s, std::size_t pos) {
  std::size_t begin = pos - 1;
  while (begin > 0 && pos - begin < 4 &&
         (static_cast<unsigned char>(s[begin]) & 0xC0) == 0x80) {
    --begin;
  }
  const CodePoint cp = decode(s, begin);
  if (begin + cp.length == pos) return cp;
  return {static_cast<unsigned char>(s[pos - 1]), 1};
}

bool is_space(char32_t c) {
  switch (c) {
    case ' ': case '\t': case '\n': case '\r': case '\f': case '\v':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200B;
  }
}

bool is_punct(char32_t c) {
  if (c < 0x80) {
    return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') ||
           (c >= '[' && c <= '`') || (c >= '{' && c <= '~');
  }
  switch (c) {
    case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB: case 0xBF:
      return true;
    default:
      break;
  }
  return (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) ||
         (c >= 0x3001 && c <= 0x3003) || (c >= 0xFF01 && c <= 0xFF0F);
}

bool is_word(char32_t c) { return !is_space(c) && !is_punct(c); }
bool is_digit(char32_t c) { return c >= '0' && c <= '9'; }
bool is_apostrophe(char32_t c) { return c == '\'' || c == 0x2019; }
bool is_terminal(char32_t c) { return c == '.' || c == '!' || c == '?'; }

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

// A redaction marker opens with '{' and closes with '}' within 64 bytes and
// without whitespace in between. Returns the end offset or npos.
std::size_t marker_end(std::string_view s, std::size_t pos) {
  const std::size_t limit = std::min(s.size(), pos + 64);
  for (std::size_t i = pos + 1; i < limit;) {
    const CodePoint cp = decode(s, i);
    if (is_space(cp.value)) return std::string_view::npos;
    if (cp.value == '}') return i + 1;
    i += cp.length;
  }
  return std::string_view::npos;
}

bool starts_currency(std::string_view s, std::size_t pos) {
  return s[pos] == '$' && pos + 1 < s.size() && is_digit(static_cast<unsigned char>(s[pos + 1]));
}

}  // namespace

std::string_view preset_name(Preset preset) {
  switch (preset) {
    case Preset::kRaw: return "raw";
    case Preset::kLight: return "light";
    case Preset::kAggressive: return "aggressive";
  }
  return "raw";
}

Preset parse_preset(std::string_view name) {
  if (name == "raw") return Preset::kRaw;
  if (name == "light") return Preset::kLight;
  if (name == "aggressive") return Preset::kAggressive;
  throw Error(Errc::kInvalidArgument, "unknown preset '" + std::string(name) + "'");
}

bool is_punctuation_token(std::string_view token) {
  if (token.empty()) return false;
  for (std::size_t i = 0; i < token.size();) {
    const CodePoint cp = decode(token, i);
    if (!is_punct(cp.value)) return false;
    i += cp.length;
  }
  return true;
}

bool is_number_token(std::string_view token) {
  bool digit = false;
  for (std::size_t i = 0; i < token.size(); ++i) {
    const char c = token[i];
    if (c >= '0' && c <= '9') {
      digit = true;
    } else if (c == '.' || c == ',' || c == '%' || (c == '$' && i == 0)) {
      continue;
    } else {
      return false;
    }
  }
  return digit;
}

TokenizedDoc tokenize(std::string_view text, Preset preset, std::string complaint_id) {
  const bool blank = std::all_of(text.begin(), text.end(), [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  });
  if (blank) {
    throw Error(Errc::kEmptyNarrative,
                "narrative of complaint '" + complaint_id + "' is empty");
  }

  TokenizedDoc doc;
  doc.complaint_id = std::move(complaint_id);
  std::size_t sentence = 0;
  bool boundary_pending = false;

  auto emit = [&](std::size_t begin, std::size_t end) {
    if (boundary_pending) {
      ++sentence;
      boundary_pending = false;
    }
    doc.tokens.push_back(lower_ascii(text.substr(begin, end - begin)));
    doc.spans.push_back({begin, end});
    doc.sentence.push_back(sentence);
  };

  const std::size_t n = text.size();
  std::size_t pos = 0;
  while (pos < n) {
    const CodePoint cp = decode(text, pos);
    if (is_space(cp.value)) {
      pos += cp.length;
      continue;
    }
    if (cp.value == '{') {
      const std::size_t end = marker_end(text, pos);
      if (end != std::string_view::npos) {
        emit(pos, end);
        pos = end;
        continue;
      }
    }
    if (is_word(cp.value) || starts_currency(text, pos)) {
      const std::size_t start = pos;
      char32_t prev = cp.value;
      pos += cp.length;
      while (pos < n) {
        const CodePoint cur = decode(text, pos);
        if (is_word(cur.value)) {
          prev = cur.value;
          pos += cur.length;
          continue;
        }
        if (pos + cur.length >= n) break;
        const CodePoint next = decode(text, pos + cur.length);
        const bool numeric_sep = (cur.value == '.' || cur.value == ',') &&
                                 is_digit(prev) && is_digit(next.value);
        const bool inner_apostrophe = is_apostrophe(cur.value) && is_word(prev) &&
                                      is_word(next.value);
        if (!numeric_sep && !inner_apostrophe) break;
        prev = next.value;
        pos += cur.length + next.length;
      }
      emit(start, pos);
      continue;
    }

    // Punctuation run.
    const std::size_t start = pos;
    bool terminal = false;
    while (pos < n) {
      const CodePoint cur = decode(text, pos);
      if (!is_punct(cur.value)) break;
      if (pos > start && (cur.value == '{' || starts_currency(text, pos))) break;
      terminal = terminal || is_terminal(cur.value);
      pos += cur.length;
    }
    const bool space_before = start == 0 || is_space(previous(text, start).value);
    const bool space_after = pos >= n || is_space(decode(text, pos).value);
    if (space_before && space_after) emit(start, pos);
    if (terminal && !doc.tokens.empty()) boundary_pending = true;
  }

  if (preset == Preset::kRaw) return doc;

  TokenizedDoc filtered;
  filtered.complaint_id = doc.complaint_id;
  for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
    const std::string& t = doc.tokens[i];
    if (is_punctuation_token(t)) continue;
    if (preset == Preset::kAggressive && (is_number_token(t) || is_stopword(t))) continue;
    filtered.tokens.push_back(t);
    filtered.spans.push_back(doc.spans[i]);
    filtered.sentence.push_back(doc.sentence[i]);
  }
  return filtered;
}

std::vector<std::string> ngrams(std::span<const std::string> tokens, std::size_t min_n,
                                std::size_t max_n) {
  std::vector<std::string> out;
  if (min_n == 0) min_n = 1;
  for (std::size_t n = min_n; n <= max_n; ++n) {
    if (tokens.size() < n) break;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      std::string g = tokens[i];
      for (std::size_t j = 1; j < n; ++j) {
        g += ' ';
        g += tokens[i + j];
      }
      out.push_back(std::move(g));
    }
  }
  return out;
}

}  // namespace rarefind
