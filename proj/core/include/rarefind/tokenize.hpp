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

#ifndef RAREFIND_TOKENIZE_HPP_
#define RAREFIND_TOKENIZE_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rarefind {

// Preprocessing presets.
//   kRaw        lowercase, split at whitespace and punctuation boundaries.
//               Hyphens split words. Redaction markers ("xxxx", "{$6000.00}")
//               and currency amounts ("$500") stay whole. Punctuation that
//               stands alone between spaces (" - ", " ... ") is kept as a token;
//               punctuation attached to a word is a boundary and is dropped.
//   kLight      kRaw without punctuation-only tokens.
//   kAggressive kLight without numbers and without the shipped stopword list.
enum class Preset { kRaw, kLight, kAggressive };

std::string_view preset_name(Preset preset);
Preset parse_preset(std::string_view name);

struct TokenSpan {
  std::size_t begin = 0;  // byte offset into the source narrative
  std::size_t end = 0;    // one past the last byte

  bool operator==(const TokenSpan&) const = default;
};

struct TokenizedDoc {
  std::string complaint_id;
  std::vector<std::string> tokens;
  std::vector<TokenSpan> spans;
  // Sentence index (0-based) of every token; boundaries come from terminal
  // punctuation (. ! ?) and are approximate.
  std::vector<std::size_t> sentence;

  std::size_t size() const { return tokens.size(); }
  std::size_t sentence_count() const {
    return sentence.empty() ? 0 : sentence.back() + 1;
  }
};

// Throws Error(kEmptyNarrative) when the narrative is empty or only whitespace.
TokenizedDoc tokenize(std::string_view narrative, Preset preset,
                      std::string complaint_id = {});

bool is_stopword(std::string_view token);
// The shipped 127-word English list, in its canonical order.
std::span<const std::string_view> stopwords();

bool is_punctuation_token(std::string_view token);
bool is_number_token(std::string_view token);

// Contiguous n-grams joined with a single space, for n in [min_n, max_n].
std::vector<std::string> ngrams(std::span<const std::string> tokens,
                                std::size_t min_n, std::size_t max_n);

}  // namespace rarefind

#endif  // RAREFIND_TOKENIZE_HPP_
