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

#ifndef RAREFIND_LEXICON_HPP_
#define RAREFIND_LEXICON_HPP_

#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rarefind/tokenize.hpp"

namespace rarefind {

using Phrase = std::vector<std::string>;

// Token-level rewrite applied to both lexicon phrases and documents.
struct RewriteRule {
  std::string from;
  std::string to;

  auto operator<=>(const RewriteRule&) const = default;
};

// Maps spelling variants onto canonical tokens ("x" -> "ex", "husbands" ->
// "husband", possessive "'s" dropped). Rewrites are one token to one token so
// document spans stay aligned. Hyphens never reach this stage because the
// tokenizer already splits on them.
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(std::vector<RewriteRule> rules, bool strip_possessive);

  static Normalizer defaults();

  std::string apply(std::string token) const;
  Phrase apply(Phrase tokens) const;
  // Rewrites tokens in place; spans and sentence indices are untouched.
  TokenizedDoc apply(TokenizedDoc doc) const;

  const std::vector<RewriteRule>& rules() const { return rules_; }
  bool strip_possessive() const { return strip_possessive_; }

 private:
  std::vector<RewriteRule> rules_;
  std::map<std::string, std::string, std::less<>> lookup_;
  bool strip_possessive_ = true;
};

// Intimate-partner and financial-abuse keyword sets. Phrases are stored in
// canonical (normalized) form only.
class Lexicon {
 public:
  Lexicon(std::span<const std::string> ip_phrases, std::span<const std::string> abuse_phrases,
          Normalizer normalizer, std::string version = "custom");

  // Keyword lists used by the reference workflow.
  static Lexicon defaults();
  static Lexicon from_json(const nlohmann::json& j);
  static Lexicon load(const std::string& path);
  nlohmann::json to_json() const;

  // Tokenizes (raw preset, punctuation dropped) and normalizes a phrase.
  Phrase canonical(std::string_view phrase) const;

  const std::set<Phrase>& ip_phrases() const { return ip_; }
  const std::set<Phrase>& abuse_phrases() const { return abuse_; }
  const Normalizer& normalizer() const { return normalizer_; }
  const std::string& version() const { return version_; }

 private:
  std::set<Phrase> ip_;
  std::set<Phrase> abuse_;
  Normalizer normalizer_;
  std::string version_;
};

// Inclusive token index range.
struct TokenRange {
  std::size_t first = 0;
  std::size_t last = 0;

  auto operator<=>(const TokenRange&) const = default;
};

// Every occurrence of every phrase, sorted by (first, last). Overlapping
// occurrences are all reported.
std::vector<TokenRange> find_phrase_occurrences(std::span<const std::string> tokens,
                                                const std::set<Phrase>& phrases);

// Compiled phrase set (token trie) for repeated scans.
class PhraseIndex {
 public:
  explicit PhraseIndex(const std::set<Phrase>& phrases);
  std::vector<TokenRange> find(std::span<const std::string> tokens) const;

 private:
  struct Node {
    std::map<std::string, std::size_t, std::less<>> next;
    bool terminal = false;
  };
  std::vector<Node> nodes_;
};

inline constexpr std::size_t kUnboundedWindow = std::numeric_limits<std::size_t>::max();

// Number of tokens strictly between two ranges; 0 when adjacent or overlapping.
std::size_t token_gap(const TokenRange& a, const TokenRange& b);

struct ProximityHit {
  TokenRange ip;
  TokenRange abuse;
  std::size_t gap = 0;

  auto operator<=>(const ProximityHit&) const = default;
};

struct MatchResult {
  std::string complaint_id;
  std::vector<ProximityHit> hits;  // every (ip, abuse) pair with gap <= window
  bool matched = false;
  std::vector<TokenRange> ip_occurrences;
  std::vector<TokenRange> abuse_occurrences;

  bool has_ip() const { return !ip_occurrences.empty(); }
  bool has_abuse() const { return !abuse_occurrences.empty(); }
};

// Keyword matching with proximity over a document that has been normalized
// with the lexicon's normalizer.
class KeywordMatcher {
 public:
  explicit KeywordMatcher(const Lexicon& lexicon);

  MatchResult match(const TokenizedDoc& normalized_doc, std::size_t window = 10) const;

  const Lexicon& lexicon() const { return lexicon_; }

 private:
  Lexicon lexicon_;
  PhraseIndex ip_;
  PhraseIndex abuse_;
};

// Normalizes doc with the lexicon's rules and matches it. window defaults to
// ten tokens; kUnboundedWindow gives plain co-occurrence matching.
MatchResult match_with_proximity(const TokenizedDoc& doc, const Lexicon& lexicon,
                                 std::size_t window = 10);

struct PrecisionRecall {
  std::optional<double> precision;  // nullopt when nothing was matched
  std::optional<double> recall;     // nullopt when nothing was truly positive
};

struct MatchLabel {
  bool matched = false;
  bool truly_positive = false;
};

// Throws Error(kEmptySample) on an empty sample.
PrecisionRecall estimate_precision_recall(std::span<const MatchLabel> sample);

}  // namespace rarefind

#endif  // RAREFIND_LEXICON_HPP_
