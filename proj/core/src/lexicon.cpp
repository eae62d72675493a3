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

#include "rarefind/lexicon.hpp"

#include <algorithm>

#include "rarefind/common.hpp"

namespace rarefind {

namespace {

constexpr const char* kDefaultIp[] = {
    "spouse",     "ex-spouse",     "husband",       "wife",       "ex-husband",
    "ex-wife",    "other half",    "girlfriend",    "boyfriend",  "partner",
    "ex-boyfriend", "ex-girlfriend", "ex-partner",  "fiance",
};

// Verbatim from the published keyword table, duplicates included; the set
// collapses them.
constexpr const char* kDefaultAbuse[] = {
    "Steal",       "Stealing",     "Stole",       "Stolen",      "Hid",
    "Hide",        "Hidden",       "Spy",         "Spied",       "Spying",
    "Surveil",     "Surveilling",  "Surveilled",  "Control",     "Controlled",
    "Controlling", "Harass",       "Harassed",    "Harassing",   "Abuse",
    "Abusive",     "Abusing",      "Abused",      "Exploit",     "Exploitative",
    "Exploiting",  "Exploited",    "Harm",        "Harmful",     "Harmed",
    "Harming",     "Hurt",         "Hurting",     "Upset",       "Upsetting",
    "Sabotage",    "Sabotaged",    "Sabotaging",  "domestic abuse", "fraudulent",
    "fraudulently", "abused",      "abusive",     "violence",    "violent",
    "stole",       "stolen",       "stealing",    "forced",      "harassed",
    "unwanted",    "coerced",      "opened",      "victim",      "victims",
    "survivor",    "survivors",    "Batterer",    "Batterers",   "perpetrator",
    "perpetrators", "abuser",      "abusers",     "Batterer",    "Batterers",
    "perpetrator", "perpetrators", "abuser",      "abusers",
};

std::string strip_possessive_suffix(std::string token) {
  if (token.size() > 2 && token.ends_with("'s")) {
    token.resize(token.size() - 2);
  } else if (token.size() > 4 && token.ends_with("\xE2\x80\x99s")) {
    token.resize(token.size() - 4);
  }
  return token;
}

std::string lower(std::string s) {
  for (char& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

}  // namespace

Normalizer::Normalizer(std::vector<RewriteRule> rules, bool strip_possessive)
    : rules_(std::move(rules)), strip_possessive_(strip_possessive) {
  for (auto& r : rules_) {
    r.from = lower(r.from);
    r.to = lower(r.to);
    if (r.from.empty() || r.to.empty()) {
      throw Error(Errc::kInvalidArgument, "rewrite rules need non-empty tokens");
    }
    lookup_[r.from] = r.to;
  }
  // Resolve chains so one lookup reaches the canonical form.
  for (auto& [from, to] : lookup_) {
    std::size_t hops = 0;
    for (auto it = lookup_.find(to); it != lookup_.end(); it = lookup_.find(to)) {
      if (it->second == to || ++hops > lookup_.size()) {
        throw Error(Errc::kInvalidArgument, "rewrite rules form a cycle at '" + from + "'");
      }
      to = it->second;
    }
  }
}

Normalizer Normalizer::defaults() {
  return Normalizer({{"x", "ex"},
                     {"gf", "girlfriend"},
                     {"bf", "boyfriend"},
                     {"husbands", "husband"},
                     {"wifes", "wife"},
                     {"fianc\xC3\xA9", "fiance"}},
                    true);
}

std::string Normalizer::apply(std::string token) const {
  if (strip_possessive_) token = strip_possessive_suffix(std::move(token));
  auto it = lookup_.find(token);
  if (it != lookup_.end()) return it->second;
  return token;
}

Phrase Normalizer::apply(Phrase tokens) const {
  for (auto& t : tokens) t = apply(std::move(t));
  return tokens;
}

TokenizedDoc Normalizer::apply(TokenizedDoc doc) const {
  for (auto& t : doc.tokens) t = apply(std::move(t));
  return doc;
}

Lexicon::Lexicon(std::span<const std::string> ip_phrases,
                 std::span<const std::string> abuse_phrases, Normalizer normalizer,
                 std::string version)
    : normalizer_(std::move(normalizer)), version_(std::move(version)) {
  for (const auto& p : ip_phrases) {
    Phrase c = canonical(p);
    if (!c.empty()) ip_.insert(std::move(c));
  }
  for (const auto& p : abuse_phrases) {
    Phrase c = canonical(p);
    if (!c.empty()) abuse_.insert(std::move(c));
  }
  if (ip_.empty() || abuse_.empty()) {
    throw Error(Errc::kInvalidArgument, "lexicon needs at least one ip and one abuse phrase");
  }
}

Phrase Lexicon::canonical(std::string_view phrase) const {
  const bool blank = std::all_of(phrase.begin(), phrase.end(),
                                 [](char c) { return c == ' ' || c == '\t' || c == '\n'; });
  if (blank) return {};
  return normalizer_.apply(tokenize(phrase, Preset::kLight).tokens);
}

Lexicon Lexicon::defaults() {
  const std::vector<std::string> ip(std::begin(kDefaultIp), std::end(kDefaultIp));
  const std::vector<std::string> abuse(std::begin(kDefaultAbuse), std::end(kDefaultAbuse));
  return Lexicon(ip, abuse, Normalizer::defaults(), "default-1");
}

Lexicon Lexicon::from_json(const nlohmann::json& j) {
  std::vector<RewriteRule> rules;
  bool strip = true;
  if (j.contains("rewrites")) {
    for (const auto& r : j.at("rewrites")) {
      rules.push_back({r.at("from").get<std::string>(), r.at("to").get<std::string>()});
    }
  } else {
    rules = Normalizer::defaults().rules();
  }
  strip = j.value("strip_possessive", true);
  return Lexicon(j.at("ip_phrases").get<std::vector<std::string>>(),
                 j.at("abuse_phrases").get<std::vector<std::string>>(),
                 Normalizer(std::move(rules), strip), j.value("version", "custom"));
}

Lexicon Lexicon::load(const std::string& path) {
  try {
    return from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kInvalidArgument, "lexicon file " + path + ": " + e.what());
  }
}

nlohmann::json Lexicon::to_json() const {
  auto join = [](const Phrase& p) {
    std::string s;
    for (const auto& t : p) {
      if (!s.empty()) s += ' ';
      s += t;
    }
    return s;
  };
  nlohmann::json j;
  j["format_version"] = 1;
  j["version"] = version_;
  j["ip_phrases"] = nlohmann::json::array();
  for (const auto& p : ip_) j["ip_phrases"].push_back(join(p));
  j["abuse_phrases"] = nlohmann::json::array();
  for (const auto& p : abuse_) j["abuse_phrases"].push_back(join(p));
  j["rewrites"] = nlohmann::json::array();
  for (const auto& r : normalizer_.rules()) j["rewrites"].push_back({{"from", r.from}, {"to", r.to}});
  j["strip_possessive"] = normalizer_.strip_possessive();
  return j;
}

PhraseIndex::PhraseIndex(const std::set<Phrase>& phrases) {
  nodes_.emplace_back();
  for (const auto& p : phrases) {
    std::size_t node = 0;
    for (const auto& tok : p) {
      auto it = nodes_[node].next.find(tok);
      if (it == nodes_[node].next.end()) {
        nodes_.emplace_back();
        it = nodes_[node].next.emplace(tok, nodes_.size() - 1).first;
      }
      node = it->second;
    }
    if (!p.empty()) nodes_[node].terminal = true;
  }
}

std::vector<TokenRange> PhraseIndex::find(std::span<const std::string> tokens) const {
  std::vector<TokenRange> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::size_t node = 0;
    for (std::size_t j = i; j < tokens.size(); ++j) {
      auto it = nodes_[node].next.find(tokens[j]);
      if (it == nodes_[node].next.end()) break;
      node = it->second;
      if (nodes_[node].terminal) out.push_back({i, j});
    }
  }
  return out;
}

std::vector<TokenRange> find_phrase_occurrences(std::span<const std::string> tokens,
                                                const std::set<Phrase>& phrases) {
  return PhraseIndex(phrases).find(tokens);
}

std::size_t token_gap(const TokenRange& a, const TokenRange& b) {
  if (a.first <= b.last && b.first <= a.last) return 0;
  if (a.last < b.first) return b.first - a.last - 1;
  return a.first - b.last - 1;
}

KeywordMatcher::KeywordMatcher(const Lexicon& lexicon)
    : lexicon_(lexicon), ip_(lexicon.ip_phrases()), abuse_(lexicon.abuse_phrases()) {}

MatchResult KeywordMatcher::match(const TokenizedDoc& doc, std::size_t window) const {
  MatchResult r;
  r.complaint_id = doc.complaint_id;
  r.ip_occurrences = ip_.find(doc.tokens);
  r.abuse_occurrences = abuse_.find(doc.tokens);
  for (const auto& ip : r.ip_occurrences) {
    for (const auto& ab : r.abuse_occurrences) {
      const std::size_t gap = token_gap(ip, ab);
      if (gap <= window) r.hits.push_back({ip, ab, gap});
    }
  }
  r.matched = !r.hits.empty();
  return r;
}

MatchResult match_with_proximity(const TokenizedDoc& doc, const Lexicon& lexicon,
                                 std::size_t window) {
  return KeywordMatcher(lexicon).match(lexicon.normalizer().apply(doc), window);
}

PrecisionRecall estimate_precision_recall(std::span<const MatchLabel> sample) {
  if (sample.empty()) throw Error(Errc::kEmptySample, "no labeled rows");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& s : sample) {
    if (s.matched && s.truly_positive) ++tp;
    if (s.matched && !s.truly_positive) ++fp;
    if (!s.matched && s.truly_positive) ++fn;
  }
  PrecisionRecall pr;
  if (tp + fp > 0) pr.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) pr.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return pr;
}

}  // namespace rarefind
