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

#include "rarefind/embed.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <unordered_map>

#include "rarefind/common.hpp"

namespace rarefind {

EmbeddingVector::EmbeddingVector(std::string complaint_id, std::size_t dims,
                                 std::vector<std::pair<std::uint32_t, double>> entries)
    : id_(std::move(complaint_id)), dims_(dims), entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first >= dims_) {
      throw Error(Errc::kDimensionMismatch, "index " + std::to_string(entries_[i].first) +
                                                " out of range for " + std::to_string(dims_) +
                                                " dims");
    }
    if (i > 0 && entries_[i].first == entries_[i - 1].first) {
      throw Error(Errc::kInvalidArgument, "duplicate vector index");
    }
  }
  std::erase_if(entries_, [](const auto& e) { return e.second == 0.0; });
}

EmbeddingVector EmbeddingVector::from_dense(std::string complaint_id,
                                            std::span<const double> values) {
  std::vector<std::pair<std::uint32_t, double>> entries;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] != 0.0) entries.emplace_back(static_cast<std::uint32_t>(i), values[i]);
  }
  return EmbeddingVector(std::move(complaint_id), values.size(), std::move(entries));
}

std::vector<double> EmbeddingVector::dense() const {
  std::vector<double> out(dims_, 0.0);
  for (const auto& [i, v] : entries_) out[i] = v;
  return out;
}

double EmbeddingVector::norm() const {
  double ss = 0.0;
  for (const auto& e : entries_) ss += e.second * e.second;
  return std::sqrt(ss);
}

double EmbeddingVector::dot(std::span<const double> dense) const {
  double s = 0.0;
  for (const auto& [i, v] : entries_) s += v * dense[i];
  return s;
}

double EmbeddingVector::dot(const EmbeddingVector& other) const {
  double s = 0.0;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  while (a != entries_.end() && b != other.entries_.end()) {
    if (a->first == b->first) {
      s += a->second * b->second;
      ++a;
      ++b;
    } else if (a->first < b->first) {
      ++a;
    } else {
      ++b;
    }
  }
  return s;
}

void EmbeddingVector::normalize() {
  const double n = norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(Errc::kInvalidArgument, "cannot normalize zero vector for '" + id_ + "'");
  }
  for (auto& e : entries_) e.second /= n;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dims() != b.dims()) throw Error(Errc::kDimensionMismatch, "cosine of unequal dims");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

void EmbeddingConfig::validate() const {
  if (dims < 2) throw Error(Errc::kInvalidArgument, "dims must be >= 2");
  if (dims > (1ULL << 31)) throw Error(Errc::kInvalidArgument, "dims too large");
  if (ngram_min < 1 || ngram_min > ngram_max) {
    throw Error(Errc::kInvalidArgument, "ngram range must satisfy 1 <= min <= max");
  }
  if (window_sentences < 1) throw Error(Errc::kInvalidArgument, "window sentences must be >= 1");
}

namespace {

std::string_view provider_name(EmbeddingProvider p) {
  switch (p) {
    case EmbeddingProvider::kHashedNgrams: return "hashed_ngrams";
    case EmbeddingProvider::kTfidfProjection: return "tfidf_projection";
    case EmbeddingProvider::kExternalFile: return "external_file";
  }
  return "hashed_ngrams";
}

EmbeddingProvider parse_provider(const std::string& s) {
  if (s == "hashed_ngrams") return EmbeddingProvider::kHashedNgrams;
  if (s == "tfidf_projection") return EmbeddingProvider::kTfidfProjection;
  if (s == "external_file") return EmbeddingProvider::kExternalFile;
  throw Error(Errc::kInvalidArgument, "unknown embedding provider '" + s + "'");
}

}  // namespace

void to_json(nlohmann::json& j, const EmbeddingConfig& c) {
  j = {{"provider", provider_name(c.provider)},
       {"dims", c.dims},
       {"seed", c.seed},
       {"ngram_range", {c.ngram_min, c.ngram_max}},
       {"window_mode", c.window_mode == WindowMode::kFullDoc ? "full_doc" : "ip_window"},
       {"window_sentences", c.window_sentences}};
}

void from_json(const nlohmann::json& j, EmbeddingConfig& c) {
  EmbeddingConfig d;
  c.provider = parse_provider(j.value("provider", std::string(provider_name(d.provider))));
  c.dims = j.value("dims", d.dims);
  c.seed = j.value("seed", d.seed);
  if (j.contains("ngram_range")) {
    c.ngram_min = j.at("ngram_range").at(0).get<std::size_t>();
    c.ngram_max = j.at("ngram_range").at(1).get<std::size_t>();
  }
  const std::string mode = j.value("window_mode", std::string("full_doc"));
  if (mode == "full_doc") {
    c.window_mode = WindowMode::kFullDoc;
  } else if (mode == "ip_window") {
    c.window_mode = WindowMode::kIpWindow;
  } else {
    throw Error(Errc::kInvalidArgument, "unknown window_mode '" + mode + "'");
  }
  c.window_sentences = j.value("window_sentences", d.window_sentences);
  c.validate();
}

namespace {

TokenizedDoc window_around(const TokenizedDoc& doc, std::optional<std::size_t> centre,
                           std::size_t sentences) {
  const std::size_t count = doc.sentence_count();
  if (count == 0) return doc;
  const std::size_t half = (sentences - 1) / 2;
  std::size_t start = 0;
  if (centre) start = *centre > half ? *centre - half : 0;
  std::size_t end = start + sentences - 1;
  if (end >= count) {
    end = count - 1;
    start = end + 1 >= sentences ? end + 1 - sentences : 0;
  }
  TokenizedDoc out;
  out.complaint_id = doc.complaint_id;
  for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
    if (doc.sentence[i] < start || doc.sentence[i] > end) continue;
    out.tokens.push_back(doc.tokens[i]);
    out.spans.push_back(doc.spans[i]);
    out.sentence.push_back(doc.sentence[i]);
  }
  return out;
}

EmbeddingVector sentinel(const std::string& id, const EmbeddingConfig& cfg) {
  const auto bucket = static_cast<std::uint32_t>(hash_bytes("<empty-document>", cfg.seed) % cfg.dims);
  return EmbeddingVector(id, cfg.dims, {{bucket, 1.0}});
}

EmbeddingVector hashed_ngrams(const TokenizedDoc& doc, const EmbeddingConfig& cfg) {
  const auto grams = ngrams(doc.tokens, cfg.ngram_min, cfg.ngram_max);
  std::vector<std::pair<std::uint32_t, double>> raw;
  raw.reserve(grams.size());
  for (const auto& g : grams) {
    const std::uint64_t h = hash_bytes(g, cfg.seed);
    const auto bucket = static_cast<std::uint32_t>(h % cfg.dims);
    raw.emplace_back(bucket, (h >> 63) ? -1.0 : 1.0);
  }
  std::sort(raw.begin(), raw.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<std::uint32_t, double>> merged;
  for (const auto& e : raw) {
    if (!merged.empty() && merged.back().first == e.first) {
      merged.back().second += e.second;
    } else {
      merged.push_back(e);
    }
  }
  EmbeddingVector v(doc.complaint_id, cfg.dims, std::move(merged));
  if (v.entries().empty()) return sentinel(doc.complaint_id, cfg);
  v.normalize();
  return v;
}

std::vector<EmbeddingVector> tfidf_projection(std::span<const TokenizedDoc> docs,
                                              const EmbeddingConfig& cfg) {
  std::vector<std::map<std::string, std::size_t>> counts(docs.size());
  parallel_for(docs.size(), [&](std::size_t i) {
    for (auto& g : ngrams(docs[i].tokens, cfg.ngram_min, cfg.ngram_max)) ++counts[i][g];
  });
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& c : counts) {
    for (const auto& [term, _] : c) ++df[term];
  }
  if (df.empty()) throw Error(Errc::kEmptyVocabulary, "no n-grams in any document");
  const double n = static_cast<double>(docs.size());
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.dims));
  const std::size_t words = (cfg.dims + 63) / 64;

  std::vector<EmbeddingVector> out(docs.size());
  parallel_for(docs.size(), [&](std::size_t i) {
    std::size_t len = 0;
    for (const auto& [_, c] : counts[i]) len += c;
    if (len == 0) {
      out[i] = sentinel(docs[i].complaint_id, cfg);
      return;
    }
    std::vector<double> y(cfg.dims, 0.0);
    std::vector<std::uint64_t> signs(words);
    for (const auto& [term, c] : counts[i]) {
      const double tf = static_cast<double>(c) / static_cast<double>(len);
      const double idf = std::log((1.0 + n) / (1.0 + static_cast<double>(df.at(term)))) + 1.0;
      const double w = tf * idf * scale;
      Rng rng(hash_bytes(term, cfg.seed));
      for (auto& s : signs) s = rng.next();
      for (std::size_t d = 0; d < cfg.dims; ++d) {
        y[d] += ((signs[d >> 6] >> (d & 63)) & 1U) ? w : -w;
      }
    }
    EmbeddingVector v = EmbeddingVector::from_dense(docs[i].complaint_id, y);
    if (v.entries().empty()) {
      out[i] = sentinel(docs[i].complaint_id, cfg);
      return;
    }
    v.normalize();
    out[i] = std::move(v);
  });
  return out;
}

}  // namespace

TokenizedDoc apply_window(const TokenizedDoc& doc, const MatchResult& hits,
                          std::size_t sentences) {
  if (sentences < 1) throw Error(Errc::kInvalidArgument, "window needs at least one sentence");
  std::optional<std::size_t> centre;
  if (!hits.ip_occurrences.empty() && hits.ip_occurrences.front().first < doc.sentence.size()) {
    centre = doc.sentence[hits.ip_occurrences.front().first];
  }
  return window_around(doc, centre, sentences);
}

std::vector<EmbeddingVector> embed_corpus(std::span<const TokenizedDoc> docs,
                                          const EmbeddingConfig& cfg,
                                          std::span<const MatchResult> hits) {
  cfg.validate();
  if (cfg.provider == EmbeddingProvider::kExternalFile) {
    throw Error(Errc::kInvalidArgument,
                "external_file vectors are imported, not computed; use import_external_vectors");
  }
  if (!hits.empty() && hits.size() != docs.size()) {
    throw Error(Errc::kInvalidArgument, "hits must be empty or parallel to docs");
  }

  std::vector<TokenizedDoc> windowed;
  std::span<const TokenizedDoc> input = docs;
  if (cfg.window_mode == WindowMode::kIpWindow) {
    windowed.resize(docs.size());
    const MatchResult none;
    parallel_for(docs.size(), [&](std::size_t i) {
      windowed[i] = apply_window(docs[i], hits.empty() ? none : hits[i], cfg.window_sentences);
    });
    input = windowed;
  }

  const bool any_tokens = std::any_of(input.begin(), input.end(), [&](const TokenizedDoc& d) {
    return d.tokens.size() >= cfg.ngram_min;
  });
  if (!any_tokens) throw Error(Errc::kEmptyVocabulary, "no n-grams in any document");

  if (cfg.provider == EmbeddingProvider::kTfidfProjection) return tfidf_projection(input, cfg);

  std::vector<EmbeddingVector> out(input.size());
  parallel_for(input.size(), [&](std::size_t i) { out[i] = hashed_ngrams(input[i], cfg); });
  return out;
}

void write_vectors(std::ostream& out, std::span<const EmbeddingVector> vectors,
                   VectorFormat format) {
  char buf[40];
  for (const auto& v : vectors) {
    out << v.complaint_id() << '\t' << v.dims() << '\t';
    if (format == VectorFormat::kDense) {
      const auto d = v.dense();
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (i) out << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", d[i]);
        out << buf;
      }
    } else {
      bool first = true;
      for (const auto& [i, x] : v.entries()) {
        if (!first) out << ',';
        first = false;
        std::snprintf(buf, sizeof(buf), "%u:%.17g", i, x);
        out << buf;
      }
    }
    out << '\n';
  }
}

void write_vectors(const std::string& path, std::span<const EmbeddingVector> vectors,
                   VectorFormat format) {
  std::ostringstream ss;
  write_vectors(ss, vectors, format);
  write_file_atomic(path, ss.str());
}

namespace {

double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
    throw Error(Errc::kInvalidArgument,
                "line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

std::vector<EmbeddingVector> read_vectors(std::istream& in) {
  std::vector<EmbeddingVector> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw Error(Errc::kInvalidArgument,
                  "line " + std::to_string(lineno) + ": expected id, dims and values");
    }
    std::string id = line.substr(0, t1);
    std::size_t dims = 0;
    const std::string_view dims_text(line.data() + t1 + 1, t2 - t1 - 1);
    auto [p, ec] = std::from_chars(dims_text.data(), dims_text.data() + dims_text.size(), dims);
    if (ec != std::errc() || p != dims_text.data() + dims_text.size() || dims == 0) {
      throw Error(Errc::kDimensionMismatch, "line " + std::to_string(lineno) + ": bad dims");
    }
    std::string_view rest(line.data() + t2 + 1, line.size() - t2 - 1);
    std::vector<std::pair<std::uint32_t, double>> entries;
    std::vector<double> dense;
    const bool sparse = rest.find(':') != std::string_view::npos;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const std::string_view item = rest.substr(0, comma);
      if (sparse) {
        const auto colon = item.find(':');
        if (colon == std::string_view::npos) {
          throw Error(Errc::kInvalidArgument, "line " + std::to_string(lineno) + ": bad entry");
        }
        std::uint32_t idx = 0;
        auto [q, ec2] = std::from_chars(item.data(), item.data() + colon, idx);
        if (ec2 != std::errc() || q != item.data() + colon) {
          throw Error(Errc::kInvalidArgument, "line " + std::to_string(lineno) + ": bad index");
        }
        entries.emplace_back(idx, parse_double(item.substr(colon + 1), lineno));
      } else {
        dense.push_back(parse_double(item, lineno));
      }
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (!sparse) {
      if (dense.size() != dims) {
        throw Error(Errc::kDimensionMismatch, "line " + std::to_string(lineno) + ": '" + id +
                                                  "' declares " + std::to_string(dims) +
                                                  " dims but has " + std::to_string(dense.size()) +
                                                  " values");
      }
      out.push_back(EmbeddingVector::from_dense(std::move(id), dense));
    } else {
      out.emplace_back(std::move(id), dims, std::move(entries));
    }
  }
  return out;
}

std::vector<EmbeddingVector> import_external_vectors(const std::string& path,
                                                     const std::set<std::string>& expected_ids) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open " + path);
  auto rows = read_vectors(in);
  std::map<std::string, EmbeddingVector> by_id;
  std::size_t dims = 0;
  for (auto& v : rows) {
    if (dims == 0) dims = v.dims();
    if (v.dims() != dims) {
      throw Error(Errc::kDimensionMismatch, "'" + v.complaint_id() + "' has " +
                                                std::to_string(v.dims()) + " dims, expected " +
                                                std::to_string(dims));
    }
    if (!expected_ids.empty() && !expected_ids.count(v.complaint_id())) continue;
    const std::string id = v.complaint_id();
    if (by_id.count(id)) throw Error(Errc::kDuplicateId, "'" + id + "' appears more than once");
    v.normalize();
    by_id.emplace(id, std::move(v));
  }
  for (const auto& id : expected_ids) {
    if (!by_id.count(id)) throw Error(Errc::kMissingId, "no vector for '" + id + "'");
  }
  std::vector<EmbeddingVector> out;
  out.reserve(by_id.size());
  for (auto& [_, v] : by_id) out.push_back(std::move(v));
  return out;
}

}  // namespace rarefind
