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

#ifndef RAREFIND_EMBED_HPP_
#define RAREFIND_EMBED_HPP_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rarefind/lexicon.hpp"
#include "rarefind/tokenize.hpp"

namespace rarefind {

// Document vector of fixed dimensionality. Stored sparsely because the built-in
// providers produce a few hundred non-zeros out of thousands of dimensions;
// imported dense vectors simply store every entry.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  EmbeddingVector(std::string complaint_id, std::size_t dims,
                  std::vector<std::pair<std::uint32_t, double>> entries);
  static EmbeddingVector from_dense(std::string complaint_id, std::span<const double> values);

  const std::string& complaint_id() const { return id_; }
  std::size_t dims() const { return dims_; }
  // Non-zero entries sorted by index, indices unique.
  const std::vector<std::pair<std::uint32_t, double>>& entries() const { return entries_; }

  std::vector<double> dense() const;
  double norm() const;
  double dot(std::span<const double> dense) const;
  double dot(const EmbeddingVector& other) const;
  // Scales to unit L2 norm. Throws kInvalidArgument for the zero vector.
  void normalize();

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::string id_;
  std::size_t dims_ = 0;
  std::vector<std::pair<std::uint32_t, double>> entries_;
};

double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

enum class EmbeddingProvider { kHashedNgrams, kTfidfProjection, kExternalFile };
enum class WindowMode { kFullDoc, kIpWindow };

struct EmbeddingConfig {
  EmbeddingProvider provider = EmbeddingProvider::kHashedNgrams;
  std::size_t dims = 4096;
  std::uint64_t seed = 42;
  std::size_t ngram_min = 1;
  std::size_t ngram_max = 2;
  WindowMode window_mode = WindowMode::kFullDoc;
  std::size_t window_sentences = 5;

  // Throws kInvalidArgument: dims >= 2, 1 <= ngram_min <= ngram_max,
  // window_sentences >= 1.
  void validate() const;
};

void to_json(nlohmann::json& j, const EmbeddingConfig& c);
void from_json(const nlohmann::json& j, EmbeddingConfig& c);

// Embeds every document; output i belongs to docs[i]. For kIpWindow, hits[i]
// (when supplied) locates the first intimate-partner mention of docs[i].
//
// kHashedNgrams: each n-gram is hashed with the seed to a bucket and a sign,
// summed, and L2-normalized. No state crosses documents.
// kTfidfProjection: corpus TF-IDF (tf = count/len, idf = ln((1+N)/(1+df)) + 1)
// multiplied by a seeded +-1/sqrt(dims) matrix whose rows are derived from the
// term string, then normalized.
//
// A document with no n-grams maps to a fixed sentinel direction. Throws
// kEmptyVocabulary when no document has any n-gram.
std::vector<EmbeddingVector> embed_corpus(std::span<const TokenizedDoc> docs,
                                          const EmbeddingConfig& cfg,
                                          std::span<const MatchResult> hits = {});

// Sub-document of `sentences` consecutive sentences centred on the sentence of
// the first intimate-partner occurrence, clamped at the document edges. Without
// an occurrence the first `sentences` sentences are returned.
TokenizedDoc apply_window(const TokenizedDoc& doc, const MatchResult& hits,
                          std::size_t sentences);

// Vector file: one record per line, "<id>\t<dims>\t<values>". Values are
// either dense ("0.1,0.2,...") or sparse ("3:0.1,17:0.2"); both use
// round-trip decimal precision.
enum class VectorFormat { kDense, kSparse };
void write_vectors(std::ostream& out, std::span<const EmbeddingVector> vectors,
                   VectorFormat format = VectorFormat::kDense);
void write_vectors(const std::string& path, std::span<const EmbeddingVector> vectors,
                   VectorFormat format = VectorFormat::kDense);
std::vector<EmbeddingVector> read_vectors(std::istream& in);

// Reads a vector file, re-normalizes each vector, and checks ids against the
// expected set. Rows for unexpected ids are skipped. Output is sorted by id.
// Errors: kMissingId, kDuplicateId, kDimensionMismatch.
std::vector<EmbeddingVector> import_external_vectors(const std::string& path,
                                                     const std::set<std::string>& expected_ids);

}  // namespace rarefind

#endif  // RAREFIND_EMBED_HPP_
