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

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "rarefind/cluster.hpp"
#include "rarefind/common.hpp"
#include "rarefind/embed.hpp"
#include "support.hpp"

namespace rf = rarefind;

namespace {

rf::TokenizedDoc doc(const std::string& id, const std::string& text) {
  return rf::tokenize(text, rf::Preset::kLight, id);
}

rf::EmbeddingVector unit(const std::string& id, std::vector<double> v) {
  auto e = rf::EmbeddingVector::from_dense(id, v);
  e.normalize();
  return e;
}

std::vector<rf::EmbeddingVector> random_unit(std::mt19937_64& rng, std::size_t n, std::size_t dims) {
  std::normal_distribution<double> g;
  std::vector<rf::EmbeddingVector> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(dims);
    for (auto& x : v) x = g(rng);
    out.push_back(unit("p" + std::to_string(i), v));
  }
  return out;
}

}  // namespace

TEST(Embed, IdenticalDocsIdenticalVectors) {
  for (auto provider : {rf::EmbeddingProvider::kHashedNgrams, rf::EmbeddingProvider::kTfidfProjection}) {
    rf::EmbeddingConfig cfg;
    cfg.provider = provider;
    std::vector<rf::TokenizedDoc> docs = {doc("a", "my card was stolen"), doc("b", "my card was stolen"),
                                          doc("c", "escrow payment misapplied")};
    const auto v = rf::embed_corpus(docs, cfg);
    ASSERT_EQ(v.size(), 3u);
    EXPECT_NEAR(rf::cosine(v[0], v[1]), 1.0, 1e-12);
    for (const auto& e : v) EXPECT_NEAR(e.norm(), 1.0, 1e-9);
  }
}

TEST(Embed, DisjointDocsNearlyOrthogonal) {
  int within = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    rf::EmbeddingConfig cfg;
    cfg.seed = seed;
    std::vector<rf::TokenizedDoc> docs = {doc("a", "mortgage escrow servicer payment late fee"),
                                          doc("b", "husband stole credit card identity loan")};
    const auto v = rf::embed_corpus(docs, cfg);
    if (std::abs(rf::cosine(v[0], v[1])) < 0.1) ++within;
  }
  EXPECT_GE(within, 95);
}

TEST(Embed, DeterministicAndPermutationEquivariant) {
  std::vector<rf::TokenizedDoc> docs = {doc("a", "one two three"), doc("b", "three four five six"),
                                        doc("c", "seven one nine")};
  for (auto provider : {rf::EmbeddingProvider::kHashedNgrams, rf::EmbeddingProvider::kTfidfProjection}) {
    rf::EmbeddingConfig cfg;
    cfg.provider = provider;
    cfg.dims = 64;
    const auto v1 = rf::embed_corpus(docs, cfg);
    EXPECT_EQ(rf::embed_corpus(docs, cfg), v1);
    std::vector<rf::TokenizedDoc> rev(docs.rbegin(), docs.rend());
    const auto v2 = rf::embed_corpus(rev, cfg);
    for (std::size_t i = 0; i < docs.size(); ++i) {
      EXPECT_EQ(v2[docs.size() - 1 - i], v1[i]);
    }
  }
}

TEST(Embed, EmptyVocabulary) {
  rf::TokenizedDoc empty;
  empty.complaint_id = "x";
  std::vector<rf::TokenizedDoc> docs = {empty};
  try {
    rf::embed_corpus(docs, {});
    FAIL();
  } catch (const rf::Error& e) {
    EXPECT_EQ(e.code(), rf::Errc::kEmptyVocabulary);
  }
}

TEST(Embed, ConfigValidation) {
  rf::EmbeddingConfig c;
  c.dims = 1;
  EXPECT_THROW(c.validate(), rf::Error);
  c = {};
  c.ngram_min = 3;
  c.ngram_max = 2;
  EXPECT_THROW(c.validate(), rf::Error);
  c = {};
  EXPECT_NO_THROW(c.validate());
  const nlohmann::json j = c;
  EXPECT_EQ(j.get<rf::EmbeddingConfig>().dims, 4096u);
}

TEST(ApplyWindow, CentredClampedAndFallback) {
  std::string text;
  for (int s = 1; s <= 9; ++s) text += (s == 5 ? "my husband sentence " : "plain sentence ") + std::to_string(s) + ". ";
  const rf::TokenizedDoc d = doc("w", text);
  ASSERT_EQ(d.sentence_count(), 9u);
  const auto lex = rf::Lexicon::defaults();
  auto m = rf::KeywordMatcher(lex).match(d);
  auto w = rf::apply_window(d, m, 5);
  // Sentence indices keep their source numbering: sentences 3..7 are 2..6.
  EXPECT_EQ(w.sentence.front(), 2u);
  EXPECT_EQ(w.sentence.back(), 6u);
  EXPECT_EQ(w.tokens.front(), "plain");
  EXPECT_EQ(w.tokens[2], "3");  // sentences 3..7

  std::string early = "husband here. ";
  for (int s = 2; s <= 9; ++s) early += "plain " + std::to_string(s) + ". ";
  const auto d2 = doc("e", early);
  w = rf::apply_window(d2, rf::KeywordMatcher(lex).match(d2), 5);
  EXPECT_EQ(w.tokens.front(), "husband");
  EXPECT_EQ(w.tokens.back(), "5");

  std::string none;
  for (int s = 1; s <= 9; ++s) none += "plain " + std::to_string(s) + ". ";
  const auto d3 = doc("n", none);
  w = rf::apply_window(d3, rf::KeywordMatcher(lex).match(d3), 5);
  EXPECT_EQ(w.tokens.front(), "plain");
  EXPECT_EQ(w.tokens[1], "1");
  EXPECT_EQ(w.tokens.back(), "5");
}

TEST(ExternalVectors, ImportNormalizesAndChecksIds) {
  rftest::TempDir dir;
  const auto path = (dir / "v.tsv").string();
  {
    std::ofstream out(path);
    out << "a\t2\t2,0\nb\t2\t0,3\nc\t2\t1,1\nzzz\t2\t1,0\n";
  }
  const auto v = rf::import_external_vectors(path, {"a", "b", "c"});
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[0].dense(), (std::vector<double>{1.0, 0.0}));
  for (const auto& e : v) EXPECT_NEAR(e.norm(), 1.0, 1e-12);
  try {
    rf::import_external_vectors(path, {"a", "b", "c", "d"});
    FAIL();
  } catch (const rf::Error& e) {
    EXPECT_EQ(e.code(), rf::Errc::kMissingId);
    EXPECT_NE(std::string(e.what()).find("d"), std::string::npos);
  }
  {
    std::ofstream out(path, std::ios::app);
    out << "a\t2\t1,1\n";
  }
  EXPECT_THROW(rf::import_external_vectors(path, {"a"}), rf::Error);
  {
    std::ofstream out(path);
    out << "a\t2\t1,1\nb\t3\t1,1,1\n";
  }
  try {
    rf::import_external_vectors(path, {"a", "b"});
    FAIL();
  } catch (const rf::Error& e) {
    EXPECT_EQ(e.code(), rf::Errc::kDimensionMismatch);
  }
}

TEST(ExternalVectors, WriteReadRoundTripBothFormats) {
  std::mt19937_64 rng(1);
  const auto vecs = random_unit(rng, 5, 7);
  for (auto fmt : {rf::VectorFormat::kDense, rf::VectorFormat::kSparse}) {
    std::stringstream ss;
    rf::write_vectors(ss, vecs, fmt);
    EXPECT_EQ(rf::read_vectors(ss), vecs);
  }
}

TEST(Fit, SymmetricFixture) {
  std::vector<rf::EmbeddingVector> v = {unit("a", {1, 0}), unit("b", {1, 0}), unit("c", {0, 1}),
                                        unit("d", {0, 1})};
  rf::FitOptions o;
  o.k = 2;
  const auto m = rf::fit(v, o);
  EXPECT_NEAR(m.objective, 4.0, 1e-12);
  EXPECT_EQ(m.labels[0], m.labels[1]);
  EXPECT_EQ(m.labels[2], m.labels[3]);
  EXPECT_NE(m.labels[0], m.labels[2]);
  const auto& c = m.centroids[m.labels[0]];
  EXPECT_NEAR(c[0], 1.0, 1e-12);
  EXPECT_TRUE(m.converged);
}

TEST(Fit, MatchesBruteForceOnSmallSets) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 3 + rng() % 6;
    auto v = random_unit(rng, n, 3);
    rf::FitOptions o;
    o.k = 2;
    o.seed = trial;
    const auto m = rf::fit(v, o);
    std::vector<std::vector<double>> pts;
    for (const auto& e : v) pts.push_back(e.dense());
    EXPECT_NEAR(m.objective, rftest::best_partition_objective(pts, 2), 1e-6) << "trial " << trial;
  }
}

TEST(Fit, InvariantsHold) {
  std::mt19937_64 rng(4);
  auto v = random_unit(rng, 60, 5);
  rf::FitOptions o;
  o.k = 4;
  const auto m = rf::fit(v, o);
  ASSERT_EQ(m.labels.size(), v.size());
  double recomputed = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    ASSERT_GE(m.labels[i], 0);
    ASSERT_LT(m.labels[i], 4);
    recomputed += v[i].dot(m.centroids[m.labels[i]]);
  }
  EXPECT_NEAR(recomputed, m.objective, 1e-6);
  for (std::size_t c = 0; c < m.k; ++c) {
    if (m.empty[c]) continue;
    double sq = 0;
    for (double x : m.centroids[c]) sq += x * x;
    EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-9);
  }
  for (std::size_t i = 1; i < m.objective_trace.size(); ++i) {
    EXPECT_GE(m.objective_trace[i], m.objective_trace[i - 1] - 1e-12);
  }
  if (m.converged) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double own = v[i].dot(m.centroids[m.labels[i]]);
      for (std::size_t c = 0; c < m.k; ++c) {
        if (!m.empty[c]) EXPECT_LE(v[i].dot(m.centroids[c]), own + 1e-9);
      }
    }
  }
}

TEST(Fit, SeedDeterminism) {
  std::mt19937_64 rng(8);
  auto v = random_unit(rng, 40, 4);
  rf::FitOptions o;
  o.k = 3;
  o.seed = 99;
  EXPECT_EQ(nlohmann::json(rf::fit(v, o)).dump(), nlohmann::json(rf::fit(v, o)).dump());
}

TEST(Fit, PlantedRecovery) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed + 100);
    std::normal_distribution<double> noise(0.0, 0.05);
    std::vector<rf::EmbeddingVector> v;
    std::vector<int> truth;
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < 4; ++i) {
        std::vector<double> x(3, 0.0);
        x[c] = 1.0;
        for (auto& e : x) e += noise(rng);
        v.push_back(unit("p" + std::to_string(c * 4 + i), x));
        truth.push_back(c);
      }
    }
    rf::FitOptions o;
    o.k = 3;
    o.seed = seed;
    const auto m = rf::fit(v, o);
    EXPECT_GE(rftest::adjusted_rand_index(m.labels, truth), 0.95) << "seed " << seed;
  }
}

TEST(Fit, Errors) {
  std::vector<rf::EmbeddingVector> v = {unit("a", {1, 0})};
  rf::FitOptions o;
  o.k = 2;
  try {
    rf::fit(v, o);
    FAIL();
  } catch (const rf::Error& e) {
    EXPECT_EQ(e.code(), rf::Errc::kTooFewPoints);
  }
  std::vector<rf::EmbeddingVector> bad = {rf::EmbeddingVector::from_dense("a", std::vector<double>{2, 0}),
                                          unit("b", {0, 1})};
  try {
    rf::fit(bad, o);
    FAIL();
  } catch (const rf::Error& e) {
    EXPECT_EQ(e.code(), rf::Errc::kNonUnitInput);
  }
}

TEST(Fit, EmptyClusterReseededFromWorstPoint) {
  // Five identical points and one outlier, k = 3: some cluster must start or
  // become empty and is refilled, so every cluster ends non-empty.
  std::vector<rf::EmbeddingVector> v;
  for (int i = 0; i < 5; ++i) v.push_back(unit("s" + std::to_string(i), {1, 0, 0}));
  v.push_back(unit("o1", {0, 1, 0}));
  v.push_back(unit("o2", {0.6, 0.8, 0}));
  rf::FitOptions o;
  o.k = 3;
  o.n_init = 1;
  const auto m = rf::fit(v, o);
  const auto sizes = m.cluster_sizes();
  for (std::size_t c = 0; c < 3; ++c) EXPECT_GT(sizes[c], 0u) << "cluster " << c;
}

TEST(Assign, TiesAndLinearScan) {
  rf::ClusterModel m;
  m.k = 2;
  m.dims = 2;
  m.centroids = {{1, 0}, {0, 1}};
  m.empty = {false, false};
  const double r = std::sqrt(0.5);
  EXPECT_EQ(rf::assign(m, std::vector<double>{r, r}), 0);
  EXPECT_EQ(rf::assign(m, std::vector<double>{0, 1}), 1);
  EXPECT_THROW(rf::assign(m, std::vector<double>{1, 0, 0}), rf::Error);

  std::mt19937_64 rng(2);
  auto cents = random_unit(rng, 6, 4);
  m.k = 6;
  m.dims = 4;
  m.centroids.clear();
  for (const auto& c : cents) m.centroids.push_back(c.dense());
  m.empty.assign(6, false);
  for (int t = 0; t < 1000; ++t) {
    const auto v = random_unit(rng, 1, 4)[0];
    int best = 0;
    for (int c = 1; c < 6; ++c) {
      if (v.dot(m.centroids[c]) > v.dot(m.centroids[best])) best = c;
    }
    EXPECT_EQ(rf::assign(m, v), best);
  }
}

TEST(ClusterModel, JsonRoundTrip) {
  std::mt19937_64 rng(6);
  auto v = random_unit(rng, 20, 3);
  rf::FitOptions o;
  o.k = 3;
  const auto m = rf::fit(v, o);
  const nlohmann::json j = m;
  const auto back = j.get<rf::ClusterModel>();
  EXPECT_EQ(back.k, m.k);
  EXPECT_EQ(back.centroids, m.centroids);
  for (std::size_t i = 0; i < m.ids.size(); ++i) EXPECT_EQ(back.cluster_of(m.ids[i]), m.labels[i]);
}
