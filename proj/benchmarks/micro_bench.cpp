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

// Microbenchmarks for the hot paths: tokenizing, keyword matching, spherical
// k-means and near-duplicate detection.

#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "rarefind/cluster.hpp"
#include "rarefind/embed.hpp"
#include "rarefind/ingest.hpp"
#include "rarefind/lexicon.hpp"
#include "rarefind/tokenize.hpp"

namespace rf = rarefind;

namespace {

const std::vector<std::string> kWords = {
    "my",     "ex",      "husband", "wife",    "stole",    "card",    "account", "bank",    "the",
    "loan",   "payment", "late",    "fee",     "called",   "credit",  "report",  "debt",    "collector",
    "opened", "without", "consent", "divorce", "separated", "mortgage", "escrow", "charged", "refund"};

std::vector<std::string> narratives(std::size_t n, std::size_t words, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::string s;
    for (std::size_t w = 0; w < words; ++w) {
      s += kWords[rng() % kWords.size()];
      s += (rng() % 12 == 0) ? ". " : " ";
    }
    out.push_back(std::move(s));
  }
  return out;
}

void BM_Tokenize(benchmark::State& state) {
  const auto texts = narratives(256, static_cast<std::size_t>(state.range(0)), 1);
  std::size_t bytes = 0;
  for (const auto& t : texts) bytes += t.size();
  for (auto _ : state) {
    for (const auto& t : texts) benchmark::DoNotOptimize(rf::tokenize(t, rf::Preset::kLight));
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * bytes));
}
BENCHMARK(BM_Tokenize)->Arg(50)->Arg(200)->Arg(1000);

void BM_Match(benchmark::State& state) {
  const rf::Lexicon lex = rf::Lexicon::defaults();
  const rf::KeywordMatcher matcher(lex);
  std::vector<rf::TokenizedDoc> docs;
  for (const auto& t : narratives(256, static_cast<std::size_t>(state.range(0)), 2)) {
    docs.push_back(lex.normalizer().apply(rf::tokenize(t, rf::Preset::kLight)));
  }
  for (auto _ : state) {
    for (const auto& d : docs) benchmark::DoNotOptimize(matcher.match(d, 10));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * docs.size()));
}
BENCHMARK(BM_Match)->Arg(50)->Arg(200)->Arg(1000);

void BM_KMeans(benchmark::State& state) {
  std::vector<rf::TokenizedDoc> docs;
  for (const auto& t : narratives(static_cast<std::size_t>(state.range(0)), 80, 3)) {
    docs.push_back(rf::tokenize(t, rf::Preset::kLight));
  }
  rf::EmbeddingConfig ec;
  ec.dims = 1024;
  const auto vectors = rf::embed_corpus(docs, ec);
  rf::FitOptions fo;
  fo.k = 12;
  fo.n_init = 1;
  for (auto _ : state) benchmark::DoNotOptimize(rf::fit(vectors, fo));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * vectors.size()));
}
BENCHMARK(BM_KMeans)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

void BM_NearDuplicates(benchmark::State& state) {
  const auto texts = narratives(static_cast<std::size_t>(state.range(0)), 120, 4);
  std::vector<std::vector<std::string>> docs;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    docs.push_back(rf::tokenize(texts[i], rf::Preset::kRaw).tokens);
    // Every tenth document gets a one-token variant.
    if (i % 10 == 0) {
      auto copy = docs.back();
      copy.back() = "changed";
      docs.push_back(std::move(copy));
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(rf::near_duplicate_pairs(docs, 0.98));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * docs.size()));
}
BENCHMARK(BM_NearDuplicates)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
