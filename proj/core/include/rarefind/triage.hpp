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

#ifndef RAREFIND_TRIAGE_HPP_
#define RAREFIND_TRIAGE_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rarefind/cluster.hpp"
#include "rarefind/embed.hpp"
#include "rarefind/ingest.hpp"
#include "rarefind/lexicon.hpp"
#include "rarefind/records.hpp"
#include "rarefind/store.hpp"

namespace rarefind {

struct RefDistribution {
  std::map<int, double> fractions;  // clusters holding at least one member
  std::size_t clustered = 0;        // members found in the model
  std::size_t excluded = 0;         // members outside the clustered sample
};

// Errors: kEmptyReference (no member is clustered).
RefDistribution ref_distribution(const ClusterModel& model, const ReferenceSet& ref);

struct SelectionStrategy {
  enum class Kind { kTopM, kCoverage };
  Kind kind = Kind::kTopM;
  std::size_t m = 3;
  double coverage = 0.8;

  static SelectionStrategy top_m(std::size_t m);
  static SelectionStrategy with_coverage(double c);
  // "top_m:3" or "coverage:0.8".
  static SelectionStrategy parse(std::string_view text);
  std::string describe() const;
};

void to_json(nlohmann::json& j, const SelectionStrategy& s);
void from_json(const nlohmann::json& j, SelectionStrategy& s);

// Clusters in descending fraction, ties to the lower index. top_m keeps the
// first m; coverage keeps the shortest prefix whose fractions reach c.
std::vector<int> select_clusters(const std::map<int, double>& dist, const SelectionStrategy& s);

// Seeded uniform sample of n non-reference members of the given clusters.
// Items are drawn in a seeded shuffle of the id-sorted candidates; item i of
// the draw gets reviewer slots 2i and 2i+1 (mod reviewer count), so every
// item has two distinct reviewers and loads differ by at most one.
// Errors: kTooFewReviewers (< 2 distinct), kInsufficientCandidates.
std::map<std::string, std::vector<std::string>> sample_for_review(
    const ClusterModel& model, std::span<const int> clusters, const ReferenceSet& ref,
    std::size_t n, std::span<const std::string> reviewers, std::uint64_t seed);

// Relevant count over sample size. Errors: kEmptySample.
double estimate_yield(std::span<const std::pair<std::string, bool>> sample_verdicts);

enum class CandidatePool { kIpMatched, kRandom };

struct TriageConfig {
  Preset preset = Preset::kLight;
  std::size_t window = 10;
  EmbeddingConfig embedding;
  std::string external_vectors;  // vector file for the external_file provider
  std::size_t k = 12;
  std::uint64_t seed = 42;
  std::size_t n_init = 20;
  std::size_t max_iters = 100;
  double tol = 1e-6;
  SelectionStrategy selection;
  std::size_t n_per_round = 300;
  std::size_t keyword_sample = 0;  // 0 reviews every proximity match
  std::vector<std::string> reviewers = {"r1", "r2"};
  std::size_t candidate_sample = 50000;
  CandidatePool candidate_pool = CandidatePool::kIpMatched;
  std::size_t max_iterations = 6;
  double yield_floor = 0.05;
  std::size_t topic_terms = 10;
};

void to_json(nlohmann::json& j, const TriageConfig& c);
// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, TriageConfig& c);

struct IterationRecord {
  int iteration = 0;
  std::string kind = "cluster";  // "keyword" for the seeding round
  EmbeddingConfig embedding;
  std::size_t k = 0;
  std::uint64_t seed = 0;      // configured seed
  std::uint64_t fit_seed = 0;  // seed handed to the clusterer
  int model_iteration = 0;     // iteration whose model was sampled
  std::string candidate_pool;
  std::size_t pool_size = 0;
  std::size_t clustered = 0;
  double objective = 0.0;
  int ref_version_in = 0;
  std::optional<int> ref_version_out;
  std::map<int, double> ref_distribution;
  std::size_t ref_excluded = 0;
  std::string selection;
  std::vector<int> selected_clusters;
  std::vector<std::string> sampled;
  std::vector<std::string> confirmed;
  std::map<int, double> estimated_yield;
  std::optional<double> round_yield;
  bool sealed = false;
  std::string created_at;

  // estimated_yield of the first selected cluster that was sampled.
  std::optional<double> top_cluster_yield() const;
};

void to_json(nlohmann::json& j, const IterationRecord& r);
void from_json(const nlohmann::json& j, IterationRecord& r);

std::string iteration_path(int iteration);
std::string model_path(int iteration);
std::string embeddings_path(int iteration);
std::string topics_path(int iteration);
std::string explain_path(int iteration);
std::optional<IterationRecord> load_iteration(const Project& project, int iteration);
std::vector<IterationRecord> load_iterations(const Project& project);

// Normalized light-preset documents and proximity matches for the whole
// corpus, in corpus order.
struct PreparedCorpus {
  std::vector<TokenizedDoc> docs;
  std::vector<MatchResult> matches;
};
PreparedCorpus prepare_corpus(std::span<const Complaint> corpus, const Lexicon& lex,
                              Preset preset, std::size_t window);

struct RunOptions {
  bool force = false;  // seal a pending round instead of refusing
};

// Iteration 0: proximity-matched complaints go to review. Sealing it seeds the
// reference set. Errors: kNoCandidates, kUnfinishedRound.
IterationRecord run_keyword_round(Project& project, const TriageConfig& cfg, RunOptions opt = {});

// Samples the candidate pool, embeds, clusters, selects clusters and opens a
// review round. Reference members and complaints assigned in any earlier
// round are never drawn again. A pending steering selection on the latest model replaces the
// refit. Errors: kEmptyReference, kNoCandidates, kUnfinishedRound,
// kStopConditionMet, kInsufficientCandidates.
IterationRecord run_iteration(Project& project, const TriageConfig& cfg, RunOptions opt = {});

// Seals the round, records confirmed items and per-cluster yields. The
// reference version only moves when something was confirmed.
IterationRecord seal_iteration(Project& project, int iteration, bool force = false);

// Manual cluster selection for the next round, applied to the model of
// model_iteration. Errors: kUnknownRound, kInvalidArgument.
void set_steering(Project& project, int model_iteration, const std::vector<int>& clusters);
std::optional<nlohmann::json> steering(const Project& project);

struct BaselineComparison {
  std::size_t total = 0;
  std::size_t keyword_seeded = 0;       // provenance: keyword round
  std::size_t workflow_only = 0;        // provenance: a clustering iteration
  std::size_t both = 0;                 // matched by the proximity rule
  std::size_t proximity_misses = 0;     // not matched by the proximity rule
  std::size_t no_proximity_misses = 0;  // not matched even without proximity
  double growth = 0.0;                  // proximity_misses / total
};

void to_json(nlohmann::json& j, const BaselineComparison& b);

BaselineComparison compare_keyword_baseline(const ReferenceSet& final_ref, const Lexicon& lex,
                                            std::span<const Complaint> corpus,
                                            std::size_t window = 10);

}  // namespace rarefind

#endif  // RAREFIND_TRIAGE_HPP_
