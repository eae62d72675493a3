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

#ifndef RAREFIND_TESTS_SUPPORT_HPP_
#define RAREFIND_TESTS_SUPPORT_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rarefind/ingest.hpp"
#include "rarefind/lexicon.hpp"
#include "rarefind/records.hpp"
#include "rarefind/store.hpp"

namespace rftest {

// Directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "rf");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

// ---- oracles -------------------------------------------------------------

// Naive scan: every start position against every phrase.
std::vector<rarefind::TokenRange> naive_occurrences(const std::vector<std::string>& tokens,
                                                    const std::set<std::vector<std::string>>& phrases);

struct NaiveHit {
  rarefind::TokenRange ip;
  rarefind::TokenRange abuse;
  std::size_t gap;
};

// All (ip, abuse) pairs whose gap is within window, counting tokens strictly
// between the spans one by one.
std::vector<NaiveHit> naive_proximity(const std::vector<rarefind::TokenRange>& ip,
                                      const std::vector<rarefind::TokenRange>& abuse,
                                      std::size_t window);

// Multiset Jaccard by explicit counting maps.
double naive_multiset_jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Best spherical k-means objective over every partition of the points into
// exactly k non-empty groups. The optimal centroid of a group is its
// normalized sum, so a group contributes the norm of its sum.
double best_partition_objective(const std::vector<std::vector<double>>& points, std::size_t k);

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

// Shapley values by averaging marginal contributions over all n! orderings.
std::vector<double> permutation_shapley(std::size_t n,
                                        const std::function<double(const std::vector<bool>&)>& v);

// ---- synthetic data ------------------------------------------------------

// The 18 CFPB column names in export order.
const std::vector<std::string>& cfpb_header();

std::string csv_quote(const std::string& field);
std::string to_csv(const std::vector<rarefind::Complaint>& rows);

rarefind::Complaint make_complaint(const std::string& id, const std::string& narrative,
                                   const std::string& date = "2021-03-04",
                                   const std::string& company = "Acme Bank");

// Random corpus with missing narratives, exact duplicates and near-duplicate
// resubmissions mixed in.
std::vector<rarefind::Complaint> random_corpus(std::mt19937_64& rng, std::size_t n);

struct PlantedCorpus {
  std::vector<rarefind::Complaint> complaints;
  std::set<std::string> positives;
  std::set<std::string> positives_without_abuse;  // lack every abuse keyword
  double base_rate = 0.0;
};

// n documents, positive_rate of them planted positives: a partner mention plus
// a shared latent vocabulary, and an abuse keyword for all but
// no_abuse_fraction of them. Negatives come from several unrelated topics; a
// share of them also mention a partner so the keyword pool is not pure.
PlantedCorpus planted_corpus(std::size_t n, double positive_rate, double no_abuse_fraction,
                             std::uint64_t seed);

// Labels every unlabeled slot of the open round from an oracle truth set,
// both reviewers agreeing.
std::size_t label_round_truthfully(rarefind::Project& project, int iteration,
                                   const std::set<std::string>& truth);

std::string read_text(const std::filesystem::path& p);

}  // namespace rftest

#endif  // RAREFIND_TESTS_SUPPORT_HPP_
