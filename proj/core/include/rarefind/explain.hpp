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

#ifndef RAREFIND_EXPLAIN_HPP_
#define RAREFIND_EXPLAIN_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rarefind/tokenize.hpp"

namespace rarefind {

class Project;

struct TermScore {
  std::string term;
  double score = 0.0;
};

struct ClusterTopicProfile {
  int cluster = 0;
  std::vector<TermScore> terms;  // score non-increasing, ties by term
  std::size_t n_terms = 0;
};

void to_json(nlohmann::json& j, const ClusterTopicProfile& p);
void from_json(const nlohmann::json& j, ClusterTopicProfile& p);

// Class-based TF-IDF over per-class token concatenations:
//   W(t, c) = tf(t, c) * ln(1 + A / f(t))
// with A the mean token count per class and f(t) the count of t across all
// classes. Classes without tokens are skipped and listed in *skipped.
// Errors: kEmptyClass when fewer than two classes have tokens.
std::vector<ClusterTopicProfile> class_tfidf(const std::map<int, std::vector<std::string>>& classes,
                                             std::size_t n_terms,
                                             std::vector<int>* skipped = nullptr);

// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

struct TfidfResult {
  Matrix matrix;
  std::vector<std::string> features;
  std::vector<double> idf;
};

// tf = count / document length, idf = ln((1 + N) / (1 + df)) + 1. Features are
// the vocab_cap unigrams and bigrams with the highest document frequency (ties
// by term); columns follow that ranking. Rows are not normalized.
// Errors: kEmptySample for no documents.
TfidfResult tfidf_vectors(std::span<const TokenizedDoc> docs, std::size_t vocab_cap);

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // x[feature] <= threshold goes left
  int left = -1;
  int right = -1;
  std::vector<double> probs;  // leaves only, indexed like ForestModel::classes
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
};

struct ForestOptions {
  std::size_t n_trees = 100;
  std::size_t max_depth = 12;
  std::uint64_t seed = 42;
  std::size_t max_features = 0;  // 0 means floor(sqrt(F)), at least 1
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  std::size_t n_trees = 0;
  std::size_t max_depth = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> feature_names;
  std::vector<int> classes;  // sorted class labels

  std::size_t n_features() const { return feature_names.size(); }
  std::optional<std::size_t> class_index(int label) const;
  // Mean of the leaf distributions reached in every tree.
  std::vector<double> predict_proba(std::span<const double> x) const;
  int predict(std::span<const double> x) const;
  // Probability of class slot `cls` where feature j reads value(j).
  double probability(std::size_t cls, const std::function<double(std::size_t)>& value) const;
  // Features used by at least one split, sorted.
  std::vector<std::size_t> used_features() const;
};

void to_json(nlohmann::json& j, const ForestModel& m);
void from_json(const nlohmann::json& j, ForestModel& m);

// CART trees with Gini impurity on bootstrap samples, floor(sqrt(F)) candidate
// features per split. After growth every leaf distribution is re-estimated
// from the full training set routed through the tree.
// Errors: kSingleClass, kInvalidArgument (shape mismatch, no rows).
ForestModel train_forest(const Matrix& x, std::span<const int> y, const ForestOptions& options,
                         std::vector<std::string> feature_names = {});

enum class ShapleyMode { kExact, kSampled };

struct ShapleyOptions {
  ShapleyMode mode = ShapleyMode::kExact;
  std::size_t permutations = 1000;
  std::uint64_t seed = 42;
  std::size_t exact_limit = 12;
};

struct Attribution {
  double base_value = 0.0;    // v(empty set)
  double prediction = 0.0;    // v(all features) = P(target | x) averaged over background
  std::vector<double> phi;    // one entry per feature, zero for inactive ones
  std::size_t active_features = 0;
  ShapleyMode mode = ShapleyMode::kExact;
};

// Interventional Shapley values of P(target_cluster | x) with
//   v(S) = mean over background rows b of P(target | x on S, b elsewhere).
// Active features are those split on by the forest where x differs from at
// least one background row; the rest get phi = 0. Exact mode enumerates all
// coalitions of the active features; sampled mode averages marginal
// contributions over seeded random permutations. Both are additive:
// base_value + sum(phi) == prediction.
// Errors: kEmptyBackground, kTooManyFeaturesForExact, kDimensionMismatch,
// kInvalidArgument (unknown target class).
Attribution shapley_attribution(const ForestModel& model, std::span<const double> x,
                                int target_cluster, const Matrix& background,
                                const ShapleyOptions& options);

struct SummaryEntry {
  std::string feature;
  double mean_abs_phi = 0.0;
  double mean_phi = 0.0;
  double positive_fraction = 0.0;  // share of instances with phi > 0
};

void to_json(nlohmann::json& j, const SummaryEntry& e);
void from_json(const nlohmann::json& j, SummaryEntry& e);

// Features ranked by mean |phi| (ties by name), first k.
std::vector<SummaryEntry> attribution_summary(std::span<const Attribution> reports,
                                              std::span<const std::string> feature_names,
                                              std::size_t k = 20);

struct ExplainOptions {
  std::size_t vocab_cap = 200;
  ForestOptions forest;
  std::size_t max_rows = 2000;
  std::size_t background = 100;
  std::size_t instances = 20;
  std::size_t permutations = 50;
  std::size_t exact_limit = 12;
  std::size_t top_k = 20;
  std::uint64_t seed = 42;
};

struct AttributionReport {
  int iteration = 0;
  int target_cluster = 0;
  std::map<std::string, Attribution> per_instance;
  std::vector<SummaryEntry> summary_topk;
  std::vector<std::string> feature_names;
  double training_accuracy = 0.0;
};

nlohmann::json to_json(const AttributionReport& r);

// Trains a forest that predicts cluster membership from TF-IDF rows of the
// iteration's clustered documents (reference members first, then a seeded
// sample up to max_rows), explains members of target_cluster, and stores the
// report under explain/iter_N.json.
// Errors: kUnknownRound (no model for the iteration), kInvalidArgument.
AttributionReport explain_cluster(Project& project, int iteration, int target_cluster,
                                  const ExplainOptions& options);

}  // namespace rarefind

#endif  // RAREFIND_EXPLAIN_HPP_
