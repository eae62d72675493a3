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

#ifndef RAREFIND_AGREEMENT_HPP_
#define RAREFIND_AGREEMENT_HPP_

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rarefind/records.hpp"

namespace rarefind {

// Cohen's kappa over (rater1, rater2) label pairs. Perfect observed agreement
// yields 1 even when only one category occurs; an undefined value (chance
// agreement 1 with observed agreement below 1) yields nullopt.
// Throws kEmptySample on no pairs.
std::optional<double> cohen_kappa(std::span<const std::pair<std::string, std::string>> pairs);

// Item x category rater counts with a fixed number of raters per item.
struct LabelMatrix {
  std::vector<std::string> items;
  std::vector<std::string> categories;
  std::vector<std::vector<std::size_t>> counts;
  std::size_t raters_per_item = 0;

  // Categories are the sorted union of observed labels. Throws
  // kInvalidArgument when items carry different rater counts.
  static LabelMatrix from_ratings(const std::map<std::string, std::vector<std::string>>& ratings);
  // Throws kInvalidArgument unless every row sums to raters_per_item.
  void validate() const;
};

// Fleiss' kappa. Same conventions as cohen_kappa; throws kEmptySample for an
// empty matrix and kInvalidArgument for fewer than 2 raters per item.
std::optional<double> fleiss_kappa(const LabelMatrix& m);

enum class DisagreementScope {
  kRequireComplete,  // throws kIncompleteRound listing unlabeled slots
  kLabeledOnly,      // ignores items still missing a label
};

// Items whose verdicts differ and carry no adjudication, sorted by id.
// "unsure" differs from both definite verdicts.
std::vector<std::string> disagreements(const ReviewRound& round,
                                       DisagreementScope scope = DisagreementScope::kRequireComplete);

struct AgreementEntry {
  std::string category;  // "relevance" or a framework category
  std::optional<double> kappa;
  std::size_t n_items = 0;
};

struct AgreementReport {
  int iteration = 0;
  std::string method;  // "cohen" (exactly two reviewers in the round) or "fleiss"
  std::vector<AgreementEntry> entries;
};

void to_json(nlohmann::json& j, const AgreementReport& r);

// Relevance kappa over fully labeled items, plus a presence/absence kappa for
// every framework category used in the round. Throws kEmptySample when no item
// is fully labeled.
AgreementReport round_agreement(const ReviewRound& round);

}  // namespace rarefind

#endif  // RAREFIND_AGREEMENT_HPP_
