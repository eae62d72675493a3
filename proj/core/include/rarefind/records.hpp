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

#ifndef RAREFIND_RECORDS_HPP_
#define RAREFIND_RECORDS_HPP_

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace rarefind {

enum class Verdict { kRelevant, kNotRelevant, kUnsure };

std::string_view verdict_name(Verdict v);
std::optional<Verdict> parse_verdict(std::string_view name);

// The eight high-level coding categories reviewers may attach to a label.
std::span<const std::string_view> framework_categories();
bool is_framework_category(std::string_view name);

struct Label {
  std::string complaint_id;
  std::string reviewer_id;
  Verdict verdict = Verdict::kUnsure;
  int iteration = 0;
  std::string timestamp;  // informational only
  std::optional<std::string> note;
  std::set<std::string> framework_tags;

  // Equality on everything except the timestamp; used for idempotent resubmission.
  bool same_content(const Label& other) const;
};

void to_json(nlohmann::json& j, const Label& l);
void from_json(const nlohmann::json& j, Label& l);

// Group verdict for a disputed item; overrides the individual labels.
struct Adjudication {
  std::string complaint_id;
  int iteration = 0;
  Verdict verdict = Verdict::kUnsure;
  std::string timestamp;
  std::optional<std::string> note;
};

void to_json(nlohmann::json& j, const Adjudication& a);
void from_json(const nlohmann::json& j, Adjudication& a);

enum class RoundKind { kKeyword, kCluster };
std::string_view round_kind_name(RoundKind k);
RoundKind parse_round_kind(std::string_view name);

// What sealing a round does to the reference set.
//   kAlways: snapshot immediately, version bumps even with nothing confirmed.
//   kIfConfirmed: snapshot only when at least one item is confirmed.
//   kDefer: leave it to an explicit snapshot call.
enum class RefsetPolicy { kAlways, kIfConfirmed, kDefer };
std::string_view refset_policy_name(RefsetPolicy p);
RefsetPolicy parse_refset_policy(std::string_view name);

// One two-reviewer review round. Built by replaying the project log.
struct ReviewRound {
  int iteration = 0;
  RoundKind kind = RoundKind::kCluster;
  std::map<std::string, std::vector<std::string>> assignments;  // id -> reviewers (sorted)
  std::map<std::pair<std::string, std::string>, Label> labels;  // (id, reviewer) -> live label
  std::map<std::string, Adjudication> adjudications;
  bool sealed = false;
  bool forced = false;
  bool snapshot_resolved = false;  // its effect on the reference set has been applied

  std::vector<std::string> reviewers() const;
  bool is_assigned(const std::string& id, const std::string& reviewer) const;
  const Label* label(const std::string& id, const std::string& reviewer) const;
  // "id/reviewer" for every assigned slot without a label.
  std::vector<std::string> unlabeled_slots() const;
  bool complete() const;
  // Both reviewers labeled and the verdicts differ.
  bool split(const std::string& id) const;
  // split() and not yet adjudicated.
  bool disputed(const std::string& id) const;
  // Adjudicated verdict, else the agreed verdict, else none.
  std::optional<Verdict> final_verdict(const std::string& id) const;
  // Items whose final verdict is relevant, sorted.
  std::vector<std::string> confirmed() const;
};

struct Provenance {
  std::string source;  // "keyword_round" or "iteration"
  int iteration = 0;
  std::vector<std::string> reviewers;

  bool operator==(const Provenance&) const = default;
};

void to_json(nlohmann::json& j, const Provenance& p);
void from_json(const nlohmann::json& j, Provenance& p);

struct ReferenceSet {
  int version = 0;
  std::set<std::string> members;
  std::map<std::string, Provenance> provenance;

  bool contains(const std::string& id) const { return members.count(id) > 0; }
  std::size_t size() const { return members.size(); }
  bool operator==(const ReferenceSet&) const = default;
};

void to_json(nlohmann::json& j, const ReferenceSet& r);
void from_json(const nlohmann::json& j, ReferenceSet& r);

}  // namespace rarefind

#endif  // RAREFIND_RECORDS_HPP_
