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

#include "rarefind/records.hpp"

#include <algorithm>
#include <array>

#include "rarefind/common.hpp"

namespace rarefind {

namespace {

constexpr std::array<std::string_view, 8> kCategories = {
    "Relationship Status", "Financial Product/Service", "Type of FA",
    "Point of Discovery",  "Method(s) of Resolution",   "Barriers to Help",
    "Consequences of FA",  "Intimate Threat",
};

}  // namespace

std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kRelevant: return "relevant";
    case Verdict::kNotRelevant: return "not_relevant";
    case Verdict::kUnsure: return "unsure";
  }
  return "unsure";
}

std::optional<Verdict> parse_verdict(std::string_view name) {
  if (name == "relevant") return Verdict::kRelevant;
  if (name == "not_relevant") return Verdict::kNotRelevant;
  if (name == "unsure") return Verdict::kUnsure;
  return std::nullopt;
}

std::span<const std::string_view> framework_categories() { return kCategories; }

bool is_framework_category(std::string_view name) {
  return std::find(kCategories.begin(), kCategories.end(), name) != kCategories.end();
}

bool Label::same_content(const Label& o) const {
  return complaint_id == o.complaint_id && reviewer_id == o.reviewer_id &&
         verdict == o.verdict && iteration == o.iteration && note == o.note &&
         framework_tags == o.framework_tags;
}

void to_json(nlohmann::json& j, const Label& l) {
  j = {{"complaint_id", l.complaint_id},
       {"reviewer_id", l.reviewer_id},
       {"verdict", verdict_name(l.verdict)},
       {"iteration", l.iteration},
       {"timestamp", l.timestamp},
       {"framework_tags", l.framework_tags}};
  j["note"] = l.note ? nlohmann::json(*l.note) : nlohmann::json();
}

void from_json(const nlohmann::json& j, Label& l) {
  l.complaint_id = j.at("complaint_id").get<std::string>();
  l.reviewer_id = j.at("reviewer_id").get<std::string>();
  auto v = parse_verdict(j.at("verdict").get<std::string>());
  if (!v) throw Error(Errc::kInvalidArgument, "unknown verdict");
  l.verdict = *v;
  l.iteration = j.at("iteration").get<int>();
  l.timestamp = j.value("timestamp", "");
  l.note.reset();
  if (j.contains("note") && !j.at("note").is_null()) l.note = j.at("note").get<std::string>();
  l.framework_tags = j.value("framework_tags", std::set<std::string>{});
}

void to_json(nlohmann::json& j, const Adjudication& a) {
  j = {{"complaint_id", a.complaint_id},
       {"iteration", a.iteration},
       {"verdict", verdict_name(a.verdict)},
       {"timestamp", a.timestamp}};
  j["note"] = a.note ? nlohmann::json(*a.note) : nlohmann::json();
}

void from_json(const nlohmann::json& j, Adjudication& a) {
  a.complaint_id = j.at("complaint_id").get<std::string>();
  a.iteration = j.at("iteration").get<int>();
  auto v = parse_verdict(j.at("verdict").get<std::string>());
  if (!v) throw Error(Errc::kInvalidArgument, "unknown verdict");
  a.verdict = *v;
  a.timestamp = j.value("timestamp", "");
  a.note.reset();
  if (j.contains("note") && !j.at("note").is_null()) a.note = j.at("note").get<std::string>();
}

std::string_view round_kind_name(RoundKind k) {
  return k == RoundKind::kKeyword ? "keyword" : "cluster";
}

RoundKind parse_round_kind(std::string_view name) {
  if (name == "keyword") return RoundKind::kKeyword;
  if (name == "cluster") return RoundKind::kCluster;
  throw Error(Errc::kInvalidArgument, "unknown round kind '" + std::string(name) + "'");
}

std::string_view refset_policy_name(RefsetPolicy p) {
  switch (p) {
    case RefsetPolicy::kAlways: return "always";
    case RefsetPolicy::kIfConfirmed: return "if_confirmed";
    case RefsetPolicy::kDefer: return "defer";
  }
  return "defer";
}

RefsetPolicy parse_refset_policy(std::string_view name) {
  if (name == "always") return RefsetPolicy::kAlways;
  if (name == "if_confirmed") return RefsetPolicy::kIfConfirmed;
  if (name == "defer") return RefsetPolicy::kDefer;
  throw Error(Errc::kInvalidArgument, "unknown refset policy '" + std::string(name) + "'");
}

std::vector<std::string> ReviewRound::reviewers() const {
  std::set<std::string> all;
  for (const auto& [id, rs] : assignments) all.insert(rs.begin(), rs.end());
  return {all.begin(), all.end()};
}

bool ReviewRound::is_assigned(const std::string& id, const std::string& reviewer) const {
  auto it = assignments.find(id);
  if (it == assignments.end()) return false;
  return std::find(it->second.begin(), it->second.end(), reviewer) != it->second.end();
}

const Label* ReviewRound::label(const std::string& id, const std::string& reviewer) const {
  auto it = labels.find({id, reviewer});
  return it == labels.end() ? nullptr : &it->second;
}

std::vector<std::string> ReviewRound::unlabeled_slots() const {
  std::vector<std::string> out;
  for (const auto& [id, rs] : assignments) {
    for (const auto& r : rs) {
      if (!label(id, r)) out.push_back(id + "/" + r);
    }
  }
  return out;
}

bool ReviewRound::complete() const {
  for (const auto& [id, rs] : assignments) {
    for (const auto& r : rs) {
      if (!label(id, r)) return false;
    }
  }
  return true;
}

bool ReviewRound::split(const std::string& id) const {
  auto it = assignments.find(id);
  if (it == assignments.end() || it->second.empty()) return false;
  const Label* first = label(id, it->second.front());
  if (!first) return false;
  for (const auto& r : it->second) {
    const Label* l = label(id, r);
    if (!l) return false;
    if (l->verdict != first->verdict) return true;
  }
  return false;
}

bool ReviewRound::disputed(const std::string& id) const {
  return split(id) && adjudications.count(id) == 0;
}

std::optional<Verdict> ReviewRound::final_verdict(const std::string& id) const {
  if (auto a = adjudications.find(id); a != adjudications.end()) return a->second.verdict;
  auto it = assignments.find(id);
  if (it == assignments.end() || it->second.empty()) return std::nullopt;
  std::optional<Verdict> agreed;
  for (const auto& r : it->second) {
    const Label* l = label(id, r);
    if (!l) return std::nullopt;
    if (agreed && *agreed != l->verdict) return std::nullopt;
    agreed = l->verdict;
  }
  return agreed;
}

std::vector<std::string> ReviewRound::confirmed() const {
  std::vector<std::string> out;
  for (const auto& [id, rs] : assignments) {
    if (final_verdict(id) == Verdict::kRelevant) out.push_back(id);
  }
  return out;
}

void to_json(nlohmann::json& j, const Provenance& p) {
  j = {{"source", p.source}, {"iteration", p.iteration}, {"reviewers", p.reviewers}};
}

void from_json(const nlohmann::json& j, Provenance& p) {
  p.source = j.at("source").get<std::string>();
  p.iteration = j.at("iteration").get<int>();
  p.reviewers = j.value("reviewers", std::vector<std::string>{});
}

void to_json(nlohmann::json& j, const ReferenceSet& r) {
  nlohmann::json prov = nlohmann::json::object();
  for (const auto& [id, p] : r.provenance) prov[id] = p;
  j = {{"format_version", 1},
       {"version", r.version},
       {"members", r.members},
       {"provenance", std::move(prov)}};
}

void from_json(const nlohmann::json& j, ReferenceSet& r) {
  r.version = j.at("version").get<int>();
  r.members = j.at("members").get<std::set<std::string>>();
  r.provenance.clear();
  for (const auto& [id, p] : j.at("provenance").items()) r.provenance[id] = p.get<Provenance>();
}

}  // namespace rarefind
