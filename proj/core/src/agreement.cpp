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

#include "rarefind/agreement.hpp"

#include <algorithm>
#include <set>

#include "rarefind/common.hpp"

namespace rarefind {

namespace {

std::optional<double> kappa_from(double p_o, double p_e) {
  if (p_o >= 1.0) return 1.0;
  if (p_e >= 1.0) return std::nullopt;
  return (p_o - p_e) / (1.0 - p_e);
}

}  // namespace

std::optional<double> cohen_kappa(std::span<const std::pair<std::string, std::string>> pairs) {
  if (pairs.empty()) throw Error(Errc::kEmptySample, "no label pairs");
  std::map<std::string, std::size_t> left, right;
  std::size_t agree = 0;
  for (const auto& [a, b] : pairs) {
    ++left[a];
    ++right[b];
    if (a == b) ++agree;
  }
  const double n = static_cast<double>(pairs.size());
  double p_e = 0.0;
  for (const auto& [cat, c] : left) {
    auto it = right.find(cat);
    if (it != right.end()) p_e += (static_cast<double>(c) / n) * (static_cast<double>(it->second) / n);
  }
  return kappa_from(static_cast<double>(agree) / n, p_e);
}

LabelMatrix LabelMatrix::from_ratings(
    const std::map<std::string, std::vector<std::string>>& ratings) {
  LabelMatrix m;
  std::set<std::string> cats;
  for (const auto& [item, labels] : ratings) cats.insert(labels.begin(), labels.end());
  m.categories.assign(cats.begin(), cats.end());
  bool first = true;
  for (const auto& [item, labels] : ratings) {
    if (first) {
      m.raters_per_item = labels.size();
      first = false;
    } else if (labels.size() != m.raters_per_item) {
      throw Error(Errc::kInvalidArgument, "item '" + item + "' has " +
                                              std::to_string(labels.size()) + " ratings, expected " +
                                              std::to_string(m.raters_per_item));
    }
    std::vector<std::size_t> row(m.categories.size(), 0);
    for (const auto& l : labels) {
      auto pos = std::lower_bound(m.categories.begin(), m.categories.end(), l);
      ++row[static_cast<std::size_t>(pos - m.categories.begin())];
    }
    m.items.push_back(item);
    m.counts.push_back(std::move(row));
  }
  return m;
}

void LabelMatrix::validate() const {
  if (counts.size() != items.size() && !items.empty()) {
    throw Error(Errc::kInvalidArgument, "items and count rows differ in length");
  }
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i].size() != categories.size() && !categories.empty()) {
      throw Error(Errc::kInvalidArgument, "row " + std::to_string(i) + " has wrong width");
    }
    std::size_t s = 0;
    for (auto c : counts[i]) s += c;
    if (s != raters_per_item) {
      throw Error(Errc::kInvalidArgument, "row " + std::to_string(i) + " sums to " +
                                              std::to_string(s) + ", expected " +
                                              std::to_string(raters_per_item));
    }
  }
}

std::optional<double> fleiss_kappa(const LabelMatrix& m) {
  if (m.counts.empty()) throw Error(Errc::kEmptySample, "empty label matrix");
  if (m.raters_per_item < 2) throw Error(Errc::kInvalidArgument, "need at least 2 raters per item");
  m.validate();
  const double n = static_cast<double>(m.raters_per_item);
  const double items = static_cast<double>(m.counts.size());
  const std::size_t width = m.counts.front().size();
  std::vector<double> totals(width, 0.0);
  double p_bar = 0.0;
  for (const auto& row : m.counts) {
    double s = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      const double c = static_cast<double>(row[j]);
      s += c * (c - 1.0);
      totals[j] += c;
    }
    p_bar += s / (n * (n - 1.0));
  }
  p_bar /= items;
  double p_e = 0.0;
  for (double t : totals) {
    const double p = t / (items * n);
    p_e += p * p;
  }
  return kappa_from(p_bar, p_e);
}

std::vector<std::string> disagreements(const ReviewRound& round, DisagreementScope scope) {
  if (scope == DisagreementScope::kRequireComplete) {
    auto missing = round.unlabeled_slots();
    if (!missing.empty()) {
      std::string msg = "unlabeled:";
      for (const auto& s : missing) msg += " " + s;
      throw Error(Errc::kIncompleteRound, msg);
    }
  }
  std::vector<std::string> out;
  for (const auto& [id, rs] : round.assignments) {
    if (round.disputed(id)) out.push_back(id);
  }
  return out;
}

void to_json(nlohmann::json& j, const AgreementReport& r) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : r.entries) {
    entries.push_back({{"category", e.category},
                       {"kappa", e.kappa ? nlohmann::json(*e.kappa) : nlohmann::json()},
                       {"n_items", e.n_items}});
  }
  j = {{"iteration", r.iteration}, {"method", r.method}, {"entries", std::move(entries)}};
}

AgreementReport round_agreement(const ReviewRound& round) {
  const auto reviewers = round.reviewers();
  AgreementReport report;
  report.iteration = round.iteration;
  report.method = reviewers.size() == 2 ? "cohen" : "fleiss";

  // Fully labeled items only; labels in reviewer order.
  std::vector<std::pair<std::string, std::vector<const Label*>>> items;
  std::set<std::string> tags;
  for (const auto& [id, rs] : round.assignments) {
    std::vector<const Label*> ls;
    for (const auto& r : rs) {
      if (const Label* l = round.label(id, r)) ls.push_back(l);
    }
    if (ls.size() != rs.size() || ls.size() < 2) continue;
    for (const Label* l : ls) tags.insert(l->framework_tags.begin(), l->framework_tags.end());
    items.emplace_back(id, std::move(ls));
  }
  if (items.empty()) throw Error(Errc::kEmptySample, "no fully labeled items in round");

  auto compute = [&](const std::string& category, auto&& value_of) {
    AgreementEntry e;
    e.category = category;
    e.n_items = items.size();
    if (report.method == "cohen") {
      std::vector<std::pair<std::string, std::string>> pairs;
      for (const auto& [id, ls] : items) pairs.emplace_back(value_of(*ls[0]), value_of(*ls[1]));
      e.kappa = cohen_kappa(pairs);
    } else {
      std::map<std::string, std::vector<std::string>> ratings;
      for (const auto& [id, ls] : items) {
        for (const Label* l : ls) ratings[id].push_back(value_of(*l));
      }
      e.kappa = fleiss_kappa(LabelMatrix::from_ratings(ratings));
    }
    report.entries.push_back(std::move(e));
  };

  compute("relevance", [](const Label& l) { return std::string(verdict_name(l.verdict)); });
  for (const auto& tag : tags) {
    compute(tag, [&tag](const Label& l) {
      return std::string(l.framework_tags.count(tag) ? "present" : "absent");
    });
  }
  return report;
}

}  // namespace rarefind
