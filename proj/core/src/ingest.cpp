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

#include "rarefind/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include "rarefind/common.hpp"

namespace rarefind {

namespace {

constexpr std::array<std::string_view, 18> kColumns = {
    "Date received",
    "Product",
    "Sub-product",
    "Issue",
    "Sub-issue",
    "Consumer complaint narrative",
    "Company public response",
    "Company",
    "State",
    "ZIP code",
    "Tags",
    "Consumer consent provided?",
    "Submitted via",
    "Date sent to company",
    "Company response to consumer",
    "Timely response?",
    "Customer disputed?",
    "Complaint ID",
};

enum Col : int {
  kDateReceived = 0,
  kProduct,
  kSubProduct,
  kIssue,
  kSubIssue,
  kNarrative,
  kPublicResponse,
  kCompany,
  kState,
  kZip,
  kTags,
  kConsent,
  kSubmittedVia,
  kDateSent,
  kCompanyResponse,
  kTimely,
  kDisputed,
  kComplaintId,
};

// The public export spells the dispute column "Consumer disputed?".
int column_index(std::string_view name) {
  for (std::size_t i = 0; i < kColumns.size(); ++i) {
    if (kColumns[i] == name) return static_cast<int>(i);
  }
  if (name == "Consumer disputed?") return kDisputed;
  return -1;
}

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

bool valid_date(int y, int m, int d) {
  if (y < 1 || m < 1 || m > 12 || d < 1) return false;
  static constexpr int kDays[] = {31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (d > kDays[m - 1]) return false;
  const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
  return !(m == 2 && d == 29 && !leap);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::optional<std::string> optional_field(std::string value) {
  if (value.empty()) return std::nullopt;
  return value;
}

}  // namespace

std::optional<Date> Date::parse(std::string_view text) {
  text = trim(text);
  int y = 0, m = 0, d = 0;
  if (text.size() == 10 && text[4] == '-' && text[7] == '-') {
    if (!parse_int(text.substr(0, 4), y) || !parse_int(text.substr(5, 2), m) ||
        !parse_int(text.substr(8, 2), d)) {
      return std::nullopt;
    }
  } else {
    const auto s1 = text.find('/');
    const auto s2 = s1 == std::string_view::npos ? s1 : text.find('/', s1 + 1);
    if (s2 == std::string_view::npos) return std::nullopt;
    const auto year = text.substr(s2 + 1);
    if (!parse_int(text.substr(0, s1), m) || !parse_int(text.substr(s1 + 1, s2 - s1 - 1), d) ||
        !parse_int(year, y)) {
      return std::nullopt;
    }
    if (year.size() == 2) {
      y += 2000;
    } else if (year.size() != 4) {
      return std::nullopt;
    }
  }
  if (!valid_date(y, m, d)) return std::nullopt;
  return Date{y, m, d};
}

std::string Date::iso() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
  return buf;
}

bool Complaint::has_narrative() const {
  if (!narrative) return false;
  return std::any_of(narrative->begin(), narrative->end(), [](char c) {
    return c != ' ' && c != '\t' && c != '\n' && c != '\r' && c != '\f' && c != '\v';
  });
}

std::span<const std::string_view> complaint_columns() { return kColumns; }

namespace {

template <typename T>
void put_optional(nlohmann::json& j, const char* key, const std::optional<T>& v) {
  if (v) {
    j[key] = *v;
  } else {
    j[key] = nullptr;
  }
}

std::optional<std::string> get_optional(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

Date date_from_json(const nlohmann::json& j) {
  auto d = Date::parse(j.get<std::string>());
  if (!d) throw Error(Errc::kMalformedRow, "bad date '" + j.get<std::string>() + "'");
  return *d;
}

}  // namespace

void to_json(nlohmann::json& j, const Complaint& c) {
  j = nlohmann::json::object();
  j["complaint_id"] = c.complaint_id;
  j["date_received"] = c.date_received.iso();
  put_optional(j, "product", c.product);
  put_optional(j, "sub_product", c.sub_product);
  put_optional(j, "issue", c.issue);
  put_optional(j, "sub_issue", c.sub_issue);
  put_optional(j, "narrative", c.narrative);
  put_optional(j, "company_public_response", c.company_public_response);
  j["company"] = c.company;
  j["state"] = c.state;
  j["zip"] = c.zip;
  put_optional(j, "tags", c.tags);
  j["consent_provided"] = c.consent_provided;
  j["submitted_via"] = c.submitted_via;
  if (c.date_sent) {
    j["date_sent"] = c.date_sent->iso();
  } else {
    j["date_sent"] = nullptr;
  }
  j["company_response"] = c.company_response;
  j["timely"] = c.timely;
  put_optional(j, "disputed", c.disputed);
}

void from_json(const nlohmann::json& j, Complaint& c) {
  c.complaint_id = j.at("complaint_id").get<std::string>();
  c.date_received = date_from_json(j.at("date_received"));
  c.product = get_optional(j, "product");
  c.sub_product = get_optional(j, "sub_product");
  c.issue = get_optional(j, "issue");
  c.sub_issue = get_optional(j, "sub_issue");
  c.narrative = get_optional(j, "narrative");
  c.company_public_response = get_optional(j, "company_public_response");
  c.company = j.value("company", "");
  c.state = j.value("state", "");
  c.zip = j.value("zip", "");
  c.tags = get_optional(j, "tags");
  c.consent_provided = j.value("consent_provided", "");
  c.submitted_via = j.value("submitted_via", "");
  auto sent = j.find("date_sent");
  if (sent != j.end() && !sent->is_null()) {
    c.date_sent = date_from_json(*sent);
  } else {
    c.date_sent.reset();
  }
  c.company_response = j.value("company_response", "");
  c.timely = j.value("timely", "");
  c.disputed = get_optional(j, "disputed");
}

ComplaintReader::ComplaintReader(std::istream& in, SchemaMode mode) : in_(in), mode_(mode) {
  column_.fill(-1);
  std::vector<std::string> header;
  std::size_t start = 0;
  if (!read_record(header, start)) {
    throw Error(Errc::kMissingRequiredColumn, "CSV input has no header row");
  }
  if (!header.empty() && header[0].starts_with("\xEF\xBB\xBF")) header[0].erase(0, 3);
  width_ = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string_view name = trim(header[i]);
    const int idx = column_index(name);
    if (idx < 0) {
      if (mode_ == SchemaMode::kStrict) {
        throw Error(Errc::kMalformedRow,
                    "line 1: unexpected column '" + std::string(name) + "' in strict mode");
      }
      continue;
    }
    if (column_[idx] >= 0) {
      throw Error(Errc::kMalformedRow, "line 1: duplicate column '" + std::string(name) + "'");
    }
    column_[idx] = static_cast<int>(i);
  }
  for (int required : {kComplaintId, kDateReceived}) {
    if (column_[required] < 0) {
      throw Error(Errc::kMissingRequiredColumn,
                  "header lacks '" + std::string(kColumns[required]) + "'");
    }
  }
  if (mode_ == SchemaMode::kStrict) {
    for (std::size_t i = 0; i < kColumns.size(); ++i) {
      if (column_[i] < 0) {
        throw Error(Errc::kMissingRequiredColumn,
                    "header lacks '" + std::string(kColumns[i]) + "'");
      }
    }
  }
}

bool ComplaintReader::read_record(std::vector<std::string>& fields, std::size_t& start_line) {
  fields.clear();
  std::string line;
  if (!std::getline(in_, line)) return false;
  start_line = line_++;
  std::string field;
  bool quoted = false;
  bool field_started_quoted = false;
  while (true) {
    if (!quoted && !line.empty() && line.back() == '\r') line.pop_back();
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (quoted) {
        if (c == '"') {
          if (i + 1 < line.size() && line[i + 1] == '"') {
            field += '"';
            ++i;
          } else {
            quoted = false;
          }
        } else {
          field += c;
        }
      } else if (c == '"' && field.empty() && !field_started_quoted) {
        quoted = true;
        field_started_quoted = true;
      } else if (c == ',') {
        fields.push_back(std::move(field));
        field.clear();
        field_started_quoted = false;
      } else {
        field += c;
      }
    }
    if (!quoted) break;
    // Quoted field continues on the next physical line.
    if (!field.empty() && field.back() == '\r') field.pop_back();
    if (!std::getline(in_, line)) break;
    ++line_;
    field += '\n';
  }
  fields.push_back(std::move(field));
  return true;
}

std::optional<Complaint> ComplaintReader::build(const std::vector<std::string>& fields,
                                                std::size_t line) {
  auto fail = [&](const std::string& why) -> std::optional<Complaint> {
    const std::string message = "line " + std::to_string(line) + ": " + why;
    if (mode_ == SchemaMode::kStrict) throw Error(Errc::kMalformedRow, message);
    diagnostics_.push_back({line, why});
    return std::nullopt;
  };
  if (fields.size() != width_) {
    return fail("expected " + std::to_string(width_) + " columns, found " +
                std::to_string(fields.size()));
  }
  auto get = [&](int col) -> std::string {
    const int idx = column_[col];
    return idx < 0 ? std::string() : fields[static_cast<std::size_t>(idx)];
  };

  Complaint c;
  c.complaint_id = std::string(trim(get(kComplaintId)));
  if (c.complaint_id.empty()) return fail("empty Complaint ID");
  auto received = Date::parse(get(kDateReceived));
  if (!received) return fail("unparseable Date received '" + get(kDateReceived) + "'");
  c.date_received = *received;
  const std::string sent = get(kDateSent);
  if (!trim(sent).empty()) {
    auto d = Date::parse(sent);
    if (!d) return fail("unparseable Date sent to company '" + sent + "'");
    c.date_sent = *d;
  }
  c.product = optional_field(get(kProduct));
  c.sub_product = optional_field(get(kSubProduct));
  c.issue = optional_field(get(kIssue));
  c.sub_issue = optional_field(get(kSubIssue));
  c.narrative = optional_field(get(kNarrative));
  c.company_public_response = optional_field(get(kPublicResponse));
  c.company = get(kCompany);
  c.state = get(kState);
  c.zip = get(kZip);
  c.tags = optional_field(get(kTags));
  c.consent_provided = get(kConsent);
  c.submitted_via = get(kSubmittedVia);
  c.company_response = get(kCompanyResponse);
  c.timely = get(kTimely);
  c.disputed = optional_field(get(kDisputed));
  return c;
}

std::optional<Complaint> ComplaintReader::next() {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (read_record(fields, start)) {
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
    ++rows_read_;
    if (auto c = build(fields, start)) return c;
  }
  return std::nullopt;
}

ParseResult parse_csv(std::istream& in, SchemaMode mode) {
  ComplaintReader reader(in, mode);
  ParseResult result;
  while (auto c = reader.next()) result.complaints.push_back(std::move(*c));
  result.diagnostics = reader.diagnostics();
  return result;
}

ParseResult parse_csv(const std::string& path, SchemaMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot open " + path);
  return parse_csv(in, mode);
}

CleaningReport CleaningReport::tally(std::size_t input, std::size_t missing_narrative,
                                     std::size_t duplicates, std::size_t flagged) {
  if (missing_narrative + duplicates > input) {
    throw Error(Errc::kInvalidArgument, "exclusions exceed input count");
  }
  CleaningReport r;
  r.input_count = input;
  r.excluded_missing_narrative = missing_narrative;
  r.excluded_duplicates = duplicates;
  r.retained_count = input - missing_narrative - duplicates;
  if (flagged > r.retained_count) {
    throw Error(Errc::kInvalidArgument, "flagged resubmissions exceed retained count");
  }
  r.flagged_resubmissions = flagged;
  return r;
}

bool CleaningReport::balances() const {
  return excluded_missing_narrative + excluded_duplicates <= input_count &&
         retained_count == input_count - excluded_missing_narrative - excluded_duplicates &&
         flagged_resubmissions <= retained_count;
}

void to_json(nlohmann::json& j, const CleaningReport& r) {
  j = {{"input_count", r.input_count},
       {"excluded_missing_narrative", r.excluded_missing_narrative},
       {"excluded_duplicates", r.excluded_duplicates},
       {"flagged_resubmissions", r.flagged_resubmissions},
       {"retained_count", r.retained_count},
       {"length_mean", r.length_mean},
       {"length_sd", r.length_sd}};
}

void from_json(const nlohmann::json& j, CleaningReport& r) {
  r.input_count = j.at("input_count").get<std::size_t>();
  r.excluded_missing_narrative = j.at("excluded_missing_narrative").get<std::size_t>();
  r.excluded_duplicates = j.at("excluded_duplicates").get<std::size_t>();
  r.flagged_resubmissions = j.at("flagged_resubmissions").get<std::size_t>();
  r.retained_count = j.at("retained_count").get<std::size_t>();
  r.length_mean = j.value("length_mean", 0.0);
  r.length_sd = j.value("length_sd", 0.0);
}

double multiset_jaccard(std::span<const std::string> a, std::span<const std::string> b) {
  std::map<std::string_view, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& t : a) ++counts[t].first;
  for (const auto& t : b) ++counts[t].second;
  std::size_t mins = 0, maxs = 0;
  for (const auto& [_, c] : counts) {
    mins += std::min(c.first, c.second);
    maxs += std::max(c.first, c.second);
  }
  if (maxs == 0) return 0.0;
  return static_cast<double>(mins) / static_cast<double>(maxs);
}

std::vector<std::pair<std::size_t, std::size_t>> near_duplicate_pairs(
    std::span<const std::vector<std::string>> docs, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw Error(Errc::kInvalidArgument, "similarity threshold must lie in (0, 1]");
  }
  // A multiset becomes a set of (token, occurrence) elements, so multiset
  // Jaccard equals plain set Jaccard over those elements.
  std::unordered_map<std::string, std::uint32_t> element_ids;
  std::vector<std::size_t> element_df;
  std::vector<std::vector<std::uint32_t>> sets(docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d) {
    std::unordered_map<std::string_view, std::uint32_t> seen;
    for (const auto& tok : docs[d]) {
      const std::uint32_t occurrence = ++seen[tok];
      std::string key = tok;
      key += '\x1f';
      key += std::to_string(occurrence);
      auto [it, inserted] = element_ids.try_emplace(
          std::move(key), static_cast<std::uint32_t>(element_ids.size()));
      if (inserted) element_df.push_back(0);
      ++element_df[it->second];
      sets[d].push_back(it->second);
    }
  }
  std::vector<std::uint32_t> order(element_df.size());
  for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return element_df[a] != element_df[b] ? element_df[a] < element_df[b] : a < b;
  });
  std::vector<std::uint32_t> rank(order.size());
  for (std::uint32_t r = 0; r < order.size(); ++r) rank[order[r]] = r;
  for (auto& s : sets) {
    for (auto& e : s) e = rank[e];
    std::sort(s.begin(), s.end());
  }

  std::vector<std::size_t> by_size;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (!sets[d].empty()) by_size.push_back(d);
  }
  std::stable_sort(by_size.begin(), by_size.end(),
                   [&](std::size_t a, std::size_t b) { return sets[a].size() < sets[b].size(); });

  auto prefix_length = [&](std::size_t size) {
    const auto need = static_cast<std::size_t>(
        std::max(0.0, std::ceil(threshold * static_cast<double>(size) - 1e-9)));
    return size - std::min(size, need) + 1;
  };

  std::unordered_map<std::uint32_t, std::vector<std::size_t>> index;
  std::vector<std::size_t> stamp(docs.size(), static_cast<std::size_t>(-1));
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t pos = 0; pos < by_size.size(); ++pos) {
    const std::size_t x = by_size[pos];
    const auto& sx = sets[x];
    const std::size_t px = std::min(sx.size(), prefix_length(sx.size()));
    const double min_size = threshold * static_cast<double>(sx.size()) - 1e-9;
    for (std::size_t i = 0; i < px; ++i) {
      auto it = index.find(sx[i]);
      if (it == index.end()) continue;
      for (std::size_t y : it->second) {
        if (stamp[y] == x) continue;
        stamp[y] = x;
        const auto& sy = sets[y];
        if (static_cast<double>(sy.size()) < min_size) continue;
        std::size_t overlap = 0;
        for (std::size_t a = 0, b = 0; a < sx.size() && b < sy.size();) {
          if (sx[a] == sy[b]) {
            ++overlap;
            ++a;
            ++b;
          } else if (sx[a] < sy[b]) {
            ++a;
          } else {
            ++b;
          }
        }
        const double jaccard = static_cast<double>(overlap) /
                               static_cast<double>(sx.size() + sy.size() - overlap);
        if (jaccard >= threshold) pairs.emplace_back(std::min(x, y), std::max(x, y));
      }
    }
    for (std::size_t i = 0; i < px; ++i) index[sx[i]].push_back(x);
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

CleanResult clean(std::vector<Complaint> corpus, double resubmission_threshold) {
  const std::size_t input = corpus.size();
  std::vector<Complaint> with_text;
  with_text.reserve(corpus.size());
  for (auto& c : corpus) {
    if (c.has_narrative()) with_text.push_back(std::move(c));
  }
  const std::size_t missing = input - with_text.size();
  corpus.clear();

  std::sort(with_text.begin(), with_text.end(), [](const Complaint& a, const Complaint& b) {
    if (a.complaint_id != b.complaint_id) return a.complaint_id < b.complaint_id;
    if (a.date_received != b.date_received) return a.date_received < b.date_received;
    return *a.narrative < *b.narrative;
  });

  // Same narrative on the same day: keep the smallest complaint_id.
  struct KeyHash {
    std::size_t operator()(const std::pair<std::string_view, Date>& k) const {
      return static_cast<std::size_t>(hash_bytes(k.first, static_cast<std::uint64_t>(
          k.second.year * 10000 + k.second.month * 100 + k.second.day)));
    }
  };
  std::unordered_map<std::pair<std::string_view, Date>, bool, KeyHash> groups;
  std::vector<Complaint> retained;
  retained.reserve(with_text.size());
  std::vector<bool> keep(with_text.size(), false);
  for (std::size_t i = 0; i < with_text.size(); ++i) {
    keep[i] = groups.emplace(std::make_pair(std::string_view(*with_text[i].narrative),
                                            with_text[i].date_received),
                             true)
                  .second;
  }
  for (std::size_t i = 0; i < with_text.size(); ++i) {
    if (keep[i]) retained.push_back(std::move(with_text[i]));
  }
  const std::size_t duplicates = with_text.size() - retained.size();
  groups.clear();
  with_text.clear();

  std::vector<std::vector<std::string>> tokens(retained.size());
  parallel_for(retained.size(), [&](std::size_t i) {
    tokens[i] = tokenize(*retained[i].narrative, Preset::kRaw, retained[i].complaint_id).tokens;
  });

  std::vector<bool> flagged(retained.size(), false);
  for (const auto& [a, b] : near_duplicate_pairs(tokens, resubmission_threshold)) {
    if (retained[a].company != retained[b].company) {
      flagged[a] = true;
      flagged[b] = true;
    }
  }

  CleanResult result;
  for (std::size_t i = 0; i < retained.size(); ++i) {
    if (flagged[i]) result.resubmission_ids.push_back(retained[i].complaint_id);
  }
  result.report = CleaningReport::tally(input, missing, duplicates, result.resubmission_ids.size());
  if (!tokens.empty()) {
    double sum = 0.0;
    for (const auto& t : tokens) sum += static_cast<double>(t.size());
    const double mean = sum / static_cast<double>(tokens.size());
    double ss = 0.0;
    for (const auto& t : tokens) {
      const double d = static_cast<double>(t.size()) - mean;
      ss += d * d;
    }
    result.report.length_mean = mean;
    result.report.length_sd = std::sqrt(ss / static_cast<double>(tokens.size()));
  }
  result.retained = std::move(retained);
  return result;
}

CorpusStats corpus_stats(std::span<const TokenizedDoc> docs,
                         std::span<const Complaint> complaints) {
  CorpusStats stats;
  if (!docs.empty()) {
    double sum = 0.0;
    for (const auto& d : docs) sum += static_cast<double>(d.size());
    stats.mean = sum / static_cast<double>(docs.size());
    double ss = 0.0;
    for (const auto& d : docs) {
      const double diff = static_cast<double>(d.size()) - stats.mean;
      ss += diff * diff;
    }
    stats.sd = std::sqrt(ss / static_cast<double>(docs.size()));
  }
  for (const auto& c : complaints) ++stats.per_year[c.date_received.year];
  return stats;
}

}  // namespace rarefind
