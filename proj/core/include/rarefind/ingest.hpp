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

#ifndef RAREFIND_INGEST_HPP_
#define RAREFIND_INGEST_HPP_

#include <array>
#include <compare>
#include <cstddef>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rarefind/tokenize.hpp"

namespace rarefind {

struct Date {
  int year = 0;
  int month = 0;
  int day = 0;

  auto operator<=>(const Date&) const = default;

  // Accepts "YYYY-MM-DD", "MM/DD/YYYY" and "MM/DD/YY" (20YY).
  static std::optional<Date> parse(std::string_view text);
  std::string iso() const;
};

// One consumer complaint record. Field order follows the public export.
struct Complaint {
  std::string complaint_id;
  Date date_received;
  std::optional<std::string> product;
  std::optional<std::string> sub_product;
  std::optional<std::string> issue;
  std::optional<std::string> sub_issue;
  std::optional<std::string> narrative;
  std::optional<std::string> company_public_response;
  std::string company;
  std::string state;
  std::string zip;
  std::optional<std::string> tags;
  std::string consent_provided;
  std::string submitted_via;
  std::optional<Date> date_sent;
  std::string company_response;
  std::string timely;
  std::optional<std::string> disputed;

  bool has_narrative() const;
  bool operator==(const Complaint&) const = default;
};

void to_json(nlohmann::json& j, const Complaint& c);
void from_json(const nlohmann::json& j, Complaint& c);

// Header names of the 18 known columns, in export order.
std::span<const std::string_view> complaint_columns();

enum class SchemaMode { kStrict, kLenient };

struct RowDiagnostic {
  std::size_t line = 0;  // 1-based physical line where the record starts
  std::string message;
};

// Streams complaints out of an RFC-4180 CSV document. Quoted fields may span
// lines; a UTF-8 byte order mark is skipped.
//
// Strict mode: the header must be exactly the 18 known columns (any order) and
// the first malformed row throws Error(kMalformedRow). Lenient mode: unknown
// columns are ignored, missing optional columns read as empty, and malformed
// rows are recorded in diagnostics() and skipped. In both modes a header
// without "Complaint ID" or "Date received" throws kMissingRequiredColumn.
class ComplaintReader {
 public:
  ComplaintReader(std::istream& in, SchemaMode mode);

  std::optional<Complaint> next();

  const std::vector<RowDiagnostic>& diagnostics() const { return diagnostics_; }
  std::size_t rows_read() const { return rows_read_; }

 private:
  bool read_record(std::vector<std::string>& fields, std::size_t& start_line);
  std::optional<Complaint> build(const std::vector<std::string>& fields,
                                 std::size_t line);

  std::istream& in_;
  SchemaMode mode_;
  std::size_t line_ = 1;
  std::size_t rows_read_ = 0;
  std::size_t width_ = 0;
  // Column index per known field, -1 when absent.
  std::array<int, 18> column_{};
  std::vector<RowDiagnostic> diagnostics_;
};

struct ParseResult {
  std::vector<Complaint> complaints;
  std::vector<RowDiagnostic> diagnostics;
};

ParseResult parse_csv(const std::string& path, SchemaMode mode);
ParseResult parse_csv(std::istream& in, SchemaMode mode);

struct CleaningReport {
  std::size_t input_count = 0;
  std::size_t excluded_missing_narrative = 0;
  std::size_t excluded_duplicates = 0;
  std::size_t flagged_resubmissions = 0;
  std::size_t retained_count = 0;
  double length_mean = 0.0;  // tokens, raw preset
  double length_sd = 0.0;

  // Builds a report from stage counts; retained_count is derived so the
  // balance invariant holds by construction.
  static CleaningReport tally(std::size_t input, std::size_t missing_narrative,
                              std::size_t duplicates, std::size_t flagged);

  bool balances() const;
  bool operator==(const CleaningReport&) const = default;
};

void to_json(nlohmann::json& j, const CleaningReport& r);
void from_json(const nlohmann::json& j, CleaningReport& r);

struct CleanResult {
  std::vector<Complaint> retained;  // sorted by complaint_id
  CleaningReport report;
  std::vector<std::string> resubmission_ids;  // sorted
};

// Drops narrative-less complaints, collapses identical (narrative, date
// received) groups to the smallest complaint_id, and flags near-identical
// narratives filed with different companies (token multiset Jaccard at or above
// resubmission_threshold). Flagged complaints are retained.
CleanResult clean(std::vector<Complaint> corpus, double resubmission_threshold = 0.98);

// Multiset Jaccard: sum of per-token minimum counts over sum of maxima.
double multiset_jaccard(std::span<const std::string> a, std::span<const std::string> b);

// All index pairs (i < j) whose multiset Jaccard is >= threshold. Exact:
// candidates come from prefix filtering over (token, occurrence) elements
// ordered rare-first, and every candidate is verified. Empty lists never pair.
std::vector<std::pair<std::size_t, std::size_t>> near_duplicate_pairs(
    std::span<const std::vector<std::string>> docs, double threshold);

struct CorpusStats {
  double mean = 0.0;
  double sd = 0.0;  // population standard deviation
  std::map<int, std::size_t> per_year;
};

// Token-count statistics over docs; per_year counts complaints by the year of
// date_received.
CorpusStats corpus_stats(std::span<const TokenizedDoc> docs,
                         std::span<const Complaint> complaints = {});

}  // namespace rarefind

#endif  // RAREFIND_INGEST_HPP_
