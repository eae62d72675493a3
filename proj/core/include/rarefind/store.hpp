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

#ifndef RAREFIND_STORE_HPP_
#define RAREFIND_STORE_HPP_

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rarefind/ingest.hpp"
#include "rarefind/lexicon.hpp"
#include "rarefind/records.hpp"

namespace rarefind {

// Project directory layout (every JSON document carries format_version):
//
//   manifest.json            artifact digests, lexicon version, config digest
//   corpus.jsonl             retained complaints, one JSON object per line
//   cleaning_report.json
//   lexicon.json
//   config.json
//   label_log.jsonl          append-only event log (see below)
//   refsets/vN.json          reference set snapshots
//   iterations/iter_N.json   iteration records
//   models/cluster_iter_N.json
//   embeddings/iter_N.json   embedding config, ids and vector digest
//   topics/iter_N.json       class TF-IDF profiles
//   explain/iter_N.json      attribution summaries
//   steering.json            manual cluster selection for the next round
//   .lock                    single-writer lock
//
// label_log.jsonl holds round_open, label, adjudication, round_seal, snapshot
// and seed events. Every append is a batch terminated by a commit record that
// counts and digests the batch; replay ignores anything after the last intact
// commit, so a torn append reads as if it never happened. The log is
// protected by those commit digests rather than by the manifest.
enum class OpenMode { kReadWrite, kReadOnly };

class Project {
 public:
  // Creates the directory when missing (read-write only), verifies manifest
  // digests and replays the log.
  // Errors: kCorruptManifest (names the artifact), kLockedByAnotherProcess, kIo.
  static std::unique_ptr<Project> open(const std::filesystem::path& root,
                                       OpenMode mode = OpenMode::kReadWrite);
  ~Project();
  Project(const Project&) = delete;
  Project& operator=(const Project&) = delete;

  const std::filesystem::path& root() const { return root_; }
  bool read_only() const { return mode_ == OpenMode::kReadOnly; }

  // Corpus. Replacing the corpus is refused once review rounds exist.
  void import_corpus(std::vector<Complaint> retained, const CleaningReport& report);
  const std::vector<Complaint>& corpus() const { return corpus_; }
  const Complaint* find(const std::string& complaint_id) const;
  std::optional<CleaningReport> cleaning_report() const;

  // Defaults when no lexicon was stored.
  Lexicon lexicon() const;
  void set_lexicon(const Lexicon& lex);
  nlohmann::json config() const;
  void set_config(const nlohmann::json& cfg);

  // Review rounds.
  void open_round(int iteration, RoundKind kind,
                  const std::map<std::string, std::vector<std::string>>& assignments);
  // All-or-nothing. Returns the number of label records in the log afterwards.
  // Labels identical to the live label (timestamp aside) are skipped.
  // Errors: kUnknownComplaint, kUnknownRound, kClosedRound, kInvalidArgument
  // (reviewer not assigned, unknown framework tag).
  std::size_t append_labels(std::vector<Label> labels);
  std::size_t label_offset() const { return label_offset_; }
  // Errors: kUnknownRound, kClosedRound, kNotDisputed.
  void adjudicate(Adjudication a);
  struct SealOptions {
    bool force = false;  // seal despite unlabeled slots or open disputes
    RefsetPolicy refset = RefsetPolicy::kAlways;
  };
  // Errors: kUnknownRound, kClosedRound, kIncompleteRound, kUnadjudicatedDisputes.
  void seal_round(int iteration, SealOptions options);
  const std::map<int, ReviewRound>& rounds() const { return rounds_; }
  const ReviewRound& round(int iteration) const;  // kUnknownRound
  std::optional<int> open_round_iteration() const;

  // Reference sets. history()[v] is version v; version 0 is empty.
  const ReferenceSet& reference() const { return history_.back(); }
  const std::vector<ReferenceSet>& refset_history() const { return history_; }
  // Applies the oldest sealed round whose effect is still pending: members
  // gain its confirmed items and the version always increases.
  // Errors: kNoCompletedRound.
  ReferenceSet snapshot_refset();
  // Adds members without a review round (keyword-round provenance).
  ReferenceSet seed_reference(const std::vector<std::string>& ids);

  // Generic artifacts, tracked in the manifest.
  void put_artifact(const std::string& rel_path, std::string_view content);
  std::optional<std::string> get_artifact(const std::string& rel_path) const;
  void put_json(const std::string& rel_path, const nlohmann::json& doc);
  std::optional<nlohmann::json> get_json(const std::string& rel_path) const;
  std::vector<std::string> artifacts() const;

  // Every tracked artifact and the committed log, with timestamps removed, as
  // one JSON document. Byte-identical for identical seeded runs.
  std::string export_bundle() const;

 private:
  Project(std::filesystem::path root, OpenMode mode);

  void require_writable() const;
  void load();
  void replay(bool truncate_tail);
  void apply_event(const nlohmann::json& e);
  void apply_snapshot(ReviewRound& r);
  void append_batch(const std::vector<nlohmann::json>& events);
  void write_manifest();
  void write_refset_files();

  std::filesystem::path root_;
  OpenMode mode_;
  int lock_fd_ = -1;
  nlohmann::json manifest_;
  std::vector<Complaint> corpus_;
  std::map<std::string, std::size_t> index_;
  std::map<int, ReviewRound> rounds_;
  std::vector<ReferenceSet> history_;
  std::size_t label_offset_ = 0;
  std::size_t event_seq_ = 0;
};

// Recursively drops "timestamp" and "created_at" members.
nlohmann::json strip_timestamps(nlohmann::json doc);

}  // namespace rarefind

#endif  // RAREFIND_STORE_HPP_
