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

#include "rarefind/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <set>
#include <sstream>

#include "rarefind/common.hpp"

namespace rarefind {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kLog = "label_log.jsonl";
constexpr const char* kCorpus = "corpus.jsonl";
constexpr const char* kCleaning = "cleaning_report.json";
constexpr const char* kLexicon = "lexicon.json";
constexpr const char* kConfig = "config.json";

std::string refset_path(int version) { return "refsets/v" + std::to_string(version) + ".json"; }

[[noreturn]] void corrupt(const std::string& artifact, const std::string& why) {
  throw Error(Errc::kCorruptManifest, artifact + ": " + why);
}

}  // namespace

nlohmann::json strip_timestamps(nlohmann::json doc) {
  if (doc.is_object()) {
    doc.erase("timestamp");
    doc.erase("created_at");
    for (auto& [k, v] : doc.items()) v = strip_timestamps(std::move(v));
  } else if (doc.is_array()) {
    for (auto& v : doc) v = strip_timestamps(std::move(v));
  }
  return doc;
}

Project::Project(fs::path root, OpenMode mode) : root_(std::move(root)), mode_(mode) {}

Project::~Project() {
  if (lock_fd_ >= 0) {
    ::flock(lock_fd_, LOCK_UN);
    ::close(lock_fd_);
  }
}

std::unique_ptr<Project> Project::open(const fs::path& root, OpenMode mode) {
  std::unique_ptr<Project> p(new Project(root, mode));
  if (mode == OpenMode::kReadWrite) {
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw Error(Errc::kIo, "cannot create " + root.string() + ": " + ec.message());
    const std::string lock = (root / ".lock").string();
    p->lock_fd_ = ::open(lock.c_str(), O_RDWR | O_CREAT, 0644);
    if (p->lock_fd_ < 0) throw Error(Errc::kIo, "cannot open " + lock);
    if (::flock(p->lock_fd_, LOCK_EX | LOCK_NB) != 0) {
      const int err = errno;
      ::close(p->lock_fd_);
      p->lock_fd_ = -1;
      if (err == EWOULDBLOCK) {
        throw Error(Errc::kLockedByAnotherProcess, root.string() + " is locked by another writer");
      }
      throw Error(Errc::kIo, "cannot lock " + lock);
    }
  } else if (!fs::is_directory(root)) {
    throw Error(Errc::kIo, root.string() + " is not a project directory");
  }
  p->load();
  return p;
}

void Project::require_writable() const {
  if (mode_ == OpenMode::kReadOnly) throw Error(Errc::kReadOnly, "project opened read-only");
}

void Project::load() {
  manifest_ = {{"format_version", 1},
               {"project", "rarefind"},
               {"artifacts", nlohmann::json::object()}};
  const fs::path mpath = root_ / kManifest;
  if (fs::exists(mpath)) {
    try {
      manifest_ = nlohmann::json::parse(read_file(mpath.string()));
    } catch (const nlohmann::json::exception& e) {
      corrupt(kManifest, e.what());
    }
    if (!manifest_.contains("artifacts") || !manifest_["artifacts"].is_object()) {
      corrupt(kManifest, "no artifact table");
    }
    for (const auto& [rel, digest] : manifest_["artifacts"].items()) {
      const fs::path file = root_ / rel;
      if (!fs::exists(file)) corrupt(rel, "missing");
      if (content_digest(read_file(file.string())) != digest.get<std::string>()) {
        corrupt(rel, "content does not match manifest digest");
      }
    }
  }

  corpus_.clear();
  index_.clear();
  if (auto text = get_artifact(kCorpus)) {
    std::istringstream in(*text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        corpus_.push_back(nlohmann::json::parse(line).get<Complaint>());
      } catch (const std::exception& e) {
        corrupt(kCorpus, e.what());
      }
    }
    for (std::size_t i = 0; i < corpus_.size(); ++i) index_[corpus_[i].complaint_id] = i;
  }

  replay(mode_ == OpenMode::kReadWrite);
  if (mode_ == OpenMode::kReadWrite) write_refset_files();
}

void Project::replay(bool truncate_tail) {
  rounds_.clear();
  history_.assign(1, ReferenceSet{});
  label_offset_ = 0;
  event_seq_ = 0;
  const fs::path path = root_ / kLog;
  if (!fs::exists(path)) return;
  const std::string text = read_file(path.string());

  struct Line {
    std::size_t begin, end;  // [begin, end) excludes the newline
  };
  std::vector<Line> lines;
  for (std::size_t pos = 0; pos < text.size();) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) break;  // torn final line
    lines.push_back({pos, nl});
    pos = nl + 1;
  }

  // The committed prefix ends at the last line that is a well-formed commit.
  std::size_t last_commit = lines.size();
  for (std::size_t i = lines.size(); i-- > 0;) {
    try {
      auto j = nlohmann::json::parse(text.substr(lines[i].begin, lines[i].end - lines[i].begin));
      if (j.value("type", "") == "commit") {
        last_commit = i;
        break;
      }
    } catch (const nlohmann::json::exception&) {
    }
  }

  std::size_t committed_bytes = 0;
  if (last_commit < lines.size()) {
    std::vector<nlohmann::json> batch;
    std::string batch_text;
    for (std::size_t i = 0; i <= last_commit; ++i) {
      const std::string raw = text.substr(lines[i].begin, lines[i].end - lines[i].begin);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(raw);
      } catch (const nlohmann::json::exception&) {
        corrupt(kLog, "unreadable record at line " + std::to_string(i + 1));
      }
      if (j.value("type", "") != "commit") {
        batch.push_back(std::move(j));
        batch_text += raw;
        batch_text += '\n';
        continue;
      }
      if (j.value("records", std::size_t{0}) != batch.size() ||
          j.value("digest", "") != content_digest(batch_text)) {
        corrupt(kLog, "batch ending at line " + std::to_string(i + 1) + " fails its digest");
      }
      for (const auto& e : batch) apply_event(e);
      event_seq_ += batch.size();
      batch.clear();
      batch_text.clear();
    }
    committed_bytes = lines[last_commit].end + 1;
  }

  if (truncate_tail && committed_bytes < text.size()) {
    std::error_code ec;
    fs::resize_file(path, committed_bytes, ec);
    if (ec) throw Error(Errc::kIo, "cannot truncate torn log tail: " + ec.message());
  }
}

void Project::apply_snapshot(ReviewRound& r) {
  ReferenceSet next = history_.back();
  next.version += 1;
  for (const auto& id : r.confirmed()) {
    if (next.members.insert(id).second) {
      Provenance p;
      p.source = r.kind == RoundKind::kKeyword ? "keyword_round" : "iteration";
      p.iteration = r.iteration;
      p.reviewers = r.assignments.at(id);
      next.provenance[id] = std::move(p);
    }
  }
  r.snapshot_resolved = true;
  history_.push_back(std::move(next));
}

void Project::apply_event(const nlohmann::json& e) {
  const std::string type = e.at("type").get<std::string>();
  if (type == "round_open") {
    ReviewRound r;
    r.iteration = e.at("iteration").get<int>();
    r.kind = parse_round_kind(e.at("kind").get<std::string>());
    for (const auto& [id, rs] : e.at("assignments").items()) {
      auto v = rs.get<std::vector<std::string>>();
      std::sort(v.begin(), v.end());
      r.assignments[id] = std::move(v);
    }
    rounds_[r.iteration] = std::move(r);
  } else if (type == "label") {
    Label l = e.at("label").get<Label>();
    auto& r = rounds_.at(l.iteration);
    auto key = std::make_pair(l.complaint_id, l.reviewer_id);
    r.labels[key] = std::move(l);
    ++label_offset_;
  } else if (type == "adjudication") {
    Adjudication a = e.at("adjudication").get<Adjudication>();
    rounds_.at(a.iteration).adjudications[a.complaint_id] = a;
  } else if (type == "round_seal") {
    auto& r = rounds_.at(e.at("iteration").get<int>());
    r.sealed = true;
    r.forced = e.value("forced", false);
    switch (parse_refset_policy(e.value("refset", "always"))) {
      case RefsetPolicy::kAlways:
        apply_snapshot(r);
        break;
      case RefsetPolicy::kIfConfirmed:
        if (r.confirmed().empty()) {
          r.snapshot_resolved = true;
        } else {
          apply_snapshot(r);
        }
        break;
      case RefsetPolicy::kDefer:
        break;
    }
  } else if (type == "snapshot") {
    apply_snapshot(rounds_.at(e.at("iteration").get<int>()));
  } else if (type == "seed") {
    ReferenceSet next = history_.back();
    next.version += 1;
    for (const auto& id : e.at("ids").get<std::vector<std::string>>()) {
      if (next.members.insert(id).second) next.provenance[id] = {"keyword_round", 0, {}};
    }
    history_.push_back(std::move(next));
  } else {
    corrupt(kLog, "unknown event type '" + type + "'");
  }
}

void Project::append_batch(const std::vector<nlohmann::json>& events) {
  require_writable();
  if (events.empty()) return;
  std::string batch_text;
  for (const auto& e : events) {
    batch_text += e.dump();
    batch_text += '\n';
  }
  const nlohmann::json commit = {
      {"type", "commit"}, {"records", events.size()}, {"digest", content_digest(batch_text)}};
  const std::string payload = batch_text + commit.dump() + "\n";

  const std::string path = (root_ / kLog).string();
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw Error(Errc::kIo, "cannot open " + path);
  std::size_t off = 0;
  while (off < payload.size()) {
    const ssize_t w = ::write(fd, payload.data() + off, payload.size() - off);
    if (w < 0) {
      ::close(fd);
      throw Error(Errc::kIo, "append failed for " + path);
    }
    off += static_cast<std::size_t>(w);
  }
  ::fsync(fd);
  ::close(fd);

  const std::size_t versions = history_.size();
  for (const auto& e : events) apply_event(e);
  event_seq_ += events.size();
  if (history_.size() != versions) write_refset_files();
}

void Project::write_manifest() {
  write_file_atomic((root_ / kManifest).string(), manifest_.dump(2) + "\n");
}

void Project::write_refset_files() {
  for (const auto& r : history_) {
    if (r.version == 0) continue;
    const std::string rel = refset_path(r.version);
    if (manifest_["artifacts"].contains(rel)) continue;
    put_json(rel, r);
  }
}

const Complaint* Project::find(const std::string& complaint_id) const {
  auto it = index_.find(complaint_id);
  return it == index_.end() ? nullptr : &corpus_[it->second];
}

void Project::import_corpus(std::vector<Complaint> retained, const CleaningReport& report) {
  require_writable();
  if (!rounds_.empty() || history_.size() > 1) {
    throw Error(Errc::kInvalidArgument, "corpus cannot be replaced after review has started");
  }
  std::sort(retained.begin(), retained.end(),
            [](const Complaint& a, const Complaint& b) { return a.complaint_id < b.complaint_id; });
  for (std::size_t i = 1; i < retained.size(); ++i) {
    if (retained[i].complaint_id == retained[i - 1].complaint_id) {
      throw Error(Errc::kDuplicateId, "complaint id '" + retained[i].complaint_id + "' repeats");
    }
  }
  std::string text;
  for (const auto& c : retained) {
    text += nlohmann::json(c).dump();
    text += '\n';
  }
  put_artifact(kCorpus, text);
  put_json(kCleaning, report);
  corpus_ = std::move(retained);
  index_.clear();
  for (std::size_t i = 0; i < corpus_.size(); ++i) index_[corpus_[i].complaint_id] = i;
}

std::optional<CleaningReport> Project::cleaning_report() const {
  auto j = get_json(kCleaning);
  if (!j) return std::nullopt;
  return j->get<CleaningReport>();
}

Lexicon Project::lexicon() const {
  if (auto j = get_json(kLexicon)) return Lexicon::from_json(*j);
  return Lexicon::defaults();
}

void Project::set_lexicon(const Lexicon& lex) {
  require_writable();
  const auto j = lex.to_json();
  manifest_["lexicon_version"] = j.at("version");
  put_json(kLexicon, j);
}

nlohmann::json Project::config() const {
  if (auto j = get_json(kConfig)) return *j;
  return nlohmann::json::object();
}

void Project::set_config(const nlohmann::json& cfg) {
  require_writable();
  nlohmann::json doc = cfg;
  doc["format_version"] = 1;
  put_json(kConfig, doc);
}

void Project::open_round(int iteration, RoundKind kind,
                         const std::map<std::string, std::vector<std::string>>& assignments) {
  require_writable();
  if (rounds_.count(iteration)) {
    throw Error(Errc::kInvalidArgument, "round " + std::to_string(iteration) + " already exists");
  }
  if (auto open = open_round_iteration()) {
    throw Error(Errc::kUnfinishedRound, "round " + std::to_string(*open) + " is still open");
  }
  nlohmann::json assign = nlohmann::json::object();
  for (const auto& [id, rs] : assignments) {
    if (!find(id)) throw Error(Errc::kUnknownComplaint, "unknown complaint '" + id + "'");
    std::set<std::string> distinct(rs.begin(), rs.end());
    if (distinct.size() < 2 || distinct.size() != rs.size()) {
      throw Error(Errc::kInvalidArgument, "'" + id + "' needs two distinct reviewers");
    }
    assign[id] = std::vector<std::string>(distinct.begin(), distinct.end());
  }
  append_batch({{{"type", "round_open"},
                 {"iteration", iteration},
                 {"kind", round_kind_name(kind)},
                 {"assignments", std::move(assign)}}});
}

std::optional<int> Project::open_round_iteration() const {
  for (const auto& [it, r] : rounds_) {
    if (!r.sealed) return it;
  }
  return std::nullopt;
}

const ReviewRound& Project::round(int iteration) const {
  auto it = rounds_.find(iteration);
  if (it == rounds_.end()) {
    throw Error(Errc::kUnknownRound, "no round " + std::to_string(iteration));
  }
  return it->second;
}

std::size_t Project::append_labels(std::vector<Label> labels) {
  require_writable();
  std::vector<nlohmann::json> events;
  std::map<std::pair<std::string, std::string>, const Label*> pending;
  const std::string now = utc_now_iso8601();
  for (auto& l : labels) {
    if (!find(l.complaint_id)) {
      throw Error(Errc::kUnknownComplaint, "unknown complaint '" + l.complaint_id + "'");
    }
    const ReviewRound& r = round(l.iteration);
    if (r.sealed) throw Error(Errc::kClosedRound, "round " + std::to_string(l.iteration) + " is sealed");
    if (!r.is_assigned(l.complaint_id, l.reviewer_id)) {
      throw Error(Errc::kInvalidArgument,
                  "reviewer '" + l.reviewer_id + "' is not assigned '" + l.complaint_id + "'");
    }
    for (const auto& t : l.framework_tags) {
      if (!is_framework_category(t)) {
        throw Error(Errc::kInvalidArgument, "unknown framework tag '" + t + "'");
      }
    }
    if (l.timestamp.empty()) l.timestamp = now;
  }
  for (const auto& l : labels) {
    auto key = std::make_pair(l.complaint_id, l.reviewer_id);
    const Label* live = pending.count(key) ? pending[key] : round(l.iteration).label(key.first, key.second);
    if (live && live->same_content(l)) continue;
    pending[key] = &l;
    events.push_back({{"type", "label"}, {"label", l}});
  }
  append_batch(events);
  return label_offset_;
}

void Project::adjudicate(Adjudication a) {
  require_writable();
  const ReviewRound& r = round(a.iteration);
  if (r.sealed) throw Error(Errc::kClosedRound, "round " + std::to_string(a.iteration) + " is sealed");
  if (!r.disputed(a.complaint_id)) {
    throw Error(Errc::kNotDisputed, "'" + a.complaint_id + "' is not disputed");
  }
  if (a.timestamp.empty()) a.timestamp = utc_now_iso8601();
  append_batch({{{"type", "adjudication"}, {"adjudication", a}}});
}

void Project::seal_round(int iteration, SealOptions options) {
  require_writable();
  const ReviewRound& r = round(iteration);
  if (r.sealed) throw Error(Errc::kClosedRound, "round " + std::to_string(iteration) + " is sealed");
  if (!options.force) {
    auto missing = r.unlabeled_slots();
    if (!missing.empty()) {
      std::string msg = "unlabeled:";
      for (const auto& s : missing) msg += " " + s;
      throw Error(Errc::kIncompleteRound, msg);
    }
    for (const auto& [id, rs] : r.assignments) {
      if (r.disputed(id)) {
        throw Error(Errc::kUnadjudicatedDisputes, "'" + id + "' awaits adjudication");
      }
    }
  }
  append_batch({{{"type", "round_seal"},
                 {"iteration", iteration},
                 {"forced", options.force},
                 {"refset", refset_policy_name(options.refset)}}});
}

ReferenceSet Project::snapshot_refset() {
  require_writable();
  for (const auto& [it, r] : rounds_) {
    if (r.sealed && !r.snapshot_resolved) {
      append_batch({{{"type", "snapshot"}, {"iteration", it}}});
      return reference();
    }
  }
  throw Error(Errc::kNoCompletedRound, "no sealed round awaits a snapshot");
}

ReferenceSet Project::seed_reference(const std::vector<std::string>& ids) {
  require_writable();
  std::set<std::string> unique;
  for (const auto& id : ids) {
    if (!find(id)) throw Error(Errc::kUnknownComplaint, "unknown complaint '" + id + "'");
    unique.insert(id);
  }
  append_batch({{{"type", "seed"}, {"ids", std::vector<std::string>(unique.begin(), unique.end())}}});
  return reference();
}

void Project::put_artifact(const std::string& rel_path, std::string_view content) {
  require_writable();
  write_file_atomic((root_ / rel_path).string(), content);
  manifest_["artifacts"][rel_path] = content_digest(content);
  write_manifest();
}

std::optional<std::string> Project::get_artifact(const std::string& rel_path) const {
  if (!manifest_["artifacts"].contains(rel_path)) return std::nullopt;
  return read_file((root_ / rel_path).string());
}

void Project::put_json(const std::string& rel_path, const nlohmann::json& doc) {
  nlohmann::json d = doc;
  if (d.is_object() && !d.contains("format_version")) d["format_version"] = 1;
  put_artifact(rel_path, d.dump(2) + "\n");
}

std::optional<nlohmann::json> Project::get_json(const std::string& rel_path) const {
  auto text = get_artifact(rel_path);
  if (!text) return std::nullopt;
  try {
    return nlohmann::json::parse(*text);
  } catch (const nlohmann::json::exception& e) {
    corrupt(rel_path, e.what());
  }
}

std::vector<std::string> Project::artifacts() const {
  std::vector<std::string> out;
  for (const auto& [rel, d] : manifest_["artifacts"].items()) out.push_back(rel);
  return out;
}

std::string Project::export_bundle() const {
  nlohmann::json bundle = {{"format_version", 1}, {"artifacts", nlohmann::json::object()}};
  for (const auto& rel : artifacts()) {
    const std::string text = *get_artifact(rel);
    if (rel.ends_with(".json")) {
      bundle["artifacts"][rel] = strip_timestamps(nlohmann::json::parse(text));
    } else if (rel.ends_with(".jsonl")) {
      nlohmann::json rows = nlohmann::json::array();
      std::istringstream in(text);
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty()) rows.push_back(strip_timestamps(nlohmann::json::parse(line)));
      }
      bundle["artifacts"][rel] = std::move(rows);
    } else {
      bundle["artifacts"][rel] = text;
    }
  }

  nlohmann::json log = nlohmann::json::array();
  const fs::path path = root_ / kLog;
  if (fs::exists(path)) {
    std::istringstream in(read_file(path.string()));
    std::string line;
    std::size_t kept = 0;
    std::vector<nlohmann::json> batch;
    while (std::getline(in, line) && kept < event_seq_) {
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) break;
      if (j.value("type", "") == "commit") {
        for (auto& e : batch) log.push_back(strip_timestamps(std::move(e)));
        kept += batch.size();
        batch.clear();
      } else {
        batch.push_back(std::move(j));
      }
    }
  }
  bundle["log"] = std::move(log);
  bundle["reference"] = reference();
  return bundle.dump(1) + "\n";
}

}  // namespace rarefind
