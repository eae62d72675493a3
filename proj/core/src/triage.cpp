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

#include "rarefind/triage.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <unordered_map>

#include "rarefind/common.hpp"
#include "rarefind/explain.hpp"

namespace rarefind {

namespace {

constexpr const char* kSteering = "steering.json";

nlohmann::json int_map_to_json(const std::map<int, double>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : m) j[std::to_string(k)] = v;
  return j;
}

std::map<int, double> int_map_from_json(const nlohmann::json& j) {
  std::map<int, double> m;
  for (const auto& [k, v] : j.items()) m[std::stoi(k)] = v.get<double>();
  return m;
}

nlohmann::json window_to_json(std::size_t w) {
  return w == kUnboundedWindow ? nlohmann::json("inf") : nlohmann::json(w);
}

std::size_t window_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return kUnboundedWindow;
    throw Error(Errc::kInvalidArgument, "window must be a count or \"inf\"");
  }
  return j.get<std::size_t>();
}

std::vector<std::string> distinct_reviewers(std::span<const std::string> reviewers) {
  std::vector<std::string> out;
  for (const auto& r : reviewers) {
    if (!r.empty() && std::find(out.begin(), out.end(), r) == out.end()) out.push_back(r);
  }
  if (out.size() < 2) {
    throw Error(Errc::kTooFewReviewers, "need at least two distinct reviewers");
  }
  return out;
}

// Item i of the draw takes reviewer slots 2i and 2i+1.
std::map<std::string, std::vector<std::string>> assign_reviewers(
    std::span<const std::string> drawn, const std::vector<std::string>& reviewers) {
  std::map<std::string, std::vector<std::string>> out;
  const std::size_t r = reviewers.size();
  for (std::size_t i = 0; i < drawn.size(); ++i) {
    std::vector<std::string> pair = {reviewers[(2 * i) % r], reviewers[(2 * i + 1) % r]};
    std::sort(pair.begin(), pair.end());
    out[drawn[i]] = std::move(pair);
  }
  return out;
}

std::unordered_map<std::string, int> label_lookup(const ClusterModel& model) {
  std::unordered_map<std::string, int> m;
  m.reserve(model.ids.size());
  for (std::size_t i = 0; i < model.ids.size(); ++i) m.emplace(model.ids[i], model.labels[i]);
  return m;
}

TokenizedDoc doc_for(const Complaint& c, Preset preset, const Normalizer& norm) {
  if (!c.has_narrative()) {
    TokenizedDoc d;
    d.complaint_id = c.complaint_id;
    return d;
  }
  return norm.apply(tokenize(*c.narrative, preset, c.complaint_id));
}

// Seals a pending round when allowed, otherwise refuses.
void settle_open_round(Project& project, const RunOptions& opt) {
  auto open = project.open_round_iteration();
  if (!open) return;
  const ReviewRound& r = project.round(*open);
  bool settled = r.complete();
  for (const auto& [id, rs] : r.assignments) {
    if (r.disputed(id)) settled = false;
  }
  if (!settled && !opt.force) {
    throw Error(Errc::kUnfinishedRound,
                "round " + std::to_string(*open) + " still has pending labels or disputes");
  }
  seal_iteration(project, *open, opt.force);
}

}  // namespace

RefDistribution ref_distribution(const ClusterModel& model, const ReferenceSet& ref) {
  const auto lookup = label_lookup(model);
  RefDistribution d;
  std::map<int, std::size_t> counts;
  for (const auto& id : ref.members) {
    auto it = lookup.find(id);
    if (it == lookup.end()) {
      ++d.excluded;
      continue;
    }
    ++counts[it->second];
    ++d.clustered;
  }
  if (d.clustered == 0) {
    throw Error(Errc::kEmptyReference, "no reference member is part of the clustered sample");
  }
  for (const auto& [c, n] : counts) {
    d.fractions[c] = static_cast<double>(n) / static_cast<double>(d.clustered);
  }
  return d;
}

SelectionStrategy SelectionStrategy::top_m(std::size_t m) {
  SelectionStrategy s;
  s.kind = Kind::kTopM;
  s.m = m;
  return s;
}

SelectionStrategy SelectionStrategy::with_coverage(double c) {
  SelectionStrategy s;
  s.kind = Kind::kCoverage;
  s.coverage = c;
  return s;
}

SelectionStrategy SelectionStrategy::parse(std::string_view text) {
  const auto sep = text.find_first_of(":(=");
  const std::string name(text.substr(0, sep));
  std::string value = sep == std::string_view::npos ? "" : std::string(text.substr(sep + 1));
  if (!value.empty() && value.back() == ')') value.pop_back();
  try {
    if (name == "top_m" || name == "top") {
      const long m = value.empty() ? 3 : std::stol(value);
      if (m < 1) throw Error(Errc::kInvalidArgument, "top_m needs m >= 1");
      return top_m(static_cast<std::size_t>(m));
    }
    if (name == "coverage") {
      const double c = value.empty() ? 0.8 : std::stod(value);
      if (!(c > 0.0 && c <= 1.0)) throw Error(Errc::kInvalidArgument, "coverage must be in (0, 1]");
      return with_coverage(c);
    }
  } catch (const std::logic_error&) {
  }
  throw Error(Errc::kInvalidArgument, "selection must be top_m:<m> or coverage:<c>, got '" +
                                          std::string(text) + "'");
}

std::string SelectionStrategy::describe() const {
  if (kind == Kind::kTopM) return "top_m(" + std::to_string(m) + ")";
  return "coverage(" + nlohmann::json(coverage).dump() + ")";
}

void to_json(nlohmann::json& j, const SelectionStrategy& s) {
  if (s.kind == SelectionStrategy::Kind::kTopM) {
    j = {{"strategy", "top_m"}, {"m", s.m}};
  } else {
    j = {{"strategy", "coverage"}, {"coverage", s.coverage}};
  }
}

void from_json(const nlohmann::json& j, SelectionStrategy& s) {
  if (j.is_string()) {
    s = SelectionStrategy::parse(j.get<std::string>());
    return;
  }
  const auto name = j.at("strategy").get<std::string>();
  if (name == "top_m") {
    s = SelectionStrategy::top_m(j.value("m", std::size_t{3}));
  } else if (name == "coverage") {
    s = SelectionStrategy::with_coverage(j.value("coverage", 0.8));
  } else {
    throw Error(Errc::kInvalidArgument, "unknown selection strategy '" + name + "'");
  }
}

std::vector<int> select_clusters(const std::map<int, double>& dist, const SelectionStrategy& s) {
  std::vector<std::pair<int, double>> ranked(dist.begin(), dist.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<int> out;
  if (s.kind == SelectionStrategy::Kind::kTopM) {
    for (std::size_t i = 0; i < ranked.size() && i < s.m; ++i) out.push_back(ranked[i].first);
    return out;
  }
  double sum = 0.0;
  for (const auto& [c, f] : ranked) {
    out.push_back(c);
    sum += f;
    if (sum + 1e-12 >= s.coverage) break;
  }
  return out;
}

std::map<std::string, std::vector<std::string>> sample_for_review(
    const ClusterModel& model, std::span<const int> clusters, const ReferenceSet& ref,
    std::size_t n, std::span<const std::string> reviewers, std::uint64_t seed) {
  const auto people = distinct_reviewers(reviewers);
  const std::set<int> wanted(clusters.begin(), clusters.end());
  std::vector<std::string> candidates;
  for (std::size_t i = 0; i < model.ids.size(); ++i) {
    if (wanted.count(model.labels[i]) && !ref.contains(model.ids[i])) {
      candidates.push_back(model.ids[i]);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  if (candidates.size() < n) {
    throw Error(Errc::kInsufficientCandidates, std::to_string(candidates.size()) +
                                                   " candidates for a sample of " +
                                                   std::to_string(n));
  }
  Rng rng(seed);
  rng.shuffle(candidates);
  candidates.resize(n);
  return assign_reviewers(candidates, people);
}

double estimate_yield(std::span<const std::pair<std::string, bool>> sample_verdicts) {
  if (sample_verdicts.empty()) throw Error(Errc::kEmptySample, "no reviewed items");
  std::size_t relevant = 0;
  for (const auto& [id, r] : sample_verdicts) {
    if (r) ++relevant;
  }
  return static_cast<double>(relevant) / static_cast<double>(sample_verdicts.size());
}

void to_json(nlohmann::json& j, const TriageConfig& c) {
  j = {{"preset", preset_name(c.preset)},
       {"window", window_to_json(c.window)},
       {"embedding", c.embedding},
       {"external_vectors", c.external_vectors},
       {"k", c.k},
       {"seed", c.seed},
       {"n_init", c.n_init},
       {"max_iters", c.max_iters},
       {"tol", c.tol},
       {"selection", c.selection},
       {"n_per_round", c.n_per_round},
       {"keyword_sample", c.keyword_sample},
       {"reviewers", c.reviewers},
       {"candidate_sample", c.candidate_sample},
       {"candidate_pool", c.candidate_pool == CandidatePool::kIpMatched ? "ip_matched" : "random"},
       {"max_iterations", c.max_iterations},
       {"yield_floor", c.yield_floor},
       {"topic_terms", c.topic_terms}};
}

void from_json(const nlohmann::json& j, TriageConfig& c) {
  if (j.contains("preset")) c.preset = parse_preset(j.at("preset").get<std::string>());
  if (j.contains("window")) c.window = window_from_json(j.at("window"));
  if (j.contains("embedding")) c.embedding = j.at("embedding").get<EmbeddingConfig>();
  c.external_vectors = j.value("external_vectors", c.external_vectors);
  c.k = j.value("k", c.k);
  c.seed = j.value("seed", c.seed);
  c.n_init = j.value("n_init", c.n_init);
  c.max_iters = j.value("max_iters", c.max_iters);
  c.tol = j.value("tol", c.tol);
  if (j.contains("selection")) c.selection = j.at("selection").get<SelectionStrategy>();
  c.n_per_round = j.value("n_per_round", c.n_per_round);
  c.keyword_sample = j.value("keyword_sample", c.keyword_sample);
  c.reviewers = j.value("reviewers", c.reviewers);
  c.candidate_sample = j.value("candidate_sample", c.candidate_sample);
  if (j.contains("candidate_pool")) {
    const auto pool = j.at("candidate_pool").get<std::string>();
    if (pool == "ip_matched") {
      c.candidate_pool = CandidatePool::kIpMatched;
    } else if (pool == "random") {
      c.candidate_pool = CandidatePool::kRandom;
    } else {
      throw Error(Errc::kInvalidArgument, "candidate_pool must be ip_matched or random");
    }
  }
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.yield_floor = j.value("yield_floor", c.yield_floor);
  c.topic_terms = j.value("topic_terms", c.topic_terms);
}

std::optional<double> IterationRecord::top_cluster_yield() const {
  for (int c : selected_clusters) {
    auto it = estimated_yield.find(c);
    if (it != estimated_yield.end()) return it->second;
  }
  return std::nullopt;
}

void to_json(nlohmann::json& j, const IterationRecord& r) {
  j = {{"format_version", 1},
       {"iteration", r.iteration},
       {"kind", r.kind},
       {"embedding", r.embedding},
       {"k", r.k},
       {"seed", r.seed},
       {"fit_seed", r.fit_seed},
       {"model_iteration", r.model_iteration},
       {"candidate_pool", r.candidate_pool},
       {"pool_size", r.pool_size},
       {"clustered", r.clustered},
       {"objective", r.objective},
       {"ref_version_in", r.ref_version_in},
       {"ref_distribution", int_map_to_json(r.ref_distribution)},
       {"ref_excluded", r.ref_excluded},
       {"selection", r.selection},
       {"selected_clusters", r.selected_clusters},
       {"sampled", r.sampled},
       {"confirmed", r.confirmed},
       {"estimated_yield", int_map_to_json(r.estimated_yield)},
       {"sealed", r.sealed},
       {"created_at", r.created_at}};
  j["ref_version_out"] = r.ref_version_out ? nlohmann::json(*r.ref_version_out) : nlohmann::json();
  j["round_yield"] = r.round_yield ? nlohmann::json(*r.round_yield) : nlohmann::json();
}

void from_json(const nlohmann::json& j, IterationRecord& r) {
  r.iteration = j.at("iteration").get<int>();
  r.kind = j.value("kind", "cluster");
  r.embedding = j.at("embedding").get<EmbeddingConfig>();
  r.k = j.at("k").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.fit_seed = j.value("fit_seed", std::uint64_t{0});
  r.model_iteration = j.value("model_iteration", r.iteration);
  r.candidate_pool = j.value("candidate_pool", "");
  r.pool_size = j.value("pool_size", std::size_t{0});
  r.clustered = j.value("clustered", std::size_t{0});
  r.objective = j.value("objective", 0.0);
  r.ref_version_in = j.at("ref_version_in").get<int>();
  r.ref_version_out.reset();
  if (j.contains("ref_version_out") && !j["ref_version_out"].is_null()) {
    r.ref_version_out = j["ref_version_out"].get<int>();
  }
  r.ref_distribution = int_map_from_json(j.at("ref_distribution"));
  r.ref_excluded = j.value("ref_excluded", std::size_t{0});
  r.selection = j.value("selection", "");
  r.selected_clusters = j.at("selected_clusters").get<std::vector<int>>();
  r.sampled = j.at("sampled").get<std::vector<std::string>>();
  r.confirmed = j.at("confirmed").get<std::vector<std::string>>();
  r.estimated_yield = int_map_from_json(j.at("estimated_yield"));
  r.round_yield.reset();
  if (j.contains("round_yield") && !j["round_yield"].is_null()) {
    r.round_yield = j["round_yield"].get<double>();
  }
  r.sealed = j.value("sealed", false);
  r.created_at = j.value("created_at", "");
}

std::string iteration_path(int i) { return "iterations/iter_" + std::to_string(i) + ".json"; }
std::string model_path(int i) { return "models/cluster_iter_" + std::to_string(i) + ".json"; }
std::string embeddings_path(int i) { return "embeddings/iter_" + std::to_string(i) + ".json"; }
std::string topics_path(int i) { return "topics/iter_" + std::to_string(i) + ".json"; }
std::string explain_path(int i) { return "explain/iter_" + std::to_string(i) + ".json"; }

std::optional<IterationRecord> load_iteration(const Project& project, int iteration) {
  auto j = project.get_json(iteration_path(iteration));
  if (!j) return std::nullopt;
  return j->get<IterationRecord>();
}

std::vector<IterationRecord> load_iterations(const Project& project) {
  std::vector<IterationRecord> out;
  for (const auto& [it, r] : project.rounds()) {
    if (auto rec = load_iteration(project, it)) out.push_back(std::move(*rec));
  }
  return out;
}

PreparedCorpus prepare_corpus(std::span<const Complaint> corpus, const Lexicon& lex,
                              Preset preset, std::size_t window) {
  PreparedCorpus p;
  p.docs.resize(corpus.size());
  p.matches.resize(corpus.size());
  const KeywordMatcher matcher(lex);
  parallel_for(corpus.size(), [&](std::size_t i) {
    p.docs[i] = doc_for(corpus[i], preset, lex.normalizer());
    p.matches[i] = matcher.match(p.docs[i], window);
  });
  return p;
}

IterationRecord run_keyword_round(Project& project, const TriageConfig& cfg, RunOptions opt) {
  if (project.rounds().count(0)) {
    throw Error(Errc::kInvalidArgument, "the keyword round already exists");
  }
  settle_open_round(project, opt);
  const auto people = distinct_reviewers(cfg.reviewers);
  const ReferenceSet& ref = project.reference();
  const PreparedCorpus prep =
      prepare_corpus(project.corpus(), project.lexicon(), Preset::kLight, cfg.window);

  std::vector<std::string> matched;
  for (std::size_t i = 0; i < prep.matches.size(); ++i) {
    if (prep.matches[i].matched && !ref.contains(project.corpus()[i].complaint_id)) {
      matched.push_back(project.corpus()[i].complaint_id);
    }
  }
  if (matched.empty()) throw Error(Errc::kNoCandidates, "no complaint matches the keyword rule");
  const std::size_t pool = matched.size();
  Rng rng(derive_seed(cfg.seed, 0));
  rng.shuffle(matched);
  if (cfg.keyword_sample > 0 && matched.size() > cfg.keyword_sample) matched.resize(cfg.keyword_sample);

  IterationRecord rec;
  rec.iteration = 0;
  rec.kind = "keyword";
  rec.embedding = cfg.embedding;
  rec.seed = cfg.seed;
  rec.model_iteration = 0;
  rec.candidate_pool = "proximity_matched";
  rec.pool_size = pool;
  rec.ref_version_in = ref.version;
  rec.selection = "proximity(window=" + window_to_json(cfg.window).dump() + ")";
  const auto assignments = assign_reviewers(matched, people);
  for (const auto& [id, rs] : assignments) rec.sampled.push_back(id);
  rec.created_at = utc_now_iso8601();

  project.open_round(0, RoundKind::kKeyword, assignments);
  project.put_json(iteration_path(0), rec);
  return rec;
}

IterationRecord run_iteration(Project& project, const TriageConfig& cfg, RunOptions opt) {
  settle_open_round(project, opt);

  std::size_t sealed_cluster_rounds = 0;
  std::optional<IterationRecord> last;
  for (auto& rec : load_iterations(project)) {
    if (rec.kind != "cluster" || !rec.sealed) continue;
    ++sealed_cluster_rounds;
    last = std::move(rec);
  }
  if (sealed_cluster_rounds >= cfg.max_iterations) {
    throw Error(Errc::kStopConditionMet,
                "max_iterations (" + std::to_string(cfg.max_iterations) + ") reached");
  }
  if (last) {
    if (auto y = last->top_cluster_yield(); y && *y < cfg.yield_floor) {
      throw Error(Errc::kStopConditionMet, "top-cluster yield " + nlohmann::json(*y).dump() +
                                               " of iteration " + std::to_string(last->iteration) +
                                               " is below the floor");
    }
  }

  const int iteration = project.rounds().empty() ? 1 : project.rounds().rbegin()->first + 1;
  const ReferenceSet& ref = project.reference();
  if (ref.members.empty()) throw Error(Errc::kEmptyReference, "the reference set is empty");
  const auto people = distinct_reviewers(cfg.reviewers);

  // Reference members and anything already put in front of reviewers.
  ReferenceSet excluded = ref;
  for (const auto& [it, round] : project.rounds()) {
    for (const auto& [id, rs] : round.assignments) excluded.members.insert(id);
  }

  IterationRecord rec;
  rec.iteration = iteration;
  rec.kind = "cluster";
  rec.embedding = cfg.embedding;
  rec.k = cfg.k;
  rec.seed = cfg.seed;
  rec.ref_version_in = ref.version;
  rec.created_at = utc_now_iso8601();

  ClusterModel model;
  bool steered = false;
  if (auto st = steering(project); st && !st->value("consumed", false)) {
    const int source = st->at("model_iteration").get<int>();
    if (auto doc = project.get_json(model_path(source))) {
      model = doc->get<ClusterModel>();
      rec.model_iteration = source;
      rec.selected_clusters = st->at("clusters").get<std::vector<int>>();
      rec.selection = "steered";
      rec.candidate_pool = "model_of_iteration_" + std::to_string(source);
      rec.pool_size = model.ids.size();
      steered = true;
    }
  }

  if (!steered) {
    const Lexicon lex = project.lexicon();
    const auto& corpus = project.corpus();
    const PreparedCorpus light = prepare_corpus(corpus, lex, Preset::kLight, cfg.window);

    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (excluded.contains(corpus[i].complaint_id)) continue;
      if (cfg.candidate_pool == CandidatePool::kRandom || light.matches[i].has_ip()) pool.push_back(i);
    }
    if (pool.empty()) throw Error(Errc::kNoCandidates, "the candidate pool is empty");
    rec.pool_size = pool.size();
    rec.candidate_pool = cfg.candidate_pool == CandidatePool::kRandom ? "random" : "ip_matched";
    if (pool.size() > cfg.candidate_sample) {
      Rng rng(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(iteration)));
      rng.shuffle(pool);
      pool.resize(cfg.candidate_sample);
    }
    std::vector<std::size_t> rows = pool;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (ref.contains(corpus[i].complaint_id)) rows.push_back(i);
    }
    std::sort(rows.begin(), rows.end());

    std::vector<TokenizedDoc> docs(rows.size());
    std::vector<MatchResult> hits(rows.size());
    const KeywordMatcher matcher(lex);
    parallel_for(rows.size(), [&](std::size_t r) {
      const std::size_t i = rows[r];
      docs[r] = cfg.preset == Preset::kLight ? light.docs[i]
                                             : doc_for(corpus[i], cfg.preset, lex.normalizer());
      hits[r] = cfg.preset == Preset::kLight ? light.matches[i] : matcher.match(docs[r], cfg.window);
    });

    std::vector<EmbeddingVector> vectors;
    if (cfg.embedding.provider == EmbeddingProvider::kExternalFile) {
      std::set<std::string> expected;
      for (const auto& d : docs) expected.insert(d.complaint_id);
      vectors = import_external_vectors(cfg.external_vectors, expected);
    } else {
      vectors = embed_corpus(docs, cfg.embedding, hits);
    }

    FitOptions fo;
    fo.k = cfg.k;
    fo.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(iteration));
    fo.max_iters = cfg.max_iters;
    fo.tol = cfg.tol;
    fo.n_init = cfg.n_init;
    model = fit(vectors, fo);
    rec.fit_seed = fo.seed;
    rec.model_iteration = iteration;
    rec.clustered = model.ids.size();
    rec.objective = model.objective;

    std::string digest_input;
    for (const auto& v : vectors) {
      digest_input += v.complaint_id();
      for (const auto& [d, x] : v.entries()) {
        digest_input += ' ' + std::to_string(d) + ':' + nlohmann::json(x).dump();
      }
      digest_input += '\n';
    }
    project.put_json(embeddings_path(iteration), {{"config", cfg.embedding},
                                                  {"ids", model.ids},
                                                  {"vector_digest", content_digest(digest_input)}});
    project.put_json(model_path(iteration), model);

    // Topic profiles on stopword-free tokens.
    std::map<int, std::vector<std::string>> classes;
    for (std::size_t c = 0; c < model.k; ++c) classes[static_cast<int>(c)];
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const TokenizedDoc d = doc_for(corpus[rows[r]], Preset::kAggressive, lex.normalizer());
      auto& bucket = classes[model.labels[r]];
      bucket.insert(bucket.end(), d.tokens.begin(), d.tokens.end());
    }
    nlohmann::json topics = {{"iteration", iteration}, {"clusters", nlohmann::json::array()}};
    try {
      std::vector<int> skipped;
      for (const auto& p : class_tfidf(classes, cfg.topic_terms, &skipped)) {
        topics["clusters"].push_back(p);
      }
      topics["skipped"] = skipped;
    } catch (const Error& e) {
      if (e.code() != Errc::kEmptyClass) throw;
      topics["skipped"] = nlohmann::json::array();
    }
    project.put_json(topics_path(iteration), topics);
  }

  try {
    const RefDistribution dist = ref_distribution(model, ref);
    rec.ref_distribution = dist.fractions;
    rec.ref_excluded = dist.excluded;
  } catch (const Error& e) {
    if (e.code() != Errc::kEmptyReference || !steered) throw;
    rec.ref_excluded = ref.members.size();
  }
  if (!steered) {
    rec.selected_clusters = select_clusters(rec.ref_distribution, cfg.selection);
    rec.selection = cfg.selection.describe();
  }

  std::size_t available = 0;
  const std::set<int> wanted(rec.selected_clusters.begin(), rec.selected_clusters.end());
  for (std::size_t i = 0; i < model.ids.size(); ++i) {
    if (wanted.count(model.labels[i]) && !excluded.contains(model.ids[i])) ++available;
  }
  const std::size_t n = std::min(cfg.n_per_round, available);
  if (n == 0) {
    throw Error(Errc::kInsufficientCandidates, "selected clusters hold no unreviewed complaints");
  }
  const auto assignments =
      sample_for_review(model, rec.selected_clusters, excluded, n, people,
                        derive_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(iteration)));
  for (const auto& [id, rs] : assignments) rec.sampled.push_back(id);

  project.open_round(iteration, RoundKind::kCluster, assignments);
  project.put_json(iteration_path(iteration), rec);
  if (steered) {
    auto st = *steering(project);
    st["consumed"] = true;
    st["consumed_by"] = iteration;
    project.put_json(kSteering, st);
  }
  return rec;
}

IterationRecord seal_iteration(Project& project, int iteration, bool force) {
  auto found = load_iteration(project, iteration);
  if (!found) throw Error(Errc::kUnknownRound, "no iteration record " + std::to_string(iteration));
  IterationRecord rec = std::move(*found);
  if (rec.sealed) return rec;
  const ReviewRound& before = project.round(iteration);
  if (!before.sealed) {
    Project::SealOptions so;
    so.force = force;
    so.refset = RefsetPolicy::kIfConfirmed;
    project.seal_round(iteration, so);
  }
  const ReviewRound& round = project.round(iteration);

  const auto confirmed = round.confirmed();
  rec.confirmed = confirmed;
  std::vector<std::pair<std::string, bool>> verdicts;
  for (const auto& id : rec.sampled) {
    verdicts.emplace_back(id, round.final_verdict(id) == Verdict::kRelevant);
  }
  if (!verdicts.empty()) rec.round_yield = estimate_yield(verdicts);

  rec.estimated_yield.clear();
  if (rec.kind == "cluster") {
    if (auto doc = project.get_json(model_path(rec.model_iteration))) {
      const auto lookup = label_lookup(doc->get<ClusterModel>());
      std::map<int, std::vector<std::pair<std::string, bool>>> by_cluster;
      for (const auto& v : verdicts) {
        auto it = lookup.find(v.first);
        if (it != lookup.end()) by_cluster[it->second].push_back(v);
      }
      for (const auto& [c, vs] : by_cluster) rec.estimated_yield[c] = estimate_yield(vs);
    }
  }
  rec.ref_version_out = confirmed.empty() ? rec.ref_version_in : project.reference().version;
  rec.sealed = true;
  project.put_json(iteration_path(iteration), rec);
  return rec;
}

void set_steering(Project& project, int model_iteration, const std::vector<int>& clusters) {
  auto doc = project.get_json(model_path(model_iteration));
  if (!doc) {
    throw Error(Errc::kUnknownRound, "no cluster model for iteration " + std::to_string(model_iteration));
  }
  const auto k = doc->at("k").get<int>();
  std::vector<int> chosen;
  for (int c : clusters) {
    if (c < 0 || c >= k) throw Error(Errc::kInvalidArgument, "cluster " + std::to_string(c) + " out of range");
    if (std::find(chosen.begin(), chosen.end(), c) == chosen.end()) chosen.push_back(c);
  }
  if (chosen.empty()) throw Error(Errc::kInvalidArgument, "select at least one cluster");
  project.put_json(kSteering, {{"model_iteration", model_iteration},
                               {"clusters", chosen},
                               {"consumed", false}});
}

std::optional<nlohmann::json> steering(const Project& project) { return project.get_json(kSteering); }

void to_json(nlohmann::json& j, const BaselineComparison& b) {
  j = {{"total", b.total},
       {"keyword_seeded", b.keyword_seeded},
       {"workflow_only", b.workflow_only},
       {"both", b.both},
       {"proximity_misses", b.proximity_misses},
       {"no_proximity_misses", b.no_proximity_misses},
       {"growth", b.growth}};
}

BaselineComparison compare_keyword_baseline(const ReferenceSet& final_ref, const Lexicon& lex,
                                            std::span<const Complaint> corpus, std::size_t window) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < corpus.size(); ++i) index.emplace(corpus[i].complaint_id, i);
  std::vector<std::size_t> rows;
  for (const auto& id : final_ref.members) {
    auto it = index.find(id);
    if (it == index.end()) throw Error(Errc::kUnknownComplaint, "reference member '" + id + "' not in corpus");
    rows.push_back(it->second);
  }
  std::vector<MatchResult> matches(rows.size());
  const KeywordMatcher matcher(lex);
  parallel_for(rows.size(), [&](std::size_t r) {
    matches[r] = matcher.match(doc_for(corpus[rows[r]], Preset::kLight, lex.normalizer()), window);
  });

  BaselineComparison b;
  b.total = rows.size();
  for (const auto& m : matches) {
    if (m.matched) {
      ++b.both;
    } else {
      ++b.proximity_misses;
      if (!(m.has_ip() && m.has_abuse())) ++b.no_proximity_misses;
    }
  }
  for (const auto& id : final_ref.members) {
    auto it = final_ref.provenance.find(id);
    if (it != final_ref.provenance.end() && it->second.source == "iteration") {
      ++b.workflow_only;
    } else {
      ++b.keyword_seeded;
    }
  }
  if (b.total > 0) b.growth = static_cast<double>(b.proximity_misses) / static_cast<double>(b.total);
  return b;
}

}  // namespace rarefind
