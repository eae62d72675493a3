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

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "rarefind/common.hpp"
#include "rarefind/triage.hpp"
#include "support.hpp"

namespace rf = rarefind;

namespace {

// ids "d0".."d{n-1}" with the given labels.
rf::ClusterModel model_with(const std::vector<int>& labels, std::size_t k) {
  rf::ClusterModel m;
  m.k = k;
  m.labels = labels;
  for (std::size_t i = 0; i < labels.size(); ++i) m.ids.push_back("d" + std::to_string(i));
  m.empty.assign(k, false);
  return m;
}

rf::ReferenceSet ref_of(const std::vector<std::string>& ids) {
  rf::ReferenceSet r;
  r.version = 1;
  r.members.insert(ids.begin(), ids.end());
  return r;
}

std::map<int, double> reference_shares() {
  return {{0, 0.02}, {1, 0.03}, {2, 0.04}, {3, 0.13}, {4, 0.03}, {5, 0.01},
          {6, 0.49}, {7, 0.22}, {8, 0.01}, {9, 0.01}, {10, 0.005}, {11, 0.005}};
}

rf::TriageConfig small_config() {
  rf::TriageConfig cfg;
  cfg.k = 6;
  cfg.embedding.dims = 512;
  cfg.n_per_round = 40;
  cfg.candidate_sample = 100000;
  return cfg;
}

}  // namespace

TEST(RefDistribution, SkewedShares) {
  std::vector<int> labels;
  labels.insert(labels.end(), 49, 6);
  labels.insert(labels.end(), 22, 7);
  labels.insert(labels.end(), 13, 3);
  labels.insert(labels.end(), 16, 0);
  const auto m = model_with(labels, 12);
  const auto d = rf::ref_distribution(m, ref_of(m.ids));
  EXPECT_DOUBLE_EQ(d.fractions.at(6), 0.49);
  EXPECT_DOUBLE_EQ(d.fractions.at(7), 0.22);
  EXPECT_DOUBLE_EQ(d.fractions.at(3), 0.13);
  EXPECT_EQ(d.clustered, 100u);
  double sum = 0.0;
  for (const auto& [c, f] : d.fractions) sum += f;
  EXPECT_NEAR(sum, 1.0, 1e-9);
}

TEST(RefDistribution, UniformAndSingleCluster) {
  const auto m = model_with({0, 0, 1, 1, 2, 2, 3, 3, 4, 4}, 5);
  const auto d = rf::ref_distribution(m, ref_of(m.ids));
  for (int c = 0; c < 5; ++c) EXPECT_DOUBLE_EQ(d.fractions.at(c), 0.2);
  const auto one = rf::ref_distribution(model_with({2, 2, 2}, 3), ref_of({"d0", "d1", "d2"}));
  EXPECT_EQ(one.fractions, (std::map<int, double>{{2, 1.0}}));
}

TEST(RefDistribution, OutsideMembersExcluded) {
  const auto m = model_with({0, 1}, 2);
  const auto d = rf::ref_distribution(m, ref_of({"d0", "elsewhere", "other"}));
  EXPECT_EQ(d.clustered, 1u);
  EXPECT_EQ(d.excluded, 2u);
  EXPECT_EQ(d.fractions, (std::map<int, double>{{0, 1.0}}));
  try {
    rf::ref_distribution(m, ref_of({"elsewhere"}));
    FAIL();
  } catch (const rf::Error& e) {
    EXPECT_EQ(e.code(), rf::Errc::kEmptyReference);
  }
}

TEST(SelectClusters, CoverageEightyPercent) {
  EXPECT_EQ(rf::select_clusters(reference_shares(), rf::SelectionStrategy::with_coverage(0.80)),
            (std::vector<int>{6, 7, 3}));
}

TEST(SelectClusters, TopMAndTies) {
  EXPECT_EQ(rf::select_clusters({{0, 0.6}, {1, 0.4}}, rf::SelectionStrategy::top_m(1)), (std::vector<int>{0}));
  EXPECT_EQ(rf::select_clusters({{3, 0.5}, {1, 0.5}}, rf::SelectionStrategy::top_m(1)), (std::vector<int>{1}));
  EXPECT_EQ(rf::select_clusters({{0, 1.0}}, rf::SelectionStrategy::top_m(3)), (std::vector<int>{0}));
}

TEST(SelectClusters, CoveragePrefixIsShortest) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 500; ++t) {
    std::map<int, double> d;
    double total = 0.0;
    for (int c = 0; c < 8; ++c) total += d[c] = static_cast<double>(1 + rng() % 20);
    for (auto& [c, f] : d) f /= total;
    const double cov = 0.05 + 0.9 * static_cast<double>(rng() % 1000) / 1000.0;
    const auto sel = rf::select_clusters(d, rf::SelectionStrategy::with_coverage(cov));
    double sum = 0.0;
    for (int c : sel) sum += d.at(c);
    EXPECT_GE(sum, cov - 1e-12);
    EXPECT_LT(sum - d.at(sel.back()), cov);
  }
}

TEST(SelectionStrategy, ParseAndDescribe) {
  EXPECT_EQ(rf::SelectionStrategy::parse("top_m:2").m, 2u);
  EXPECT_DOUBLE_EQ(rf::SelectionStrategy::parse("coverage:0.7").coverage, 0.7);
  EXPECT_EQ(rf::SelectionStrategy::parse(rf::SelectionStrategy::top_m(4).describe()).m, 4u);
  EXPECT_THROW(rf::SelectionStrategy::parse("best"), rf::Error);
}

TEST(SampleForReview, TwoReviewers) {
  const auto m = model_with({0, 0, 0, 0, 0, 0, 0, 0, 0, 0}, 1);
  const std::vector<int> sel = {0};
  const std::vector<std::string> people = {"a", "b"};
  const auto s = rf::sample_for_review(m, sel, ref_of({}), 4, people, 1);
  ASSERT_EQ(s.size(), 4u);
  for (const auto& [id, rs] : s) EXPECT_EQ(rs, people);
}

TEST(SampleForReview, FiveReviewersBalanced) {
  const auto m = model_with(std::vector<int>(30, 0), 1);
  const std::vector<int> sel = {0};
  const std::vector<std::string> people = {"a", "b", "c", "d", "e"};
  const auto s = rf::sample_for_review(m, sel, ref_of({}), 10, people, 9);
  std::map<std::string, int> load;
  for (const auto& [id, rs] : s) {
    ASSERT_EQ(rs.size(), 2u);
    EXPECT_NE(rs[0], rs[1]);
    for (const auto& r : rs) ++load[r];
  }
  for (const auto& p : people) EXPECT_EQ(load[p], 4);
}

TEST(SampleForReview, LoadsDifferByAtMostOne) {
  std::mt19937_64 rng(30);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng() % 40, r = 2 + rng() % 6;
    const auto m = model_with(std::vector<int>(60, 0), 1);
    std::vector<std::string> people;
    for (std::size_t i = 0; i < r; ++i) people.push_back("r" + std::to_string(i));
    const std::vector<int> sel = {0};
    const auto s = rf::sample_for_review(m, sel, ref_of({}), n, people, t);
    std::map<std::string, int> load;
    for (const auto& p : people) load[p] = 0;
    for (const auto& [id, rs] : s) {
      EXPECT_EQ(std::set<std::string>(rs.begin(), rs.end()).size(), 2u);
      for (const auto& x : rs) ++load[x];
    }
    int lo = 1 << 30, hi = 0;
    for (const auto& [p, l] : load) lo = std::min(lo, l), hi = std::max(hi, l);
    EXPECT_LE(hi - lo, 1);
  }
}

TEST(SampleForReview, ExcludesReferenceAndOtherClusters) {
  const auto m = model_with({0, 0, 0, 0, 1, 1, 0, 0}, 2);
  const std::vector<int> sel = {0};
  const std::vector<std::string> people = {"a", "b"};
  const auto ref = ref_of({"d0", "d1"});
  const auto s = rf::sample_for_review(m, sel, ref, 4, people, 3);
  for (const auto& [id, rs] : s) {
    EXPECT_FALSE(ref.contains(id));
    EXPECT_EQ(*m.cluster_of(id), 0);
  }
  try {
    rf::sample_for_review(m, sel, ref, 5, people, 3);
    FAIL();
  } catch (const rf::Error& e) {
    EXPECT_EQ(e.code(), rf::Errc::kInsufficientCandidates);
  }
  const std::vector<std::string> solo = {"a", "a"};
  try {
    rf::sample_for_review(m, sel, ref, 2, solo, 3);
    FAIL();
  } catch (const rf::Error& e) {
    EXPECT_EQ(e.code(), rf::Errc::kTooFewReviewers);
  }
}

TEST(SampleForReview, SeedDeterminism) {
  const auto m = model_with(std::vector<int>(50, 0), 1);
  const std::vector<int> sel = {0};
  const std::vector<std::string> people = {"a", "b", "c"};
  const auto a = rf::sample_for_review(m, sel, ref_of({}), 12, people, 5);
  EXPECT_EQ(a, rf::sample_for_review(m, sel, ref_of({}), 12, people, 5));
  EXPECT_NE(a, rf::sample_for_review(m, sel, ref_of({}), 12, people, 6));
}

TEST(EstimateYield, Arithmetic) {
  std::vector<std::pair<std::string, bool>> v;
  for (int i = 0; i < 500; ++i) v.emplace_back("c" + std::to_string(i), i < 123);
  EXPECT_DOUBLE_EQ(rf::estimate_yield(v), 0.246);
  std::vector<std::pair<std::string, bool>> none(10, {"x", false});
  EXPECT_DOUBLE_EQ(rf::estimate_yield(none), 0.0);
  std::vector<std::pair<std::string, bool>> q;
  for (int i = 0; i < 28; ++i) q.emplace_back("c", i < 7);
  EXPECT_DOUBLE_EQ(rf::estimate_yield(q), 0.25);
  EXPECT_THROW(rf::estimate_yield({}), rf::Error);
}

TEST(TriageConfig, JsonKeepsDefaultsForMissingKeys) {
  rf::TriageConfig c = nlohmann::json::object().get<rf::TriageConfig>();
  EXPECT_EQ(c.window, 10u);
  EXPECT_EQ(c.k, 12u);
  EXPECT_EQ(c.candidate_sample, 50000u);
  EXPECT_EQ(c.max_iterations, 6u);
  EXPECT_DOUBLE_EQ(c.yield_floor, 0.05);
  c.k = 5;
  c.selection = rf::SelectionStrategy::with_coverage(0.5);
  const auto back = nlohmann::json(c).get<rf::TriageConfig>();
  EXPECT_EQ(back.k, 5u);
  EXPECT_EQ(back.selection.kind, rf::SelectionStrategy::Kind::kCoverage);
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(c));
}

TEST(Baseline, CountsAgainstDirectMatching) {
  std::vector<rf::Complaint> corpus = {
      rftest::make_complaint("A", "my ex husband stole my card"),
      rftest::make_complaint("B", "my wife opened a loan in my name"),
      rftest::make_complaint("C", "my husband is nice. the bank lost my check and then they said many other "
                                  "things about fees and interest and the account was eventually stolen"),
      rftest::make_complaint("D", "the bank charged fees"),
      rftest::make_complaint("E", "my partner harassed me for money"),
      rftest::make_complaint("F", "an unrelated complaint about a mortgage"),
      rftest::make_complaint("G", "my girlfriend stole a card"),
      rftest::make_complaint("H", "my spouse forced me to sign"),
      rftest::make_complaint("I", "identity theft stole my savings"),
      rftest::make_complaint("J", "my husband controlled every account"),
  };
  rf::ReferenceSet ref;
  for (const auto& c : corpus) ref.members.insert(c.complaint_id);
  for (const char* id : {"A", "B", "E", "H", "J"}) ref.provenance[id] = {"keyword_round", 0, {}};
  for (const char* id : {"C", "D", "F", "G", "I"}) ref.provenance[id] = {"iteration", 1, {}};

  const auto lex = rf::Lexicon::defaults();
  std::size_t misses = 0, neither = 0;
  for (const auto& c : corpus) {
    const auto m = rf::match_with_proximity(rf::tokenize(*c.narrative, rf::Preset::kLight), lex, 10);
    if (!m.matched) ++misses;
    if (!m.has_ip() || !m.has_abuse()) ++neither;
  }
  ASSERT_EQ(misses, 4u);

  const auto b = rf::compare_keyword_baseline(ref, lex, corpus);
  EXPECT_EQ(b.total, 10u);
  EXPECT_EQ(b.proximity_misses, 4u);
  EXPECT_EQ(b.no_proximity_misses, neither);
  EXPECT_EQ(b.both, 6u);
  EXPECT_EQ(b.keyword_seeded, 5u);
  EXPECT_EQ(b.workflow_only, 5u);
  EXPECT_DOUBLE_EQ(b.growth, 0.4);
}

TEST(Baseline, GrowthIsMissShare) {
  // 513 members of which 221 miss the proximity rule.
  EXPECT_NEAR(221.0 / 513.0, 0.43, 0.005);
}

TEST(Baseline, AllKeywordSeeded) {
  std::vector<rf::Complaint> corpus = {rftest::make_complaint("A", "my ex husband stole my card"),
                                       rftest::make_complaint("B", "my wife harassed me")};
  rf::ReferenceSet ref;
  for (const auto& c : corpus) {
    ref.members.insert(c.complaint_id);
    ref.provenance[c.complaint_id] = {"keyword_round", 0, {}};
  }
  const auto b = rf::compare_keyword_baseline(ref, rf::Lexicon::defaults(), corpus);
  EXPECT_EQ(b.workflow_only, 0u);
  EXPECT_DOUBLE_EQ(b.growth, 0.0);
  ref.members.insert("missing");
  EXPECT_THROW(rf::compare_keyword_baseline(ref, rf::Lexicon::defaults(), corpus), rf::Error);
}

TEST(Iteration, LoopGrowsReferenceAndRecordsAreConsistent) {
  rftest::TempDir dir;
  const auto planted = rftest::planted_corpus(4000, 0.05, 0.25, 11);
  auto project = rf::Project::open(dir.path());
  project->import_corpus(planted.complaints, rf::CleaningReport::tally(planted.complaints.size(), 0, 0, 0));
  auto cfg = small_config();
  cfg.n_per_round = 20;
  cfg.yield_floor = 0.0;  // loop mechanics only

  try {
    rf::run_iteration(*project, cfg);
    FAIL();
  } catch (const rf::Error& e) {
    EXPECT_EQ(e.code(), rf::Errc::kEmptyReference);
  }

  const auto kw = rf::run_keyword_round(*project, cfg);
  EXPECT_EQ(kw.iteration, 0);
  rftest::label_round_truthfully(*project, 0, planted.positives);
  const auto kw_sealed = rf::seal_iteration(*project, 0);
  ASSERT_FALSE(project->reference().members.empty());
  EXPECT_EQ(*kw_sealed.ref_version_out, kw_sealed.ref_version_in + 1);

  int last_version = project->reference().version;
  std::size_t last_size = project->reference().size();
  for (int round = 1; round <= 2; ++round) {
    const auto rec = rf::run_iteration(*project, cfg);
    EXPECT_EQ(rec.iteration, round);
    EXPECT_FALSE(rec.sampled.empty());
    EXPECT_LE(rec.sampled.size(), cfg.n_per_round);
    double sum = 0.0;
    for (const auto& [c, f] : rec.ref_distribution) sum += f;
    EXPECT_NEAR(sum, 1.0, 1e-9);
    for (const auto& id : rec.sampled) {
      EXPECT_FALSE(project->reference().contains(id));
      for (const auto& [it, r] : project->rounds()) {
        if (it != round) EXPECT_FALSE(r.assignments.count(id)) << id << " was already reviewed";
      }
    }

    try {
      rf::run_iteration(*project, cfg);
      FAIL();
    } catch (const rf::Error& e) {
      EXPECT_EQ(e.code(), rf::Errc::kUnfinishedRound);
    }

    rftest::label_round_truthfully(*project, round, planted.positives);
    const auto sealed = rf::seal_iteration(*project, round);
    EXPECT_TRUE(sealed.sealed);
    for (const auto& id : sealed.confirmed) {
      EXPECT_NE(std::find(sealed.sampled.begin(), sealed.sampled.end(), id), sealed.sampled.end());
    }
    if (!sealed.confirmed.empty()) {
      EXPECT_EQ(*sealed.ref_version_out, sealed.ref_version_in + 1);
    } else {
      EXPECT_EQ(*sealed.ref_version_out, sealed.ref_version_in);
    }
    EXPECT_GE(project->reference().version, last_version);
    EXPECT_GE(project->reference().size(), last_size);
    last_version = project->reference().version;
    last_size = project->reference().size();
  }
  EXPECT_EQ(rf::load_iterations(*project).size(), 3u);
}

TEST(Iteration, ZeroConfirmedKeepsVersion) {
  rftest::TempDir dir;
  const auto planted = rftest::planted_corpus(1500, 0.04, 0.5, 4);
  auto project = rf::Project::open(dir.path());
  project->import_corpus(planted.complaints, rf::CleaningReport::tally(planted.complaints.size(), 0, 0, 0));
  auto cfg = small_config();
  cfg.n_per_round = 10;
  rf::run_keyword_round(*project, cfg);
  rftest::label_round_truthfully(*project, 0, planted.positives);
  rf::seal_iteration(*project, 0);
  const int version = project->reference().version;
  rf::run_iteration(*project, cfg);
  rftest::label_round_truthfully(*project, 1, {});
  const auto rec = rf::seal_iteration(*project, 1);
  EXPECT_TRUE(rec.sealed);
  EXPECT_TRUE(rec.confirmed.empty());
  EXPECT_EQ(*rec.ref_version_out, version);
  EXPECT_EQ(project->reference().version, version);
  ASSERT_TRUE(rec.round_yield);
  EXPECT_DOUBLE_EQ(*rec.round_yield, 0.0);

  // A top-cluster yield of zero is below the floor.
  try {
    rf::run_iteration(*project, cfg);
    FAIL();
  } catch (const rf::Error& e) {
    EXPECT_EQ(e.code(), rf::Errc::kStopConditionMet);
  }
}

TEST(Iteration, ReproducibleFromSeed) {
  const auto planted = rftest::planted_corpus(1500, 0.04, 0.25, 6);
  std::vector<std::vector<std::string>> samples;
  for (int run = 0; run < 2; ++run) {
    rftest::TempDir dir;
    auto project = rf::Project::open(dir.path());
    project->import_corpus(planted.complaints, rf::CleaningReport::tally(planted.complaints.size(), 0, 0, 0));
    auto cfg = small_config();
    cfg.n_per_round = 15;
    rf::run_keyword_round(*project, cfg);
    rftest::label_round_truthfully(*project, 0, planted.positives);
    rf::seal_iteration(*project, 0);
    samples.push_back(rf::run_iteration(*project, cfg).sampled);
  }
  EXPECT_EQ(samples[0], samples[1]);
}

TEST(Iteration, SteeringReplacesSelection) {
  rftest::TempDir dir;
  const auto planted = rftest::planted_corpus(1500, 0.04, 0.25, 8);
  auto project = rf::Project::open(dir.path());
  project->import_corpus(planted.complaints, rf::CleaningReport::tally(planted.complaints.size(), 0, 0, 0));
  auto cfg = small_config();
  cfg.n_per_round = 10;
  cfg.yield_floor = 0.0;
  rf::run_keyword_round(*project, cfg);
  rftest::label_round_truthfully(*project, 0, planted.positives);
  rf::seal_iteration(*project, 0);
  const auto first = rf::run_iteration(*project, cfg);
  rftest::label_round_truthfully(*project, 1, planted.positives);
  rf::seal_iteration(*project, 1);

  EXPECT_THROW(rf::set_steering(*project, 9, {0}), rf::Error);
  EXPECT_THROW(rf::set_steering(*project, 1, {99}), rf::Error);
  const auto model = project->get_json(rf::model_path(1))->get<rf::ClusterModel>();
  const auto sizes = model.cluster_sizes();
  const int biggest = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  rf::set_steering(*project, 1, {biggest});
  const auto steered = rf::run_iteration(*project, cfg);
  EXPECT_EQ(steered.selection, "steered");
  EXPECT_EQ(steered.model_iteration, 1);
  EXPECT_EQ(steered.selected_clusters, (std::vector<int>{biggest}));
  for (const auto& id : steered.sampled) EXPECT_EQ(*model.cluster_of(id), biggest);
  (void)first;
}

TEST(IterationRecord, JsonRoundTrip) {
  rf::IterationRecord r;
  r.iteration = 2;
  r.k = 12;
  r.ref_distribution = {{6, 0.49}, {7, 0.51}};
  r.selected_clusters = {7, 6};
  r.sampled = {"a", "b"};
  r.confirmed = {"a"};
  r.estimated_yield = {{7, 0.5}};
  r.round_yield = 0.5;
  r.ref_version_out = 3;
  const auto back = nlohmann::json(r).get<rf::IterationRecord>();
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(r));
  EXPECT_DOUBLE_EQ(*back.top_cluster_yield(), 0.5);
}
