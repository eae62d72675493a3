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

#include "rarefind/explain.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "rarefind/common.hpp"
#include "rarefind/store.hpp"
#include "rarefind/triage.hpp"

namespace rarefind {

void to_json(nlohmann::json& j, const ClusterTopicProfile& p) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : p.terms) terms.push_back({{"term", t.term}, {"score", t.score}});
  j = {{"cluster", p.cluster}, {"n_terms", p.n_terms}, {"terms", std::move(terms)}};
}

void from_json(const nlohmann::json& j, ClusterTopicProfile& p) {
  p.cluster = j.at("cluster").get<int>();
  p.n_terms = j.at("n_terms").get<std::size_t>();
  p.terms.clear();
  for (const auto& t : j.at("terms")) {
    p.terms.push_back({t.at("term").get<std::string>(), t.at("score").get<double>()});
  }
}

std::vector<ClusterTopicProfile> class_tfidf(const std::map<int, std::vector<std::string>>& classes,
                                             std::size_t n_terms, std::vector<int>* skipped) {
  std::map<int, std::map<std::string, std::size_t>> tf;
  std::map<std::string, std::size_t> f;
  std::size_t total_tokens = 0;
  for (const auto& [c, tokens] : classes) {
    if (tokens.empty()) {
      if (skipped) skipped->push_back(c);
      continue;
    }
    auto& counts = tf[c];
    for (const auto& t : tokens) {
      ++counts[t];
      ++f[t];
    }
    total_tokens += tokens.size();
  }
  if (tf.size() < 2) {
    throw Error(Errc::kEmptyClass, "class TF-IDF needs at least two classes with tokens");
  }
  const double a = static_cast<double>(total_tokens) / static_cast<double>(tf.size());

  std::vector<ClusterTopicProfile> out;
  for (const auto& [c, counts] : tf) {
    ClusterTopicProfile p;
    p.cluster = c;
    for (const auto& [term, count] : counts) {
      const double w = static_cast<double>(count) *
                       std::log(1.0 + a / static_cast<double>(f.at(term)));
      p.terms.push_back({term, w});
    }
    std::sort(p.terms.begin(), p.terms.end(), [](const TermScore& x, const TermScore& y) {
      return x.score != y.score ? x.score > y.score : x.term < y.term;
    });
    if (p.terms.size() > n_terms) p.terms.resize(n_terms);
    p.n_terms = p.terms.size();
    out.push_back(std::move(p));
  }
  return out;
}

TfidfResult tfidf_vectors(std::span<const TokenizedDoc> docs, std::size_t vocab_cap) {
  if (docs.empty()) throw Error(Errc::kEmptySample, "no documents");
  std::vector<std::vector<std::string>> grams(docs.size());
  parallel_for(docs.size(), [&](std::size_t i) { grams[i] = ngrams(docs[i].tokens, 1, 2); });

  std::unordered_map<std::string, std::size_t> df;
  for (const auto& g : grams) {
    std::set<std::string_view> seen(g.begin(), g.end());
    for (auto t : seen) ++df[std::string(t)];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(df.begin(), df.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
    return x.second != y.second ? x.second > y.second : x.first < y.first;
  });
  if (ranked.size() > vocab_cap) ranked.resize(vocab_cap);

  TfidfResult r;
  const double n = static_cast<double>(docs.size());
  std::unordered_map<std::string, std::size_t> column;
  for (const auto& [term, d] : ranked) {
    column[term] = r.features.size();
    r.features.push_back(term);
    r.idf.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(d))) + 1.0);
  }
  r.matrix = Matrix(docs.size(), r.features.size());
  parallel_for(docs.size(), [&](std::size_t i) {
    const double len = static_cast<double>(docs[i].tokens.size());
    if (len == 0.0) return;
    for (const auto& g : grams[i]) {
      auto it = column.find(g);
      if (it != column.end()) r.matrix.at(i, it->second) += 1.0;
    }
    for (std::size_t c = 0; c < r.features.size(); ++c) {
      double& v = r.matrix.at(i, c);
      if (v != 0.0) v = (v / len) * r.idf[c];
    }
  });
  return r;
}

void to_json(nlohmann::json& j, const SummaryEntry& e) {
  j = {{"feature", e.feature},
       {"mean_abs_phi", e.mean_abs_phi},
       {"mean_phi", e.mean_phi},
       {"positive_fraction", e.positive_fraction}};
}

void from_json(const nlohmann::json& j, SummaryEntry& e) {
  e.feature = j.at("feature").get<std::string>();
  e.mean_abs_phi = j.at("mean_abs_phi").get<double>();
  e.mean_phi = j.value("mean_phi", 0.0);
  e.positive_fraction = j.at("positive_fraction").get<double>();
}

std::vector<SummaryEntry> attribution_summary(std::span<const Attribution> reports,
                                              std::span<const std::string> feature_names,
                                              std::size_t k) {
  std::vector<SummaryEntry> out;
  if (reports.empty()) return out;
  const double n = static_cast<double>(reports.size());
  for (std::size_t f = 0; f < feature_names.size(); ++f) {
    SummaryEntry e;
    e.feature = feature_names[f];
    std::size_t positive = 0;
    for (const auto& r : reports) {
      const double phi = f < r.phi.size() ? r.phi[f] : 0.0;
      e.mean_abs_phi += std::abs(phi);
      e.mean_phi += phi;
      if (phi > 0.0) ++positive;
    }
    e.mean_abs_phi /= n;
    e.mean_phi /= n;
    e.positive_fraction = static_cast<double>(positive) / n;
    out.push_back(std::move(e));
  }
  std::sort(out.begin(), out.end(), [](const SummaryEntry& a, const SummaryEntry& b) {
    return a.mean_abs_phi != b.mean_abs_phi ? a.mean_abs_phi > b.mean_abs_phi
                                            : a.feature < b.feature;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

nlohmann::json to_json(const AttributionReport& r) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [id, a] : r.per_instance) {
    nlohmann::json phi = nlohmann::json::object();
    for (std::size_t f = 0; f < a.phi.size(); ++f) {
      if (a.phi[f] != 0.0) phi[r.feature_names[f]] = a.phi[f];
    }
    per[id] = {{"base_value", a.base_value},
               {"prediction", a.prediction},
               {"active_features", a.active_features},
               {"mode", a.mode == ShapleyMode::kExact ? "exact" : "sampled"},
               {"phi", std::move(phi)}};
  }
  return {{"iteration", r.iteration},
          {"target_cluster", r.target_cluster},
          {"training_accuracy", r.training_accuracy},
          {"summary_topk", r.summary_topk},
          {"per_instance", std::move(per)}};
}

AttributionReport explain_cluster(Project& project, int iteration, int target_cluster,
                                  const ExplainOptions& options) {
  auto model_doc = project.get_json(model_path(iteration));
  if (!model_doc) {
    throw Error(Errc::kUnknownRound, "no cluster model for iteration " + std::to_string(iteration));
  }
  const ClusterModel model = model_doc->get<ClusterModel>();
  if (target_cluster < 0 || static_cast<std::size_t>(target_cluster) >= model.k) {
    throw Error(Errc::kInvalidArgument, "cluster " + std::to_string(target_cluster) + " out of range");
  }
  const auto record = load_iteration(project, iteration);
  const int ref_version = record ? record->ref_version_in : project.reference().version;
  const ReferenceSet& ref = project.refset_history().at(static_cast<std::size_t>(ref_version));

  // Training rows: reference members first, then a seeded sample of the rest.
  std::vector<std::size_t> members, others;
  for (std::size_t i = 0; i < model.ids.size(); ++i) {
    (ref.contains(model.ids[i]) ? members : others).push_back(i);
  }
  Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(iteration)));
  rng.shuffle(others);
  std::vector<std::size_t> rows = members;
  if (rows.size() > options.max_rows) rows.resize(options.max_rows);
  for (std::size_t i = 0; i < others.size() && rows.size() < options.max_rows; ++i) {
    rows.push_back(others[i]);
  }
  std::sort(rows.begin(), rows.end());

  const Normalizer normalizer = project.lexicon().normalizer();
  std::vector<TokenizedDoc> docs(rows.size());
  std::vector<int> y(rows.size());
  parallel_for(rows.size(), [&](std::size_t i) {
    const auto& id = model.ids[rows[i]];
    const Complaint* c = project.find(id);
    if (c && c->has_narrative()) {
      docs[i] = normalizer.apply(tokenize(*c->narrative, Preset::kLight, id));
    } else {
      docs[i].complaint_id = id;
    }
    y[i] = model.labels[rows[i]];
  });

  const TfidfResult tfidf = tfidf_vectors(docs, options.vocab_cap);
  ForestOptions fo = options.forest;
  fo.seed = options.forest.seed;
  const ForestModel forest = train_forest(tfidf.matrix, y, fo, tfidf.features);

  AttributionReport report;
  report.iteration = iteration;
  report.target_cluster = target_cluster;
  report.feature_names = tfidf.features;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (forest.predict(tfidf.matrix.row(i)) == y[i]) ++correct;
  }
  report.training_accuracy = static_cast<double>(correct) / static_cast<double>(rows.size());

  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng bg_rng(derive_seed(options.seed, 0xB6));
  bg_rng.shuffle(order);
  const std::size_t nb = std::min(options.background, rows.size());
  Matrix background(nb, tfidf.features.size());
  for (std::size_t b = 0; b < nb; ++b) {
    const auto src = tfidf.matrix.row(order[b]);
    std::copy(src.begin(), src.end(), background.data.begin() + static_cast<std::ptrdiff_t>(b * background.cols));
  }

  std::vector<std::size_t> targets;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (y[i] == target_cluster) targets.push_back(i);
  }
  if (targets.empty()) {
    throw Error(Errc::kInvalidArgument, "cluster " + std::to_string(target_cluster) +
                                            " has no training rows");
  }
  // Reference members of the cluster are explained first.
  std::stable_sort(targets.begin(), targets.end(), [&](std::size_t a, std::size_t b) {
    return ref.contains(model.ids[rows[a]]) > ref.contains(model.ids[rows[b]]);
  });
  if (targets.size() > options.instances) targets.resize(options.instances);

  std::vector<Attribution> attributions(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    ShapleyOptions so;
    so.seed = derive_seed(options.seed, t);
    so.exact_limit = options.exact_limit;
    so.permutations = options.permutations;
    so.mode = ShapleyMode::kExact;
    const auto x = tfidf.matrix.row(targets[t]);
    try {
      attributions[t] = shapley_attribution(forest, x, target_cluster, background, so);
    } catch (const Error& e) {
      if (e.code() != Errc::kTooManyFeaturesForExact) throw;
      so.mode = ShapleyMode::kSampled;
      attributions[t] = shapley_attribution(forest, x, target_cluster, background, so);
    }
    report.per_instance[model.ids[rows[targets[t]]]] = attributions[t];
  }
  report.summary_topk = attribution_summary(attributions, tfidf.features, options.top_k);

  nlohmann::json doc = project.get_json(explain_path(iteration)).value_or(nlohmann::json::object());
  doc["format_version"] = 1;
  doc["iteration"] = iteration;
  doc["clusters"][std::to_string(target_cluster)] = to_json(report);
  project.put_json(explain_path(iteration), doc);
  return report;
}

}  // namespace rarefind
