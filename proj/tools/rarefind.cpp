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

// rarefind command line: one subcommand per pipeline stage plus the review
// service. Exit codes: 0 success, 1 domain error, 2 usage error.

#include <httplib.h>

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rarefind/agreement.hpp"
#include "rarefind/api.hpp"
#include "rarefind/cluster.hpp"
#include "rarefind/common.hpp"
#include "rarefind/embed.hpp"
#include "rarefind/explain.hpp"
#include "rarefind/ingest.hpp"
#include "rarefind/lexicon.hpp"
#include "rarefind/store.hpp"
#include "rarefind/triage.hpp"

namespace rf = rarefind;
using nlohmann::json;

namespace {

struct Globals {
  std::string project;
  bool json_out = false;
  std::size_t threads = 0;
  std::optional<std::uint64_t> seed;
  std::string config;
};

std::size_t parse_window(const std::string& text) {
  if (text == "inf" || text == "unbounded") return rf::kUnboundedWindow;
  try {
    std::size_t pos = 0;
    const long v = std::stol(text, &pos);
    if (pos == text.size() && v >= 0) return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
  }
  throw CLI::ValidationError("--window", "expected a non-negative integer or 'inf', got '" + text + "'");
}

std::string window_text(std::size_t w) {
  return w == rf::kUnboundedWindow ? "inf" : std::to_string(w);
}

rf::EmbeddingProvider parse_provider(const std::string& s) {
  if (s == "hashed_ngrams" || s == "hashed") return rf::EmbeddingProvider::kHashedNgrams;
  if (s == "tfidf_projection" || s == "tfidf") return rf::EmbeddingProvider::kTfidfProjection;
  if (s == "external_file" || s == "external") return rf::EmbeddingProvider::kExternalFile;
  throw CLI::ValidationError("--provider", "unknown provider '" + s + "'");
}

std::string project_path(const Globals& g) {
  if (!g.project.empty()) return g.project;
  if (const char* env = std::getenv("RAREFIND_PROJECT"); env && *env) return env;
  throw CLI::RequiredError("--project (or RAREFIND_PROJECT)");
}

std::unique_ptr<rf::Project> open_project(const Globals& g, rf::OpenMode mode) {
  const std::string path = project_path(g);
  if (!std::filesystem::is_directory(path)) {
    throw rf::Error(rf::Errc::kIo, "no project at '" + path + "'");
  }
  return rf::Project::open(path, mode);
}

// Defaults, then the project's stored config, then --config, then flags.
rf::TriageConfig base_config(const Globals& g, const rf::Project* project) {
  json merged = json(rf::TriageConfig{});
  if (project) merged.merge_patch(project->config());
  if (!g.config.empty()) merged.merge_patch(json::parse(rf::read_file(g.config)));
  rf::TriageConfig cfg = merged.get<rf::TriageConfig>();
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

void emit(const Globals& g, const json& j, const std::string& text) {
  if (g.json_out) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << text;
  }
}

std::string report_text(const rf::CleaningReport& r) {
  std::ostringstream os;
  os << "input                      " << r.input_count << '\n'
     << "excluded (no narrative)    " << r.excluded_missing_narrative << '\n'
     << "excluded (duplicates)      " << r.excluded_duplicates << '\n'
     << "flagged resubmissions      " << r.flagged_resubmissions << '\n'
     << "retained                   " << r.retained_count << '\n'
     << "balances                   " << (r.balances() ? "yes" : "NO") << '\n'
     << "tokens per narrative       mean " << r.length_mean << ", sd " << r.length_sd << '\n';
  return os.str();
}

std::string summary_text(const json& s) {
  std::ostringstream os;
  os << "iteration " << s["iteration"] << " (" << s["kind"].get<std::string>() << ")";
  if (s["sealed"].get<bool>()) os << " sealed";
  os << "\n  selection " << s["selection"].get<std::string>() << " -> " << s["selected_clusters"].dump()
     << "\n  sampled " << s["n_sampled"] << ", confirmed " << s["n_confirmed"];
  if (!s["round_yield"].is_null()) os << ", round yield " << s["round_yield"].get<double>();
  if (!s["kappa"].is_null()) os << ", kappa " << s["kappa"].get<double>();
  os << "\n  ref version " << s["ref_version_in"] << " -> " << s["ref_version_out"] << '\n';
  return os.str();
}

std::atomic<httplib::Server*> g_server{nullptr};

void on_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rarefind: triage a complaint corpus for a rare class with human review"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--project,-p", g.project, "Project directory (env RAREFIND_PROJECT)");
  app.add_flag("--json", g.json_out, "Machine-readable output");
  app.add_option("--threads", g.threads, "Worker thread cap (0 = hardware)");
  app.add_option("--seed", g.seed, "Seed for every stochastic component");
  app.add_option("--config", g.config, "JSON config file; flags override it")->check(CLI::ExistingFile);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse, clean and import a complaints CSV");
  std::string csv_path, lexicon_path;
  bool lenient = false;
  double resub = 0.98;
  ingest->add_option("--csv", csv_path, "Complaints CSV export")->required()->check(CLI::ExistingFile);
  ingest->add_flag("--lenient", lenient, "Skip malformed rows instead of failing");
  ingest->add_option("--resubmission-threshold", resub, "Near-duplicate Jaccard threshold")
      ->check(CLI::Range(0.0, 1.0));
  ingest->add_option("--lexicon", lexicon_path, "Lexicon JSON to store with the project")
      ->check(CLI::ExistingFile);

  // match
  auto* match = app.add_subcommand("match", "Keyword matching with proximity over the corpus");
  std::string window_opt = "10";
  std::string preset_opt;
  bool list_ids = false;
  match->add_option("--window", window_opt, "Maximum token gap, or 'inf'");
  match->add_option("--preset", preset_opt, "raw, light or aggressive");
  match->add_flag("--ids", list_ids, "Print matched complaint ids");

  // embed
  auto* embed = app.add_subcommand("embed", "Embed narratives and write a vector file");
  std::string provider_opt, out_path, external_path;
  std::optional<std::size_t> dims_opt;
  bool sparse = false, ip_window = false;
  embed->add_option("--provider", provider_opt, "hashed_ngrams, tfidf_projection or external_file");
  embed->add_option("--dims", dims_opt, "Vector dimensionality");
  embed->add_option("--out", out_path, "Output vector file")->required();
  embed->add_option("--vectors", external_path, "Vector file for the external provider");
  embed->add_flag("--sparse", sparse, "Write index:value pairs");
  embed->add_flag("--ip-window", ip_window, "Embed a sentence window around the first partner mention");

  // cluster
  auto* cluster = app.add_subcommand("cluster", "Spherical k-means over a vector file");
  std::string vectors_in, model_out;
  std::optional<std::size_t> k_opt, n_init_opt;
  cluster->add_option("--vectors", vectors_in, "Vector file (embed --out)")->required()->check(CLI::ExistingFile);
  cluster->add_option("--k", k_opt, "Number of clusters");
  cluster->add_option("--n-init", n_init_opt, "Restarts");
  cluster->add_option("--out", model_out, "Write the model JSON here");

  // iterate
  auto* iterate = app.add_subcommand("iterate", "Run, seal or seed a triage iteration");
  bool keyword = false, force = false;
  std::optional<int> seal_it;
  std::string selection_opt, pool_opt;
  std::optional<std::size_t> n_round_opt, max_it_opt, sample_opt;
  std::vector<std::string> reviewers_opt;
  iterate->add_flag("--keyword", keyword, "Open the keyword seeding round (iteration 0)");
  iterate->add_option("--seal", seal_it, "Seal the round of this iteration");
  iterate->add_flag("--force", force, "Seal even with unlabeled or disputed items");
  iterate->add_option("--k", k_opt, "Number of clusters");
  iterate->add_option("--selection", selection_opt, "top_m:N or coverage:F");
  iterate->add_option("--n-per-round", n_round_opt, "Complaints sampled per round");
  iterate->add_option("--candidate-sample", sample_opt, "Pool subsample size");
  iterate->add_option("--candidate-pool", pool_opt, "ip_matched or random");
  iterate->add_option("--max-iterations", max_it_opt, "Stop after this many clustering rounds");
  iterate->add_option("--reviewers", reviewers_opt, "Reviewer ids")->delimiter(',');
  iterate->add_option("--provider", provider_opt, "Embedding provider");
  iterate->add_option("--vectors", external_path, "Vector file for the external provider");

  // label
  auto* label = app.add_subcommand("label", "Append reviewer labels from a JSON lines file");
  std::string labels_path;
  label->add_option("--file", labels_path, "One label object per line")->required()->check(CLI::ExistingFile);

  // explain
  auto* explain = app.add_subcommand("explain", "Forest plus Shapley attribution for clusters");
  int explain_it = 0;
  std::vector<int> explain_clusters;
  rf::ExplainOptions eopt;
  explain->add_option("--iteration", explain_it, "Iteration whose model to explain")->required();
  explain->add_option("--cluster", explain_clusters, "Clusters (default: the selected ones)");
  explain->add_option("--instances", eopt.instances, "Explained instances per cluster");
  explain->add_option("--permutations", eopt.permutations, "Permutations in sampled mode");
  explain->add_option("--trees", eopt.forest.n_trees, "Forest size");
  explain->add_option("--top-k", eopt.top_k, "Summary length");

  // agreement
  auto* agreement = app.add_subcommand("agreement", "Inter-rater agreement for a round");
  int agreement_it = 0;
  agreement->add_option("--iteration", agreement_it, "Round")->required();

  // report
  auto* report = app.add_subcommand("report", "Iteration summaries and dashboard figures");
  std::optional<int> report_it;
  bool baseline = false;
  report->add_option("--iteration", report_it, "Only this iteration");
  report->add_flag("--baseline", baseline, "Compare the reference set with the keyword rule");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the review API");
  std::string host = "127.0.0.1";
  int port = 8080;
  rf::ServiceOptions sopt;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port")->check(CLI::Range(0, 65535));
  serve->add_option("--token", sopt.token, "Require this X-Rarefind-Token header");
  serve->add_option("--ui-dir", sopt.ui_dir, "Static files served at /");
  serve->add_option("--cors-origin", sopt.cors_origin, "Access-Control-Allow-Origin value");

  // export
  auto* exp = app.add_subcommand("export", "Deterministic project bundle without timestamps");
  std::string export_out;
  exp->add_option("--out", export_out, "Write to this file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (g.threads > 0) rf::set_max_threads(g.threads);

    if (*ingest) {
      const std::string path = project_path(g);
      auto parsed = rf::parse_csv(csv_path, lenient ? rf::SchemaMode::kLenient : rf::SchemaMode::kStrict);
      for (const auto& d : parsed.diagnostics) {
        std::cerr << "line " << d.line << ": " << d.message << '\n';
      }
      auto cleaned = rf::clean(std::move(parsed.complaints), resub);
      auto project = rf::Project::open(path, rf::OpenMode::kReadWrite);
      project->import_corpus(cleaned.retained, cleaned.report);
      if (!lexicon_path.empty()) project->set_lexicon(rf::Lexicon::load(lexicon_path));
      if (!g.config.empty()) project->set_config(json(base_config(g, nullptr)));
      json j = cleaned.report;
      j["resubmission_ids"] = cleaned.resubmission_ids;
      j["skipped_rows"] = parsed.diagnostics.size();
      emit(g, j, report_text(cleaned.report));
      return 0;
    }

    if (*match) {
      auto project = open_project(g, rf::OpenMode::kReadOnly);
      const auto cfg = base_config(g, project.get());
      const std::size_t window = parse_window(window_opt);
      const rf::Preset preset = preset_opt.empty() ? cfg.preset : rf::parse_preset(preset_opt);
      const auto prepared = rf::prepare_corpus(project->corpus(), project->lexicon(), preset, window);
      std::vector<std::string> ids;
      std::size_t ip = 0, abuse = 0;
      for (const auto& m : prepared.matches) {
        if (m.matched) ids.push_back(m.complaint_id);
        ip += m.has_ip();
        abuse += m.has_abuse();
      }
      json j = {{"window", window == rf::kUnboundedWindow ? json("inf") : json(window)},
                {"preset", rf::preset_name(preset)},
                {"documents", prepared.matches.size()},
                {"with_ip", ip},
                {"with_abuse", abuse},
                {"matched", ids.size()},
                {"lexicon_version", project->lexicon().version()}};
      if (list_ids) j["matched_ids"] = ids;
      std::ostringstream os;
      os << "window " << window_text(window) << ": " << ids.size() << " of " << prepared.matches.size()
         << " narratives matched (" << ip << " with a partner term, " << abuse << " with an abuse term)\n";
      if (list_ids) {
        for (const auto& id : ids) os << id << '\n';
      }
      emit(g, j, os.str());
      return 0;
    }

    if (*embed) {
      auto project = open_project(g, rf::OpenMode::kReadOnly);
      auto cfg = base_config(g, project.get());
      rf::EmbeddingConfig ec = cfg.embedding;
      if (!provider_opt.empty()) ec.provider = parse_provider(provider_opt);
      if (dims_opt) ec.dims = *dims_opt;
      if (g.seed) ec.seed = *g.seed;
      if (ip_window) ec.window_mode = rf::WindowMode::kIpWindow;
      ec.validate();
      std::vector<rf::EmbeddingVector> vecs;
      if (ec.provider == rf::EmbeddingProvider::kExternalFile) {
        const std::string src = external_path.empty() ? cfg.external_vectors : external_path;
        if (src.empty()) throw CLI::RequiredError("--vectors");
        std::set<std::string> ids;
        for (const auto& c : project->corpus()) ids.insert(c.complaint_id);
        vecs = rf::import_external_vectors(src, ids);
      } else {
        const auto prepared =
            rf::prepare_corpus(project->corpus(), project->lexicon(), cfg.preset, cfg.window);
        vecs = rf::embed_corpus(prepared.docs, ec, prepared.matches);
      }
      rf::write_vectors(out_path, vecs, sparse ? rf::VectorFormat::kSparse : rf::VectorFormat::kDense);
      emit(g, {{"vectors", vecs.size()}, {"dims", ec.dims}, {"out", out_path}, {"embedding", ec}},
           std::to_string(vecs.size()) + " vectors (" + std::to_string(ec.dims) + " dims) written to " +
               out_path + "\n");
      return 0;
    }

    if (*cluster) {
      std::optional<rf::TriageConfig> cfg;
      if (!g.project.empty() || std::getenv("RAREFIND_PROJECT")) {
        auto project = open_project(g, rf::OpenMode::kReadOnly);
        cfg = base_config(g, project.get());
      } else {
        cfg = base_config(g, nullptr);
      }
      std::ifstream in(vectors_in);
      auto vecs = rf::read_vectors(in);
      for (auto& v : vecs) v.normalize();
      rf::FitOptions fo;
      fo.k = k_opt.value_or(cfg->k);
      fo.seed = cfg->seed;
      fo.n_init = n_init_opt.value_or(cfg->n_init);
      fo.max_iters = cfg->max_iters;
      fo.tol = cfg->tol;
      const rf::ClusterModel model = rf::fit(vecs, fo);
      if (!model_out.empty()) rf::write_file_atomic(model_out, json(model).dump(1));
      const auto sizes = model.cluster_sizes();
      json j = {{"k", model.k},
                {"points", model.ids.size()},
                {"objective", model.objective},
                {"iterations_run", model.iterations_run},
                {"converged", model.converged},
                {"sizes", sizes}};
      std::ostringstream os;
      os << model.ids.size() << " points, k=" << model.k << ", objective " << model.objective << " after "
         << model.iterations_run << " iterations" << (model.converged ? "" : " (not converged)") << '\n';
      for (std::size_t c = 0; c < sizes.size(); ++c) os << "  C" << c << "  " << sizes[c] << '\n';
      emit(g, j, os.str());
      return 0;
    }

    if (*iterate) {
      auto project = open_project(g, rf::OpenMode::kReadWrite);
      if (seal_it) {
        const auto rec = rf::seal_iteration(*project, *seal_it, force);
        const json s = rf::iteration_summary(*project, rec);
        emit(g, s, summary_text(s));
        return 0;
      }
      auto cfg = base_config(g, project.get());
      if (k_opt) cfg.k = *k_opt;
      if (!selection_opt.empty()) cfg.selection = rf::SelectionStrategy::parse(selection_opt);
      if (n_round_opt) cfg.n_per_round = *n_round_opt;
      if (sample_opt) cfg.candidate_sample = *sample_opt;
      if (max_it_opt) cfg.max_iterations = *max_it_opt;
      if (!reviewers_opt.empty()) cfg.reviewers = reviewers_opt;
      if (!pool_opt.empty()) {
        json p = json(cfg);
        p["candidate_pool"] = pool_opt;
        cfg = p.get<rf::TriageConfig>();
      }
      if (!provider_opt.empty()) cfg.embedding.provider = parse_provider(provider_opt);
      if (!external_path.empty()) cfg.external_vectors = external_path;
      if (g.seed) cfg.embedding.seed = *g.seed;
      project->set_config(json(cfg));
      rf::RunOptions ro;
      ro.force = force;
      const auto rec = keyword ? rf::run_keyword_round(*project, cfg, ro) : rf::run_iteration(*project, cfg, ro);
      const json s = rf::iteration_summary(*project, rec);
      emit(g, s, summary_text(s));
      return 0;
    }

    if (*label) {
      auto project = open_project(g, rf::OpenMode::kReadWrite);
      std::ifstream in(labels_path);
      std::vector<rf::Label> labels;
      std::string line;
      std::size_t n = 0;
      while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
          json j = json::parse(line);
          if (!j.contains("iteration")) {
            const auto open = project->open_round_iteration();
            if (!open) throw rf::Error(rf::Errc::kClosedRound, "no open round");
            j["iteration"] = *open;
          }
          if (!j.contains("timestamp")) j["timestamp"] = "";
          labels.push_back(j.get<rf::Label>());
        } catch (const json::exception& e) {
          throw rf::Error(rf::Errc::kInvalidArgument, labels_path + ":" + std::to_string(n) + ": " + e.what());
        }
      }
      const std::size_t offset = project->append_labels(std::move(labels));
      emit(g, {{"log_offset", offset}}, "labels recorded; log holds " + std::to_string(offset) + " labels\n");
      return 0;
    }

    if (*explain) {
      auto project = open_project(g, rf::OpenMode::kReadWrite);
      const auto rec = rf::load_iteration(*project, explain_it);
      if (!rec || rec->kind != "cluster") {
        throw rf::Error(rf::Errc::kUnknownRound, "no clustering for iteration " + std::to_string(explain_it));
      }
      const auto cfg = base_config(g, project.get());
      eopt.seed = cfg.seed;
      eopt.forest.seed = cfg.seed;
      std::vector<int> targets = explain_clusters.empty() ? rec->selected_clusters : explain_clusters;
      json out = json::object();
      std::ostringstream os;
      for (int c : targets) {
        const auto r = rf::explain_cluster(*project, rec->model_iteration, c, eopt);
        out[std::to_string(c)] = rf::to_json(r);
        os << "cluster C" << c << " (training accuracy " << r.training_accuracy << ")\n";
        for (const auto& e : r.summary_topk) {
          os << "  " << e.feature << "  mean|phi| " << e.mean_abs_phi << "  mean phi " << e.mean_phi << '\n';
        }
      }
      emit(g, {{"iteration", explain_it}, {"model_iteration", rec->model_iteration}, {"clusters", out}},
           os.str());
      return 0;
    }

    if (*agreement) {
      auto project = open_project(g, rf::OpenMode::kReadOnly);
      const auto r = rf::round_agreement(project->round(agreement_it));
      std::ostringstream os;
      os << "round " << r.iteration << " (" << r.method << ")\n";
      for (const auto& e : r.entries) {
        os << "  " << e.category << "  ";
        if (e.kappa) {
          os << *e.kappa;
        } else {
          os << "undefined";
        }
        os << "  n=" << e.n_items << '\n';
      }
      emit(g, json(r), os.str());
      return 0;
    }

    if (*report) {
      auto project = open_project(g, rf::OpenMode::kReadOnly);
      if (baseline) {
        const auto cfg = base_config(g, project.get());
        const auto b = rf::compare_keyword_baseline(project->reference(), project->lexicon(),
                                                    project->corpus(), cfg.window);
        std::ostringstream os;
        os << "reference " << b.total << ": " << b.keyword_seeded << " from the keyword round, "
           << b.workflow_only << " found by iterations\n"
           << "  missed by the proximity rule " << b.proximity_misses << " (growth " << b.growth << ")\n";
        emit(g, json(b), os.str());
        return 0;
      }
      const json dash = rf::build_dashboard(*project);
      if (report_it) {
        for (const auto& s : dash["iterations"]) {
          if (s["iteration"].get<int>() == *report_it) {
            emit(g, s, summary_text(s));
            return 0;
          }
        }
        throw rf::Error(rf::Errc::kUnknownRound, "no iteration " + std::to_string(*report_it));
      }
      std::ostringstream os;
      for (const auto& s : dash["iterations"]) os << summary_text(s);
      os << "reference v" << dash["ref_version"] << ": " << dash["ref_size"] << " complaints\n";
      emit(g, dash, os.str());
      return 0;
    }

    if (*serve) {
      auto project = open_project(g, rf::OpenMode::kReadWrite);
      rf::ReviewService service(*project, sopt);
      httplib::Server server;
      rf::install_routes(server, service);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      int bound = port;
      if (port == 0) {
        bound = server.bind_to_any_port(host);
      } else if (!server.bind_to_port(host, port)) {
        throw rf::Error(rf::Errc::kIo, "cannot bind " + host + ":" + std::to_string(port));
      }
      std::cerr << "serving " << project->root().string() << " on http://" << host << ":" << bound << '\n';
      server.listen_after_bind();
      g_server = nullptr;
      return 0;
    }

    if (*exp) {
      auto project = open_project(g, rf::OpenMode::kReadOnly);
      const std::string bundle = project->export_bundle();
      if (export_out.empty()) {
        std::cout << bundle;
      } else {
        rf::write_file_atomic(export_out, bundle);
      }
      return 0;
    }
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const rf::Error& e) {
    std::cerr << e.name() << ": " << e.what() << '\n';
    if (g.json_out) std::cout << json{{"error", e.name()}, {"message", e.what()}}.dump() << '\n';
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "InvalidConfig: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
