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
#include "rarefind/api.hpp"
#include "rarefind/common.hpp"

namespace rarefind {

namespace {

nlohmann::json relevance_kappa(const Project& project, int iteration) {
  auto it = project.rounds().find(iteration);
  if (it == project.rounds().end()) return nullptr;
  try {
    const auto report = round_agreement(it->second);
    const auto& e = report.entries.front();
    return e.kappa ? nlohmann::json(*e.kappa) : nlohmann::json();
  } catch (const Error&) {
    return nullptr;
  }
}

nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json();
}

}  // namespace

nlohmann::json iteration_summary(const Project& project, const IterationRecord& r) {
  nlohmann::json dist = nlohmann::json::object();
  for (const auto& [c, f] : r.ref_distribution) dist[std::to_string(c)] = f;
  nlohmann::json yields = nlohmann::json::object();
  for (const auto& [c, y] : r.estimated_yield) yields[std::to_string(c)] = y;
  return {{"iteration", r.iteration},
          {"kind", r.kind},
          {"k", r.k},
          {"seed", r.seed},
          {"model_iteration", r.model_iteration},
          {"candidate_pool", r.candidate_pool},
          {"pool_size", r.pool_size},
          {"clustered", r.clustered},
          {"selection", r.selection},
          {"selected_clusters", r.selected_clusters},
          {"ref_distribution", std::move(dist)},
          {"ref_version_in", r.ref_version_in},
          {"ref_version_out", r.ref_version_out ? nlohmann::json(*r.ref_version_out) : nlohmann::json()},
          {"n_sampled", r.sampled.size()},
          {"n_confirmed", r.confirmed.size()},
          {"round_yield", opt(r.round_yield)},
          {"top_cluster_yield", opt(r.top_cluster_yield())},
          {"estimated_yield", std::move(yields)},
          {"kappa", relevance_kappa(project, r.iteration)},
          {"sealed", r.sealed}};
}

nlohmann::json build_dashboard(const Project& project) {
  nlohmann::json iterations = nlohmann::json::array();
  nlohmann::json yields = nlohmann::json::object();
  for (const auto& rec : load_iterations(project)) {
    iterations.push_back(iteration_summary(project, rec));
    if (rec.round_yield) yields[std::to_string(rec.iteration)] = *rec.round_yield;
  }
  nlohmann::json sizes = nlohmann::json::array();
  for (const auto& r : project.refset_history()) {
    if (r.version > 0) sizes.push_back(r.size());
  }
  nlohmann::json kappas = nlohmann::json::object();
  for (const auto& [it, round] : project.rounds()) {
    auto k = relevance_kappa(project, it);
    bool labeled = false;
    for (const auto& [id, rs] : round.assignments) {
      if (round.final_verdict(id) || round.split(id)) labeled = true;
    }
    if (labeled) kappas[std::to_string(it)] = k;
  }
  return {{"iterations", std::move(iterations)},
          {"ref_size_by_version", std::move(sizes)},
          {"yield_by_iteration", std::move(yields)},
          {"kappa_by_round", std::move(kappas)},
          {"ref_version", project.reference().version},
          {"ref_size", project.reference().size()}};
}

std::size_t utf16_offset(std::string_view text, std::size_t offset) {
  std::size_t units = 0;
  for (std::size_t i = 0; i < offset && i < text.size();) {
    const auto b = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (b >= 0xF0) {
      len = 4;
    } else if (b >= 0xE0) {
      len = 3;
    } else if (b >= 0xC0) {
      len = 2;
    }
    units += len == 4 ? 2 : 1;
    i += len;
  }
  return units;
}

}  // namespace rarefind
