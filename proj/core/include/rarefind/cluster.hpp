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

#ifndef RAREFIND_CLUSTER_HPP_
#define RAREFIND_CLUSTER_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rarefind/embed.hpp"

namespace rarefind {

struct FitOptions {
  std::size_t k = 12;
  std::uint64_t seed = 42;
  std::size_t max_iters = 100;
  double tol = 1e-6;
  // Independent k-means++ restarts; the run with the best objective is kept.
  std::size_t n_init = 20;
};

// Fitted spherical k-means state. Immutable after fit; safe to share read-only.
struct ClusterModel {
  std::size_t k = 0;
  std::size_t dims = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> centroids;  // unit norm unless empty[c]
  std::vector<bool> empty;
  std::vector<std::string> ids;  // clustered complaint ids, input order
  std::vector<int> labels;       // labels[i] is the cluster of ids[i]
  double objective = 0.0;        // sum of cos(x, centroid(label(x)))
  std::size_t iterations_run = 0;
  bool converged = false;  // assignments reached a fixed point
  std::vector<double> objective_trace;  // objective after every centroid update

  std::optional<int> cluster_of(const std::string& complaint_id) const;
  std::vector<std::size_t> cluster_sizes() const;
};

void to_json(nlohmann::json& j, const ClusterModel& m);
void from_json(const nlohmann::json& j, ClusterModel& m);

// Lloyd iterations on the unit sphere: k-means++ seeding with distance
// 1 - cos, assignment to the max-cosine centroid (ties to the lowest index),
// centroids re-normalized means. A cluster that empties is re-seeded with the
// point that has the worst cosine to its own centroid (taken from a cluster
// with more than one member). At a fixed point, single-point transfers that
// raise the objective are applied and Lloyd resumes; the run ends when
// neither step changes the partition, when a Lloyd step improves the
// objective by less than tol, or after max_iters Lloyd steps.
// Errors: kTooFewPoints (k > n or k == 0), kNonUnitInput, kDimensionMismatch.
ClusterModel fit(std::span<const EmbeddingVector> vectors, const FitOptions& options);

// Max-cosine centroid for v; ties go to the lowest index. Empty centroids are
// never chosen. Throws kDimensionMismatch.
int assign(const ClusterModel& model, const EmbeddingVector& v);
int assign(const ClusterModel& model, std::span<const double> v);

}  // namespace rarefind

#endif  // RAREFIND_CLUSTER_HPP_
