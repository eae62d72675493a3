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

#include "rarefind/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rarefind/common.hpp"

namespace rarefind {

std::optional<int> ClusterModel::cluster_of(const std::string& complaint_id) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == complaint_id) return labels[i];
  }
  return std::nullopt;
}

std::vector<std::size_t> ClusterModel::cluster_sizes() const {
  std::vector<std::size_t> sizes(k, 0);
  for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
  return sizes;
}

void to_json(nlohmann::json& j, const ClusterModel& m) {
  nlohmann::json assignments = nlohmann::json::object();
  for (std::size_t i = 0; i < m.ids.size(); ++i) assignments[m.ids[i]] = m.labels[i];
  std::vector<bool> empty = m.empty;
  empty.resize(m.k, false);
  j = {{"format_version", 1},
       {"k", m.k},
       {"dims", m.dims},
       {"seed", m.seed},
       {"objective", m.objective},
       {"iterations_run", m.iterations_run},
       {"converged", m.converged},
       {"objective_trace", m.objective_trace},
       {"centroids", m.centroids},
       {"empty", empty},
       {"assignments", std::move(assignments)}};
}

void from_json(const nlohmann::json& j, ClusterModel& m) {
  m.k = j.at("k").get<std::size_t>();
  m.dims = j.at("dims").get<std::size_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.objective = j.at("objective").get<double>();
  m.iterations_run = j.value("iterations_run", std::size_t{0});
  m.converged = j.value("converged", false);
  m.objective_trace = j.value("objective_trace", std::vector<double>{});
  m.centroids = j.at("centroids").get<std::vector<std::vector<double>>>();
  m.empty = j.value("empty", std::vector<bool>(m.k, false));
  m.ids.clear();
  m.labels.clear();
  for (const auto& [id, label] : j.at("assignments").items()) {
    m.ids.push_back(id);
    m.labels.push_back(label.get<int>());
  }
  if (m.centroids.size() != m.k) throw Error(Errc::kDimensionMismatch, "centroid count != k");
}

namespace {

struct Run {
  std::vector<std::vector<double>> centroids;
  std::vector<bool> empty;
  std::vector<int> labels;
  double objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

int argmax_cosine(const EmbeddingVector& x, const std::vector<std::vector<double>>& centroids,
                  const std::vector<bool>& empty) {
  int best = -1;
  double best_cos = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    if (empty[c]) continue;
    const double s = x.dot(centroids[c]);
    if (s > best_cos) {
      best_cos = s;
      best = static_cast<int>(c);
    }
  }
  return best;
}

void assign_all(std::span<const EmbeddingVector> xs, const Run& run, std::vector<int>& labels) {
  labels.resize(xs.size());
  parallel_for(xs.size(), [&](std::size_t i) {
    labels[i] = argmax_cosine(xs[i], run.centroids, run.empty);
  });
}

// Normalized means. Clusters without members are refilled from the point with
// the worst cosine to its current centroid before the means are taken.
void update_centroids(std::span<const EmbeddingVector> xs, std::size_t k, std::size_t dims,
                      Run& run) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> counts(k, 0);
  for (int l : run.labels) ++counts[static_cast<std::size_t>(l)];
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] > 0) continue;
    std::size_t worst = n;
    double worst_cos = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const auto own = static_cast<std::size_t>(run.labels[i]);
      if (counts[own] < 2) continue;
      const double s = xs[i].dot(run.centroids[own]);
      if (s < worst_cos) {
        worst_cos = s;
        worst = i;
      }
    }
    if (worst == n) continue;
    --counts[static_cast<std::size_t>(run.labels[worst])];
    run.labels[worst] = static_cast<int>(c);
    ++counts[c];
  }

  std::vector<std::vector<double>> sums(k, std::vector<double>(dims, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = sums[static_cast<std::size_t>(run.labels[i])];
    for (const auto& [d, v] : xs[i].entries()) s[d] += v;
  }
  run.empty.assign(k, false);
  for (std::size_t c = 0; c < k; ++c) {
    double ss = 0.0;
    for (double v : sums[c]) ss += v * v;
    const double norm = std::sqrt(ss);
    if (counts[c] == 0 || norm == 0.0) {
      run.empty[c] = true;
      run.centroids[c].assign(dims, 0.0);
      continue;
    }
    for (double& v : sums[c]) v /= norm;
    run.centroids[c] = std::move(sums[c]);
  }
}

double objective_of(std::span<const EmbeddingVector> xs, const Run& run) {
  double total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    total += xs[i].dot(run.centroids[static_cast<std::size_t>(run.labels[i])]);
  }
  return total;
}

// Single-point transfers that raise the objective, applied once Lloyd has
// reached a fixed point. The best centroid of a group is its normalized sum,
// so a group contributes |sum| and a move from a to b changes the objective by
// |S_b + x| - |S_b| - (|S_a| - |S_a - x|). Returns whether anything moved.
bool hartigan_moves(std::span<const EmbeddingVector> xs, std::size_t k, std::size_t dims, Run& run) {
  constexpr double kMinGain = 1e-12;
  constexpr int kMaxPasses = 50;
  std::vector<std::vector<double>> sums(k, std::vector<double>(dims, 0.0));
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto c = static_cast<std::size_t>(run.labels[i]);
    ++counts[c];
    for (const auto& [d, v] : xs[i].entries()) sums[c][d] += v;
  }
  auto sq = [](const std::vector<double>& s) {
    double t = 0.0;
    for (double v : s) t += v * v;
    return t;
  };
  std::vector<double> sqn(k);
  for (std::size_t c = 0; c < k; ++c) sqn[c] = sq(sums[c]);

  bool any = false;
  for (int pass = 0; pass < kMaxPasses; ++pass) {
    bool moved = false;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const auto a = static_cast<std::size_t>(run.labels[i]);
      if (counts[a] < 2) continue;
      const double xx = xs[i].dot(xs[i]);
      const double xa = xs[i].dot(sums[a]);
      const double loss = std::sqrt(sqn[a]) - std::sqrt(std::max(0.0, sqn[a] - 2.0 * xa + xx));
      std::size_t target = a;
      double best_gain = kMinGain;
      for (std::size_t b = 0; b < k; ++b) {
        if (b == a) continue;
        const double xb = xs[i].dot(sums[b]);
        const double gain = std::sqrt(std::max(0.0, sqn[b] + 2.0 * xb + xx)) - std::sqrt(sqn[b]) - loss;
        if (gain > best_gain) {
          best_gain = gain;
          target = b;
        }
      }
      if (target == a) continue;
      for (const auto& [d, v] : xs[i].entries()) {
        sums[a][d] -= v;
        sums[target][d] += v;
      }
      sqn[a] = sq(sums[a]);
      sqn[target] = sq(sums[target]);
      --counts[a];
      ++counts[target];
      run.labels[i] = static_cast<int>(target);
      moved = true;
    }
    if (!moved) break;
    any = true;
  }
  return any;
}

Run single_run(std::span<const EmbeddingVector> xs, const FitOptions& opt, std::uint64_t seed,
               std::size_t dims, bool random_partition) {
  const std::size_t n = xs.size();
  const std::size_t k = opt.k;
  Rng rng(seed);
  Run run;
  run.centroids.reserve(k);
  run.empty.assign(k, false);

  if (random_partition) {
    // Uniform random labels; update_centroids refills any empty cluster.
    run.labels.resize(n);
    for (auto& l : run.labels) l = static_cast<int>(rng.uniform_index(k));
    run.centroids.assign(k, std::vector<double>(dims, 0.0));
    update_centroids(xs, k, dims, run);
    run.objective = objective_of(xs, run);
    run.trace.push_back(run.objective);
    run.iterations = 1;
  } else {
  // k-means++ with D(x) = 1 - max cos to the chosen centres.
  std::size_t first = rng.uniform_index(n);
  run.centroids.push_back(xs[first].dense());
  std::vector<double> best(n);
  for (std::size_t i = 0; i < n; ++i) best[i] = xs[i].dot(run.centroids[0]);
  while (run.centroids.size() < k) {
    double total = 0.0;
    for (double b : best) total += std::max(0.0, 1.0 - b);
    std::size_t pick = n - 1;
    if (total <= 0.0) {
      pick = rng.uniform_index(n);
    } else {
      const double r = rng.uniform01() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += std::max(0.0, 1.0 - best[i]);
        if (acc > r) {
          pick = i;
          break;
        }
      }
    }
    run.centroids.push_back(xs[pick].dense());
    const auto& c = run.centroids.back();
    for (std::size_t i = 0; i < n; ++i) best[i] = std::max(best[i], xs[i].dot(c));
  }

  assign_all(xs, run, run.labels);
  update_centroids(xs, k, dims, run);
  run.objective = objective_of(xs, run);
  run.trace.push_back(run.objective);
  run.iterations = 1;
  }

  std::vector<int> next_labels;
  while (true) {
    run.converged = false;
    while (run.iterations < opt.max_iters) {
      assign_all(xs, run, next_labels);
      if (next_labels == run.labels) {
        run.converged = true;
        break;
      }
      run.labels.swap(next_labels);
      const double previous = run.objective;
      update_centroids(xs, k, dims, run);
      run.objective = objective_of(xs, run);
      run.trace.push_back(run.objective);
      ++run.iterations;
      if (run.objective - previous < opt.tol) break;
    }
    if (!run.converged || !hartigan_moves(xs, k, dims, run)) break;
    update_centroids(xs, k, dims, run);
    run.objective = objective_of(xs, run);
    run.trace.push_back(run.objective);
  }
  return run;
}

}  // namespace

ClusterModel fit(std::span<const EmbeddingVector> vectors, const FitOptions& options) {
  if (options.k == 0 || vectors.size() < options.k) {
    throw Error(Errc::kTooFewPoints, "k=" + std::to_string(options.k) + " with " +
                                         std::to_string(vectors.size()) + " points");
  }
  if (options.n_init == 0) throw Error(Errc::kInvalidArgument, "n_init must be >= 1");
  const std::size_t dims = vectors.front().dims();
  for (const auto& v : vectors) {
    if (v.dims() != dims) {
      throw Error(Errc::kDimensionMismatch, "'" + v.complaint_id() + "' has " +
                                                std::to_string(v.dims()) + " dims, expected " +
                                                std::to_string(dims));
    }
    if (std::abs(v.norm() - 1.0) > 1e-6) {
      throw Error(Errc::kNonUnitInput, "'" + v.complaint_id() + "' is not unit norm");
    }
  }

  Run best;
  bool have = false;
  for (std::size_t r = 0; r < options.n_init; ++r) {
    // Even restarts seed with k-means++, odd ones start from a random partition.
    Run run = single_run(vectors, options, derive_seed(options.seed, r), dims, r % 2 == 1);
    if (!have || run.objective > best.objective) {
      best = std::move(run);
      have = true;
    }
  }

  ClusterModel m;
  m.k = options.k;
  m.dims = dims;
  m.seed = options.seed;
  m.centroids = std::move(best.centroids);
  m.empty = std::move(best.empty);
  m.labels = std::move(best.labels);
  m.objective = best.objective;
  m.iterations_run = best.iterations;
  m.converged = best.converged;
  m.objective_trace = std::move(best.trace);
  m.ids.reserve(vectors.size());
  for (const auto& v : vectors) m.ids.push_back(v.complaint_id());
  return m;
}

int assign(const ClusterModel& model, const EmbeddingVector& v) {
  if (v.dims() != model.dims) {
    throw Error(Errc::kDimensionMismatch, "vector has " + std::to_string(v.dims()) +
                                              " dims, model has " + std::to_string(model.dims));
  }
  std::vector<bool> empty = model.empty;
  empty.resize(model.k, false);
  return argmax_cosine(v, model.centroids, empty);
}

int assign(const ClusterModel& model, std::span<const double> v) {
  if (v.size() != model.dims) {
    throw Error(Errc::kDimensionMismatch, "vector has " + std::to_string(v.size()) +
                                              " dims, model has " + std::to_string(model.dims));
  }
  std::vector<bool> empty = model.empty;
  empty.resize(model.k, false);
  int best = -1;
  double best_cos = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < model.k; ++c) {
    if (empty[c]) continue;
    double s = 0.0;
    for (std::size_t d = 0; d < v.size(); ++d) s += v[d] * model.centroids[c][d];
    if (s > best_cos) {
      best_cos = s;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace rarefind
