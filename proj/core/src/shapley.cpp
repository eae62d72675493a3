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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rarefind/common.hpp"
#include "rarefind/explain.hpp"

namespace rarefind {

namespace {

// v(S) for a coalition given as a per-feature membership mask.
double coalition_value(const ForestModel& model, std::size_t cls, std::span<const double> x,
                       const Matrix& background, const std::vector<char>& in) {
  double total = 0.0;
  for (std::size_t b = 0; b < background.rows; ++b) {
    const auto row = background.row(b);
    total += model.probability(cls, [&](std::size_t f) { return in[f] ? x[f] : row[f]; });
  }
  return total / static_cast<double>(background.rows);
}

}  // namespace

Attribution shapley_attribution(const ForestModel& model, std::span<const double> x,
                                int target_cluster, const Matrix& background,
                                const ShapleyOptions& options) {
  if (background.rows == 0) throw Error(Errc::kEmptyBackground, "background matrix is empty");
  const std::size_t width = model.n_features();
  if (x.size() != width || background.cols != width) {
    throw Error(Errc::kDimensionMismatch, "expected " + std::to_string(width) + " features");
  }
  const auto cls = model.class_index(target_cluster);
  if (!cls) {
    throw Error(Errc::kInvalidArgument, "cluster " + std::to_string(target_cluster) +
                                            " is not a class of the model");
  }

  std::vector<std::size_t> active;
  for (std::size_t f : model.used_features()) {
    for (std::size_t b = 0; b < background.rows; ++b) {
      if (background.at(b, f) != x[f]) {
        active.push_back(f);
        break;
      }
    }
  }

  Attribution out;
  out.phi.assign(width, 0.0);
  out.active_features = active.size();
  out.mode = options.mode;
  std::vector<char> in(width, 0);
  out.base_value = coalition_value(model, *cls, x, background, in);
  for (auto f : active) in[f] = 1;
  out.prediction = coalition_value(model, *cls, x, background, in);
  const std::size_t n = active.size();
  if (n == 0) return out;

  if (options.mode == ShapleyMode::kExact) {
    if (n > options.exact_limit) {
      throw Error(Errc::kTooManyFeaturesForExact,
                  std::to_string(n) + " active features, exact limit is " +
                      std::to_string(options.exact_limit));
    }
    const std::size_t subsets = std::size_t{1} << n;
    std::vector<double> v(subsets);
    parallel_for(subsets, [&](std::size_t mask) {
      std::vector<char> member(width, 0);
      for (std::size_t i = 0; i < n; ++i) {
        if (mask & (std::size_t{1} << i)) member[active[i]] = 1;
      }
      v[mask] = coalition_value(model, *cls, x, background, member);
    });
    // weight[s] = s! (n - s - 1)! / n!
    std::vector<double> weight(n);
    for (std::size_t s = 0; s < n; ++s) {
      weight[s] = std::exp(std::lgamma(static_cast<double>(s + 1)) +
                           std::lgamma(static_cast<double>(n - s)) -
                           std::lgamma(static_cast<double>(n + 1)));
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t bit = std::size_t{1} << i;
      double phi = 0.0;
      for (std::size_t mask = 0; mask < subsets; ++mask) {
        if (mask & bit) continue;
        const auto s = static_cast<std::size_t>(__builtin_popcountll(mask));
        phi += weight[s] * (v[mask | bit] - v[mask]);
      }
      out.phi[active[i]] = phi;
    }
    return out;
  }

  if (options.permutations == 0) throw Error(Errc::kInvalidArgument, "permutations must be >= 1");
  std::vector<std::vector<double>> partial(options.permutations, std::vector<double>(n, 0.0));
  parallel_for(options.permutations, [&](std::size_t p) {
    Rng rng(derive_seed(options.seed, p));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    std::vector<char> member(width, 0);
    double prev = out.base_value;
    for (std::size_t i : order) {
      member[active[i]] = 1;
      const double cur = coalition_value(model, *cls, x, background, member);
      partial[p][i] = cur - prev;
      prev = cur;
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (const auto& row : partial) s += row[i];
    out.phi[active[i]] = s / static_cast<double>(options.permutations);
  }
  return out;
}

}  // namespace rarefind
