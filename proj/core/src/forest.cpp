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

double gini(std::span<const double> counts, double total) {
  if (total <= 0.0) return 0.0;
  double s = 0.0;
  for (double c : counts) s += (c / total) * (c / total);
  return 1.0 - s;
}

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, std::span<const std::size_t> y, std::size_t n_classes,
              std::size_t max_depth, std::size_t mtry, Rng rng)
      : x_(x), y_(y), n_classes_(n_classes), max_depth_(max_depth), mtry_(mtry), rng_(rng) {}

  DecisionTree build(std::vector<std::size_t> sample) {
    DecisionTree tree;
    grow(tree, std::move(sample), 0);
    return tree;
  }

 private:
  int grow(DecisionTree& tree, std::vector<std::size_t> rows, std::size_t depth) {
    const int index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    std::vector<double> counts(n_classes_, 0.0);
    for (auto r : rows) counts[y_[r]] += 1.0;
    const double total = static_cast<double>(rows.size());
    const bool pure = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0; }) <= 1;

    int best_feature = -1;
    double best_threshold = 0.0;
    if (!pure && depth < max_depth_ && rows.size() >= 2) {
      std::vector<std::size_t> features(x_.cols);
      std::iota(features.begin(), features.end(), std::size_t{0});
      rng_.shuffle(features);
      double best_impurity = std::numeric_limits<double>::infinity();
      std::size_t visited = 0;
      std::vector<std::pair<double, std::size_t>> values(rows.size());
      std::vector<double> left(n_classes_), right(n_classes_);
      for (std::size_t f : features) {
        if (visited >= mtry_) break;
        for (std::size_t i = 0; i < rows.size(); ++i) values[i] = {x_.at(rows[i], f), y_[rows[i]]};
        std::sort(values.begin(), values.end());
        if (values.front().first == values.back().first) continue;
        ++visited;
        std::fill(left.begin(), left.end(), 0.0);
        right = counts;
        for (std::size_t i = 0; i + 1 < values.size(); ++i) {
          left[values[i].second] += 1.0;
          right[values[i].second] -= 1.0;
          if (values[i].first == values[i + 1].first) continue;
          const double nl = static_cast<double>(i + 1);
          const double nr = total - nl;
          const double impurity = (nl * gini(left, nl) + nr * gini(right, nr)) / total;
          if (impurity < best_impurity) {
            best_impurity = impurity;
            best_feature = static_cast<int>(f);
            double mid = 0.5 * (values[i].first + values[i + 1].first);
            if (!(mid < values[i + 1].first)) mid = values[i].first;
            best_threshold = mid;
          }
        }
      }
    }

    if (best_feature < 0) {
      for (double& c : counts) c /= total;
      tree.nodes[static_cast<std::size_t>(index)].probs = std::move(counts);
      return index;
    }
    std::vector<std::size_t> lrows, rrows;
    for (auto r : rows) {
      (x_.at(r, static_cast<std::size_t>(best_feature)) <= best_threshold ? lrows : rrows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(tree, std::move(lrows), depth + 1);
    const int r = grow(tree, std::move(rrows), depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(index)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return index;
  }

  const Matrix& x_;
  std::span<const std::size_t> y_;
  std::size_t n_classes_;
  std::size_t max_depth_;
  std::size_t mtry_;
  Rng rng_;
};

template <typename ValueFn>
const TreeNode& leaf_of(const DecisionTree& tree, ValueFn&& value) {
  const TreeNode* node = &tree.nodes[0];
  while (node->feature >= 0) {
    const auto f = static_cast<std::size_t>(node->feature);
    node = &tree.nodes[static_cast<std::size_t>(value(f) <= node->threshold ? node->left : node->right)];
  }
  return *node;
}

}  // namespace

std::optional<std::size_t> ForestModel::class_index(int label) const {
  auto it = std::lower_bound(classes.begin(), classes.end(), label);
  if (it == classes.end() || *it != label) return std::nullopt;
  return static_cast<std::size_t>(it - classes.begin());
}

std::vector<double> ForestModel::predict_proba(std::span<const double> x) const {
  if (x.size() != n_features()) {
    throw Error(Errc::kDimensionMismatch, "expected " + std::to_string(n_features()) + " features");
  }
  std::vector<double> p(classes.size(), 0.0);
  for (const auto& t : trees) {
    const auto& leaf = leaf_of(t, [&](std::size_t f) { return x[f]; });
    for (std::size_t c = 0; c < p.size(); ++c) p[c] += leaf.probs[c];
  }
  for (double& v : p) v /= static_cast<double>(trees.size());
  return p;
}

int ForestModel::predict(std::span<const double> x) const {
  const auto p = predict_proba(x);
  return classes[static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin())];
}

double ForestModel::probability(std::size_t cls,
                                const std::function<double(std::size_t)>& value) const {
  double s = 0.0;
  for (const auto& t : trees) s += leaf_of(t, value).probs[cls];
  return s / static_cast<double>(trees.size());
}

std::vector<std::size_t> ForestModel::used_features() const {
  std::vector<bool> used(n_features(), false);
  for (const auto& t : trees) {
    for (const auto& n : t.nodes) {
      if (n.feature >= 0) used[static_cast<std::size_t>(n.feature)] = true;
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < used.size(); ++f) {
    if (used[f]) out.push_back(f);
  }
  return out;
}

void to_json(nlohmann::json& j, const ForestModel& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      nodes.push_back({n.feature, n.threshold, n.left, n.right, n.probs});
    }
    trees.push_back(std::move(nodes));
  }
  j = {{"format_version", 1},
       {"n_trees", m.n_trees},
       {"max_depth", m.max_depth},
       {"seed", m.seed},
       {"feature_names", m.feature_names},
       {"classes", m.classes},
       {"trees", std::move(trees)}};
}

void from_json(const nlohmann::json& j, ForestModel& m) {
  m.n_trees = j.at("n_trees").get<std::size_t>();
  m.max_depth = j.at("max_depth").get<std::size_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  m.classes = j.at("classes").get<std::vector<int>>();
  m.trees.clear();
  for (const auto& nodes : j.at("trees")) {
    DecisionTree t;
    for (const auto& n : nodes) {
      TreeNode node;
      node.feature = n.at(0).get<int>();
      node.threshold = n.at(1).get<double>();
      node.left = n.at(2).get<int>();
      node.right = n.at(3).get<int>();
      node.probs = n.at(4).get<std::vector<double>>();
      t.nodes.push_back(std::move(node));
    }
    m.trees.push_back(std::move(t));
  }
}

ForestModel train_forest(const Matrix& x, std::span<const int> y, const ForestOptions& options,
                         std::vector<std::string> feature_names) {
  if (x.rows == 0) throw Error(Errc::kInvalidArgument, "no training rows");
  if (y.size() != x.rows) throw Error(Errc::kInvalidArgument, "label count != row count");
  if (options.n_trees == 0) throw Error(Errc::kInvalidArgument, "n_trees must be >= 1");
  if (feature_names.empty()) {
    for (std::size_t f = 0; f < x.cols; ++f) feature_names.push_back("f" + std::to_string(f));
  }
  if (feature_names.size() != x.cols) {
    throw Error(Errc::kInvalidArgument, "feature name count != column count");
  }

  ForestModel model;
  model.n_trees = options.n_trees;
  model.max_depth = options.max_depth;
  model.seed = options.seed;
  model.feature_names = std::move(feature_names);
  model.classes.assign(y.begin(), y.end());
  std::sort(model.classes.begin(), model.classes.end());
  model.classes.erase(std::unique(model.classes.begin(), model.classes.end()), model.classes.end());
  if (model.classes.size() < 2) throw Error(Errc::kSingleClass, "training labels hold one class");

  std::vector<std::size_t> yi(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) yi[i] = *model.class_index(y[i]);
  const std::size_t n_classes = model.classes.size();
  std::size_t mtry = options.max_features;
  if (mtry == 0) {
    mtry = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(x.cols))));
  }
  mtry = std::max<std::size_t>(1, mtry);

  model.trees.resize(options.n_trees);
  parallel_for(options.n_trees, [&](std::size_t t) {
    Rng rng(derive_seed(options.seed, t));
    std::vector<std::size_t> sample(x.rows);
    for (auto& s : sample) s = rng.uniform_index(x.rows);
    TreeBuilder builder(x, yi, n_classes, options.max_depth, mtry, Rng(rng.next()));
    DecisionTree tree = builder.build(std::move(sample));

    // Leaf distributions from the full training set.
    std::vector<std::vector<double>> counts(tree.nodes.size());
    for (std::size_t r = 0; r < x.rows; ++r) {
      const TreeNode* node = &tree.nodes[0];
      std::size_t at = 0;
      while (node->feature >= 0) {
        at = static_cast<std::size_t>(x.at(r, static_cast<std::size_t>(node->feature)) <= node->threshold
                                          ? node->left
                                          : node->right);
        node = &tree.nodes[at];
      }
      auto& c = counts[at];
      if (c.empty()) c.assign(n_classes, 0.0);
      c[yi[r]] += 1.0;
    }
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
      auto& node = tree.nodes[i];
      if (node.feature >= 0 || counts[i].empty()) continue;
      double total = 0.0;
      for (double c : counts[i]) total += c;
      for (double& c : counts[i]) c /= total;
      node.probs = std::move(counts[i]);
    }
    model.trees[t] = std::move(tree);
  });
  return model;
}

}  // namespace rarefind
