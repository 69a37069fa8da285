// Copyright 2026 The pspc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Second-order gradient-boosted regression trees with logistic loss.
//
// Each round fits one depth-limited tree to the gradient g = p - y and
// hessian h = p (1 - p) of the loss at the current margin. A node with sums
// (G, H) has optimal weight -G / (H + lambda) and structure score
// G^2 / (H + lambda); a split is kept when
//
//   0.5 * [GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda)] - gamma > 0.
//
// Split candidates come from per-feature histograms over at most max_bins
// quantile bins computed once from the training matrix.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "pspc/core.hpp"
#include "pspc/error.hpp"

namespace pspc::models {

struct GbdtParams {
  int max_depth = 3;
  double learning_rate = 0.1;
  double gamma_split = 0.1;
  double lambda_l2 = 1.0;
  double scale_pos_weight = 1.0;
  int n_trees = 200;
  double min_child_weight = 1.0;
  double base_score = 0.5;  // probability; the initial margin is its logit
  int max_bins = 64;

  friend bool operator==(const GbdtParams&, const GbdtParams&) = default;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // x[feature] < threshold goes left
  int left = -1;
  int right = -1;
  double weight = 0.0;  // leaf value before the learning rate is applied

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double evaluate(std::span<const double> x) const {
    std::size_t k = 0;
    while (!nodes[k].is_leaf()) {
      const TreeNode& node = nodes[k];
      k = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] < node.threshold ? node.left
                                                                                             : node.right);
    }
    return nodes[k].weight;
  }

  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;
};

struct GbdtModel {
  GbdtParams params;
  std::vector<RegressionTree> trees;

  double base_margin() const {
    const double p0 = std::clamp(params.base_score, 1e-12, 1.0 - 1e-12);
    return std::log(p0 / (1.0 - p0));
  }

  double margin(std::span<const double> x) const {
    double m = base_margin();
    for (const auto& tree : trees) m += params.learning_rate * tree.evaluate(x);
    return m;
  }

  double predict_proba(std::span<const double> x) const { return logistic(margin(x)); }

  friend bool operator==(const GbdtModel&, const GbdtModel&) = default;
};

namespace detail {

// Quantized copy of a training matrix.
class BinnedMatrix {
 public:
  BinnedMatrix(std::span<const PairFeatures> x, int max_bins) : rows_(x.size()) {
    cuts_.resize(kPairFeatureDim);
    bins_.resize(rows_ * kPairFeatureDim);
    std::vector<double> column(rows_);
    for (std::size_t f = 0; f < kPairFeatureDim; ++f) {
      for (std::size_t r = 0; r < rows_; ++r) column[r] = x[r][f];
      std::sort(column.begin(), column.end());
      column.erase(std::unique(column.begin(), column.end()), column.end());
      auto& cuts = cuts_[f];
      if (column.size() <= static_cast<std::size_t>(max_bins)) {
        for (std::size_t k = 1; k < column.size(); ++k) cuts.push_back(0.5 * (column[k - 1] + column[k]));
      } else {
        for (int b = 1; b < max_bins; ++b) {
          const std::size_t k = column.size() * static_cast<std::size_t>(b) / static_cast<std::size_t>(max_bins);
          const double c = 0.5 * (column[k - 1] + column[k]);
          if (cuts.empty() || c > cuts.back()) cuts.push_back(c);
        }
      }
      for (std::size_t r = 0; r < rows_; ++r) {
        const auto pos = std::upper_bound(cuts.begin(), cuts.end(), x[r][f]) - cuts.begin();
        bins_[r * kPairFeatureDim + f] = static_cast<std::uint8_t>(pos);
      }
    }
  }

  std::uint8_t bin(std::size_t row, std::size_t feature) const { return bins_[row * kPairFeatureDim + feature]; }
  const std::vector<double>& cuts(std::size_t feature) const { return cuts_[feature]; }

 private:
  std::size_t rows_;
  std::vector<std::vector<double>> cuts_;
  std::vector<std::uint8_t> bins_;
};

struct GradPair {
  double g = 0.0;
  double h = 0.0;
};

inline double structure_score(double g, double h, double lambda) { return g * g / (h + lambda); }

class TreeBuilder {
 public:
  TreeBuilder(const BinnedMatrix& bins, const GbdtParams& params) : bins_(bins), params_(params) {}

  RegressionTree build(std::span<const GradPair> grads, std::vector<std::size_t> rows) {
    RegressionTree tree;
    tree.nodes.emplace_back();
    grow(tree, 0, std::move(rows), grads, 0);
    return tree;
  }

 private:
  void grow(RegressionTree& tree, std::size_t node, std::vector<std::size_t> rows,
            std::span<const GradPair> grads, int depth) {
    double g_sum = 0.0, h_sum = 0.0;
    for (std::size_t r : rows) g_sum += grads[r].g, h_sum += grads[r].h;
    const double lambda = params_.lambda_l2;
    tree.nodes[node].weight = -g_sum / (h_sum + lambda);
    if (depth >= params_.max_depth || rows.size() < 2) return;

    double best_gain = 0.0;
    int best_feature = -1;
    std::size_t best_bin = 0;
    const double parent = structure_score(g_sum, h_sum, lambda);
    std::vector<GradPair> hist;
    for (std::size_t f = 0; f < kPairFeatureDim; ++f) {
      const auto& cuts = bins_.cuts(f);
      if (cuts.empty()) continue;
      hist.assign(cuts.size() + 1, GradPair{});
      for (std::size_t r : rows) {
        GradPair& slot = hist[bins_.bin(r, f)];
        slot.g += grads[r].g;
        slot.h += grads[r].h;
      }
      double gl = 0.0, hl = 0.0;
      for (std::size_t b = 0; b < cuts.size(); ++b) {
        gl += hist[b].g;
        hl += hist[b].h;
        const double gr = g_sum - gl, hr = h_sum - hl;
        if (hl < params_.min_child_weight || hr < params_.min_child_weight) continue;
        const double gain = 0.5 * (structure_score(gl, hl, lambda) + structure_score(gr, hr, lambda) - parent) -
                            params_.gamma_split;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_bin = b;
        }
      }
    }
    if (best_feature < 0) return;

    std::vector<std::size_t> left_rows, right_rows;
    const auto f = static_cast<std::size_t>(best_feature);
    for (std::size_t r : rows) (bins_.bin(r, f) <= best_bin ? left_rows : right_rows).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    const auto left = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    tree.nodes[node].feature = best_feature;
    tree.nodes[node].threshold = bins_.cuts(f)[best_bin];
    tree.nodes[node].left = left;
    tree.nodes[node].right = left + 1;
    grow(tree, static_cast<std::size_t>(left), std::move(left_rows), grads, depth + 1);
    grow(tree, static_cast<std::size_t>(left + 1), std::move(right_rows), grads, depth + 1);
  }

  const BinnedMatrix& bins_;
  const GbdtParams& params_;
};

}  // namespace detail

// Rank-statistic AUC: P(score of a random positive > score of a random
// negative), ties counted one half.
inline double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ValidationError("auc_roc inputs differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positives = 0.0, negatives = 0.0, rank_sum = 0.0;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start + 1;
    while (end < order.size() && scores[order[end]] == scores[order[start]]) ++end;
    const double rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) {
      if (labels[order[k]] == 1) {
        positives += 1.0;
        rank_sum += rank;
      } else {
        negatives += 1.0;
      }
    }
    start = end;
  }
  if (positives == 0.0 || negatives == 0.0) throw ValidationError("auc_roc needs both classes");
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

struct GbdtFit {
  GbdtModel model;
  std::optional<double> best_validation_auc;
  int best_round = 0;  // number of trees kept
};

struct EarlyStopping {
  std::span<const PairFeatures> x;
  std::span<const int> y;
  int patience = 20;
};

// Trains up to params.n_trees rounds. With early stopping the model is cut
// back to the round with the best validation AUC (first such round on ties).
inline GbdtFit train_gbdt(std::span<const PairFeatures> x, std::span<const int> y, const GbdtParams& params,
                          const std::optional<EarlyStopping>& early = std::nullopt) {
  if (x.size() != y.size() || x.empty()) throw ValidationError("train_gbdt needs matching non-empty inputs");
  if (params.max_depth < 0 || params.n_trees < 0 || params.max_bins < 2 || params.max_bins > 255)
    throw ValidationError("invalid boosting parameters");

  GbdtFit fit;
  fit.model.params = params;
  const detail::BinnedMatrix bins(x, params.max_bins);
  detail::TreeBuilder builder(bins, params);

  const double m0 = fit.model.base_margin();
  std::vector<double> margins(x.size(), m0);
  std::vector<double> val_margins;
  if (early) val_margins.assign(early->x.size(), m0);
  std::vector<double> val_scores(val_margins.size());
  std::vector<detail::GradPair> grads(x.size());
  std::vector<std::size_t> all_rows(x.size());
  std::iota(all_rows.begin(), all_rows.end(), 0);

  // Round zero scores every row equally, i.e. AUC 0.5.
  std::fill(val_scores.begin(), val_scores.end(), m0);
  double best_auc = early ? auc_roc(val_scores, early->y) : 0.0;
  int since_best = 0;
  for (int round = 0; round < params.n_trees; ++round) {
    for (std::size_t r = 0; r < x.size(); ++r) {
      const double p = logistic(margins[r]);
      const double w = y[r] == 1 ? params.scale_pos_weight : 1.0;
      grads[r] = {w * (p - static_cast<double>(y[r])), w * p * (1.0 - p)};
    }
    RegressionTree tree = builder.build(grads, all_rows);
    for (std::size_t r = 0; r < x.size(); ++r) margins[r] += params.learning_rate * tree.evaluate(x[r]);
    fit.model.trees.push_back(std::move(tree));

    if (early) {
      const RegressionTree& last = fit.model.trees.back();
      for (std::size_t r = 0; r < val_margins.size(); ++r) {
        val_margins[r] += params.learning_rate * last.evaluate(early->x[r]);
        val_scores[r] = val_margins[r];
      }
      const double auc = auc_roc(val_scores, early->y);
      if (auc > best_auc) {
        best_auc = auc;
        fit.best_round = round + 1;
        since_best = 0;
      } else if (++since_best >= early->patience) {
        break;
      }
    }
  }
  if (early) {
    fit.model.trees.resize(static_cast<std::size_t>(fit.best_round));
    fit.best_validation_auc = best_auc;
  } else {
    fit.best_round = static_cast<int>(fit.model.trees.size());
  }
  fit.model.params.n_trees = static_cast<int>(fit.model.trees.size());
  return fit;
}

}  // namespace pspc::models
