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

// The two learned components: a defer/predict classifier (boosted trees) and
// a preference-probability predictor (RBF kernel ridge), with oversampling,
// grid search and the selection metrics used to pick hyperparameters.
//
// Both models see 14-dimensional pair vectors [f(i), f(j)] of normalized
// metric values and are trained on both pair orders, so that their outputs
// can be symmetrized exactly at inference time.

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pspc/core.hpp"
#include "pspc/error.hpp"
#include "pspc/labeling.hpp"
#include "pspc/models/gbdt.hpp"
#include "pspc/models/kernel_ridge.hpp"
#include "pspc/parallel.hpp"
#include "pspc/random.hpp"

namespace pspc::models {

using HyperPoint = std::map<std::string, double>;

enum class SelectionMetric { kAuc, kF1, kMse };

struct HyperGrid {
  std::vector<std::pair<std::string, std::vector<double>>> axes;
  SelectionMetric metric = SelectionMetric::kAuc;

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& [name, values] : axes) n *= values.size();
    return n;
  }

  void validate() const {
    if (axes.empty()) throw ValidationError("hyperparameter grid has no axes");
    for (const auto& [name, values] : axes)
      if (values.empty()) throw ValidationError("hyperparameter '" + name + "' has no candidate values");
  }

  // Axes sorted by name, values ascending without duplicates. Enumeration
  // order and tie-breaking are defined on this form.
  HyperGrid canonical() const {
    HyperGrid out = *this;
    std::sort(out.axes.begin(), out.axes.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [name, values] : out.axes) {
      std::sort(values.begin(), values.end());
      values.erase(std::unique(values.begin(), values.end()), values.end());
    }
    return out;
  }

  // Cartesian product of the canonical grid, last axis fastest.
  std::vector<HyperPoint> points() const {
    validate();
    const HyperGrid c = canonical();
    std::vector<HyperPoint> out(1);
    for (const auto& [name, values] : c.axes) {
      std::vector<HyperPoint> next;
      next.reserve(out.size() * values.size());
      for (const auto& p : out)
        for (double v : values) {
          HyperPoint q = p;
          q[name] = v;
          next.push_back(std::move(q));
        }
      out = std::move(next);
    }
    return out;
  }
};

// max_depth {1,2,3,4} x learning_rate {0.05,0.075,0.1} x gamma {0.01,0.1,0.5,1}
// x lambda {1,5,10}: 144 points.
inline HyperGrid default_classifier_grid() {
  return {{{"max_depth", {1, 2, 3, 4}},
           {"learning_rate", {0.05, 0.075, 0.1}},
           {"gamma_split", {0.01, 0.1, 0.5, 1}},
           {"lambda_l2", {1, 5, 10}}},
          SelectionMetric::kAuc};
}

inline HyperGrid default_predictor_grid() {
  return {{{"gamma_rbf", {0.1, 0.5, 1, 2}}, {"lambda_ridge", {1e-3, 1e-2, 1e-1}}}, SelectionMetric::kMse};
}

inline double grid_value(const HyperPoint& p, const std::string& name) {
  const auto it = p.find(name);
  if (it == p.end()) throw ValidationError("hyperparameter grid is missing '" + name + "'");
  return it->second;
}

struct LabeledExample {
  PairFeatures x{};
  Label label = Label::kDefer;
};

struct RegressionExample {
  PairFeatures x{};
  double target = 0.5;
};

struct ClassCounts {
  std::size_t defer = 0;
  std::size_t predict = 0;
  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

inline ClassCounts count_classes(const std::vector<LabeledExample>& data) {
  ClassCounts c;
  for (const auto& e : data) (e.label == Label::kDefer ? c.defer : c.predict)++;
  return c;
}

// Random oversampling: minority examples are drawn uniformly with
// replacement and appended until both classes have the same count. The
// original examples keep their order at the front.
inline std::vector<LabeledExample> oversample(const std::vector<LabeledExample>& data, RngSeed seed) {
  const ClassCounts counts = count_classes(data);
  if (counts.defer == 0 || counts.predict == 0) throw ValidationError("degenerate training set");
  const Label minority = counts.defer < counts.predict ? Label::kDefer : Label::kPredict;
  const std::size_t deficit = counts.defer > counts.predict ? counts.defer - counts.predict
                                                             : counts.predict - counts.defer;
  std::vector<std::size_t> pool;
  for (std::size_t k = 0; k < data.size(); ++k)
    if (data[k].label == minority) pool.push_back(k);

  std::vector<LabeledExample> out = data;
  Rng rng(seed);
  for (std::size_t d = 0; d < deficit; ++d) out.push_back(data[pool[rng.below(pool.size())]]);
  return out;
}

enum class PosWeightMode { kLiteral, kInverted, kUnit };

inline std::string_view to_string(PosWeightMode m) {
  switch (m) {
    case PosWeightMode::kLiteral: return "literal";
    case PosWeightMode::kInverted: return "inverted";
    case PosWeightMode::kUnit: return "unit";
  }
  return "?";
}

inline PosWeightMode parse_pos_weight_mode(std::string_view s) {
  for (auto m : {PosWeightMode::kLiteral, PosWeightMode::kInverted, PosWeightMode::kUnit})
    if (to_string(m) == s) return m;
  throw ValidationError("unknown scale_pos_weight mode '" + std::string(s) + "'");
}

// Positive-class weight defer/predict as printed in the training recipe;
// kInverted gives predict/defer and kUnit gives 1.
inline double scale_pos_weight(std::size_t defer_count, std::size_t predict_count,
                               PosWeightMode mode = PosWeightMode::kLiteral) {
  if (mode == PosWeightMode::kUnit) return 1.0;
  if (predict_count == 0) throw ValidationError("scale_pos_weight: no predict examples");
  if (mode == PosWeightMode::kInverted) {
    if (defer_count == 0) throw ValidationError("scale_pos_weight: no defer examples");
    return static_cast<double>(predict_count) / static_cast<double>(defer_count);
  }
  return static_cast<double>(defer_count) / static_cast<double>(predict_count);
}

inline double f1_score(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  if (tp + fp <= 0 || tp + fn <= 0) throw ValidationError("f1_score: precision or recall undefined");
  if (tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

struct GridScore {
  HyperPoint point;
  double score = 0.0;
  double mean_rounds = 0.0;  // classifier only
};

struct TrainReport {
  HyperPoint chosen;
  std::vector<GridScore> grid_scores;
  ClassCounts before_oversampling;
  ClassCounts after_oversampling;
  std::optional<double> internal_auc;
  std::optional<double> internal_f1;
  std::optional<double> internal_mse;
  double scale_pos_weight = 1.0;
};

struct ClassifierModel {
  GbdtModel booster;
  std::optional<Normalizer> normalizer;
  HyperPoint hyperparameters;
  RngSeed training_seed{};

  friend bool operator==(const ClassifierModel&, const ClassifierModel&) = default;
};

struct PredictorModel {
  KernelRidge kernel;
  std::optional<Normalizer> normalizer;
  HyperPoint hyperparameters;
  RngSeed training_seed{};

  friend bool operator==(const PredictorModel&, const PredictorModel&) = default;
};

struct ClassifierOptions {
  bool oversample = true;
  PosWeightMode pos_weight = PosWeightMode::kLiteral;
  int folds = 3;
  int max_trees = 200;
  int patience = 20;
};

struct PredictorOptions {
  int folds = 3;
};

namespace detail {

// Symmetric defer probability: mean over both pair orders.
inline double symmetric_score(const GbdtModel& model, const PairFeatures& x) {
  return 0.5 * (model.predict_proba(x) + model.predict_proba(swap_halves(x)));
}

inline void append_both_orders(const LabeledExample& e, std::vector<PairFeatures>& x, std::vector<int>& y) {
  const int label = e.label == Label::kDefer ? 1 : 0;
  x.push_back(e.x);
  y.push_back(label);
  x.push_back(swap_halves(e.x));
  y.push_back(label);
}

// Fold index per example; each class is shuffled and dealt round-robin.
inline std::vector<int> stratified_folds(const std::vector<LabeledExample>& data, int folds, RngSeed seed) {
  std::vector<int> fold(data.size(), 0);
  Rng rng(seed);
  int offset = 0;
  for (Label cls : {Label::kDefer, Label::kPredict}) {
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < data.size(); ++k)
      if (data[k].label == cls) idx.push_back(k);
    rng.shuffle(idx.begin(), idx.end());
    for (std::size_t k = 0; k < idx.size(); ++k)
      fold[idx[k]] = static_cast<int>((k + static_cast<std::size_t>(offset)) % static_cast<std::size_t>(folds));
    offset += static_cast<int>(idx.size() % static_cast<std::size_t>(folds));
  }
  return fold;
}

inline GbdtParams gbdt_params(const HyperPoint& p, double spw, int n_trees) {
  GbdtParams params;
  params.max_depth = static_cast<int>(grid_value(p, "max_depth"));
  params.learning_rate = grid_value(p, "learning_rate");
  params.gamma_split = grid_value(p, "gamma_split");
  params.lambda_l2 = grid_value(p, "lambda_l2");
  params.scale_pos_weight = spw;
  params.n_trees = n_trees;
  return params;
}

// Picks the best score; the first point in canonical order wins ties.
inline std::size_t select_best(const std::vector<GridScore>& scores, bool maximize) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k) {
    const bool better = maximize ? scores[k].score > scores[best].score : scores[k].score < scores[best].score;
    if (better) best = k;
  }
  return best;
}

}  // namespace detail

// Boosted-tree classifier; defer is the positive class. Hyperparameters are
// chosen by stratified k-fold cross-validation on the oversampled data, each
// fold trained with early stopping on its validation AUC.
inline std::pair<ClassifierModel, TrainReport> train_classifier(const std::vector<LabeledExample>& data,
                                                                const HyperGrid& grid, RngSeed seed,
                                                                const ClassifierOptions& opt = {}) {
  TrainReport report;
  report.before_oversampling = count_classes(data);
  if (report.before_oversampling.defer < 2 || report.before_oversampling.predict < 2)
    throw ValidationError("degenerate training set: need at least 2 examples of each class (defer=" +
                          std::to_string(report.before_oversampling.defer) +
                          ", predict=" + std::to_string(report.before_oversampling.predict) + ")");
  if (opt.folds < 2) throw ValidationError("classifier cross-validation needs at least 2 folds");
  report.scale_pos_weight = scale_pos_weight(report.before_oversampling.defer,
                                             report.before_oversampling.predict, opt.pos_weight);

  const std::vector<LabeledExample> train =
      opt.oversample ? oversample(data, derive_seed(seed, 1)) : data;
  report.after_oversampling = count_classes(train);
  const std::vector<int> fold = detail::stratified_folds(train, opt.folds, derive_seed(seed, 2));

  struct FoldData {
    std::vector<PairFeatures> x_train, x_val;
    std::vector<int> y_train, y_val;
    std::vector<const LabeledExample*> val_examples;
  };
  std::vector<FoldData> folds(static_cast<std::size_t>(opt.folds));
  for (std::size_t k = 0; k < train.size(); ++k) {
    for (int f = 0; f < opt.folds; ++f) {
      FoldData& fd = folds[static_cast<std::size_t>(f)];
      if (fold[k] == f) {
        detail::append_both_orders(train[k], fd.x_val, fd.y_val);
        fd.val_examples.push_back(&train[k]);
      } else {
        detail::append_both_orders(train[k], fd.x_train, fd.y_train);
      }
    }
  }
  for (const auto& fd : folds) {
    const bool has_pos = std::find(fd.y_val.begin(), fd.y_val.end(), 1) != fd.y_val.end();
    const bool has_neg = std::find(fd.y_val.begin(), fd.y_val.end(), 0) != fd.y_val.end();
    if (!has_pos || !has_neg) throw ValidationError("degenerate training set: a validation fold lacks a class");
  }

  const std::vector<HyperPoint> points = grid.points();
  struct PointResult {
    double auc = 0.0, f1 = 0.0, rounds = 0.0;
  };
  std::vector<PointResult> results(points.size());
  parallel_for(points.size(), [&](std::size_t p) {
    const GbdtParams params = detail::gbdt_params(points[p], report.scale_pos_weight, opt.max_trees);
    PointResult acc;
    for (const FoldData& fd : folds) {
      const GbdtFit fit = train_gbdt(fd.x_train, fd.y_train, params, EarlyStopping{fd.x_val, fd.y_val, opt.patience});
      acc.auc += *fit.best_validation_auc;
      acc.rounds += fit.best_round;
      std::int64_t tp = 0, fp = 0, fn = 0;
      for (const LabeledExample* e : fd.val_examples) {
        const bool predicted_defer = detail::symmetric_score(fit.model, e->x) >= 0.5;
        const bool is_defer = e->label == Label::kDefer;
        tp += predicted_defer && is_defer;
        fp += predicted_defer && !is_defer;
        fn += !predicted_defer && is_defer;
      }
      acc.f1 += tp + fp > 0 ? f1_score(tp, fp, fn) : 0.0;
    }
    const double k = static_cast<double>(folds.size());
    results[p] = {acc.auc / k, acc.f1 / k, acc.rounds / k};
  });

  for (std::size_t p = 0; p < points.size(); ++p)
    report.grid_scores.push_back(
        {points[p], grid.metric == SelectionMetric::kF1 ? results[p].f1 : results[p].auc, results[p].rounds});
  const std::size_t best = detail::select_best(report.grid_scores, true);
  report.chosen = points[best];
  report.internal_auc = results[best].auc;
  report.internal_f1 = results[best].f1;

  std::vector<PairFeatures> x_all;
  std::vector<int> y_all;
  for (const auto& e : train) detail::append_both_orders(e, x_all, y_all);
  const int n_trees = std::max(1, static_cast<int>(std::lround(results[best].rounds)));
  ClassifierModel model;
  model.booster = train_gbdt(x_all, y_all, detail::gbdt_params(report.chosen, report.scale_pos_weight, n_trees)).model;
  model.hyperparameters = report.chosen;
  model.hyperparameters["n_trees"] = n_trees;
  model.hyperparameters["scale_pos_weight"] = report.scale_pos_weight;
  model.training_seed = seed;
  return {std::move(model), std::move(report)};
}

struct ClassifierDecision {
  Label label = Label::kDefer;
  double score = 0.5;  // defer probability, symmetric in pair order
};

inline ClassifierDecision classify_features(const ClassifierModel& model, const PairFeatures& x) {
  const double score = detail::symmetric_score(model.booster, x);
  return {score >= 0.5 ? Label::kDefer : Label::kPredict, score};
}

// Returns the table in the model's normalized space: raw tables are scaled
// with the model's normalizer, tables already scaled by it pass through.
inline FeatureTable model_space(const FeatureTable& f, const std::optional<Normalizer>& norm) {
  if (!norm) return f;
  if (!f.normalizer) return apply_normalizer(f, *norm);
  if (*f.normalizer == *norm) return f;
  throw ValidationError("feature table was scaled with a different normalizer than the model");
}

inline ClassifierDecision classify_pair(const ClassifierModel& model, const FeatureTable& f, const PairId& pair) {
  const FeatureTable scaled = model_space(f.subset({pair.reference_id}), model.normalizer);
  return classify_features(model, pair_features(scaled, pair));
}

namespace detail {

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Averages the two orders in a fixed orientation (first half
// lexicographically smaller) and reports the other orientation as 1 - p, so
// p(x) + p(swap(x)) == 1 holds exactly in floating point.
inline double symmetric_preference(const KernelRidge& k, const PairFeatures& x) {
  const PairFeatures swapped = swap_halves(x);
  if (x == swapped) return 0.5;
  const bool canonical = std::lexicographical_compare(x.begin(), x.end(), swapped.begin(), swapped.end());
  const PairFeatures& oriented = canonical ? x : swapped;
  const PairFeatures& reversed = canonical ? swapped : x;
  const double forward = clamp01(k.evaluate(oriented));
  const double backward = clamp01(k.evaluate(reversed));
  const double p = clamp01(0.5 * (forward + 1.0 - backward));
  return canonical ? p : 1.0 - p;
}

}  // namespace detail

// RBF kernel ridge regression of P(i preferred over j). Each example is used
// in both orders with targets p and 1 - p; (gamma_rbf, lambda_ridge) minimize
// the k-fold mean squared error of the symmetrized prediction.
inline std::pair<PredictorModel, TrainReport> train_predictor(const std::vector<RegressionExample>& data,
                                                              const HyperGrid& grid, RngSeed seed,
                                                              const PredictorOptions& opt = {}) {
  if (data.size() < 5) throw ValidationError("train_predictor needs at least 5 examples");
  if (opt.folds < 2 || static_cast<std::size_t>(opt.folds) > data.size())
    throw ValidationError("invalid fold count for predictor training");
  for (const auto& e : data)
    if (!(e.target >= 0.0 && e.target <= 1.0)) throw ValidationError("predictor target outside [0, 1]");

  std::vector<PairFeatures> x;
  std::vector<double> y;
  for (const auto& e : data) {
    x.push_back(e.x);
    y.push_back(e.target);
    x.push_back(swap_halves(e.x));
    y.push_back(1.0 - e.target);
  }

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 3));
  rng.shuffle(order.begin(), order.end());
  std::vector<int> fold(data.size());
  for (std::size_t k = 0; k < order.size(); ++k) fold[order[k]] = static_cast<int>(k % static_cast<std::size_t>(opt.folds));

  const std::vector<HyperPoint> points = grid.points();
  TrainReport report;
  report.grid_scores.resize(points.size());

  // Gram matrices depend only on gamma; compute each once.
  std::map<double, Eigen::MatrixXd> grams;
  for (const auto& p : points) grams.try_emplace(grid_value(p, "gamma_rbf"));
  for (auto& [gamma, gram] : grams) gram = rbf_gram(x, gamma);

  parallel_for(points.size(), [&](std::size_t p) {
    const double gamma = grid_value(points[p], "gamma_rbf");
    const double lambda = grid_value(points[p], "lambda_ridge");
    const Eigen::MatrixXd& gram = grams.at(gamma);
    double sse = 0.0;
    std::size_t count = 0;
    bool singular = false;
    for (int f = 0; f < opt.folds && !singular; ++f) {
      std::vector<Eigen::Index> tr, va;
      for (std::size_t e = 0; e < data.size(); ++e) {
        auto& dst = fold[e] == f ? va : tr;
        dst.push_back(static_cast<Eigen::Index>(2 * e));
        dst.push_back(static_cast<Eigen::Index>(2 * e + 1));
      }
      const auto ntr = static_cast<Eigen::Index>(tr.size());
      Eigen::MatrixXd system(ntr, ntr);
      Eigen::VectorXd rhs(ntr);
      for (Eigen::Index a = 0; a < ntr; ++a) {
        for (Eigen::Index b = 0; b < ntr; ++b) system(a, b) = gram(tr[a], tr[b]);
        system(a, a) += lambda;
        rhs[a] = y[static_cast<std::size_t>(tr[a])] - 0.5;
      }
      Eigen::LLT<Eigen::MatrixXd> llt(system);
      if (llt.info() != Eigen::Success) {
        singular = true;
        break;
      }
      const Eigen::VectorXd alpha = llt.solve(rhs);
      // Validation rows come in (forward, backward) pairs.
      for (std::size_t v = 0; v < va.size(); v += 2) {
        double fwd = 0.5, bwd = 0.5;
        for (Eigen::Index a = 0; a < ntr; ++a) {
          fwd += alpha[a] * gram(va[v], tr[a]);
          bwd += alpha[a] * gram(va[v + 1], tr[a]);
        }
        const double pred = detail::clamp01(0.5 * (detail::clamp01(fwd) + 1.0 - detail::clamp01(bwd)));
        const double err = pred - y[static_cast<std::size_t>(va[v])];
        sse += err * err;
        ++count;
      }
    }
    report.grid_scores[p] = {points[p], singular ? std::numeric_limits<double>::infinity()
                                                 : sse / static_cast<double>(count), 0.0};
  });

  const std::size_t best = detail::select_best(report.grid_scores, false);
  if (!std::isfinite(report.grid_scores[best].score))
    throw ValidationError("singular kernel system after regularization");
  report.chosen = points[best];
  report.internal_mse = report.grid_scores[best].score;

  PredictorModel model;
  model.kernel = fit_kernel_ridge(x, y, grid_value(report.chosen, "gamma_rbf"),
                                  grid_value(report.chosen, "lambda_ridge"));
  model.hyperparameters = report.chosen;
  model.training_seed = seed;
  return {std::move(model), std::move(report)};
}

// Symmetrized preference for already-normalized pair features.
inline double predict_features(const PredictorModel& model, const PairFeatures& x) {
  return detail::symmetric_preference(model.kernel, x);
}

// p = (p_raw(i,j) + 1 - p_raw(j,i)) / 2 with both raw outputs clamped to
// [0, 1]; p(i,j) + p(j,i) = 1 whenever the raw outputs are interior.
inline double predict_preference(const PredictorModel& model, const FeatureTable& f, const PairId& pair) {
  const FeatureTable scaled = model_space(f.subset({pair.reference_id}), model.normalizer);
  return predict_features(model, pair_features(scaled, pair));
}

// P(first preferred over second) for an explicitly ordered pair.
inline double predict_preference(const PredictorModel& model, const FeatureTable& f, const StimulusId& first,
                                 const StimulusId& second) {
  const PairId pair(first.reference_id, first.index, second.index);
  const double p = predict_preference(model, f, pair);
  return first.index == pair.i ? p : 1.0 - p;
}

}  // namespace pspc::models
