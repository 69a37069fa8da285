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

// Evaluation protocol: reference-level k-fold splits, trial budgets,
// ablations of the two-model pipeline, and synthetic studies.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "pspc/aggregate.hpp"
#include "pspc/core.hpp"
#include "pspc/correlation.hpp"
#include "pspc/error.hpp"
#include "pspc/labeling.hpp"
#include "pspc/pipeline.hpp"
#include "pspc/random.hpp"

namespace pspc {

struct FoldSpec {
  int k = 0;
  std::map<std::string, int> fold_of;

  std::vector<std::string> test_refs(int fold) const {
    std::vector<std::string> out;
    for (const auto& [ref, f] : fold_of)
      if (f == fold) out.push_back(ref);
    return out;
  }

  std::vector<std::string> train_refs(int fold) const {
    std::vector<std::string> out;
    for (const auto& [ref, f] : fold_of)
      if (f != fold) out.push_back(ref);
    return out;
  }
};

// Seeded shuffle of the (sorted) reference list, dealt round-robin so fold
// sizes differ by at most one.
inline FoldSpec kfold_by_reference(std::vector<std::string> refs, int k, RngSeed seed) {
  if (k < 2) throw ValidationError("k-fold needs k >= 2");
  std::sort(refs.begin(), refs.end());
  if (std::adjacent_find(refs.begin(), refs.end()) != refs.end()) throw ValidationError("duplicate reference id");
  if (static_cast<std::size_t>(k) > refs.size())
    throw ValidationError("k = " + std::to_string(k) + " exceeds the number of references (" +
                          std::to_string(refs.size()) + ")");
  Rng rng(seed);
  rng.shuffle(refs.begin(), refs.end());
  FoldSpec spec;
  spec.k = k;
  for (std::size_t r = 0; r < refs.size(); ++r) spec.fold_of[refs[r]] = static_cast<int>(r % k);
  return spec;
}

struct TrialBudget {
  std::int64_t defer_trials = 0;
  double fraction = 0.0;
};

// Ground-truth trials spent on defer pairs, relative to a complete design
// with `subjects` trials per pair.
inline TrialBudget trial_budget(const SelectionPlan& plan, const CountMatrix& gt_counts, int subjects = 15) {
  if (subjects < 1) throw ValidationError("subjects must be positive");
  if (gt_counts.size() != static_cast<std::size_t>(plan.n)) throw ValidationError("plan and counts sizes differ");
  TrialBudget out;
  for (const PairId& pair : plan.defer_order)
    out.defer_trials += gt_counts.trials(static_cast<std::size_t>(pair.i), static_cast<std::size_t>(pair.j));
  const double max_trials = static_cast<double>(pair_count(static_cast<std::size_t>(plan.n))) * subjects;
  out.fraction = static_cast<double>(out.defer_trials) / max_trials;
  return out;
}

enum class AblationMode { kFull, kClassifierOnly, kPredictorOnly, kRandomClassifier };

inline std::string_view to_string(AblationMode m) {
  switch (m) {
    case AblationMode::kFull: return "full";
    case AblationMode::kClassifierOnly: return "classifier_only";
    case AblationMode::kPredictorOnly: return "predictor_only";
    case AblationMode::kRandomClassifier: return "random_classifier";
  }
  return "?";
}

inline AblationMode parse_ablation_mode(std::string_view s) {
  for (auto m : {AblationMode::kFull, AblationMode::kClassifierOnly, AblationMode::kPredictorOnly,
                 AblationMode::kRandomClassifier})
    if (to_string(m) == s) return m;
  throw ValidationError("unknown ablation mode '" + std::string(s) + "'");
}

inline const std::vector<double>& default_eta_sweep() {
  static const std::vector<double> etas = {0.97, 0.98, 0.985, 0.99, 0.995};
  return etas;
}

struct AblationConfig {
  AblationMode mode = AblationMode::kFull;
  double eta = 0.99;
  RngSeed seed{};
};

struct AblationOptions {
  std::vector<AblationMode> modes = {AblationMode::kFull};
  std::vector<double> etas = default_eta_sweep();
  int folds = 5;
  std::optional<int> fold_limit;  // evaluate only the first folds
  int random_repeats = 50;
  int subjects = 15;
  PipelineConfig pipeline;
  RngSeed seed{};
};

inline constexpr int kAllFolds = -1;

struct AblationRow {
  AblationMode mode = AblationMode::kFull;
  std::optional<double> eta;  // empty for predictor_only
  int fold = kAllFolds;
  double plcc = std::numeric_limits<double>::quiet_NaN();
  double srocc = std::numeric_limits<double>::quiet_NaN();
  double defer_fraction = 0.0;
  std::int64_t defer_trials = 0;
  RngSeed seed{};
};

struct ReferenceMetrics {
  Correlation plcc;
  Correlation srocc;
  double defer_fraction = 0.0;
  std::int64_t defer_trials = 0;
};

namespace detail {

inline ReferenceMetrics score_plan(const SelectionPlan& plan, const ReferenceData& ref,
                                   const std::vector<double>& gt_scores, int subjects) {
  ReferenceMetrics m;
  const ScoreEstimate est = fit_bt(merge_with_ground_truth(plan, ref.pcm), FitOptions{1e-8, 1000, {}, false});
  m.plcc = plcc(gt_scores, est.s_hat);
  m.srocc = srocc(gt_scores, est.s_hat);
  m.defer_fraction = plan.defer_fraction();
  if (ref.counts) m.defer_trials = trial_budget(plan, *ref.counts, subjects).defer_trials;
  return m;
}

inline SelectionPlan with_constant_predictions(SelectionPlan plan, double value) {
  for (auto& [pair, d] : plan.decisions)
    if (d.kind == Label::kPredict) d.p = value;
  return plan;
}

inline SelectionPlan all_predict_plan(const models::PredictorModel& predictor, const FeatureTable& scaled,
                                      const std::string& ref, int n) {
  SelectionPlan plan;
  plan.reference_id = ref;
  plan.n = n;
  for (const PairId& pair : all_pairs(ref, n))
    plan.decisions.emplace(
        pair, PairDecision{Label::kPredict, 0.0, models::predict_features(predictor, pair_features(scaled, pair))});
  return plan;
}

// `defer_count` pairs drawn uniformly at random become defer.
inline SelectionPlan random_plan(const SelectionPlan& predictions, std::size_t defer_count, Rng& rng) {
  SelectionPlan plan = predictions;
  std::vector<PairId> pairs;
  for (const auto& [pair, d] : plan.decisions) pairs.push_back(pair);
  rng.shuffle(pairs.begin(), pairs.end());
  for (std::size_t k = 0; k < defer_count && k < pairs.size(); ++k) plan.decisions[pairs[k]] = PairDecision{};
  order_defer_pairs(plan);
  return plan;
}

struct MetricAccumulator {
  double plcc_sum = 0.0, srocc_sum = 0.0, defer_sum = 0.0;
  int plcc_n = 0, srocc_n = 0, refs = 0;
  std::int64_t trials = 0;

  void add(const ReferenceMetrics& m) {
    if (m.plcc) plcc_sum += *m.plcc, ++plcc_n;
    if (m.srocc) srocc_sum += *m.srocc, ++srocc_n;
    defer_sum += m.defer_fraction;
    trials += m.defer_trials;
    ++refs;
  }

  AblationRow row(AblationMode mode, std::optional<double> eta, int fold, RngSeed seed) const {
    AblationRow r{mode, eta, fold};
    if (plcc_n > 0) r.plcc = plcc_sum / plcc_n;
    if (srocc_n > 0) r.srocc = srocc_sum / srocc_n;
    r.defer_fraction = refs > 0 ? defer_sum / refs : 0.0;
    r.defer_trials = trials;
    r.seed = seed;
    return r;
  }
};

// Random-classifier metrics: means over seeded draws of a defer set with the
// full plan's defer count.
inline ReferenceMetrics random_classifier_metrics(const SelectionPlan& full, const SelectionPlan& predictions,
                                                  const ReferenceData& ref, const std::vector<double>& gt_scores,
                                                  int repeats, int subjects, RngSeed seed) {
  MetricAccumulator acc;
  for (int r = 0; r < repeats; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    acc.add(score_plan(random_plan(predictions, full.defer_count(), rng), ref, gt_scores, subjects));
  }
  ReferenceMetrics m;
  if (acc.plcc_n > 0) m.plcc = acc.plcc_sum / acc.plcc_n;
  if (acc.srocc_n > 0) m.srocc = acc.srocc_sum / acc.srocc_n;
  m.defer_fraction = full.defer_fraction();
  m.defer_trials = acc.refs > 0 ? acc.trials / acc.refs : 0;
  return m;
}

}  // namespace detail

// Cross-validated ablation. Metrics compare scores of the merged matrix
// (ground-truth probabilities on defer pairs, model output elsewhere) with
// scores of the full ground-truth matrix, per test reference. Rows are per
// fold plus one aggregate row (fold = kAllFolds) per mode and eta.
inline std::vector<AblationRow> run_ablation(const Dataset& dataset, const AblationOptions& opt) {
  if (opt.modes.empty()) throw ValidationError("no ablation modes requested");
  if (opt.random_repeats < 1) throw ValidationError("random_repeats must be positive");
  for (double eta : opt.etas)
    if (!(eta >= kMinEta && eta <= 1.0)) throw ValidationError("eta must lie in [0.97, 1]");

  const FoldSpec folds = kfold_by_reference(dataset.reference_ids(), opt.folds, derive_seed(opt.seed, 1));
  const int fold_count = opt.fold_limit ? std::clamp(*opt.fold_limit, 1, folds.k) : folds.k;
  const auto has = [&](AblationMode m) { return std::find(opt.modes.begin(), opt.modes.end(), m) != opt.modes.end(); };
  const bool needs_classifier =
      has(AblationMode::kFull) || has(AblationMode::kClassifierOnly) || has(AblationMode::kRandomClassifier);

  struct CellKey {
    AblationMode mode;
    std::optional<double> eta;
    auto operator<=>(const CellKey&) const = default;
  };
  std::map<CellKey, detail::MetricAccumulator> overall;
  std::vector<AblationRow> rows;

  std::map<std::string, std::vector<double>> gt_scores;
  for (const auto& ref : dataset.references)
    gt_scores[ref.reference_id] = fit_bt(ref.pcm, FitOptions{1e-8, 1000, {}, false}).s_hat;

  for (int fold = 0; fold < fold_count; ++fold) {
    const Dataset train = dataset.subset(folds.train_refs(fold));
    const std::vector<std::string> test = folds.test_refs(fold);
    PipelineConfig cfg = opt.pipeline;
    cfg.seed = derive_seed(opt.seed, 1000 + static_cast<std::uint64_t>(fold));
    const PredictorStage stage = train_predictor_stage(train, cfg);
    const FeatureTable test_scaled = apply_normalizer(dataset.features.subset(test), stage.normalizer);

    std::map<CellKey, detail::MetricAccumulator> cells;
    if (has(AblationMode::kPredictorOnly)) {
      for (const auto& id : test) {
        const ReferenceData& ref = dataset.reference(id);
        const auto m = detail::score_plan(detail::all_predict_plan(stage.predictor, test_scaled, id, ref.n()), ref,
                                          gt_scores[id], opt.subjects);
        cells[{AblationMode::kPredictorOnly, std::nullopt}].add(m);
      }
    }
    if (needs_classifier) {
      for (double eta : opt.etas) {
        cfg.eta = eta;
        const TrainedPSPC model = train_classifier_stage(train, stage, cfg);
        for (const auto& id : test) {
          const ReferenceData& ref = dataset.reference(id);
          const SelectionPlan plan = select_pairs(model, test_scaled, id, ref.n());
          if (has(AblationMode::kFull))
            cells[{AblationMode::kFull, eta}].add(detail::score_plan(plan, ref, gt_scores[id], opt.subjects));
          if (has(AblationMode::kClassifierOnly))
            cells[{AblationMode::kClassifierOnly, eta}].add(
                detail::score_plan(detail::with_constant_predictions(plan, 0.5), ref, gt_scores[id], opt.subjects));
          if (has(AblationMode::kRandomClassifier)) {
            const SelectionPlan predictions = detail::all_predict_plan(stage.predictor, test_scaled, id, ref.n());
            cells[{AblationMode::kRandomClassifier, eta}].add(detail::random_classifier_metrics(
                plan, predictions, ref, gt_scores[id], opt.random_repeats, opt.subjects,
                derive_seed(cfg.seed, hash_string(id))));
          }
        }
      }
    }

    for (const auto& [key, acc] : cells) {
      rows.push_back(acc.row(key.mode, key.eta, fold, opt.seed));
      auto& total = overall[key];
      total.plcc_sum += acc.plcc_sum;
      total.plcc_n += acc.plcc_n;
      total.srocc_sum += acc.srocc_sum;
      total.srocc_n += acc.srocc_n;
      total.defer_sum += acc.defer_sum;
      total.refs += acc.refs;
      total.trials += acc.trials;
    }
  }
  for (const auto& [key, acc] : overall) rows.push_back(acc.row(key.mode, key.eta, kAllFolds, opt.seed));
  return rows;
}

struct SyntheticStudy {
  Dataset dataset;
  std::map<std::string, std::vector<double>> true_scores;
};

namespace detail {

// Seven strictly increasing maps standing in for the quality metrics.
inline double synthetic_metric(std::size_t k, double q) {
  switch (k) {
    case 0: return q;
    case 1: return std::tanh(0.5 * q);
    case 2: return q * q * q / 9.0 + q;
    case 3: return std::exp(0.5 * q);
    case 4: return logistic(q);
    case 5: return std::atan(q);
    default: return std::log1p(std::exp(q));
  }
}

}  // namespace detail

// True scores ~ U(-3, 3) per stimulus; counts simulated from them; metric k
// of a stimulus is map_k(score + noise_level * e_k) where e_k ~ N(0, 1) has
// correlation 0.64 across metrics (a shared per-stimulus term plus a
// per-metric term), as real metrics make correlated errors. Feature values are
// min-max scaled over the whole study.
inline SyntheticStudy make_synthetic_study(int n_refs, int n_stimuli, double noise_level, RngSeed seed,
                                           int trials_per_pair = 15) {
  if (n_refs < 1) throw ValidationError("need at least one reference");
  if (n_stimuli < 4) throw ValidationError("synthetic references need at least 4 stimuli");
  if (!(noise_level >= 0.0)) throw ValidationError("noise_level must be non-negative");
  SyntheticStudy study;
  FeatureTable raw;
  for (int r = 0; r < n_refs; ++r) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "ref%02d", r);
    const std::string id = buf;
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    std::vector<double> scores(static_cast<std::size_t>(n_stimuli));
    for (double& s : scores) s = rng.uniform(-3.0, 3.0);
    for (int i = 0; i < n_stimuli; ++i) {
      FeatureVector row{};
      const double shared = rng.normal();
      for (std::size_t k = 0; k < kNumMetrics; ++k) {
        const double e = 0.8 * shared + 0.6 * rng.normal();
        row[k] = detail::synthetic_metric(k, scores[static_cast<std::size_t>(i)] + noise_level * e);
      }
      raw.rows[{id, i}] = row;
    }
    CountMatrix counts = simulate_counts(scores, trials_per_pair, derive_seed(seed, 500 + static_cast<std::uint64_t>(r)));
    study.dataset.references.push_back({id, build_pcm(counts), std::move(counts)});
    study.true_scores[id] = std::move(scores);
  }
  study.dataset.features = normalize_features(raw);
  study.dataset.features.normalizer.reset();
  return study;
}

}  // namespace pspc
