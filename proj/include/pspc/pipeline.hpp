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

// End-to-end predictive sampling: training (predictor, labeling, classifier),
// a-priori selection of defer/predict pairs for a new study, and scoring of
// the merged human + predicted comparison matrix.

#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pspc/aggregate.hpp"
#include "pspc/core.hpp"
#include "pspc/error.hpp"
#include "pspc/labeling.hpp"
#include "pspc/models/training.hpp"
#include "pspc/parallel.hpp"

namespace pspc {

// One reference (source content) of a study with its ground truth.
struct ReferenceData {
  std::string reference_id;
  PreferenceMatrix pcm;
  std::optional<CountMatrix> counts;

  int n() const { return static_cast<int>(pcm.size()); }
};

struct Dataset {
  std::vector<ReferenceData> references;
  FeatureTable features;  // raw metric values

  std::vector<std::string> reference_ids() const {
    std::vector<std::string> out;
    for (const auto& r : references) out.push_back(r.reference_id);
    return out;
  }

  const ReferenceData& reference(const std::string& id) const {
    for (const auto& r : references)
      if (r.reference_id == id) return r;
    throw ValidationError("unknown reference '" + id + "'");
  }

  Dataset subset(const std::vector<std::string>& ids) const {
    Dataset out;
    for (const auto& id : ids) out.references.push_back(reference(id));
    out.features = features.subset(ids);
    return out;
  }
};

struct PipelineConfig {
  double eta = 0.99;
  LabelingMethod method = LabelingMethod::kKld;
  models::HyperGrid classifier_grid = models::default_classifier_grid();
  models::HyperGrid predictor_grid = models::default_predictor_grid();
  models::ClassifierOptions classifier;
  models::PredictorOptions predictor;
  // Label each reference with predictions from a predictor refit without
  // that reference, so labels reflect error on unseen content.
  bool cross_fitted_labeling = true;
  RngSeed seed{};
};

struct Provenance {
  std::vector<std::string> reference_ids;
  RngSeed seed{};
  LabelingMethod method = LabelingMethod::kKld;
};

struct TrainedPSPC {
  models::ClassifierModel classifier;
  models::PredictorModel predictor;
  Normalizer normalizer;
  double eta = 0.99;
  Provenance provenance;
  std::vector<LabelingResult> labeling;
  models::TrainReport classifier_report;
  models::TrainReport predictor_report;
};

// Predictor stage of training; independent of eta, so it can be shared
// across an eta sweep.
struct PredictorStage {
  Normalizer normalizer;
  FeatureTable scaled;
  models::PredictorModel predictor;
  models::TrainReport report;
  // Per-reference removal predictions used by labeling.
  std::map<std::string, PredictionFill> labeling_predictions;
};

namespace detail {

inline void require_complete(const Dataset& data) {
  if (data.references.empty()) throw ValidationError("training needs at least one reference");
  for (const auto& ref : data.references) {
    if (!ref.pcm.complete())
      throw ValidationError("reference '" + ref.reference_id + "' has an incomplete comparison matrix");
    for (int i = 0; i < ref.n(); ++i) (void)data.features.at({ref.reference_id, i});
  }
}

inline std::vector<models::RegressionExample> regression_examples(const Dataset& data, const FeatureTable& scaled,
                                                                  const std::string& exclude = {}) {
  std::vector<models::RegressionExample> out;
  for (const auto& ref : data.references) {
    if (ref.reference_id == exclude) continue;
    for (const PairId& pair : all_pairs(ref.reference_id, ref.n()))
      out.push_back({pair_features(scaled, pair),
                     ref.pcm(static_cast<std::size_t>(pair.i), static_cast<std::size_t>(pair.j))});
  }
  return out;
}

inline PredictionFill predictions_for(const models::PredictorModel& model, const FeatureTable& scaled,
                                      const ReferenceData& ref) {
  PredictionFill fill;
  for (const PairId& pair : all_pairs(ref.reference_id, ref.n()))
    fill.predictions[pair] = models::predict_features(model, pair_features(scaled, pair));
  return fill;
}

}  // namespace detail

inline PredictorStage train_predictor_stage(const Dataset& train, const PipelineConfig& cfg) {
  detail::require_complete(train);
  PredictorStage stage;
  stage.normalizer = fit_normalizer(train.features);
  stage.scaled = apply_normalizer(train.features, stage.normalizer);

  auto [predictor, report] = models::train_predictor(detail::regression_examples(train, stage.scaled),
                                                     cfg.predictor_grid, derive_seed(cfg.seed, 10), cfg.predictor);
  predictor.normalizer = stage.normalizer;
  stage.predictor = std::move(predictor);
  stage.report = std::move(report);

  const bool cross_fit = cfg.cross_fitted_labeling && train.references.size() > 1;
  std::vector<PredictionFill> fills(train.references.size());
  parallel_for(train.references.size(), [&](std::size_t r) {
    const ReferenceData& ref = train.references[r];
    if (!cross_fit) {
      fills[r] = detail::predictions_for(stage.predictor, stage.scaled, ref);
      return;
    }
    const auto examples = detail::regression_examples(train, stage.scaled, ref.reference_id);
    std::vector<PairFeatures> x;
    std::vector<double> y;
    for (const auto& e : examples) {
      x.push_back(e.x);
      y.push_back(e.target);
      x.push_back(swap_halves(e.x));
      y.push_back(1.0 - e.target);
    }
    models::PredictorModel held_out = stage.predictor;
    held_out.kernel = models::fit_kernel_ridge(x, y, stage.predictor.kernel.gamma, stage.predictor.kernel.lambda);
    fills[r] = detail::predictions_for(held_out, stage.scaled, ref);
  });
  for (std::size_t r = 0; r < fills.size(); ++r)
    stage.labeling_predictions[train.references[r].reference_id] = std::move(fills[r]);
  return stage;
}

// Labeling with predictor removal at cfg.eta, then classifier training on
// the pooled labels.
inline TrainedPSPC train_classifier_stage(const Dataset& train, const PredictorStage& stage,
                                          const PipelineConfig& cfg) {
  TrainedPSPC out;
  out.normalizer = stage.normalizer;
  out.predictor = stage.predictor;
  out.predictor_report = stage.report;
  out.eta = cfg.eta;
  out.provenance = {train.reference_ids(), cfg.seed, cfg.method};

  out.labeling.resize(train.references.size());
  for (std::size_t r = 0; r < train.references.size(); ++r) {
    const ReferenceData& ref = train.references[r];
    LabelingConfig lc;
    lc.eta = cfg.eta;
    lc.method = cfg.method;
    lc.removal = stage.labeling_predictions.at(ref.reference_id);
    lc.seed = derive_seed(cfg.seed, 100 + r);
    out.labeling[r] = label_pairs(ref.pcm, lc, ref.reference_id);
  }

  std::vector<models::LabeledExample> examples;
  for (const auto& result : out.labeling)
    for (const auto& [pair, label] : result.labels) examples.push_back({pair_features(stage.scaled, pair), label});

  auto [classifier, report] =
      models::train_classifier(examples, cfg.classifier_grid, derive_seed(cfg.seed, 20), cfg.classifier);
  classifier.normalizer = stage.normalizer;
  out.classifier = std::move(classifier);
  out.classifier_report = std::move(report);
  return out;
}

// (1) normalizer on all training stimuli, (2) predictor on all training
// pairs, (3) per-reference labeling with predictor removal, (4) classifier on
// the pooled, oversampled labels.
inline TrainedPSPC train_pspc(const Dataset& train, const PipelineConfig& cfg) {
  if (!(cfg.eta >= kMinEta && cfg.eta <= 1.0)) throw ValidationError("eta must lie in [0.97, 1]");
  return train_classifier_stage(train, train_predictor_stage(train, cfg), cfg);
}

struct PairDecision {
  Label kind = Label::kDefer;
  double defer_score = 0.5;
  std::optional<double> p;  // predicted P(i over j), predict pairs only
};

struct SelectionPlan {
  std::string reference_id;
  int n = 0;
  std::map<PairId, PairDecision> decisions;
  std::vector<PairId> defer_order;  // most human-worthy first

  std::size_t defer_count() const { return defer_order.size(); }
  double defer_fraction() const {
    return decisions.empty() ? 0.0 : static_cast<double>(defer_order.size()) / static_cast<double>(decisions.size());
  }

  void validate() const {
    if (decisions.size() != pair_count(static_cast<std::size_t>(n)))
      throw ValidationError("plan does not cover every pair");
    std::size_t defers = 0;
    for (const auto& [pair, d] : decisions) {
      if (d.kind == Label::kDefer) {
        ++defers;
      } else if (!d.p || !(*d.p >= 0.0 && *d.p <= 1.0)) {
        throw ValidationError("predict pair " + pair.key() + " lacks a preference in [0, 1]");
      }
    }
    if (defers != defer_order.size()) throw ValidationError("defer order does not match decisions");
    for (const auto& pair : defer_order) {
      const auto it = decisions.find(pair);
      if (it == decisions.end() || it->second.kind != Label::kDefer)
        throw ValidationError("defer order lists a non-defer pair " + pair.key());
    }
  }
};

// Sorts defer pairs by descending defer score, canonical order on ties.
inline void order_defer_pairs(SelectionPlan& plan) {
  plan.defer_order.clear();
  for (const auto& [pair, d] : plan.decisions)
    if (d.kind == Label::kDefer) plan.defer_order.push_back(pair);
  std::stable_sort(plan.defer_order.begin(), plan.defer_order.end(), [&](const PairId& a, const PairId& b) {
    return plan.decisions.at(a).defer_score > plan.decisions.at(b).defer_score;
  });
}

inline SelectionPlan select_pairs(const TrainedPSPC& model, const FeatureTable& features,
                                  const std::string& reference_id, int n) {
  if (n < 2) throw ValidationError("a study needs at least 2 stimuli");
  const FeatureTable scaled = models::model_space(features.subset({reference_id}), model.normalizer);
  SelectionPlan plan;
  plan.reference_id = reference_id;
  plan.n = n;
  for (const PairId& pair : all_pairs(reference_id, n)) {
    const PairFeatures x = pair_features(scaled, pair);
    const auto decision = models::classify_features(model.classifier, x);
    PairDecision d{decision.label, decision.score, std::nullopt};
    if (d.kind == Label::kPredict) d.p = models::predict_features(model.predictor, x);
    plan.decisions.emplace(pair, d);
  }
  order_defer_pairs(plan);
  return plan;
}

struct StudyScores {
  PreferenceMatrix pcm;
  ScoreEstimate scores;
};

namespace detail {

inline void set_predicted_pairs(const SelectionPlan& plan, PreferenceMatrix& pcm) {
  for (const auto& [pair, d] : plan.decisions)
    if (d.kind == Label::kPredict)
      pcm.set_pair(static_cast<std::size_t>(pair.i), static_cast<std::size_t>(pair.j), *d.p);
}

}  // namespace detail

// Defer pairs from human trials (win ratios), predict pairs from the plan,
// then a BT fit of the complete matrix.
inline StudyScores score_study(const SelectionPlan& plan, const std::vector<TrialRecord>& trials) {
  plan.validate();
  const auto n = static_cast<std::size_t>(plan.n);
  CountMatrix counts(n);
  for (const TrialRecord& t : trials) {
    t.validate();
    if (t.pair.reference_id != plan.reference_id)
      throw ValidationError("trial for reference '" + t.pair.reference_id + "' in a plan for '" + plan.reference_id +
                            "'");
    const auto it = plan.decisions.find(t.pair);
    if (it == plan.decisions.end()) throw ValidationError("trial for unknown pair " + t.pair.key());
    if (it->second.kind != Label::kDefer) throw ValidationError("trial for predict pair " + t.pair.key());
    const int loser = t.winner == t.pair.i ? t.pair.j : t.pair.i;
    ++counts(static_cast<std::size_t>(t.winner), static_cast<std::size_t>(loser));
  }

  std::string missing;
  for (const PairId& pair : plan.defer_order)
    if (counts.trials(static_cast<std::size_t>(pair.i), static_cast<std::size_t>(pair.j)) == 0)
      missing += (missing.empty() ? "" : ", ") + pair.key();
  if (!missing.empty()) throw ValidationError("defer pairs without trials: " + missing);

  StudyScores out;
  out.pcm = build_pcm(counts);
  detail::set_predicted_pairs(plan, out.pcm);
  out.scores = fit_bt(out.pcm);
  return out;
}

// Evaluation variant: defer pairs take their ground-truth probabilities.
inline PreferenceMatrix merge_with_ground_truth(const SelectionPlan& plan, const PreferenceMatrix& gt) {
  if (gt.size() != static_cast<std::size_t>(plan.n)) throw ValidationError("plan and ground truth sizes differ");
  PreferenceMatrix pcm(gt.size());
  for (const auto& [pair, d] : plan.decisions) {
    const auto i = static_cast<std::size_t>(pair.i), j = static_cast<std::size_t>(pair.j);
    if (d.kind == Label::kDefer) {
      if (!gt.has(i, j)) throw ValidationError("ground truth lacks defer pair " + pair.key());
      pcm.set_pair(i, j, gt(i, j));
    }
  }
  detail::set_predicted_pairs(plan, pcm);
  return pcm;
}

}  // namespace pspc
