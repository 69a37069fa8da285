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

#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "pspc/eval.hpp"
#include "pspc/pipeline.hpp"
#include "pspc/serialize.hpp"
#include "test_util.hpp"

using namespace pspc;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

SelectionPlan two_stimulus_plan(Label kind, std::optional<double> p = std::nullopt) {
  SelectionPlan plan;
  plan.reference_id = "r";
  plan.n = 2;
  plan.decisions[PairId("r", 0, 1)] = {kind, 0.7, p};
  order_defer_pairs(plan);
  return plan;
}

TrialRecord trial(int i, int j, int winner, const std::string& subject) {
  TrialRecord t;
  t.pair = PairId("r", i, j);
  t.winner = winner;
  t.presented_left = i;
  t.subject = subject;
  return t;
}

}  // namespace

TEST_CASE("two-stimulus study from three wins and one loss") {
  const SelectionPlan plan = two_stimulus_plan(Label::kDefer);
  const std::vector<TrialRecord> trials = {trial(0, 1, 0, "a"), trial(0, 1, 0, "b"), trial(0, 1, 1, "c"),
                                           trial(0, 1, 0, "d")};
  const StudyScores out = score_study(plan, trials);
  CHECK(out.pcm(0, 1) == 0.75);
  CHECK(out.pcm(1, 0) == 0.25);
  CHECK(out.scores.s_hat[0] - out.scores.s_hat[1] == Approx(std::log(3.0)).epsilon(1e-8));
}

TEST_CASE("scoring rejects missing and misplaced trials") {
  SelectionPlan plan;
  plan.reference_id = "r";
  plan.n = 3;
  plan.decisions[PairId("r", 0, 1)] = {Label::kDefer, 0.9, std::nullopt};
  plan.decisions[PairId("r", 0, 2)] = {Label::kDefer, 0.8, std::nullopt};
  plan.decisions[PairId("r", 1, 2)] = {Label::kPredict, 0.1, 0.6};
  order_defer_pairs(plan);
  CHECK(plan.defer_order == std::vector<PairId>{PairId("r", 0, 1), PairId("r", 0, 2)});
  CHECK_THROWS_WITH(score_study(plan, {trial(0, 1, 0, "a")}), ContainsSubstring("defer pairs without trials: 0-2"));
  CHECK_THROWS_WITH(score_study(plan, {trial(0, 1, 0, "a"), trial(0, 2, 0, "a"), trial(1, 2, 1, "a")}),
                    ContainsSubstring("predict pair"));
  const StudyScores ok = score_study(plan, {trial(0, 1, 0, "a"), trial(0, 2, 2, "a")});
  CHECK(ok.pcm(1, 2) == 0.6);
  CHECK(ok.pcm(0, 2) == 0.0);
}

TEST_CASE("all-predict plan needs no trials") {
  const SelectionPlan plan = two_stimulus_plan(Label::kPredict, 0.5);
  CHECK(plan.defer_count() == 0);
  const StudyScores out = score_study(plan, {});
  CHECK(out.scores.s_hat[0] == Approx(0.0).margin(1e-12));
  SelectionPlan bad = two_stimulus_plan(Label::kPredict);
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("ground-truth merge keeps defer pairs and uses predictions elsewhere") {
  SelectionPlan plan;
  plan.reference_id = "r";
  plan.n = 3;
  plan.decisions[PairId("r", 0, 1)] = {Label::kDefer, 0.9, std::nullopt};
  plan.decisions[PairId("r", 0, 2)] = {Label::kPredict, 0.2, 0.3};
  plan.decisions[PairId("r", 1, 2)] = {Label::kPredict, 0.1, 0.6};
  order_defer_pairs(plan);
  PreferenceMatrix gt(3);
  gt.set_pair(0, 1, 0.8);
  gt.set_pair(0, 2, 0.9);
  gt.set_pair(1, 2, 0.7);
  const PreferenceMatrix m = merge_with_ground_truth(plan, gt);
  CHECK(m(0, 1) == 0.8);
  CHECK(m(0, 2) == 0.3);
  CHECK(m(2, 1) == Approx(0.4));
}

TEST_CASE("trained pipeline produces consistent plans") {
  const SyntheticStudy study = make_synthetic_study(4, 10, 0.5, RngSeed{21});
  const Dataset train = study.dataset.subset({"ref00", "ref01", "ref02"});
  const TrainedPSPC model = train_pspc(train, testing_util::quick_config(0.99, RngSeed{3}));
  CHECK(model.labeling.size() == 3);
  CHECK(model.provenance.reference_ids == train.reference_ids());

  const SelectionPlan plan = select_pairs(model, study.dataset.features, "ref03", 10);
  plan.validate();
  CHECK(plan.decisions.size() == 45);
  for (std::size_t k = 1; k < plan.defer_order.size(); ++k)
    CHECK(plan.decisions.at(plan.defer_order[k - 1]).defer_score >= plan.decisions.at(plan.defer_order[k]).defer_score);
  for (const auto& [pair, d] : plan.decisions) CHECK((d.kind == Label::kDefer) == (d.defer_score >= 0.5));

  CHECK_THROWS_AS(select_pairs(model, study.dataset.features, "ref03", 1), ValidationError);
  CHECK_THROWS_AS(train_pspc(train, testing_util::quick_config(0.9, RngSeed{3})), ValidationError);
}

TEST_CASE("labels defer more pairs as eta grows") {
  const SyntheticStudy study = make_synthetic_study(3, 10, 0.5, RngSeed{22});
  const PipelineConfig cfg = testing_util::quick_config(0.99, RngSeed{4});
  const PredictorStage stage = train_predictor_stage(study.dataset, cfg);
  CHECK(stage.labeling_predictions.size() == 3);
  for (const auto& ref : study.dataset.references) {
    std::size_t previous = 0;
    for (double eta : default_eta_sweep()) {
      LabelingConfig lc;
      lc.eta = eta;
      lc.removal = stage.labeling_predictions.at(ref.reference_id);
      const std::size_t defers = label_pairs(ref.pcm, lc, ref.reference_id).defer_count();
      CHECK(defers >= previous);
      previous = defers;
    }
  }
}

TEST_CASE("training defers strictly more at the top of the eta range") {
  const SyntheticStudy study = make_synthetic_study(2, 10, 0.5, RngSeed{24});
  const PipelineConfig cfg = testing_util::quick_config(0.99, RngSeed{6});
  const PredictorStage stage = train_predictor_stage(study.dataset, cfg);
  std::size_t low = 0, high = 0;
  for (const auto& ref : study.dataset.references) {
    LabelingConfig lc;
    lc.removal = stage.labeling_predictions.at(ref.reference_id);
    lc.eta = 0.97;
    low += label_pairs(ref.pcm, lc, ref.reference_id).defer_count();
    lc.eta = 0.995;
    high += label_pairs(ref.pcm, lc, ref.reference_id).defer_count();
  }
  CHECK(high > low);
  CHECK_THROWS_WITH(train_pspc(study.dataset, testing_util::quick_config(1.0, RngSeed{6})),
                    ContainsSubstring("degenerate"));
}

TEST_CASE("training is deterministic for a fixed seed") {
  const SyntheticStudy study = make_synthetic_study(3, 10, 0.5, RngSeed{23});
  const auto cfg = testing_util::quick_config(0.99, RngSeed{5});
  const TrainedPSPC a = train_pspc(study.dataset, cfg), b = train_pspc(study.dataset, cfg);
  CHECK(to_json(a.classifier).dump() == to_json(b.classifier).dump());
  CHECK(to_json(a.predictor).dump() == to_json(b.predictor).dump());
}
