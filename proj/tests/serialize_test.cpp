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

#include <filesystem>

#include "pspc/serialize.hpp"
#include "test_util.hpp"

using namespace pspc;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("trained bundle round trips exactly") {
  const SyntheticStudy s = make_synthetic_study(3, 8, 0.5, RngSeed{31});
  const TrainedPSPC model = train_pspc(s.dataset, testing_util::quick_config(0.99, RngSeed{2}));
  REQUIRE_FALSE(model.classifier.booster.trees.empty());

  CHECK(classifier_from_json(to_json(model.classifier)) == model.classifier);
  CHECK(predictor_from_json(to_json(model.predictor)) == model.predictor);
  CHECK(classifier_from_json(nlohmann::json::parse(to_json(model.classifier).dump())) == model.classifier);

  const auto dir = std::filesystem::temp_directory_path() / "pspc_serialize_test";
  std::filesystem::remove_all(dir);
  save_trained(dir, model);
  const TrainedPSPC back = load_trained(dir);
  CHECK(back.classifier == model.classifier);
  CHECK(back.predictor == model.predictor);
  CHECK(back.normalizer == model.normalizer);
  CHECK(back.eta == model.eta);
  CHECK(back.provenance.reference_ids == model.provenance.reference_ids);

  const SelectionPlan a = select_pairs(model, s.dataset.features, "ref00", 8);
  const SelectionPlan b = select_pairs(back, s.dataset.features, "ref00", 8);
  CHECK(to_json(a) == to_json(b));

  auto meta = read_json_file(dir / "pspc.json");
  meta["format_version"] = 99;
  write_json_file(dir / "pspc.json", meta);
  CHECK_THROWS_AS(load_trained(dir), ValidationError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("plans round trip and are validated on load") {
  SelectionPlan plan;
  plan.reference_id = "r";
  plan.n = 3;
  plan.decisions[PairId("r", 0, 1)] = {Label::kDefer, 0.9, std::nullopt};
  plan.decisions[PairId("r", 0, 2)] = {Label::kPredict, 0.2, 0.3};
  plan.decisions[PairId("r", 1, 2)] = {Label::kDefer, 0.6, std::nullopt};
  order_defer_pairs(plan);
  const SelectionPlan back = plan_from_json(to_json(plan));
  CHECK(back.defer_order == plan.defer_order);
  CHECK(back.n == 3);
  CHECK(*back.decisions.at(PairId("r", 0, 2)).p == 0.3);

  auto j = to_json(plan);
  j["decisions"].erase("1-2");
  CHECK_THROWS_AS(plan_from_json(j), ValidationError);
  j = to_json(plan);
  j["decisions"]["0-1"]["kind"] = "maybe";
  CHECK_THROWS_WITH(plan_from_json(j), ContainsSubstring("unknown decision kind"));
}

TEST_CASE("labeling results serialize their trajectories") {
  LabelingResult r;
  r.reference_id = "r";
  r.labels[PairId("r", 0, 1)] = Label::kPredict;
  r.labels[PairId("r", 0, 2)] = Label::kDefer;
  r.removal_order = {PairId("r", 0, 1)};
  r.plcc_trajectory = {0.995};
  r.srocc_trajectory = {std::nullopt};
  r.eta_used = 0.99;
  const auto j = to_json(r, LabelingMethod::kKld);
  CHECK(j["labels"]["0-1"] == "predict");
  CHECK(j["method"] == "kld");
  CHECK(j["srocc_trajectory"][0].is_null());
}
