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

#include <cmath>
#include <limits>
#include <vector>

#include "pspc/aggregate.hpp"
#include "pspc/correlation.hpp"
#include "pspc/labeling.hpp"
#include "pspc/random.hpp"

using namespace pspc;
using Catch::Approx;

namespace {

PreferenceMatrix synthetic_pcm(int n, RngSeed seed, int trials = 15) {
  Rng rng(seed);
  std::vector<double> s(static_cast<std::size_t>(n));
  for (double& v : s) v = rng.uniform(-3, 3);
  return build_pcm(simulate_counts(s, trials, derive_seed(seed, 1)));
}

}  // namespace

TEST_CASE("pair entropy examples") {
  CHECK(pair_entropy(0.5) == Approx(std::log(2.0)));
  CHECK(pair_entropy(1.0) == 0.0);
  CHECK(pair_entropy(0.0) == 0.0);
  CHECK(pair_entropy(0.9) == Approx(0.3250829733914482).epsilon(1e-12));
  CHECK_THROWS_AS(pair_entropy(1.1), ValidationError);
}

TEST_CASE("approximate divergence anchors") {
  const std::vector<double> pi = {0.2, 0.3, 0.5}, sigma = {0.4, 1.1, 0.9};
  CHECK(std::fabs(approx_kld(pi, sigma, pi, sigma)) < 1e-10);
  const std::vector<double> one = {0.5}, s1 = {1.0}, s2 = {2.0};
  CHECK(std::fabs(approx_kld(one, s1, one, s2) - 0.1931) < 1e-4);
  CHECK(approx_kld(one, s1, one, s2) == Approx(std::log(2.0) - 0.5).epsilon(1e-14));
  const std::vector<double> other = {0.3, 0.3, 0.4};
  CHECK(approx_kld(pi, sigma, other, sigma) > 0.0);
  const std::vector<double> bad = {0.4, 0.0, 0.9};
  CHECK_THROWS_AS(approx_kld(pi, sigma, pi, bad), ValidationError);
}

TEST_CASE("eta outside [0.97, 1] is rejected") {
  const PreferenceMatrix p = synthetic_pcm(6, RngSeed{1});
  LabelingConfig cfg;
  cfg.eta = 0.9;
  CHECK_THROWS_AS(label_pairs(p, cfg), ValidationError);
  cfg.eta = 1.01;
  CHECK_THROWS_AS(label_pairs(p, cfg), ValidationError);
}

TEST_CASE("labels partition the pairs and the trajectory respects eta") {
  const PreferenceMatrix p = synthetic_pcm(10, RngSeed{2});
  const ScoreEstimate prior = fit_bt(p);
  for (auto method : {LabelingMethod::kRandom, LabelingMethod::kEntropy, LabelingMethod::kKld}) {
    for (double eta : {0.97, 0.99}) {
      LabelingConfig cfg;
      cfg.eta = eta;
      cfg.method = method;
      cfg.seed = RngSeed{5};
      const LabelingResult r = label_pairs(p, cfg, "ref");
      CHECK(r.labels.size() == 45);
      std::size_t predict = 0;
      for (const auto& [pair, label] : r.labels) predict += label == Label::kPredict;
      CHECK(predict == r.removal_order.size());
      CHECK(r.plcc_trajectory.size() == r.removal_order.size());
      CHECK(r.eta_used == eta);

      // Every prefix recomputed from scratch reproduces the trajectory.
      PreferenceMatrix current = p;
      for (std::size_t k = 0; k < r.removal_order.size(); ++k) {
        const PairId& pair = r.removal_order[k];
        current.set_pair(static_cast<std::size_t>(pair.i), static_cast<std::size_t>(pair.j), 0.5);
        FitOptions opt;
        opt.with_covariance = false;
        const double recomputed = *plcc(prior.s_hat, fit_bt(current, opt).s_hat);
        CHECK(recomputed == Approx(r.plcc_trajectory[k]).margin(1e-12));
        CHECK(r.plcc_trajectory[k] >= eta);
      }
    }
  }
}

TEST_CASE("eta = 1 defers everything on noisy data") {
  const PreferenceMatrix p = synthetic_pcm(8, RngSeed{3});
  LabelingConfig cfg;
  cfg.eta = 1.0;
  const LabelingResult r = label_pairs(p, cfg);
  CHECK(r.removal_order.empty());
  CHECK(r.defer_count() == 28);
}

TEST_CASE("entropy labeling removes the least certain pair first") {
  PreferenceMatrix p(4);
  p.set_pair(0, 1, 0.95);
  p.set_pair(0, 2, 0.9);
  p.set_pair(0, 3, 0.97);
  p.set_pair(1, 2, 0.5);
  p.set_pair(1, 3, 0.92);
  p.set_pair(2, 3, 0.94);
  LabelingConfig cfg;
  cfg.method = LabelingMethod::kEntropy;
  cfg.eta = 0.97;
  const LabelingResult r = label_pairs(p, cfg, "r");
  REQUIRE_FALSE(r.removal_order.empty());
  CHECK(r.removal_order.front() == PairId("r", 1, 2));
}

TEST_CASE("kld labeling removes the exhaustive argmin first") {
  const PreferenceMatrix p = synthetic_pcm(6, RngSeed{4});
  const ScoreEstimate prior = fit_bt(p);
  double best = std::numeric_limits<double>::infinity();
  PairId argmin;
  for (const PairId& pair : all_pairs("r", 6)) {
    PreferenceMatrix t = p;
    t.set_pair(static_cast<std::size_t>(pair.i), static_cast<std::size_t>(pair.j), 0.5);
    const ScoreEstimate post = fit_bt(t);
    const double kld = approx_kld(prior.pi, prior.sigma_hat, post.pi, post.sigma_hat);
    if (kld < best) best = kld, argmin = pair;
  }
  LabelingConfig cfg;
  cfg.eta = 0.97;
  const LabelingResult r = label_pairs(p, cfg, "r");
  REQUIRE_FALSE(r.removal_order.empty());
  CHECK(r.removal_order.front() == argmin);
}

TEST_CASE("random labeling is reproducible per seed") {
  const PreferenceMatrix p = synthetic_pcm(8, RngSeed{5});
  LabelingConfig cfg;
  cfg.method = LabelingMethod::kRandom;
  cfg.eta = 0.97;
  cfg.seed = RngSeed{10};
  const auto a = label_pairs(p, cfg), b = label_pairs(p, cfg);
  CHECK(a.removal_order == b.removal_order);
  cfg.seed = RngSeed{11};
  const auto c = label_pairs(p, cfg);
  CHECK(a.removal_order != c.removal_order);
}

TEST_CASE("predictor removal uses the supplied predictions") {
  const PreferenceMatrix p = synthetic_pcm(6, RngSeed{6});
  PredictionFill exact;
  for (const PairId& pair : all_pairs("r", 6))
    exact.predictions[pair] = p(static_cast<std::size_t>(pair.i), static_cast<std::size_t>(pair.j));
  LabelingConfig cfg;
  cfg.eta = 0.995;
  cfg.removal = exact;
  // A perfect predictor never changes the scores, so everything is predict.
  const LabelingResult r = label_pairs(p, cfg, "r");
  CHECK(r.defer_count() == 0);
  cfg.removal = PredictionFill{};
  CHECK_THROWS_AS(label_pairs(p, cfg, "r"), ValidationError);
}

TEST_CASE("labeling curves start at one and end undefined under constant removal") {
  const PreferenceMatrix p = synthetic_pcm(6, RngSeed{7});
  for (auto method : {LabelingMethod::kKld, LabelingMethod::kRandom}) {
    const auto curve = labeling_curve(p, method, ConstantFill{0.5}, 5, RngSeed{1});
    REQUIRE(curve.size() == 16);
    CHECK(curve.front().removed == 0);
    CHECK(*curve.front().plcc == 1.0);
    CHECK(*curve.front().srocc == 1.0);
    CHECK_FALSE(curve.back().plcc.has_value());
  }
  CHECK_THROWS_AS(labeling_curve(p, LabelingMethod::kRandom, ConstantFill{0.5}, 0, RngSeed{1}), ValidationError);
}

TEST_CASE("incomplete matrices cannot be labeled") {
  PreferenceMatrix p(3);
  p.set_pair(0, 1, 0.5);
  CHECK_THROWS_AS(label_pairs(p, LabelingConfig{}), ValidationError);
}
