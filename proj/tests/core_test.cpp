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
#include <vector>

#include "pspc/core.hpp"
#include "pspc/random.hpp"

using namespace pspc;
using Catch::Approx;

TEST_CASE("pair ids are canonical and enumerate every pair once") {
  const PairId p("r", 5, 2);
  CHECK(p.i == 2);
  CHECK(p.j == 5);
  CHECK(p.key() == "2-5");
  CHECK(p == PairId("r", 2, 5));
  CHECK_THROWS_AS(PairId("r", 3, 3), ValidationError);
  CHECK_THROWS_AS(PairId("r", -1, 3), ValidationError);

  const auto pairs = all_pairs("r", 16);
  CHECK(pairs.size() == 120);
  CHECK(pairs.size() == pair_count(16));
  CHECK(std::is_sorted(pairs.begin(), pairs.end()));
  CHECK(std::adjacent_find(pairs.begin(), pairs.end()) == pairs.end());
  CHECK(parse_pair_key("r", "3-7") == PairId("r", 3, 7));
  CHECK_THROWS_AS(parse_pair_key("r", "3_7"), ValidationError);
}

TEST_CASE("build_pcm uses win ratios and marks empty pairs as no data") {
  CountMatrix c(3);
  c(0, 1) = 3;
  c(1, 0) = 1;
  c(0, 2) = 7;
  const PreferenceMatrix p = build_pcm(c);
  CHECK(p(0, 1) == 0.75);
  CHECK(p(1, 0) == 0.25);
  CHECK(p(0, 2) == 1.0);
  CHECK(p(2, 0) == 0.0);
  CHECK_FALSE(p.has(1, 2));
  CHECK_FALSE(p.has(2, 1));
  CHECK(p(0, 0) == 0.0);
  CHECK_FALSE(p.complete());
  CHECK(p.missing_pairs("r") == std::vector<PairId>{PairId("r", 1, 2)});
}

TEST_CASE("build_pcm entries are complementary") {
  Rng rng(RngSeed{7});
  CountMatrix c(6);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      if (i != j) c(i, j) = static_cast<std::int64_t>(rng.below(9));
  const PreferenceMatrix p = build_pcm(c);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      if (i != j && p.has(i, j)) CHECK(std::fabs(p(i, j) + p(j, i) - 1.0) <= 1e-12);
}

TEST_CASE("count matrices reject negative entries") {
  CountMatrix c(2);
  c(0, 1) = -1;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

namespace {

FeatureTable small_table() {
  FeatureTable t;
  t.rows[{"a", 0}] = {0, 1, 2, 3, 4, 5, 6};
  t.rows[{"a", 1}] = {10, 3, 2.5, 4, 5, 6, 7};
  t.rows[{"a", 2}] = {5, 2, 3, 5, 6, 7, 8};
  return t;
}

}  // namespace

TEST_CASE("min-max normalization scales to the fitting range and clamps unseen data") {
  const FeatureTable raw = small_table();
  const Normalizer norm = fit_normalizer(raw);
  CHECK(norm.min[0] == 0.0);
  CHECK(norm.max[0] == 10.0);
  const FeatureTable scaled = apply_normalizer(raw, norm);
  CHECK(scaled.at({"a", 2})[0] == Approx(0.5));
  for (const auto& [id, row] : scaled.rows)
    for (double v : row) CHECK((v >= 0.0 && v <= 1.0));

  FeatureVector unseen{-5, 100, 2.25, 3, 4, 5, 6};
  const FeatureVector s = norm.apply(unseen);
  CHECK(s[0] == 0.0);
  CHECK(s[1] == 1.0);
  CHECK(s[2] == Approx(0.25));

  // Refitting on normalized data recovers min 0 and max 1 and is idempotent.
  FeatureTable again = scaled;
  again.normalizer.reset();
  const Normalizer unit = fit_normalizer(again);
  for (std::size_t k = 0; k < kNumMetrics; ++k) {
    CHECK(unit.min[k] == 0.0);
    CHECK(unit.max[k] == 1.0);
  }
  const FeatureTable twice = apply_normalizer(again, unit);
  for (const auto& [id, row] : twice.rows) CHECK(row == scaled.at(id));
}

TEST_CASE("a constant feature column is an error naming the feature") {
  FeatureTable raw = small_table();
  for (auto& [id, row] : raw.rows) row[4] = 1.0;
  try {
    fit_normalizer(raw);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("vif") != std::string::npos);
  }
}

TEST_CASE("pair features concatenate in canonical order") {
  const FeatureTable raw = small_table();
  const PairFeatures x = pair_features(raw, PairId("a", 2, 0));
  for (std::size_t k = 0; k < kNumMetrics; ++k) {
    CHECK(x[k] == raw.at({"a", 0})[k]);
    CHECK(x[k + kNumMetrics] == raw.at({"a", 2})[k]);
  }
  const PairFeatures y = swap_halves(x);
  CHECK(swap_halves(y) == x);
  CHECK(y[0] == raw.at({"a", 2})[0]);
  CHECK_THROWS_AS(pair_features(raw, PairId("a", 0, 9)), ValidationError);
}

TEST_CASE("trial records require the winner to be in the pair") {
  TrialRecord t;
  t.pair = PairId("r", 1, 4);
  t.winner = 4;
  t.presented_left = 1;
  CHECK_NOTHROW(t.validate());
  t.winner = 2;
  CHECK_THROWS_AS(t.validate(), ValidationError);
}

TEST_CASE("seeded generators are reproducible and seed-sensitive") {
  Rng a(RngSeed{42}), b(RngSeed{42}), c(RngSeed{43});
  std::vector<std::uint64_t> va, vb, vc;
  for (int k = 0; k < 16; ++k) va.push_back(a.next()), vb.push_back(b.next()), vc.push_back(c.next());
  CHECK(va == vb);
  CHECK(va != vc);
  CHECK(derive_seed(RngSeed{1}, 2) == derive_seed(RngSeed{1}, 2));
  CHECK_FALSE(derive_seed(RngSeed{1}, 2) == derive_seed(RngSeed{1}, 3));

  Rng r(RngSeed{5});
  for (int k = 0; k < 1000; ++k) {
    const double u = r.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(r.below(7) < 7);
  }
}

TEST_CASE("simulate_counts is deterministic and follows the logistic model") {
  const std::vector<double> s = {1.0, 0.0, -0.5};
  const CountMatrix a = simulate_counts(s, 15, RngSeed{9});
  const CountMatrix b = simulate_counts(s, 15, RngSeed{9});
  CHECK(a == b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = i + 1; j < 3; ++j) CHECK(a.trials(i, j) == 15);
  CHECK_THROWS_AS(simulate_counts(std::vector<double>{1.0}, 15, RngSeed{1}), ValidationError);
  CHECK_THROWS_AS(simulate_counts(s, 0, RngSeed{1}), ValidationError);

  // Swapping the scores transposes the count distribution: compare mean win
  // rates over many seeds.
  const std::vector<double> swapped = {0.0, 1.0, -0.5};
  double wins01 = 0, wins10 = 0;
  const int seeds = 400;
  for (int k = 0; k < seeds; ++k) {
    wins01 += static_cast<double>(simulate_counts(s, 15, RngSeed{static_cast<std::uint64_t>(k)})(0, 1));
    wins10 += static_cast<double>(simulate_counts(swapped, 15, RngSeed{1000u + k})(1, 0));
  }
  const double expected = 15.0 * logistic(1.0);
  const double se = std::sqrt(15.0 * logistic(1.0) * (1 - logistic(1.0)) / seeds);
  CHECK(std::fabs(wins01 / seeds - expected) < 5 * se);
  CHECK(std::fabs(wins10 / seeds - expected) < 5 * se);
}

TEST_CASE("logistic is stable at extreme arguments") {
  CHECK(logistic(0.0) == 0.5);
  CHECK(logistic(800.0) == 1.0);
  CHECK(logistic(-800.0) == 0.0);
  CHECK(logistic(std::log(3.0)) == Approx(0.75).epsilon(1e-15));
}
