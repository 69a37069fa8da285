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
#include <sstream>

#include "pspc/data.hpp"
#include "pspc/eval.hpp"

using namespace pspc;
using Catch::Matchers::ContainsSubstring;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("pspc_data_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("counts csv round trip with provenance header") {
  CountMatrix c(3);
  c(0, 1) = 3;
  c(1, 0) = 1;
  c(0, 2) = 2;
  c(2, 0) = 2;
  c(1, 2) = 0;
  c(2, 1) = 4;
  std::stringstream s;
  write_counts_csv(s, {{"a", c}}, OutputHeader{RngSeed{7}, "abc"});
  CHECK(s.str().rfind("# pspc 0.1.0 seed=7 config=abc\n", 0) == 0);
  const auto back = parse_counts_csv(s, "mem");
  CHECK(back.at("a") == c);
}

TEST_CASE("counts csv errors carry the line number") {
  std::stringstream dup("ref_id,i,j,c_ij,c_ji\na,0,1,3,1\n\na,1,0,2,2\n");
  CHECK_THROWS_WITH(parse_counts_csv(dup, "x.csv"), ContainsSubstring("x.csv:4: duplicate pair"));
  std::stringstream neg("ref_id,i,j,c_ij,c_ji\na,0,1,-3,1\n");
  CHECK_THROWS_WITH(parse_counts_csv(neg, "x.csv"), ContainsSubstring("negative count"));
  std::stringstream header("ref,i,j\n");
  CHECK_THROWS_WITH(parse_counts_csv(header, "x.csv"), ContainsSubstring("expected header"));
  std::stringstream self("ref_id,i,j,c_ij,c_ji\na,1,1,3,1\n");
  CHECK_THROWS_AS(parse_counts_csv(self, "x.csv"), ValidationError);
}

TEST_CASE("preference csv fills complements and validates range") {
  std::stringstream in("# comment\nref_id,i,j,p_ij\nr,0,1,0.75\nr,2,0,0.4\n");
  const auto p = parse_preference_csv(in, "p.csv").at("r");
  CHECK(p(1, 0) == 0.25);
  CHECK(p(0, 2) == 0.6);
  CHECK_FALSE(p.has(1, 2));
  std::stringstream bad("ref_id,i,j,p_ij\nr,0,1,1.3\n");
  CHECK_THROWS_WITH(parse_preference_csv(bad, "p.csv"), ContainsSubstring("p.csv:2: preference outside [0, 1]"));

  std::stringstream out;
  write_preference_csv(out, {{"r", p}});
  const auto again = parse_preference_csv(out, "mem").at("r");
  CHECK(again(0, 1) == p(0, 1));
  CHECK(again(0, 2) == p(0, 2));
}

TEST_CASE("stimulus keys split at the last colon") {
  CHECK(parse_stimulus_key("a:b:12") == StimulusId{"a:b", 12});
  CHECK(stimulus_key({"x", 3}) == "x:3");
  CHECK_THROWS_AS(parse_stimulus_key("nocolon"), ValidationError);
  CHECK_THROWS_AS(parse_stimulus_key("a:-1"), ValidationError);
  CHECK_THROWS_AS(parse_stimulus_key("a:1x"), ValidationError);
}

TEST_CASE("features csv round trip is exact") {
  const SyntheticStudy s = make_synthetic_study(2, 5, 0.4, RngSeed{1});
  std::stringstream io;
  write_features_csv(io, s.dataset.features);
  CHECK(parse_features_csv(io, "mem").rows == s.dataset.features.rows);
  std::stringstream dup(features_header() + "\na:0,1,2,3,4,5,6,7\na:0,1,2,3,4,5,6,7\n");
  CHECK_THROWS_WITH(parse_features_csv(dup, "f.csv"), ContainsSubstring("f.csv:3: duplicate stimulus"));
  std::stringstream short_row(features_header() + "\na:0,1,2\n");
  CHECK_THROWS_WITH(parse_features_csv(short_row, "f.csv"), ContainsSubstring("expected 8 fields"));
}

TEST_CASE("trial records round trip through jsonl") {
  TrialRecord t;
  t.pair = PairId("r", 4, 2);
  t.winner = 4;
  t.subject = "s1";
  t.timestamp_ms = 1700000000000;
  t.presented_left = 4;
  t.idempotency_key = "k";
  t.response_time_ms = 812;
  TrialRecord u = t;
  u.idempotency_key.clear();
  u.response_time_ms = -1;
  std::stringstream io;
  write_trials_jsonl(io, {t, u});
  const auto back = parse_trials_jsonl(io, "t.jsonl");
  REQUIRE(back.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    const TrialRecord& a = k == 0 ? t : u;
    CHECK(back[k].pair == a.pair);
    CHECK(back[k].winner == a.winner);
    CHECK(back[k].subject == a.subject);
    CHECK(back[k].timestamp_ms == a.timestamp_ms);
    CHECK(back[k].presented_left == a.presented_left);
    CHECK(back[k].idempotency_key == a.idempotency_key);
    CHECK(back[k].response_time_ms == a.response_time_ms);
  }
  std::stringstream bad("{\"pair\":{\"ref_id\":\"r\",\"i\":0,\"j\":1},\"winner\":5,\"subject\":\"s\"}\n");
  CHECK_THROWS_WITH(parse_trials_jsonl(bad, "t.jsonl"), ContainsSubstring("t.jsonl:1"));
  std::stringstream garbage("not json\n");
  CHECK_THROWS_AS(parse_trials_jsonl(garbage, "t.jsonl"), ValidationError);
}

TEST_CASE("dataset directories round trip") {
  const SyntheticStudy s = make_synthetic_study(3, 6, 0.4, RngSeed{2});
  const auto dir = scratch_dir("dataset");
  write_dataset(dir, s.dataset, OutputHeader{RngSeed{2}, "h"});
  const Dataset back = load_dataset(dir);
  CHECK(back.reference_ids() == s.dataset.reference_ids());
  CHECK(back.features.rows == s.dataset.features.rows);
  for (const auto& ref : s.dataset.references) CHECK(*back.reference(ref.reference_id).counts == *ref.counts);
  std::filesystem::remove(dir / "counts.csv");
  CHECK_THROWS_WITH(load_dataset(dir), ContainsSubstring("neither counts.csv nor preferences.csv"));
  std::filesystem::remove_all(dir);
  CHECK_THROWS_WITH(load_dataset(dir), ContainsSubstring("cannot open"));
}

TEST_CASE("scores csv lists every stimulus") {
  ScoreEstimate est;
  est.s_hat = {0.5, -0.5};
  est.pi = {0.731, 0.269};
  std::stringstream out;
  write_scores_csv(out, {{"r", est}});
  CHECK(out.str() == "ref_id,stimulus_id,s_hat,pi,sigma_hat\nr,r:0,0.5,0.73099999999999998,\nr,r:1,-0.5,0.26900000000000002,\n");
}
