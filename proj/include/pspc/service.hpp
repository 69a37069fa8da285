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

// Study execution: scheduling of defer pairs to subjects, an append-only
// response log, status and merging. Transport-independent; see
// service_http.hpp for the HTTP front end.
//
// Study directory layout:
//   plan.json      selection plan (required)
//   trials.jsonl   response log, the source of truth
//   status.json    periodic snapshot of status(), informational only

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pspc/core.hpp"
#include "pspc/data.hpp"
#include "pspc/error.hpp"
#include "pspc/pipeline.hpp"
#include "pspc/random.hpp"
#include "pspc/serialize.hpp"

namespace pspc {

class NotFoundError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct StudyOptions {
  int target_trials_per_pair = 15;
  RngSeed seed{};
  int snapshot_every = 10;  // responses between status.json snapshots
};

struct Assignment {
  PairId pair;
  int left = 0;
  int right = 0;
};

struct Acknowledgment {
  bool accepted = true;
  bool duplicate = false;
  std::string idempotency_key;
};

struct PairStatus {
  PairId pair;
  int collected = 0;
};

struct StudyStatus {
  std::string study_id;
  int target_trials_per_pair = 0;
  std::vector<PairStatus> pairs;  // defer pairs in presentation order
  std::size_t responses = 0;
  double completion = 1.0;
};

inline std::string default_idempotency_key(const TrialRecord& t) {
  return t.subject + "|" + t.pair.reference_id + "|" + t.pair.key();
}

class StudyState {
 public:
  StudyState(std::string id, SelectionPlan plan, StudyOptions opt,
             std::optional<std::filesystem::path> dir = std::nullopt)
      : id_(std::move(id)), plan_(std::move(plan)), opt_(opt), dir_(std::move(dir)) {
    plan_.validate();
    if (opt_.target_trials_per_pair < 1) throw ValidationError("target_trials_per_pair must be positive");
    for (const PairId& pair : plan_.defer_order) counts_[pair] = 0;
    if (dir_) replay();
  }

  // Loads dir/plan.json and replays dir/trials.jsonl.
  static std::unique_ptr<StudyState> open(const std::filesystem::path& dir, StudyOptions opt) {
    return std::make_unique<StudyState>(dir.filename().string(), plan_from_json(read_json_file(dir / "plan.json")),
                                        opt, dir);
  }

  const std::string& id() const { return id_; }
  const SelectionPlan& plan() const { return plan_; }

  // Least-collected defer pair below target that the subject has not judged;
  // ties go to canonical pair order. Presentation side is a seeded function
  // of (seed, subject, pair).
  std::optional<Assignment> next_pair(const std::string& subject) const {
    if (subject.empty()) throw ValidationError("subject id is required");
    std::shared_lock lock(mutex_);
    const auto judged = judged_.find(subject);
    const PairId* best = nullptr;
    int best_count = 0;
    for (const auto& [pair, count] : counts_) {
      if (count >= opt_.target_trials_per_pair) continue;
      if (judged != judged_.end() && judged->second.count(pair)) continue;
      if (!best || count < best_count) {
        best = &pair;
        best_count = count;
      }
    }
    if (!best) return std::nullopt;
    const std::uint64_t h =
        mix64(derive_seed(opt_.seed, hash_string(subject + "|" + best->reference_id + "|" + best->key())).seed);
    const bool swap = (h & 1U) != 0;
    return Assignment{*best, swap ? best->j : best->i, swap ? best->i : best->j};
  }

  Acknowledgment record_response(TrialRecord t) {
    if (t.pair.reference_id.empty()) t.pair = PairId(plan_.reference_id, t.pair.i, t.pair.j);
    if (t.pair.reference_id != plan_.reference_id)
      throw ValidationError("response for reference '" + t.pair.reference_id + "' in study of '" +
                            plan_.reference_id + "'");
    if (t.subject.empty()) throw ValidationError("subject id is required");
    if (!t.pair.contains(t.presented_left)) t.presented_left = t.pair.i;
    t.validate();
    const auto it = plan_.decisions.find(t.pair);
    if (it == plan_.decisions.end()) throw ValidationError("pair " + t.pair.key() + " is not part of the study");
    if (it->second.kind != Label::kDefer)
      throw ValidationError("pair " + t.pair.key() + " is a predict pair and takes no responses");
    if (t.idempotency_key.empty()) t.idempotency_key = default_idempotency_key(t);

    std::unique_lock lock(mutex_);
    if (keys_.count(t.idempotency_key)) return {true, true, t.idempotency_key};
    if (judged_[t.subject].count(t.pair))
      throw ValidationError("subject '" + t.subject + "' already judged pair " + t.pair.key());
    append_to_log(t);
    apply(t);
    if (dir_ && opt_.snapshot_every > 0 && responses_.size() % static_cast<std::size_t>(opt_.snapshot_every) == 0)
      write_snapshot_locked();
    return {true, false, t.idempotency_key};
  }

  StudyStatus status() const {
    std::shared_lock lock(mutex_);
    return status_locked();
  }

  std::vector<TrialRecord> responses() const {
    std::shared_lock lock(mutex_);
    return responses_;
  }

  StudyScores merge() const {
    std::vector<TrialRecord> log;
    {
      std::shared_lock lock(mutex_);
      log = responses_;
      if (dir_) write_snapshot_locked();
    }
    return score_study(plan_, log);
  }

 private:
  void apply(const TrialRecord& t) {
    keys_.insert(t.idempotency_key);
    judged_[t.subject].insert(t.pair);
    ++counts_.at(t.pair);
    responses_.push_back(t);
  }

  void append_to_log(const TrialRecord& t) {
    if (!dir_) return;
    std::ofstream log(*dir_ / "trials.jsonl", std::ios::app);
    log << trial_to_json(t).dump() << '\n';
    log.flush();
    if (!log) throw RuntimeError("failed to append to the response log of study '" + id_ + "'");
  }

  void replay() {
    const auto path = *dir_ / "trials.jsonl";
    if (!std::filesystem::exists(path)) return;
    for (TrialRecord& t : load_trials_jsonl(path)) {
      if (t.idempotency_key.empty()) t.idempotency_key = default_idempotency_key(t);
      if (keys_.count(t.idempotency_key)) continue;
      const auto it = plan_.decisions.find(t.pair);
      if (it == plan_.decisions.end() || it->second.kind != Label::kDefer)
        throw ValidationError(path.string() + ": logged response for non-defer pair " + t.pair.key());
      apply(t);
    }
  }

  StudyStatus status_locked() const {
    StudyStatus s;
    s.study_id = id_;
    s.target_trials_per_pair = opt_.target_trials_per_pair;
    s.responses = responses_.size();
    std::int64_t done = 0;
    for (const PairId& pair : plan_.defer_order) {
      const int c = counts_.at(pair);
      s.pairs.push_back({pair, c});
      done += std::min(c, opt_.target_trials_per_pair);
    }
    if (!s.pairs.empty())
      s.completion = static_cast<double>(done) / (static_cast<double>(s.pairs.size()) * opt_.target_trials_per_pair);
    return s;
  }

  void write_snapshot_locked() const;

  std::string id_;
  SelectionPlan plan_;
  StudyOptions opt_;
  std::optional<std::filesystem::path> dir_;

  mutable std::shared_mutex mutex_;
  std::vector<TrialRecord> responses_;
  std::map<PairId, int> counts_;
  std::set<std::string> keys_;
  std::map<std::string, std::set<PairId>> judged_;
};

inline nlohmann::json to_json(const StudyStatus& s) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : s.pairs) pairs.push_back({{"pair", {{"i", p.pair.i}, {"j", p.pair.j}}}, {"collected", p.collected}});
  return {{"study_id", s.study_id},
          {"target_trials_per_pair", s.target_trials_per_pair},
          {"responses", s.responses},
          {"completion", s.completion},
          {"pairs", pairs}};
}

inline void StudyState::write_snapshot_locked() const {
  const auto tmp = *dir_ / "status.json.tmp";
  {
    std::ofstream out(tmp);
    out << to_json(status_locked()).dump(2) << '\n';
  }
  std::error_code ec;
  std::filesystem::rename(tmp, *dir_ / "status.json", ec);
}

// Studies keyed by id; either registered in memory or discovered as
// subdirectories (containing plan.json) of a root directory.
class StudyRegistry {
 public:
  explicit StudyRegistry(StudyOptions opt = {}) : opt_(opt) {}

  void load_directory(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root)) throw ValidationError("not a directory: " + root.string());
    std::vector<std::filesystem::path> dirs;
    for (const auto& entry : std::filesystem::directory_iterator(root))
      if (entry.is_directory() && std::filesystem::exists(entry.path() / "plan.json")) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) add(StudyState::open(dir, opt_));
  }

  StudyState& add(std::unique_ptr<StudyState> study) {
    const std::string id = study->id();
    auto [it, inserted] = studies_.emplace(id, std::move(study));
    if (!inserted) throw ValidationError("duplicate study id '" + id + "'");
    return *it->second;
  }

  StudyState& get(const std::string& id) const {
    const auto it = studies_.find(id);
    if (it == studies_.end()) throw NotFoundError("unknown study '" + id + "'");
    return *it->second;
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& [id, s] : studies_) out.push_back(id);
    return out;
  }

 private:
  StudyOptions opt_;
  std::map<std::string, std::unique_ptr<StudyState>> studies_;
};

}  // namespace pspc
