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

// Domain types shared by every stage: stimuli and pairs, win-count and
// preference matrices, per-stimulus quality-metric features, trial records.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pspc/error.hpp"
#include "pspc/random.hpp"

namespace pspc {

inline constexpr std::size_t kNumMetrics = 7;
inline constexpr std::size_t kPairFeatureDim = 2 * kNumMetrics;

// Column order of features.csv.
inline constexpr std::array<std::string_view, kNumMetrics> kMetricNames = {
    "iwssim", "msssim", "fsim", "psnrhvs", "vif", "vmaf", "nlpd"};

struct StimulusId {
  std::string reference_id;
  int index = 0;

  auto operator<=>(const StimulusId&) const = default;
};

// Unordered pair within one reference, stored canonically (i < j).
struct PairId {
  std::string reference_id;
  int i = 0;
  int j = 1;

  PairId() = default;
  PairId(std::string ref, int a, int b) : reference_id(std::move(ref)) {
    if (a == b) throw ValidationError("pair of identical stimuli");
    if (a < 0 || b < 0) throw ValidationError("negative stimulus index");
    i = std::min(a, b);
    j = std::max(a, b);
  }

  StimulusId first() const { return {reference_id, i}; }
  StimulusId second() const { return {reference_id, j}; }
  bool contains(int index) const { return index == i || index == j; }
  std::string key() const { return std::to_string(i) + "-" + std::to_string(j); }

  auto operator<=>(const PairId&) const = default;
};

constexpr std::size_t pair_count(std::size_t n) { return n * (n - 1) / 2; }

// All n(n-1)/2 pairs in canonical order: (0,1), (0,2), ..., (n-2,n-1).
inline std::vector<PairId> all_pairs(const std::string& reference_id, int n) {
  std::vector<PairId> out;
  out.reserve(pair_count(static_cast<std::size_t>(std::max(n, 0))));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) out.emplace_back(reference_id, i, j);
  return out;
}

// Parses the "i-j" pair key used in JSON outputs.
inline PairId parse_pair_key(const std::string& reference_id, std::string_view key) {
  const auto dash = key.find('-');
  if (dash == std::string_view::npos || dash == 0 || dash + 1 == key.size())
    throw ValidationError("malformed pair key '" + std::string(key) + "'");
  try {
    return PairId(reference_id, std::stoi(std::string(key.substr(0, dash))),
                  std::stoi(std::string(key.substr(dash + 1))));
  } catch (const std::logic_error&) {
    throw ValidationError("malformed pair key '" + std::string(key) + "'");
  }
}

template <typename T>
class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t n, T fill = T{}) : n_(n), data_(n * n, fill) {}

  std::size_t size() const { return n_; }
  T& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  std::span<const T> data() const { return data_; }

  friend bool operator==(const SquareMatrix&, const SquareMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<T> data_;
};

// c(i, j) = number of trials in which i was preferred over j.
class CountMatrix : public SquareMatrix<std::int64_t> {
 public:
  using SquareMatrix::SquareMatrix;

  std::int64_t trials(std::size_t i, std::size_t j) const {
    return (*this)(i, j) + (*this)(j, i);
  }

  void validate() const {
    for (std::size_t i = 0; i < size(); ++i) {
      if ((*this)(i, i) != 0) throw ValidationError("count matrix diagonal must be zero");
      for (std::size_t j = 0; j < size(); ++j)
        if ((*this)(i, j) < 0) throw ValidationError("negative count in count matrix");
    }
  }

  CountMatrix transposed() const {
    CountMatrix t(size());
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = 0; j < size(); ++j) t(i, j) = (*this)(j, i);
    return t;
  }
};

// Pairwise comparison matrix of preference probabilities. Entries without
// data hold NaN (kNoData); the diagonal is zero.
class PreferenceMatrix : public SquareMatrix<double> {
 public:
  static constexpr double kNoData = std::numeric_limits<double>::quiet_NaN();

  PreferenceMatrix() = default;
  explicit PreferenceMatrix(std::size_t n) : SquareMatrix(n, kNoData) {
    for (std::size_t i = 0; i < n; ++i) (*this)(i, i) = 0.0;
  }

  bool has(std::size_t i, std::size_t j) const { return !std::isnan((*this)(i, j)); }

  // Sets p(i, j) = p and p(j, i) = 1 - p.
  void set_pair(std::size_t i, std::size_t j, double p) {
    (*this)(i, j) = p;
    (*this)(j, i) = 1.0 - p;
  }

  void clear_pair(std::size_t i, std::size_t j) {
    (*this)(i, j) = kNoData;
    (*this)(j, i) = kNoData;
  }

  bool complete() const {
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = 0; j < size(); ++j)
        if (i != j && !has(i, j)) return false;
    return true;
  }

  std::vector<PairId> missing_pairs(const std::string& reference_id = {}) const {
    std::vector<PairId> out;
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = i + 1; j < size(); ++j)
        if (!has(i, j) || !has(j, i))
          out.emplace_back(reference_id, static_cast<int>(i), static_cast<int>(j));
    return out;
  }

  // Bitwise comparison that treats NaN == NaN.
  friend bool operator==(const PreferenceMatrix& a, const PreferenceMatrix& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t k = 0; k < a.data().size(); ++k) {
      const double x = a.data()[k], y = b.data()[k];
      if (std::isnan(x) != std::isnan(y)) return false;
      if (!std::isnan(x) && x != y) return false;
    }
    return true;
  }
};

// PCM_ij = c_ij / (c_ij + c_ji); pairs never compared stay kNoData.
inline PreferenceMatrix build_pcm(const CountMatrix& counts) {
  const std::size_t n = counts.size();
  PreferenceMatrix pcm(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const std::int64_t total = counts.trials(i, j);
      if (total <= 0) continue;
      const double p = static_cast<double>(counts(i, j)) / static_cast<double>(total);
      pcm(i, j) = p;
      // Written as the complementary ratio so both directions are exact quotients.
      pcm(j, i) = static_cast<double>(counts(j, i)) / static_cast<double>(total);
    }
  }
  return pcm;
}

using FeatureVector = std::array<double, kNumMetrics>;
using PairFeatures = std::array<double, kPairFeatureDim>;

// Min-max scaler fitted on a training set. apply() clamps to [0, 1].
struct Normalizer {
  FeatureVector min{};
  FeatureVector max{};

  double scale(std::size_t k, double x) const {
    const double v = (x - min[k]) / (max[k] - min[k]);
    return std::clamp(v, 0.0, 1.0);
  }

  FeatureVector apply(const FeatureVector& raw) const {
    FeatureVector out{};
    for (std::size_t k = 0; k < kNumMetrics; ++k) out[k] = scale(k, raw[k]);
    return out;
  }

  friend bool operator==(const Normalizer&, const Normalizer&) = default;
};

// Per-stimulus metric values. `normalizer` is set once the table has been
// scaled and records the min/max that were used.
struct FeatureTable {
  std::map<StimulusId, FeatureVector> rows;
  std::optional<Normalizer> normalizer;

  const FeatureVector& at(const StimulusId& id) const {
    const auto it = rows.find(id);
    if (it == rows.end())
      throw ValidationError("missing features for stimulus " + id.reference_id + ":" +
                            std::to_string(id.index));
    return it->second;
  }

  std::vector<std::string> reference_ids() const {
    std::vector<std::string> out;
    for (const auto& [id, row] : rows)
      if (out.empty() || out.back() != id.reference_id) out.push_back(id.reference_id);
    return out;
  }

  // Number of stimuli listed for one reference.
  int stimulus_count(const std::string& reference_id) const {
    int count = 0;
    for (auto it = rows.lower_bound({reference_id, std::numeric_limits<int>::min()});
         it != rows.end() && it->first.reference_id == reference_id; ++it)
      ++count;
    return count;
  }

  FeatureTable subset(const std::vector<std::string>& reference_ids) const {
    FeatureTable out;
    out.normalizer = normalizer;
    for (const auto& [id, row] : rows)
      if (std::find(reference_ids.begin(), reference_ids.end(), id.reference_id) !=
          reference_ids.end())
        out.rows.emplace(id, row);
    return out;
  }

  friend bool operator==(const FeatureTable&, const FeatureTable&) = default;
};

// Fits min/max per metric over every row of `raw`.
inline Normalizer fit_normalizer(const FeatureTable& raw) {
  if (raw.rows.empty()) throw ValidationError("cannot fit normalizer on an empty feature table");
  Normalizer norm;
  norm.min.fill(std::numeric_limits<double>::infinity());
  norm.max.fill(-std::numeric_limits<double>::infinity());
  for (const auto& [id, row] : raw.rows) {
    for (std::size_t k = 0; k < kNumMetrics; ++k) {
      if (!std::isfinite(row[k]))
        throw ValidationError("non-finite value for feature '" + std::string(kMetricNames[k]) + "'");
      norm.min[k] = std::min(norm.min[k], row[k]);
      norm.max[k] = std::max(norm.max[k], row[k]);
    }
  }
  for (std::size_t k = 0; k < kNumMetrics; ++k)
    if (!(norm.max[k] > norm.min[k]))
      throw ValidationError("constant feature '" + std::string(kMetricNames[k]) + "'");
  return norm;
}

inline FeatureTable apply_normalizer(const FeatureTable& raw, const Normalizer& norm) {
  FeatureTable out;
  out.normalizer = norm;
  for (const auto& [id, row] : raw.rows) out.rows.emplace(id, norm.apply(row));
  return out;
}

// x_scaled = (x - x_min) / (x_max - x_min), with min/max fitted on `raw`.
inline FeatureTable normalize_features(const FeatureTable& raw) {
  return apply_normalizer(raw, fit_normalizer(raw));
}

// [f(i), f(j)] in canonical order.
inline PairFeatures pair_features(const FeatureTable& f, const PairId& pair) {
  const FeatureVector& a = f.at(pair.first());
  const FeatureVector& b = f.at(pair.second());
  PairFeatures out{};
  std::copy(a.begin(), a.end(), out.begin());
  std::copy(b.begin(), b.end(), out.begin() + kNumMetrics);
  return out;
}

// Exchanges the two stimulus halves: [f(i), f(j)] -> [f(j), f(i)].
inline PairFeatures swap_halves(const PairFeatures& x) {
  PairFeatures out{};
  std::copy(x.begin() + kNumMetrics, x.end(), out.begin());
  std::copy(x.begin(), x.begin() + kNumMetrics, out.begin() + kNumMetrics);
  return out;
}

struct TrialRecord {
  PairId pair;
  int winner = 0;
  std::string subject;
  std::int64_t timestamp_ms = 0;
  int presented_left = 0;
  std::string idempotency_key;
  std::int64_t response_time_ms = -1;  // -1 when not reported

  void validate() const {
    if (!pair.contains(winner)) throw ValidationError("winner is not a member of the pair");
    if (!pair.contains(presented_left))
      throw ValidationError("presented_left is not a member of the pair");
  }
};

inline double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Synthetic observer: trials_per_pair Bernoulli draws per pair with
// P(i beats j) = logistic(s_i - s_j).
inline CountMatrix simulate_counts(std::span<const double> true_scores, int trials_per_pair,
                                   RngSeed seed) {
  const std::size_t n = true_scores.size();
  if (n < 2) throw ValidationError("simulate_counts needs at least 2 stimuli");
  if (trials_per_pair < 1) throw ValidationError("trials_per_pair must be positive");
  Rng rng(seed);
  CountMatrix counts(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = logistic(true_scores[i] - true_scores[j]);
      for (int t = 0; t < trials_per_pair; ++t) {
        if (rng.bernoulli(p)) ++counts(i, j);
        else ++counts(j, i);
      }
    }
  }
  return counts;
}

}  // namespace pspc
