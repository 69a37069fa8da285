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

// Ground-truth defer/predict labels from a complete comparison matrix.
//
// Starting from the pristine matrix, pairs are greedily "removed" (their
// entries replaced by a constant or by predictor output) and labeled predict
// for as long as the PLCC between pristine and current BT scores stays at or
// above eta. Whatever remains when the next removal would break the target is
// labeled defer.

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pspc/aggregate.hpp"
#include "pspc/core.hpp"
#include "pspc/correlation.hpp"
#include "pspc/error.hpp"
#include "pspc/parallel.hpp"
#include "pspc/random.hpp"

namespace pspc {

enum class Label { kPredict, kDefer };
enum class LabelingMethod { kRandom, kEntropy, kKld };

inline std::string_view to_string(Label l) { return l == Label::kDefer ? "defer" : "predict"; }

inline std::string_view to_string(LabelingMethod m) {
  switch (m) {
    case LabelingMethod::kRandom: return "random";
    case LabelingMethod::kEntropy: return "entropy";
    case LabelingMethod::kKld: return "kld";
  }
  return "?";
}

inline LabelingMethod parse_labeling_method(std::string_view s) {
  if (s == "random") return LabelingMethod::kRandom;
  if (s == "entropy") return LabelingMethod::kEntropy;
  if (s == "kld") return LabelingMethod::kKld;
  throw ValidationError("unknown labeling method '" + std::string(s) + "'");
}

inline constexpr double kMinEta = 0.97;

struct LabelingConfig {
  double eta = 0.99;
  LabelingMethod method = LabelingMethod::kKld;
  FillPolicy removal = ConstantFill{0.5};
  RngSeed seed{};

  void validate() const {
    if (!(eta >= kMinEta && eta <= 1.0))
      throw ValidationError("eta must lie in [0.97, 1], got " + std::to_string(eta));
  }
};

struct LabelingResult {
  std::string reference_id;
  std::map<PairId, Label> labels;
  std::vector<PairId> removal_order;
  std::vector<double> plcc_trajectory;   // PLCC after each committed removal
  std::vector<Correlation> srocc_trajectory;
  std::vector<PairId> skipped;           // pairs whose tentative BT fit failed
  double eta_used = 1.0;
  RngSeed seed{};

  std::size_t defer_count() const {
    std::size_t k = 0;
    for (const auto& [pair, label] : labels) k += label == Label::kDefer;
    return k;
  }
};

// Binary entropy in nats with 0 log 0 = 0.
inline double pair_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("probability outside [0, 1]");
  auto term = [](double x) { return x > 0.0 ? -x * std::log(x) : 0.0; };
  return term(p) + term(1.0 - p);
}

// Diagonal-Gaussian approximation of the divergence between the prior score
// distribution (pi_gt, sigma_gt) and a posterior (pi_p, sigma_p), with d = n:
//
//   sum log(sp/sgt) - n + sum sgt/sp + sum (pi_gt - pi_p)^2 / sp
inline double approx_kld(std::span<const double> pi_gt, std::span<const double> sigma_gt,
                         std::span<const double> pi_p, std::span<const double> sigma_p) {
  const std::size_t n = pi_gt.size();
  if (sigma_gt.size() != n || pi_p.size() != n || sigma_p.size() != n)
    throw ValidationError("approx_kld inputs differ in length");
  double kld = -static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(sigma_gt[i] > 0.0) || !(sigma_p[i] > 0.0))
      throw ValidationError("approx_kld needs strictly positive standard deviations");
    const double diff = pi_gt[i] - pi_p[i];
    kld += std::log(sigma_p[i] / sigma_gt[i]) + sigma_gt[i] / sigma_p[i] + diff * diff / sigma_p[i];
  }
  return kld;
}

namespace detail {

struct TentativeFit {
  bool ok = false;
  ScoreEstimate est;
  double kld = std::numeric_limits<double>::infinity();
};

inline double removal_value(const FillPolicy& policy, const PairId& pair) {
  if (const auto* c = std::get_if<ConstantFill>(&policy)) return c->value;
  const auto& map = std::get<PredictionFill>(policy).predictions;
  const auto it = map.find(pair);
  if (it == map.end()) throw ValidationError("removal policy has no prediction for pair " + pair.key());
  return it->second;
}

inline TentativeFit fit_with_removal(const PreferenceMatrix& current, const PairId& pair, double value,
                                     bool with_covariance) {
  TentativeFit out;
  PreferenceMatrix trial = current;
  trial.set_pair(static_cast<std::size_t>(pair.i), static_cast<std::size_t>(pair.j), value);
  try {
    FitOptions opt;
    opt.with_covariance = with_covariance;
    out.est = fit_bt(trial, opt);
    out.ok = out.est.converged;
  } catch (const std::exception&) {
    out.ok = false;
  }
  return out;
}

// Shared engine for label_pairs (eta set) and labeling curves (no stopping).
inline LabelingResult run_labeling(const PreferenceMatrix& pcm_gt, LabelingMethod method,
                                   const FillPolicy& removal, RngSeed seed,
                                   std::optional<double> eta, const std::string& reference_id) {
  if (!pcm_gt.complete()) throw ValidationError("labeling needs a complete comparison matrix");
  const int n = static_cast<int>(pcm_gt.size());
  const std::vector<PairId> pairs = all_pairs(reference_id, n);
  for (const PairId& pair : pairs) {
    const double v = removal_value(removal, pair);
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("removal value outside [0, 1] for pair " + pair.key());
  }

  const ScoreEstimate prior = fit_bt(pcm_gt);
  if (!prior.converged) throw RuntimeError("BT fit of the pristine matrix did not converge");

  LabelingResult result;
  result.reference_id = reference_id;
  result.eta_used = eta.value_or(-std::numeric_limits<double>::infinity());
  result.seed = seed;

  Rng rng(seed);
  PreferenceMatrix current = pcm_gt;
  std::vector<char> open(pairs.size(), 1);  // not yet removed or skipped

  for (;;) {
    std::vector<std::size_t> candidates;
    for (std::size_t k = 0; k < pairs.size(); ++k)
      if (open[k]) candidates.push_back(k);
    if (candidates.empty()) break;

    std::size_t chosen = pairs.size();
    TentativeFit chosen_fit;
    if (method == LabelingMethod::kKld) {
      std::vector<TentativeFit> fits(candidates.size());
      parallel_for(candidates.size(), [&](std::size_t c) {
        const PairId& pair = pairs[candidates[c]];
        fits[c] = fit_with_removal(current, pair, removal_value(removal, pair), true);
        if (fits[c].ok) {
          try {
            fits[c].kld = approx_kld(prior.pi, prior.sigma_hat, fits[c].est.pi, fits[c].est.sigma_hat);
          } catch (const std::exception&) {
            fits[c].ok = false;
          }
        }
      });
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (!fits[c].ok) {
          result.skipped.push_back(pairs[candidates[c]]);
          open[candidates[c]] = 0;
          continue;
        }
        // Strict comparison keeps the first pair in canonical order on ties.
        if (fits[c].kld < best) {
          best = fits[c].kld;
          chosen = candidates[c];
          chosen_fit = std::move(fits[c]);
        }
      }
      if (chosen == pairs.size()) break;
    } else {
      if (method == LabelingMethod::kRandom) {
        chosen = candidates[rng.below(candidates.size())];
      } else {
        double best = -1.0;
        for (std::size_t k : candidates) {
          const double h = pair_entropy(pcm_gt(static_cast<std::size_t>(pairs[k].i),
                                               static_cast<std::size_t>(pairs[k].j)));
          if (h > best) {
            best = h;
            chosen = k;
          }
        }
      }
      chosen_fit = fit_with_removal(current, pairs[chosen], removal_value(removal, pairs[chosen]), false);
      if (!chosen_fit.ok) {
        result.skipped.push_back(pairs[chosen]);
        open[chosen] = 0;
        continue;
      }
    }

    const Correlation r = plcc(prior.s_hat, chosen_fit.est.s_hat);
    if (eta && (!r || *r < *eta)) break;

    const PairId& pair = pairs[chosen];
    current.set_pair(static_cast<std::size_t>(pair.i), static_cast<std::size_t>(pair.j),
                     removal_value(removal, pair));
    open[chosen] = 0;
    result.removal_order.push_back(pair);
    result.plcc_trajectory.push_back(r.value_or(std::numeric_limits<double>::quiet_NaN()));
    result.srocc_trajectory.push_back(srocc(prior.s_hat, chosen_fit.est.s_hat));
  }

  for (const PairId& pair : pairs) result.labels[pair] = Label::kDefer;
  for (const PairId& pair : result.removal_order) result.labels[pair] = Label::kPredict;
  return result;
}

}  // namespace detail

// Greedy labeling with the PLCC stopping rule. Every committed state keeps
// PLCC(pristine scores, current scores) >= cfg.eta.
inline LabelingResult label_pairs(const PreferenceMatrix& pcm_gt, const LabelingConfig& cfg,
                                  const std::string& reference_id = {}) {
  cfg.validate();
  return detail::run_labeling(pcm_gt, cfg.method, cfg.removal, cfg.seed, cfg.eta, reference_id);
}

struct CurvePoint {
  std::size_t removed = 0;
  Correlation plcc;
  Correlation srocc;
};

// PLCC/SROCC after every removal with no stopping rule. The random method
// reports per-step means over `repeats` seeded runs; undefined correlations
// are excluded from the mean and a step with none defined stays empty.
inline std::vector<CurvePoint> labeling_curve(const PreferenceMatrix& pcm_gt, LabelingMethod method,
                                              const FillPolicy& removal, int repeats, RngSeed seed,
                                              const std::string& reference_id = {}) {
  if (repeats < 1) throw ValidationError("repeats must be at least 1");
  const int runs = method == LabelingMethod::kRandom ? repeats : 1;
  std::vector<LabelingResult> results(static_cast<std::size_t>(runs));
  parallel_for(results.size(), [&](std::size_t r) {
    results[r] = detail::run_labeling(pcm_gt, method, removal, derive_seed(seed, r), std::nullopt, reference_id);
  });

  std::size_t longest = 0;
  for (const auto& res : results) longest = std::max(longest, res.removal_order.size());

  std::vector<CurvePoint> curve(longest + 1);
  curve[0] = {0, 1.0, 1.0};
  for (std::size_t step = 1; step <= longest; ++step) {
    double sum_p = 0.0, sum_s = 0.0;
    int count_p = 0, count_s = 0;
    for (const auto& res : results) {
      if (step > res.removal_order.size()) continue;
      const double p = res.plcc_trajectory[step - 1];
      if (!std::isnan(p)) sum_p += p, ++count_p;
      if (const auto& s = res.srocc_trajectory[step - 1]) sum_s += *s, ++count_s;
    }
    curve[step].removed = step;
    if (count_p > 0) curve[step].plcc = sum_p / count_p;
    if (count_s > 0) curve[step].srocc = sum_s / count_s;
  }
  return curve;
}

}  // namespace pspc
