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

// Bradley-Terry preference aggregation.
//
// With latent scores s and P(i > j) = logistic(s_i - s_j), the log-likelihood
// of a comparison matrix is
//
//   l(s) = sum_{i<j} W_ij log P(i > j) + W_ji log (1 - P(i > j))
//
// where the exponents W are either preference probabilities (PCM entries) or
// raw win counts. The negative Hessian of l is a weighted graph Laplacian
//
//   L_ij = -(W_ij + W_ji) p_ij (1 - p_ij),  L_ii = -sum_j L_ij
//
// which is singular along the all-ones direction. Scores are kept in the
// sum-zero gauge, where (L + 11'/n) is invertible for a connected design, and
// Newton steps and the covariance pseudo-inverse both go through it.

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "pspc/core.hpp"
#include "pspc/error.hpp"

namespace pspc {

struct ScoreEstimate {
  std::vector<double> s_hat;      // latent scores, sum zero
  std::vector<double> pi;         // BT weights exp(s_i) / sum_j exp(s_j)
  std::vector<double> sigma_hat;  // empty unless covariance was computed
  bool converged = false;
  int iterations = 0;
  double final_grad_norm = 0.0;
};

enum class Exponent { kProbability, kCounts };

struct FitOptions {
  double tol = 1e-8;
  int max_iter = 1000;
  std::optional<std::vector<double>> initial;
  bool with_covariance = true;
};

inline double bt_probability(double s_i, double s_j) { return logistic(s_i - s_j); }

namespace detail {

// log(logistic(x)) without overflow.
inline double log_logistic(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline Eigen::MatrixXd to_eigen(const SquareMatrix<double>& m) {
  const auto n = static_cast<Eigen::Index>(m.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = m(i, j);
  return out;
}

inline void require_same_size(const Eigen::MatrixXd& w, std::size_t n) {
  if (static_cast<std::size_t>(w.rows()) != n || w.rows() != w.cols())
    throw ValidationError("score vector and comparison matrix sizes differ");
}

inline void center(Eigen::VectorXd& s) { s.array() -= s.mean(); }

}  // namespace detail

// Exponent matrix from a preference matrix. Diagonal ignored; no-data entries
// are rejected.
inline Eigen::MatrixXd exponent_weights(const PreferenceMatrix& pcm) {
  for (std::size_t i = 0; i < pcm.size(); ++i)
    for (std::size_t j = 0; j < pcm.size(); ++j)
      if (i != j && !pcm.has(i, j))
        throw ValidationError("preference matrix has no-data entries; fill them first");
  Eigen::MatrixXd w = detail::to_eigen(pcm);
  w.diagonal().setZero();
  return w;
}

inline Eigen::MatrixXd exponent_weights(const CountMatrix& counts) {
  const auto n = static_cast<Eigen::Index>(counts.size());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) w(i, j) = static_cast<double>(counts(i, j));
  return w;
}

// Probabilities as exponents, or the same probabilities scaled by the trial
// count of each pair.
inline Eigen::MatrixXd exponent_weights(const PreferenceMatrix& pcm, const CountMatrix& counts,
                                        Exponent mode) {
  Eigen::MatrixXd w = exponent_weights(pcm);
  if (mode == Exponent::kCounts) {
    if (counts.size() != pcm.size()) throw ValidationError("count and preference sizes differ");
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        w(i, j) *= static_cast<double>(counts.trials(i, j));
  }
  return w;
}

inline double log_likelihood(const Eigen::MatrixXd& w, const Eigen::VectorXd& s) {
  detail::require_same_size(w, static_cast<std::size_t>(s.size()));
  double ll = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    for (Eigen::Index j = i + 1; j < s.size(); ++j) {
      const double d = s[i] - s[j];
      if (w(i, j) != 0.0) ll += w(i, j) * detail::log_logistic(d);
      if (w(j, i) != 0.0) ll += w(j, i) * detail::log_logistic(-d);
    }
  }
  return ll;
}

inline double log_likelihood(const PreferenceMatrix& pcm, std::span<const double> s) {
  return log_likelihood(exponent_weights(pcm),
                        Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size())));
}

inline Eigen::VectorXd log_likelihood_gradient(const Eigen::MatrixXd& w, const Eigen::VectorXd& s) {
  detail::require_same_size(w, static_cast<std::size_t>(s.size()));
  Eigen::VectorXd g = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    for (Eigen::Index j = i + 1; j < s.size(); ++j) {
      const double p = logistic(s[i] - s[j]);
      const double dij = w(i, j) - (w(i, j) + w(j, i)) * p;
      g[i] += dij;
      g[j] -= dij;
    }
  }
  return g;
}

inline Eigen::MatrixXd log_likelihood_hessian(const Eigen::MatrixXd& w, const Eigen::VectorXd& s) {
  detail::require_same_size(w, static_cast<std::size_t>(s.size()));
  const Eigen::Index n = s.size();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double p = logistic(s[i] - s[j]);
      const double c = (w(i, j) + w(j, i)) * p * (1.0 - p);
      h(i, j) += c;
      h(j, i) += c;
      h(i, i) -= c;
      h(j, j) -= c;
    }
  }
  return h;
}

// True when the graph with an edge wherever W_ij + W_ji > 0 is connected.
inline bool design_connected(const Eigen::MatrixXd& w) {
  const Eigen::Index n = w.rows();
  if (n == 0) return false;
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<Eigen::Index> stack{0};
  seen[0] = 1;
  Eigen::Index visited = 1;
  while (!stack.empty()) {
    const Eigen::Index u = stack.back();
    stack.pop_back();
    for (Eigen::Index v = 0; v < n; ++v) {
      if (!seen[static_cast<std::size_t>(v)] && w(u, v) + w(v, u) > 0) {
        seen[static_cast<std::size_t>(v)] = 1;
        ++visited;
        stack.push_back(v);
      }
    }
  }
  return visited == n;
}

// Moore-Penrose pseudo-inverse of the negative Hessian at s, for a connected
// design with finite scores: (L + 11'/n)^-1 - 11'/n.
inline Eigen::MatrixXd bt_covariance_matrix(const Eigen::MatrixXd& w, const Eigen::VectorXd& s) {
  const Eigen::Index n = s.size();
  const Eigen::MatrixXd lap = -log_likelihood_hessian(w, s);
  if (!lap.allFinite()) throw RuntimeError("non-finite Hessian entries");
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  Eigen::LLT<Eigen::MatrixXd> llt(lap + ones);
  if (llt.info() != Eigen::Success)
    throw RuntimeError("negative Hessian has a null space beyond the gauge direction");
  Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(n, n)) - ones;
  return 0.5 * (cov + cov.transpose());
}

inline std::vector<double> sigma_from_covariance(const Eigen::MatrixXd& cov) {
  std::vector<double> sigma(static_cast<std::size_t>(cov.rows()));
  for (Eigen::Index i = 0; i < cov.rows(); ++i) {
    const double v = cov(i, i);
    if (!std::isfinite(v) || v <= 0.0) throw RuntimeError("non-positive score variance");
    sigma[static_cast<std::size_t>(i)] = std::sqrt(v);
  }
  return sigma;
}

inline std::vector<double> bt_covariance(const Eigen::MatrixXd& w, const ScoreEstimate& est) {
  const Eigen::VectorXd s =
      Eigen::Map<const Eigen::VectorXd>(est.s_hat.data(), static_cast<Eigen::Index>(est.s_hat.size()));
  return sigma_from_covariance(bt_covariance_matrix(w, s));
}

inline std::vector<double> bt_covariance(const PreferenceMatrix& pcm, const ScoreEstimate& est) {
  return bt_covariance(exponent_weights(pcm), est);
}

inline std::vector<double> bt_weights(const std::vector<double>& s) {
  if (s.empty()) return {};
  const double top = *std::max_element(s.begin(), s.end());
  std::vector<double> pi(s.size());
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) total += pi[i] = std::exp(s[i] - top);
  for (double& v : pi) v /= total;
  return pi;
}

// Damped Newton ascent in the sum-zero gauge. Falls back to a gradient step
// when the Newton direction fails to increase the likelihood.
inline ScoreEstimate fit_bt(const Eigen::MatrixXd& w, const FitOptions& opt = {}) {
  const Eigen::Index n = w.rows();
  if (n < 2 || w.cols() != n) throw ValidationError("fit_bt needs a square matrix with n >= 2");
  if (!w.allFinite() || (w.array() < 0).any())
    throw ValidationError("likelihood exponents must be finite and non-negative");
  if (!design_connected(w)) throw ValidationError("disconnected design");

  Eigen::VectorXd s = Eigen::VectorXd::Zero(n);
  if (opt.initial) {
    if (static_cast<Eigen::Index>(opt.initial->size()) != n)
      throw ValidationError("initial guess has the wrong length");
    s = Eigen::Map<const Eigen::VectorXd>(opt.initial->data(), n);
  }
  detail::center(s);

  const Eigen::MatrixXd ones = Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  ScoreEstimate est;
  double ll = log_likelihood(w, s);
  Eigen::VectorXd g = log_likelihood_gradient(w, s);
  int iter = 0;
  for (; iter < opt.max_iter; ++iter) {
    if (g.lpNorm<Eigen::Infinity>() < opt.tol) break;

    // A full step may leave the likelihood unchanged up to rounding near the
    // optimum; shorter steps must strictly increase it.
    const double slack = 1e-13 * (1.0 + std::abs(ll));
    auto try_direction = [&](const Eigen::VectorXd& dir) {
      double t = 1.0;
      for (int halvings = 0; halvings < 60; ++halvings, t *= 0.5) {
        Eigen::VectorXd cand = s + t * dir;
        detail::center(cand);
        const double cand_ll = log_likelihood(w, cand);
        if (std::isfinite(cand_ll) && (cand_ll > ll || (halvings == 0 && cand_ll >= ll - slack))) {
          s = std::move(cand);
          ll = cand_ll;
          return true;
        }
      }
      return false;
    };

    Eigen::LLT<Eigen::MatrixXd> llt(-log_likelihood_hessian(w, s) + ones);
    bool moved = false;
    if (llt.info() == Eigen::Success) {
      const Eigen::VectorXd step = llt.solve(g);
      moved = step.allFinite() && try_direction(step);
    }
    if (!moved) moved = try_direction(g);
    if (!moved) break;  // no ascent direction left at machine precision
    g = log_likelihood_gradient(w, s);
  }

  est.iterations = iter;
  est.final_grad_norm = g.lpNorm<Eigen::Infinity>();
  est.converged = est.final_grad_norm < opt.tol;
  est.s_hat.assign(s.data(), s.data() + n);
  est.pi = bt_weights(est.s_hat);
  if (opt.with_covariance && est.converged) est.sigma_hat = sigma_from_covariance(bt_covariance_matrix(w, s));
  return est;
}

inline ScoreEstimate fit_bt(const PreferenceMatrix& pcm, const FitOptions& opt = {}) {
  return fit_bt(exponent_weights(pcm), opt);
}

inline ScoreEstimate fit_bt(const PreferenceMatrix& pcm, double tol, int max_iter) {
  FitOptions opt;
  opt.tol = tol;
  opt.max_iter = max_iter;
  return fit_bt(pcm, opt);
}

struct ConstantFill {
  double value = 0.5;
};

// Keyed by canonical pair; the value is P(i preferred over j) for i < j.
struct PredictionFill {
  std::map<PairId, double> predictions;
};

using FillPolicy = std::variant<ConstantFill, PredictionFill>;

// Replaces every no-data pair according to the policy. Filled pairs are
// complementary.
inline PreferenceMatrix fill_sentinels(const PreferenceMatrix& pcm, const FillPolicy& policy,
                                       const std::string& reference_id = {}) {
  PreferenceMatrix out = pcm;
  for (const PairId& pair : pcm.missing_pairs(reference_id)) {
    double p = 0.0;
    if (const auto* c = std::get_if<ConstantFill>(&policy)) {
      p = c->value;
    } else {
      const auto& map = std::get<PredictionFill>(policy).predictions;
      const auto it = map.find(pair);
      if (it == map.end()) throw ValidationError("no prediction for no-data pair " + pair.key());
      p = it->second;
    }
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("fill value outside [0, 1] for pair " + pair.key());
    out.set_pair(static_cast<std::size_t>(pair.i), static_cast<std::size_t>(pair.j), p);
  }
  return out;
}

}  // namespace pspc
