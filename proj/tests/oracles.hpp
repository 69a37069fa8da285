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

// Reference implementations used only by tests. They share no code with the
// library beyond plain data types: brute-force search, finite differences,
// SVD pseudo-inverses and textbook elimination.

#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

// sum_{i != j} w_ij * log(1 / (1 + exp(-(s_i - s_j))))
inline double bt_log_likelihood(const Matrix& w, const std::vector<double>& s) {
  double ll = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (i != j && w[i][j] != 0.0) ll -= w[i][j] * std::log1p(std::exp(-(s[i] - s[j])));
  return ll;
}

inline std::vector<double> centered(std::vector<double> s) {
  double mean = 0.0;
  for (double v : s) mean += v;
  mean /= static_cast<double>(s.size());
  for (double& v : s) v -= mean;
  return s;
}

// Maximizes the likelihood over s_0 = 0 with an exhaustive grid followed by
// a shrinking compass search. Returns the sum-zero representative.
inline std::vector<double> bt_grid_search(const Matrix& w, double range = 8.0, int points = 33) {
  const std::size_t n = w.size();
  const std::size_t free = n - 1;
  std::vector<double> best(n, 0.0), cur(n, 0.0);
  double best_ll = -INFINITY;
  std::vector<int> idx(free, 0);
  const double step = 2.0 * range / (points - 1);
  for (;;) {
    for (std::size_t k = 0; k < free; ++k) cur[k + 1] = -range + step * idx[k];
    const double ll = bt_log_likelihood(w, cur);
    if (ll > best_ll) best_ll = ll, best = cur;
    std::size_t k = 0;
    while (k < free && ++idx[k] == points) idx[k++] = 0;
    if (k == free) break;
  }
  double h = step;
  while (h > 1e-11) {
    bool moved = false;
    for (std::size_t k = 1; k < n; ++k) {
      for (double dir : {1.0, -1.0}) {
        std::vector<double> trial = best;
        trial[k] += dir * h;
        const double ll = bt_log_likelihood(w, trial);
        if (ll > best_ll) {
          best_ll = ll, best = trial, moved = true;
          break;
        }
      }
    }
    if (!moved) h *= 0.5;
  }
  return centered(best);
}

inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       const std::vector<double>& x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    std::vector<double> a = x, b = x;
    a[k] += h;
    b[k] -= h;
    g[k] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

// Jacobian of `grad` by central differences.
inline Matrix fd_hessian(const std::function<std::vector<double>(const std::vector<double>&)>& grad,
                         const std::vector<double>& x, double h = 1e-5) {
  const std::size_t n = x.size();
  Matrix hess(n, std::vector<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> a = x, b = x;
    a[k] += h;
    b[k] -= h;
    const auto ga = grad(a), gb = grad(b);
    for (std::size_t r = 0; r < n; ++r) hess[r][k] = (ga[r] - gb[r]) / (2.0 * h);
  }
  return hess;
}

// Moore-Penrose pseudo-inverse via SVD with a relative singular-value cutoff.
inline Eigen::MatrixXd pinv(const Eigen::MatrixXd& a, double rel_tol = 1e-10) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  Eigen::VectorXd inv(sv.size());
  for (Eigen::Index k = 0; k < sv.size(); ++k) inv[k] = sv[k] > rel_tol * sv[0] ? 1.0 / sv[k] : 0.0;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

// Negative Hessian of the BT log-likelihood written out from the model.
inline Eigen::MatrixXd bt_negative_hessian(const Matrix& w, const std::vector<double>& s) {
  const auto n = static_cast<Eigen::Index>(s.size());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double p = 1.0 / (1.0 + std::exp(-(s[i] - s[j])));
      const double c = (w[i][j] + w[j][i]) * p * (1.0 - p);
      h(i, j) -= c;
      h(i, i) += c;
    }
  return h;
}

// Gaussian elimination with partial pivoting.
inline std::vector<double> solve(Matrix a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t r = n; r-- > 0;) {
    double acc = b[r];
    for (std::size_t k = r + 1; k < n; ++k) acc -= a[r][k] * x[k];
    x[r] = acc / a[r][r];
  }
  return x;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  long double sx = 0, sy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) sx += x[k], sy += y[k];
  const long double mx = sx / n, my = sy / n;
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
    syy += (y[k] - my) * (y[k] - my);
  }
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

// Rank of x_k = 1 + #{x < x_k} + (#{x == x_k} - 1) / 2.
inline std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    double less = 0, equal = 0;
    for (double v : x) less += v < x[k], equal += v == x[k];
    r[k] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(ranks(x), ranks(y));
}

inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0, total = 0;
  for (std::size_t a = 0; a < scores.size(); ++a)
    for (std::size_t b = 0; b < scores.size(); ++b)
      if (labels[a] == 1 && labels[b] == 0) {
        total += 1;
        wins += scores[a] > scores[b] ? 1.0 : scores[a] == scores[b] ? 0.5 : 0.0;
      }
  return wins / total;
}

}  // namespace oracle
