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

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "pspc/core.hpp"
#include "pspc/error.hpp"

namespace pspc::models {

inline double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma) {
  double d2 = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    d2 += d * d;
  }
  return std::exp(-gamma * d2);
}

// f(x) = offset + sum_k alpha_k exp(-gamma |x - x_k|^2)
struct KernelRidge {
  double gamma = 1.0;
  double lambda = 1e-2;
  double offset = 0.5;
  std::vector<PairFeatures> support;
  std::vector<double> alpha;

  double evaluate(std::span<const double> x) const {
    double y = offset;
    for (std::size_t k = 0; k < support.size(); ++k) y += alpha[k] * rbf_kernel(x, support[k], gamma);
    return y;
  }

  friend bool operator==(const KernelRidge&, const KernelRidge&) = default;
};

inline Eigen::MatrixXd rbf_gram(std::span<const PairFeatures> x, double gamma) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    k(a, a) = 1.0;
    for (Eigen::Index b = a + 1; b < n; ++b)
      k(a, b) = k(b, a) = rbf_kernel(x[static_cast<std::size_t>(a)], x[static_cast<std::size_t>(b)], gamma);
  }
  return k;
}

// Solves (K + lambda I) alpha = y - offset in closed form.
inline KernelRidge fit_kernel_ridge(std::span<const PairFeatures> x, std::span<const double> y, double gamma,
                                    double lambda, double offset = 0.5) {
  if (x.size() != y.size() || x.empty()) throw ValidationError("kernel ridge needs matching non-empty inputs");
  if (!(gamma > 0.0) || !(lambda >= 0.0)) throw ValidationError("kernel ridge needs gamma > 0 and lambda >= 0");
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd system = rbf_gram(x, gamma);
  system.diagonal().array() += lambda;
  Eigen::VectorXd rhs(n);
  for (Eigen::Index k = 0; k < n; ++k) rhs[k] = y[static_cast<std::size_t>(k)] - offset;

  Eigen::LLT<Eigen::MatrixXd> llt(system);
  if (llt.info() != Eigen::Success) throw ValidationError("singular kernel system after regularization");
  const Eigen::VectorXd alpha = llt.solve(rhs);
  if (!alpha.allFinite()) throw ValidationError("singular kernel system after regularization");

  KernelRidge model;
  model.gamma = gamma;
  model.lambda = lambda;
  model.offset = offset;
  model.support.assign(x.begin(), x.end());
  model.alpha.assign(alpha.data(), alpha.data() + n);
  return model;
}

}  // namespace pspc::models
