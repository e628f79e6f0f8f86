// Copyright 2026 The divfact Authors. All Rights Reserved.
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

/*
 * I-divergence between zero-mean Gaussian laws,
 *
 *   D(S1 || S2) = 1/2 log(|S2| / |S1|) + 1/2 tr(S2^-1 S1) - n/2.
 *
 * With S1 = L1 L1^T, S2 = L2 L2^T and M = L2^-1 L1 (lower triangular),
 * tr(S2^-1 S1) = ||M||_F^2 and log(|S1|/|S2|) = sum_i log M_ii^2, so
 *
 *   2 D = sum_i (M_ii^2 - 1 - log M_ii^2) + sum_{i>j} M_ij^2,
 *
 * a sum of nonnegative terms. That is the form evaluated here.
 */

#pragma once

#include <cmath>
#include <string>

#include "divfact/matops.hpp"
#include "divfact/model.hpp"

namespace divfact {

inline constexpr double kDivergenceClamp = 1e-12;

/// Symmetric positive definite matrix with its Cholesky factor cached.
class CovarianceMatrix {
 public:
  CovarianceMatrix() = default;

  explicit CovarianceMatrix(const Eigen::Ref<const Matrix>& m, const std::string& what = "covariance")
      : CovarianceMatrix(SymMatrix(m), what) {}

  explicit CovarianceMatrix(SymMatrix m, const std::string& what = "covariance")
      : sym_(std::move(m)), chol_(sym_.matrix(), what) {}

  Index dim() const noexcept { return sym_.dim(); }
  const Matrix& matrix() const noexcept { return sym_.matrix(); }
  const SymMatrix& sym() const noexcept { return sym_; }
  const Cholesky& cholesky() const noexcept { return chol_; }
  double logdet() const { return chol_.logdet(); }

 private:
  SymMatrix sym_;
  Cholesky chol_;
};

namespace detail {

// x - 1 - log x for x > 0, accurate near x = 1.
inline double convex_gap(double x) {
  const double u = x - 1.0;
  return u - std::log1p(u);
}

inline double finish_divergence(double value, const char* where) {
  if (value < 0.0) {
    if (value < -kDivergenceClamp) {
      throw ConsistencyError(std::string(where) + ": divergence evaluated to " + std::to_string(value));
    }
    return 0.0;
  }
  return value;
}

}  // namespace detail

inline double i_divergence(const CovarianceMatrix& s1, const CovarianceMatrix& s2) {
  if (s1.dim() != s2.dim()) {
    throw DimensionError("i_divergence: dimensions " + std::to_string(s1.dim()) + " and " +
                         std::to_string(s2.dim()) + " differ");
  }
  const Matrix m = s2.cholesky().solve_lower(s1.cholesky().matrix_l());
  double total = 0.0;
  for (Index j = 0; j < m.cols(); ++j) {
    total += detail::convex_gap(m(j, j) * m(j, j));
    total += m.col(j).tail(m.rows() - j - 1).squaredNorm();
  }
  return detail::finish_divergence(0.5 * total, "i_divergence");
}

/// D(S0 || H H^T + diag(D)).
///
/// Only k x k systems are factored: the determinant uses
/// |H H^T + D| = |D| |I + H^T D^-1 H| and the trace uses the low-rank
/// inverse (H H^T + D)^-1 = D^-1 - D^-1 H (I + H^T D^-1 H)^-1 H^T D^-1.
inline double objective(const CovarianceMatrix& s0, const FactorModel& model) {
  const Index n = s0.dim();
  if (model.n() != n) {
    throw DimensionError("objective: model has n = " + std::to_string(model.n()) +
                         " but covariance has dimension " + std::to_string(n));
  }
  const Matrix& h = model.h();
  const Vector dinv = model.d().cwiseInverse();
  const Matrix dinv_h = dinv.asDiagonal() * h;
  Matrix inner = h.transpose() * dinv_h;
  inner.diagonal().array() += 1.0;
  const Cholesky inner_chol(inner, "I + H^T D^-1 H");

  const double logdet_model = model.d().array().log().sum() + inner_chol.logdet();
  // tr(D^-1 S0) - tr((I + H^T D^-1 H)^-1 (D^-1 H)^T S0 (D^-1 H))
  const Matrix projected = dinv_h.transpose() * s0.matrix() * dinv_h;
  const double trace = s0.matrix().diagonal().cwiseProduct(dinv).sum() -
                       inner_chol.solve(projected).trace();
  const double value = 0.5 * (logdet_model - s0.logdet() + trace - static_cast<double>(n));
  return detail::finish_divergence(value, "objective");
}

}  // namespace divfact
