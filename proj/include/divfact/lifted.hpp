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
 * Lifted covariances of (Y, X) with Y observed (n) and X latent (k):
 *
 *   Sigma = | S11  S12 |     S11: n x n,  S22: k x k.
 *           | S21  S22 |
 *
 * Two families matter. The data slice fixes S11 = S0. The model family is
 *
 *   Sigma(H, D, Q) = | H H^T + D   H Q   |
 *                    | (H Q)^T     Q^T Q |.
 *
 * Minimizing D(Sigma' || Sigma) over the data slice keeps the conditional
 * law of X given Y and swaps the marginal of Y for N(0, S0). Minimizing
 * D(Sigma || Sigma(H, D, Q)) over the model family keeps S12 and S22 and
 * replaces S11 by S12 S22^-1 S21 + Delta(S11 - S12 S22^-1 S21). Both
 * minimizers satisfy a Pythagorean identity, checked by pythagoras_*.
 */

#pragma once

#include <string>
#include <utility>

#include "divfact/divergence.hpp"
#include "divfact/matops.hpp"
#include "divfact/model.hpp"

namespace divfact {

/// Positive definite (n + k) x (n + k) covariance with named blocks.
class LiftedCovariance {
 public:
  LiftedCovariance() = default;

  LiftedCovariance(const Eigen::Ref<const Matrix>& whole, Index n, Index k)
      : n_(n), k_(k), whole_(checked(whole, n, k), "lifted covariance") {}

  static LiftedCovariance from_blocks(const Eigen::Ref<const Matrix>& s11, const Eigen::Ref<const Matrix>& s12,
                                      const Eigen::Ref<const Matrix>& s22) {
    const Index n = s11.rows();
    const Index k = s22.rows();
    if (s11.cols() != n || s22.cols() != k || s12.rows() != n || s12.cols() != k) {
      throw DimensionError("LiftedCovariance: inconsistent block shapes");
    }
    Matrix whole(n + k, n + k);
    whole.topLeftCorner(n, n) = s11;
    whole.topRightCorner(n, k) = s12;
    whole.bottomLeftCorner(k, n) = s12.transpose();
    whole.bottomRightCorner(k, k) = s22;
    return LiftedCovariance(whole, n, k);
  }

  Index n() const noexcept { return n_; }
  Index k() const noexcept { return k_; }
  const CovarianceMatrix& whole() const noexcept { return whole_; }
  const Matrix& matrix() const noexcept { return whole_.matrix(); }

  Matrix s11() const { return matrix().topLeftCorner(n_, n_); }
  Matrix s12() const { return matrix().topRightCorner(n_, k_); }
  Matrix s21() const { return matrix().bottomLeftCorner(k_, n_); }
  Matrix s22() const { return matrix().bottomRightCorner(k_, k_); }

 private:
  static SymMatrix checked(const Eigen::Ref<const Matrix>& whole, Index n, Index k) {
    if (n < 1 || k < 1) throw DimensionError("LiftedCovariance: n and k must be >= 1");
    if (whole.rows() != n + k || whole.cols() != n + k) {
      throw DimensionError("LiftedCovariance: expected a " + std::to_string(n + k) + "x" +
                           std::to_string(n + k) + " matrix");
    }
    return SymMatrix(whole);
  }

  Index n_ = 0;
  Index k_ = 0;
  CovarianceMatrix whole_;
};

/// D(A || B) for lifted covariances of the same shape.
inline double i_divergence(const LiftedCovariance& a, const LiftedCovariance& b) {
  if (a.n() != b.n() || a.k() != b.k()) throw DimensionError("i_divergence: lifted shapes differ");
  return i_divergence(a.whole(), b.whole());
}

/// Sigma(H, D, Q). Requires Q.
inline LiftedCovariance assemble_lifted(const FactorModel& model) {
  if (!model.has_q()) throw InputError("assemble_lifted: model has no mixing factor Q");
  return LiftedCovariance::from_blocks(model.covariance(), model.k_factor(), model.p_factor());
}

/// argmin of D(Sigma' || sigma) over Sigma' with upper-left block s0.
inline LiftedCovariance first_partial_min(const CovarianceMatrix& s0, const LiftedCovariance& sigma) {
  const Index n = sigma.n();
  const Index k = sigma.k();
  if (s0.dim() != n) {
    throw DimensionError("first_partial_min: covariance has dimension " + std::to_string(s0.dim()) +
                         " but the lifted block is " + std::to_string(n));
  }
  const Matrix s12 = sigma.s12();
  const Cholesky s11(sigma.s11(), "Sigma_11");
  const Matrix w = s11.solve(s12);  // S11^-1 S12
  const Matrix s0_w = s0.matrix() * w;

  Matrix whole(n + k, n + k);
  whole.topLeftCorner(n, n) = s0.matrix();
  whole.topRightCorner(n, k) = s0_w;
  whole.bottomLeftCorner(k, n) = s0_w.transpose();
  // S22 - S21 S11^-1 (S11 - S0) S11^-1 S12 = S22 - S21 W + W^T S0 W
  Matrix s22 = sigma.s22() - s12.transpose() * w + w.transpose() * s0_w;
  whole.bottomRightCorner(k, k) = 0.5 * (s22 + s22.transpose());
  return LiftedCovariance(whole, n, k);
}

struct SecondMinResult {
  FactorModel model;  // (H*, D*, Q*), Q* upper triangular
  LiftedCovariance sigma;
};

/// argmin of D(sigma || Sigma(H, D, Q)) over the model family.
inline SecondMinResult second_partial_min(const LiftedCovariance& sigma) {
  const Index n = sigma.n();
  const Index k = sigma.k();
  const Cholesky s22(sigma.s22(), "Sigma_22");
  // Q* = L^T, so H* = S12 L^-T, i.e. H*^T = L^-1 S21.
  const Matrix h = s22.solve_lower(sigma.s21()).transpose();
  const Vector d = sigma.matrix().diagonal().head(n) - h.rowwise().squaredNorm();
  for (Index i = 0; i < n; ++i) {
    if (!(d(i) > 0.0)) {
      throw DefinitenessError("second_partial_min: conditional variance of Y given X", i, d(i));
    }
  }
  FactorModel model(h, d, s22.matrix_l().transpose());

  Matrix whole = sigma.matrix();
  Matrix top = h * h.transpose();
  top.diagonal() += d;
  whole.topLeftCorner(n, n) = 0.5 * (top + top.transpose());
  return {std::move(model), LiftedCovariance(whole, n, k)};
}

/// |D(S'||S) - D(S'||S*) - D(S*||S)|.
inline double pythagoras_first(const LiftedCovariance& sprime, const LiftedCovariance& sstar,
                               const LiftedCovariance& sigma) {
  return std::abs(i_divergence(sprime, sigma) - i_divergence(sprime, sstar) - i_divergence(sstar, sigma));
}

/// |D(S||S(H,D,Q)) - D(S||S1*) - D(S1*||S(H,D,Q))|.
inline double pythagoras_second(const LiftedCovariance& sigma, const LiftedCovariance& sstar1,
                                const FactorModel& candidate) {
  const LiftedCovariance cand = assemble_lifted(candidate);
  if (cand.n() != sigma.n() || cand.k() != sigma.k()) {
    throw DimensionError("pythagoras_second: candidate shape differs from Sigma");
  }
  return std::abs(i_divergence(sigma, cand) - i_divergence(sigma, sstar1) - i_divergence(sstar1, cand));
}

/// Witness check that S0 = H H^T + D to 1e-10 relative max-abs accuracy.
/// A false result says nothing about whether some other witness exists.
inline bool exact_fa_diagnostic(const CovarianceMatrix& s0, const FactorModel& model) {
  if (model.n() != s0.dim()) throw DimensionError("exact_fa_diagnostic: model and covariance sizes differ");
  return max_abs(s0.matrix() - model.covariance()) < 1e-10 * max_abs(s0.matrix());
}

}  // namespace divfact
