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

#pragma once

#include <optional>
#include <string>
#include <utility>

#include "divfact/matops.hpp"

namespace divfact {

/// Factor model Y = H X + e with Cov(Y) = H H^T + diag(D).
///
/// The optional k x k mixing factor Q parametrizes the latent block of the
/// lifted covariance; when absent the latent covariance is taken as I.
class FactorModel {
 public:
  FactorModel() = default;

  FactorModel(Matrix h, Vector d, std::optional<Matrix> q = std::nullopt)
      : h_(std::move(h)), d_(std::move(d)), q_(std::move(q)) {
    validate();
  }

  Index n() const noexcept { return h_.rows(); }
  Index k() const noexcept { return h_.cols(); }
  const Matrix& h() const noexcept { return h_; }
  const Vector& d() const noexcept { return d_; }
  const std::optional<Matrix>& q() const noexcept { return q_; }
  bool has_q() const noexcept { return q_.has_value(); }

  /// H H^T + diag(D).
  Matrix covariance() const {
    Matrix c = h_ * h_.transpose();
    c.diagonal() += d_;
    return 0.5 * (c + c.transpose());
  }

  /// K = H Q (H itself when Q is absent).
  Matrix k_factor() const { return q_ ? Matrix(h_ * *q_) : h_; }

  /// P = Q^T Q (identity when Q is absent).
  Matrix p_factor() const {
    if (!q_) return Matrix::Identity(k(), k());
    Matrix p = q_->transpose() * *q_;
    return 0.5 * (p + p.transpose());
  }

  FactorModel without_q() const { return FactorModel(h_, d_); }
  FactorModel with_q(Matrix q) const { return FactorModel(h_, d_, std::move(q)); }

 private:
  void validate() const {
    if (h_.rows() < 1 || h_.cols() < 1) throw DimensionError("FactorModel: H must be non-empty");
    if (d_.size() != h_.rows()) {
      throw DimensionError("FactorModel: D has length " + std::to_string(d_.size()) + " but H has " +
                           std::to_string(h_.rows()) + " rows");
    }
    for (Index i = 0; i < d_.size(); ++i) {
      if (!(d_(i) > 0.0) || !std::isfinite(d_(i))) {
        throw InputError("FactorModel: D(" + std::to_string(i) + ") = " + std::to_string(d_(i)) +
                         " is not a positive finite number");
      }
    }
    if (!h_.allFinite()) throw InputError("FactorModel: H has non-finite entries");
    if (q_) {
      if (q_->rows() != h_.cols() || q_->cols() != h_.cols()) {
        throw DimensionError("FactorModel: Q must be " + std::to_string(h_.cols()) + "x" +
                             std::to_string(h_.cols()));
      }
      if (!Eigen::FullPivLU<Matrix>(*q_).isInvertible()) throw SingularityError("mixing factor Q");
    }
  }

  Matrix h_;
  Vector d_;
  std::optional<Matrix> q_;
};

}  // namespace divfact
