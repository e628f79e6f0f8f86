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
 * Dense symmetric and partitioned matrix helpers.
 *
 * Everything here is a pure function of its arguments. Positive
 * definiteness is always decided by a Cholesky factorization whose pivots
 * (squared diagonal entries of L) must exceed
 *
 *     kPivotThreshold * max_i M(i, i)
 *
 * so that the accept/reject boundary is reproducible.
 *
 * The partitioned inverse uses the block layout
 *
 *     M = | A  C |        M^-1 = | S^-1             -S^-1 C D^-1          |
 *         | B  D |               | -D^-1 B S^-1      D^-1 B S^-1 C D^-1 + D^-1 |
 *
 * with S = A - C D^-1 B, and the low-rank update identity
 *
 *     (Dm - B A C)^-1 = Dm^-1 + Dm^-1 B (A^-1 - C Dm^-1 B)^-1 C Dm^-1
 *
 * follows from comparing the two block factorizations of M.
 */

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "divfact/errors.hpp"

namespace divfact {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kPivotThreshold = 1e-13;

/// Largest absolute entry; 0 for an empty matrix.
template <typename Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

/// Real symmetric matrix. The constructor replaces its argument by
/// (M + M^T) / 2 and remembers how far from symmetric the input was.
class SymMatrix {
 public:
  SymMatrix() = default;

  explicit SymMatrix(const Eigen::Ref<const Matrix>& m) {
    if (m.rows() != m.cols()) {
      throw DimensionError("SymMatrix: matrix is " + std::to_string(m.rows()) + "x" +
                           std::to_string(m.cols()) + ", expected square");
    }
    if (m.rows() < 1) throw DimensionError("SymMatrix: dimension must be >= 1");
    m_ = 0.5 * (m + m.transpose());
    asymmetry_ = max_abs(m - m.transpose());
  }

  Index dim() const noexcept { return m_.rows(); }
  const Matrix& matrix() const noexcept { return m_; }
  double operator()(Index i, Index j) const { return m_(i, j); }

  /// max |M - M^T| of the matrix this was built from.
  double asymmetry() const noexcept { return asymmetry_; }

 private:
  Matrix m_;
  double asymmetry_ = 0.0;
};

/// Row split of a square matrix into a leading `top` block and a trailing
/// `bottom` block.
struct BlockPartition {
  Index top = 0;
  Index bottom = 0;

  Index size() const noexcept { return top + bottom; }

  void check(Index dim) const {
    if (top < 1 || bottom < 1) throw DimensionError("BlockPartition: both blocks must be non-empty");
    if (size() != dim) {
      throw DimensionError("BlockPartition: " + std::to_string(top) + "+" + std::to_string(bottom) +
                           " does not match dimension " + std::to_string(dim));
    }
  }
};

/// Cholesky factorization M = L L^T with the library's pivot threshold.
class Cholesky {
 public:
  Cholesky() = default;

  explicit Cholesky(const Eigen::Ref<const Matrix>& m, const std::string& what = "matrix") {
    if (m.rows() != m.cols()) throw DimensionError(what + ": Cholesky of a non-square matrix");
    if (m.rows() == 0) throw DimensionError(what + ": Cholesky of an empty matrix");
    llt_.compute(m);
    const double max_diag = m.diagonal().maxCoeff();
    const double threshold = kPivotThreshold * std::max(max_diag, 0.0);
    if (llt_.info() == Eigen::Success && max_diag > 0.0) {
      const Vector pivots = llt_.matrixLLT().diagonal().array().square();
      Index worst = 0;
      const double smallest = pivots.minCoeff(&worst);
      if (smallest > threshold) return;
      throw DefinitenessError(what + " is not positive definite", worst, smallest);
    }
    locate_failure(m, threshold, what);
  }

  Index dim() const noexcept { return llt_.matrixLLT().rows(); }
  Matrix matrix_l() const { return llt_.matrixL(); }
  const Eigen::LLT<Matrix>& llt() const noexcept { return llt_; }

  double logdet() const { return 2.0 * llt_.matrixLLT().diagonal().array().log().sum(); }

  template <typename Rhs>
  Matrix solve(const Eigen::MatrixBase<Rhs>& b) const {
    return llt_.solve(b);
  }

  /// L^-1 b.
  template <typename Rhs>
  Matrix solve_lower(const Eigen::MatrixBase<Rhs>& b) const {
    return llt_.matrixL().solve(b);
  }

  Matrix inverse() const { return llt_.solve(Matrix::Identity(dim(), dim())); }

 private:
  // Eigen does not report where an LLT broke down; redo an unblocked
  // factorization to name the offending pivot.
  [[noreturn]] static void locate_failure(const Eigen::Ref<const Matrix>& m, double threshold,
                                          const std::string& what) {
    const Index n = m.rows();
    Matrix l = Matrix::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
      const double pivot = m(j, j) - l.row(j).head(j).squaredNorm();
      if (!(pivot > threshold)) throw DefinitenessError(what + " is not positive definite", j, pivot);
      l(j, j) = std::sqrt(pivot);
      for (Index i = j + 1; i < n; ++i) {
        l(i, j) = (m(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
      }
    }
    throw DefinitenessError(what + " is not positive definite", n - 1, 0.0);
  }

  Eigen::LLT<Matrix> llt_;
};

/// Diagonal of a square matrix, as a vector.
inline Vector delta_diag(const Eigen::Ref<const Matrix>& m) {
  if (m.rows() != m.cols()) {
    throw DimensionError("delta_diag: matrix is " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + ", expected square");
  }
  return m.diagonal();
}

/// Square root S with S^T S = P: the transpose of the lower Cholesky factor,
/// hence upper triangular.
inline Matrix sqrt_factor(const SymMatrix& p) {
  return Cholesky(p.matrix(), "sqrt_factor argument").matrix_l().transpose();
}

/// log |P| from the Cholesky diagonal.
inline double logdet(const SymMatrix& p) { return Cholesky(p.matrix(), "logdet argument").logdet(); }

namespace detail {

inline Eigen::FullPivLU<Matrix> checked_lu(const Eigen::Ref<const Matrix>& m, const std::string& block) {
  Eigen::FullPivLU<Matrix> lu(m);
  if (!lu.isInvertible()) throw SingularityError(block);
  return lu;
}

}  // namespace detail

/// Inverse of a symmetric matrix through its 2x2 block structure.
inline SymMatrix partitioned_inverse(const SymMatrix& m, const BlockPartition& part) {
  part.check(m.dim());
  const Matrix& full = m.matrix();
  const Index t = part.top;
  const Index b = part.bottom;
  const auto a_blk = full.topLeftCorner(t, t);
  const auto c_blk = full.topRightCorner(t, b);
  const auto b_blk = full.bottomLeftCorner(b, t);
  const auto d_blk = full.bottomRightCorner(b, b);

  const auto d_lu = detail::checked_lu(d_blk, "lower-right block");
  const Matrix dinv_b = d_lu.solve(Matrix(b_blk));
  const Matrix schur = a_blk - c_blk * dinv_b;
  const auto s_lu = detail::checked_lu(schur, "Schur complement of the lower-right block");
  const Matrix s_inv = s_lu.inverse();
  const Matrix c_dinv = d_lu.solve(Matrix(c_blk.transpose())).transpose();

  Matrix inv(t + b, t + b);
  inv.topLeftCorner(t, t) = s_inv;
  inv.topRightCorner(t, b) = -s_inv * c_dinv;
  inv.bottomLeftCorner(b, t) = -dinv_b * s_inv;
  inv.bottomRightCorner(b, b) = dinv_b * s_inv * c_dinv + d_lu.inverse();
  return SymMatrix(inv);
}

/// (diag(dm) - B A C)^-1 through the low-rank update identity. Only an
/// m x m system is factored, m = A.dim().
inline Matrix woodbury_inv(const Eigen::Ref<const Vector>& dm, const Eigen::Ref<const Matrix>& b,
                           const SymMatrix& a, const Eigen::Ref<const Matrix>& c) {
  const Index n = dm.size();
  const Index m = a.dim();
  if (b.rows() != n || b.cols() != m || c.rows() != m || c.cols() != n) {
    throw DimensionError("woodbury_inv: expected B n x m and C m x n with n = " + std::to_string(n) +
                         ", m = " + std::to_string(m));
  }
  if ((dm.array() == 0.0).any()) throw SingularityError("diagonal term");
  const Vector dinv = dm.cwiseInverse();
  const Matrix dinv_b = dinv.asDiagonal() * b;
  const Matrix c_dinv = c * dinv.asDiagonal();
  const auto a_lu = detail::checked_lu(a.matrix(), "inner matrix A");
  const Matrix inner = a_lu.inverse() - c * dinv_b;
  const auto inner_lu = detail::checked_lu(inner, "inner matrix A^-1 - C Dm^-1 B");
  Matrix out = dinv_b * inner_lu.solve(c_dinv);
  out.diagonal() += dinv;
  return out;
}

inline double min_eigenvalue(const SymMatrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.matrix(), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

/// True iff large - small + slack * I is positive semidefinite.
inline bool psd_dominates(const SymMatrix& large, const SymMatrix& small, double slack) {
  if (large.dim() != small.dim()) {
    throw DimensionError("psd_dominates: dimensions " + std::to_string(large.dim()) + " and " +
                         std::to_string(small.dim()) + " differ");
  }
  Matrix diff = large.matrix() - small.matrix();
  diff.diagonal().array() += slack;
  return min_eigenvalue(SymMatrix(diff)) >= 0.0;
}

}  // namespace divfact
