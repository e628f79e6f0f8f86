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

#include <cmath>

#include <gtest/gtest.h>

#include "divfact/divfact.hpp"
#include "oracles.hpp"

namespace divfact {
namespace {

CovarianceMatrix scalar(double x) { return CovarianceMatrix(Matrix::Constant(1, 1, x)); }

TEST(IDivergence, HandEvaluatedScalars) {
  EXPECT_NEAR(i_divergence(scalar(2.0), scalar(1.0)), 0.5 * (1.0 - std::log(2.0)), 1e-15);
  EXPECT_NEAR(i_divergence(scalar(2.0), scalar(1.0)), 0.153426409720027, 1e-14);
  EXPECT_NEAR(i_divergence(scalar(1.0), scalar(2.0)), 0.5 * (std::log(2.0) - 0.5), 1e-15);
  EXPECT_NEAR(i_divergence(scalar(1.0), scalar(2.0)), 0.096573590279973, 1e-14);
}

TEST(IDivergence, ZeroOnIdenticalArguments) {
  CounterRng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const CovarianceMatrix s = random_spd(1 + trial % 9, rng);
    EXPECT_LT(i_divergence(s, s), 1e-15);
  }
}

TEST(IDivergence, MatchesDenseFormula) {
  CounterRng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 1 + trial % 10;
    const CovarianceMatrix a = random_spd(n, rng);
    const CovarianceMatrix b = random_spd(n, rng);
    const double ours = i_divergence(a, b);
    const double dense = oracle::divergence(a.matrix(), b.matrix());
    EXPECT_NEAR(ours, dense, 1e-11 * std::max(1.0, dense));
    EXPECT_GT(ours, 0.0);
  }
}

TEST(IDivergence, CongruenceInvariance) {
  CounterRng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 2 + trial % 7;
    const CovarianceMatrix a = random_spd(n, rng);
    const CovarianceMatrix b = random_spd(n, rng);
    Matrix t = rng.normal_matrix(n, n);
    t.diagonal().array() += 3.0;  // keep it comfortably invertible
    const CovarianceMatrix ta(t * a.matrix() * t.transpose());
    const CovarianceMatrix tb(t * b.matrix() * t.transpose());
    EXPECT_NEAR(i_divergence(ta, tb), i_divergence(a, b), 1e-10);
  }
}

TEST(IDivergence, Errors) {
  EXPECT_THROW(i_divergence(scalar(1.0), CovarianceMatrix(Matrix::Identity(2, 2))), DimensionError);
  EXPECT_THROW(CovarianceMatrix(-Matrix::Identity(2, 2)), DefinitenessError);
  Matrix semi = Matrix::Ones(2, 2);
  EXPECT_THROW(CovarianceMatrix{semi}, DefinitenessError);
}

TEST(IDivergence, ClampAndConsistency) {
  EXPECT_EQ(detail::finish_divergence(-5e-13, "t"), 0.0);
  EXPECT_EQ(detail::finish_divergence(0.25, "t"), 0.25);
  EXPECT_THROW(detail::finish_divergence(-1e-9, "t"), ConsistencyError);
}

TEST(Objective, ExactModelIsZero) {
  CounterRng rng(4);
  const FactorModel m(rng.normal_matrix(6, 2), Vector::Constant(6, 0.7));
  EXPECT_NEAR(objective(CovarianceMatrix(m.covariance()), m), 0.0, 1e-13);
}

TEST(Objective, ZeroLoadingsGiveDiagonalBaseline) {
  CounterRng rng(5);
  const CovarianceMatrix s0 = random_spd(5, rng);
  const FactorModel m(Matrix::Zero(5, 1), s0.matrix().diagonal());
  const CovarianceMatrix diag(Matrix(s0.matrix().diagonal().asDiagonal()));
  EXPECT_NEAR(objective(s0, m), i_divergence(s0, diag), 1e-13);
}

TEST(Objective, WoodburyRouteMatchesDenseFormula) {
  CounterRng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 2 + trial % 9;
    const Index k = 1 + trial % (n - 1);
    const CovarianceMatrix s0 = random_spd(n, rng);
    const FactorModel m(rng.normal_matrix(n, k), rng.uniform_matrix(n, 1, 0.2, 2.0).col(0));
    const double dense = oracle::divergence(s0.matrix(), m.covariance());
    EXPECT_NEAR(objective(s0, m), dense, 1e-11 * std::max(1.0, dense)) << "n=" << n << " k=" << k;
  }
  // n = 4, k = 1 at the tighter tolerance.
  const CovarianceMatrix s0 = random_spd(4, rng);
  const FactorModel m(rng.normal_matrix(4, 1), Vector::Constant(4, 0.9));
  EXPECT_NEAR(objective(s0, m), oracle::divergence(s0.matrix(), m.covariance()), 1e-12);
}

TEST(Objective, RejectsMismatchedModel) {
  const CovarianceMatrix s0(Matrix::Identity(3, 3));
  EXPECT_THROW(objective(s0, FactorModel(Matrix::Zero(4, 1), Vector::Ones(4))), DimensionError);
}

TEST(FactorModel, Validation) {
  EXPECT_THROW(FactorModel(Matrix::Zero(3, 1), Vector::Ones(2)), DimensionError);
  EXPECT_THROW(FactorModel(Matrix::Zero(3, 1), Vector::Zero(3)), InputError);
  EXPECT_THROW(FactorModel(Matrix::Zero(3, 1), Vector::Ones(3), Matrix::Zero(1, 1)), SingularityError);
  EXPECT_THROW(FactorModel(Matrix::Zero(3, 2), Vector::Ones(3), Matrix::Identity(1, 1)), DimensionError);
}

TEST(FactorModel, DerivedProductsAreConsistent) {
  CounterRng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const FactorModel m = random_factor_model(6, 3, rng);
    const Matrix kk = m.k_factor();
    const Matrix via_kp = kk * oracle::inverse(m.p_factor()) * kk.transpose();
    EXPECT_LT(oracle::max_abs(via_kp - m.h() * m.h().transpose()), 1e-10);
  }
}

}  // namespace
}  // namespace divfact
