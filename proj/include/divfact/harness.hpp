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

// Synthetic problems and falsification probes. Every generator is a pure
// function of its arguments and seed (see CounterRng).

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "divfact/divergence.hpp"
#include "divfact/lifted.hpp"
#include "divfact/matops.hpp"
#include "divfact/model.hpp"
#include "divfact/random.hpp"

namespace divfact {

struct SyntheticSpec {
  Index n = 6;
  Index k = 2;
  double loading_scale = 1.0;
  double noise_scale = 1.0;
  double perturbation = 0.0;
  std::uint64_t seed = 0;

  void check() const {
    if (k < 1) throw InputError("k must be >= 1");
    if (k >= n) throw InputError("k must be < n (k = " + std::to_string(k) + ", n = " + std::to_string(n) + ")");
    if (!(loading_scale > 0.0) || !(noise_scale > 0.0)) throw InputError("scales must be > 0");
    if (!(perturbation >= 0.0)) throw InputError("perturbation must be >= 0");
  }
};

struct PlantedProblem {
  FactorModel truth;
  CovarianceMatrix s0;
};

/// S0 = H H^T + D (+ perturbation * W, W symmetric Gaussian, with the sum's
/// eigenvalues clipped at 1e-6). H ~ U(-1, 1) * loading_scale,
/// D ~ U(0.1, 1.1) * noise_scale.
inline PlantedProblem plant_model(const SyntheticSpec& spec) {
  spec.check();
  CounterRng rng(spec.seed);
  Matrix h = spec.loading_scale * rng.uniform_matrix(spec.n, spec.k, -1.0, 1.0);
  Vector d(spec.n);
  for (Index i = 0; i < spec.n; ++i) d(i) = spec.noise_scale * rng.uniform(0.1, 1.1);
  FactorModel truth(std::move(h), std::move(d));
  Matrix s0 = truth.covariance();
  if (spec.perturbation > 0.0) {
    const Matrix g = rng.normal_matrix(spec.n, spec.n);
    s0 += spec.perturbation * 0.5 * (g + g.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (s0 + s0.transpose()));
    const Vector clipped = es.eigenvalues().cwiseMax(1e-6);
    s0 = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
  }
  try {
    return {std::move(truth), CovarianceMatrix(s0, "planted covariance")};
  } catch (const DefinitenessError& e) {
    throw InputError(std::string("plant_model: SPD projection failed: ") + e.what());
  }
}

/// (1 / m) X^T X after centering each column. With `ridge`, eps * I is
/// added, eps = 1e-8 * trace / n.
inline CovarianceMatrix sample_covariance(const Eigen::Ref<const Matrix>& data, bool ridge = false) {
  const Index m = data.rows();
  const Index n = data.cols();
  if (m < 1 || n < 1) throw DimensionError("sample_covariance: empty data matrix");
  const Matrix centered = data.rowwise() - data.colwise().mean();
  Matrix cov = (centered.transpose() * centered) / static_cast<double>(m);
  if (ridge) cov.diagonal().array() += 1e-8 * cov.trace() / static_cast<double>(n);
  try {
    return CovarianceMatrix(cov, "sample covariance");
  } catch (const DefinitenessError& e) {
    throw DefinitenessError("sample covariance is rank deficient; rerun with ridge regularization enabled",
                            e.index(), e.pivot());
  }
}

/// Random SPD matrix G G^T / n + floor * I with G standard normal.
inline CovarianceMatrix random_spd(Index n, CounterRng& rng, double floor = 0.1) {
  const Matrix g = rng.normal_matrix(n, n);
  Matrix s = g * g.transpose() / static_cast<double>(n);
  s.diagonal().array() += floor;
  return CovarianceMatrix(s);
}

/// Random positive definite lifted covariance.
inline LiftedCovariance random_lifted(Index n, Index k, CounterRng& rng) {
  return LiftedCovariance(random_spd(n + k, rng).matrix(), n, k);
}

/// Random (H, D, Q) with Q well conditioned.
inline FactorModel random_factor_model(Index n, Index k, CounterRng& rng) {
  Matrix h = rng.normal_matrix(n, k);
  Vector d(n);
  for (Index i = 0; i < n; ++i) d(i) = rng.uniform(0.2, 1.5);
  Matrix q = rng.normal_matrix(k, k) * 0.3;
  q.diagonal().array() += 1.0;
  return FactorModel(std::move(h), std::move(d), std::move(q));
}

namespace detail {

// Log-uniform magnitude in [1e-4, 3].
inline double probe_scale(CounterRng& rng) { return std::pow(10.0, rng.uniform(-4.0, 0.5)); }

}  // namespace detail

/// min over `candidates` of D(sigma || Sigma(H, D, Q)) minus the closed-form
/// optimum D(sigma || Sigma_1*). Negative values falsify the minimizer.
inline double probe_oracle_second_min(const LiftedCovariance& sigma, std::span<const FactorModel> candidates) {
  const double optimum = i_divergence(sigma, second_partial_min(sigma).sigma);
  double best = std::numeric_limits<double>::infinity();
  for (const FactorModel& c : candidates) best = std::min(best, i_divergence(sigma, assemble_lifted(c)));
  return best - optimum;
}

/// Seeded random feasible probes around the minimizer (every third probe
/// is drawn independently of it).
inline std::vector<FactorModel> second_min_probes(const LiftedCovariance& sigma, int trials, std::uint64_t seed) {
  if (trials < 1) throw InputError("probe sweep needs at least one trial");
  const FactorModel star = second_partial_min(sigma).model;
  CounterRng rng(seed);
  std::vector<FactorModel> out;
  out.reserve(static_cast<std::size_t>(trials));
  const Index n = sigma.n();
  const Index k = sigma.k();
  while (static_cast<int>(out.size()) < trials) {
    try {
      if (out.size() % 3 == 2) {
        out.push_back(random_factor_model(n, k, rng));
        continue;
      }
      const double eps = detail::probe_scale(rng);
      Matrix h = star.h() + eps * rng.normal_matrix(n, k);
      Vector d = star.d();
      for (Index i = 0; i < n; ++i) d(i) *= std::exp(eps * rng.normal());
      Matrix q = *star.q() + eps * rng.normal_matrix(k, k);
      out.emplace_back(std::move(h), std::move(d), std::move(q));
    } catch (const SingularityError&) {
      // singular Q draw; redraw
    }
  }
  return out;
}

inline double probe_oracle_second_min(const LiftedCovariance& sigma, int trials, std::uint64_t seed) {
  const std::vector<FactorModel> probes = second_min_probes(sigma, trials, seed);
  return probe_oracle_second_min(sigma, probes);
}

/// Same falsification sweep for the first partial minimization: probes
/// Sigma' with upper-left block s0, built from a perturbed cross block and
/// a perturbed (positive definite) Schur complement.
inline double probe_oracle_first_min(const CovarianceMatrix& s0, const LiftedCovariance& sigma, int trials,
                                     std::uint64_t seed) {
  if (trials < 1) throw InputError("probe sweep needs at least one trial");
  const LiftedCovariance star = first_partial_min(s0, sigma);
  const double optimum = i_divergence(star, sigma);
  const Index n = sigma.n();
  const Index k = sigma.k();
  const Matrix s12 = star.s12();
  const Matrix schur = star.s22() - s12.transpose() * s0.cholesky().solve(s12);
  CounterRng rng(seed);
  double best = std::numeric_limits<double>::infinity();
  for (int t = 0; t < trials; ++t) {
    const double eps = detail::probe_scale(rng);
    const Matrix p12 = s12 + eps * rng.normal_matrix(n, k);
    Matrix mix = Matrix::Identity(k, k) + eps * rng.normal_matrix(k, k);
    Matrix p22 = p12.transpose() * s0.cholesky().solve(p12) + mix * schur * mix.transpose();
    try {
      const LiftedCovariance probe = LiftedCovariance::from_blocks(s0.matrix(), p12, 0.5 * (p22 + p22.transpose()));
      best = std::min(best, i_divergence(probe, sigma));
    } catch (const DefinitenessError&) {
      // singular mixing draw; skip
    }
  }
  return best - optimum;
}

}  // namespace divfact
