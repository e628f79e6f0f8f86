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
 * Alternating minimization of D(S0 || H H^T + D).
 *
 * One iteration is the first partial minimization (replace the observed
 * block of the lifted covariance by S0) followed by the second (project
 * back onto the model family). Eliminating the latent mixing factor gives
 * the H/D recursion
 *
 *   C    = H H^T + D
 *   R    = I - H^T C^-1 (C - S0) C^-1 H
 *   H'   = S0 C^-1 H R^-1/2
 *   D'   = Delta(S0 - H' H'^T)
 *
 * (alg1_step). Keeping K = H Q and P = Q^T Q instead avoids the square root
 * (alg2_step):
 *
 *   C    = K P^-1 K^T + D
 *   K'   = S0 C^-1 K
 *   P'   = P - K^T C^-1 (C - S0) C^-1 K
 *   D'   = Delta(S0 - K' P'^-1 K'^T)
 *
 * C^-1 H is always formed as D^-1 H (I + H^T D^-1 H)^-1, so only k x k
 * systems are factored.
 */

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <tuple>
#include <string>
#include <utility>
#include <vector>

#include "divfact/divergence.hpp"
#include "divfact/lifted.hpp"
#include "divfact/matops.hpp"
#include "divfact/model.hpp"
#include "divfact/random.hpp"

namespace divfact {

/// An iterate could not be formed (an update matrix lost definiteness,
/// a bound that holds in exact arithmetic was violated, ...).
class NumericalBreakdown : public Error {
 public:
  using Error::Error;
};

enum class Variant { Alg1, Alg2 };

enum class InitKind { PrincipalComponents, RandomSeeded, Explicit };

struct InitStrategy {
  InitKind kind = InitKind::PrincipalComponents;
  std::uint64_t seed = 0;
  std::optional<FactorModel> model;

  static InitStrategy principal_components() { return {}; }
  static InitStrategy random(std::uint64_t seed) { return {InitKind::RandomSeeded, seed, std::nullopt}; }
  static InitStrategy explicit_model(FactorModel m) { return {InitKind::Explicit, 0, std::move(m)}; }
};

struct FitConfig {
  Index k = 1;
  Variant variant = Variant::Alg1;
  InitStrategy init;
  int max_iter = 10000;
  double tol_divergence_decrement = 1e-12;
  double tol_fixed_point = 1e-9;
  // A decrement below tol_divergence_decrement ends the run only once both
  // fixed-point residuals are also below this gate. Near a stationary point
  // the decrement reaches rounding level long before the residuals do.
  double stationarity_gate = 1e-8;
  // Relative to max_i S0(i, i).
  double diag_floor = 1e-10;
  // Per-iterate bound checks; violations end the run as NumericalBreakdown.
  bool validate = true;

  void check(Index n) const {
    if (k < 1) throw InputError("k must be >= 1");
    if (k >= n) throw InputError("k must be < n (k = " + std::to_string(k) + ", n = " + std::to_string(n) + ")");
    if (max_iter < 0) throw InputError("max_iter must be >= 0");
    if (!(tol_divergence_decrement > 0.0) || !(tol_fixed_point > 0.0) || !(stationarity_gate > 0.0) ||
        !(diag_floor > 0.0)) {
      throw InputError("tolerances and diag_floor must be > 0");
    }
  }
};

struct IterationRecord {
  int iter = 0;
  double objective = 0.0;
  double decrement = 0.0;   // objective(t-1) - objective(t); 0 at t = 0
  double residual_h = 0.0;  // fixed_point_residual, H part
  double residual_d = 0.0;  // fixed_point_residual, D part
  double min_d = 0.0;
  // Validate mode only (NaN otherwise).
  double psd_slack = std::numeric_limits<double>::quiet_NaN();   // min eig(S0 - H H^T)
  double min_singular_h = std::numeric_limits<double>::quiet_NaN();
  double min_eig_r = std::numeric_limits<double>::quiet_NaN();   // alg1 only
  int floor_hits = 0;
};

enum class TerminationKind { Converged, MaxIter, ExactModelStop, NumericalBreakdown };

inline const char* to_string(TerminationKind kind) {
  switch (kind) {
    case TerminationKind::Converged: return "Converged";
    case TerminationKind::MaxIter: return "MaxIter";
    case TerminationKind::ExactModelStop: return "ExactModelStop";
    case TerminationKind::NumericalBreakdown: return "NumericalBreakdown";
  }
  return "?";
}

inline const char* to_string(Variant v) { return v == Variant::Alg1 ? "alg1" : "alg2"; }

struct Termination {
  TerminationKind kind = TerminationKind::MaxIter;
  std::string reason;  // NumericalBreakdown only
};

struct FitTrace {
  std::vector<IterationRecord> iterations;
  Termination termination;
  int floor_activations = 0;
  int rank_warnings = 0;
};

struct FitResult {
  FactorModel model;  // Q absent
  double objective = 0.0;
  FitTrace trace;
  FitConfig config;
  std::uint64_t fingerprint = 0;

  int iterations() const { return trace.iterations.empty() ? 0 : trace.iterations.back().iter; }
};

/// FNV-1a over the IEEE-754 bytes of the entries, column-major,
/// little-endian.
inline std::uint64_t input_fingerprint(const Matrix& m) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (Index j = 0; j < m.cols(); ++j) {
    for (Index i = 0; i < m.rows(); ++i) {
      const auto bits = std::bit_cast<std::uint64_t>(m(i, j));
      for (int b = 0; b < 8; ++b) {
        hash ^= (bits >> (8 * b)) & 0xffU;
        hash *= 0x100000001b3ULL;
      }
    }
  }
  return hash;
}

namespace detail {

inline double absolute_floor(const CovarianceMatrix& s0, double rel_floor) {
  return rel_floor * s0.matrix().diagonal().maxCoeff();
}

// Delta(S0) - rowwise |G|^2, clamped below at `floor`.
inline Vector floored_diagonal(const CovarianceMatrix& s0, const Matrix& g, double floor, int* hits) {
  Vector d = s0.matrix().diagonal() - g.rowwise().squaredNorm();
  for (Index i = 0; i < d.size(); ++i) {
    if (!(d(i) > floor)) {
      if (floor <= 0.0) {
        throw NumericalBreakdown("diagonal entry " + std::to_string(i) + " became " + std::to_string(d(i)));
      }
      d(i) = floor;
      if (hits) ++*hits;
    }
  }
  return d;
}

inline double min_singular_value(const Matrix& h) {
  Eigen::JacobiSVD<Matrix> svd(h);
  return svd.singularValues().minCoeff();
}

inline bool full_column_rank(const Matrix& h) {
  Eigen::JacobiSVD<Matrix> svd(h);
  const Vector s = svd.singularValues();
  return s.size() > 0 && s(0) > 0.0 && s(s.size() - 1) > 1e-12 * s(0);
}

struct Alg1Work {
  Matrix r;
  FactorModel next;
  int floor_hits = 0;
};

inline Alg1Work alg1_step_impl(const CovarianceMatrix& s0, const FactorModel& model, double rel_floor) {
  if (model.n() != s0.dim()) throw DimensionError("alg1_step: model and covariance sizes differ");
  const Matrix& h = model.h();
  const Matrix dinv_h = model.d().cwiseInverse().asDiagonal() * h;
  Matrix a = h.transpose() * dinv_h;
  a.diagonal().array() += 1.0;
  const Cholesky a_chol(a, "I + H^T D^-1 H");
  const Matrix b = a_chol.solve(dinv_h.transpose()).transpose();  // C^-1 H
  const Matrix s0_b = s0.matrix() * b;
  // R = I - H^T C^-1 H + B^T S0 B, and I - H^T C^-1 H = (I + H^T D^-1 H)^-1,
  // which keeps R visibly positive definite.
  Matrix r = a_chol.inverse() + b.transpose() * s0_b;
  r = 0.5 * (r + r.transpose());
  std::optional<Cholesky> r_chol;
  try {
    r_chol.emplace(r, "R");
  } catch (const DefinitenessError& e) {
    throw NumericalBreakdown(std::string("alg1_step: ") + e.what());
  }
  // H' = S0 B R^-1/2 with R^1/2 = L^T, so H'^T = L^-1 (S0 B)^T.
  Matrix h_next = r_chol->solve_lower(s0_b.transpose()).transpose();
  int hits = 0;
  Vector d_next = floored_diagonal(s0, h_next, absolute_floor(s0, rel_floor), &hits);
  return {std::move(r), FactorModel(std::move(h_next), std::move(d_next)), hits};
}

}  // namespace detail

/// R_t of the H/D recursion (symmetrized).
inline Matrix r_matrix(const CovarianceMatrix& s0, const FactorModel& model) {
  return detail::alg1_step_impl(s0, model, 1e-10).r;
}

/// One H/D update. D entries are floored at rel_floor * max_i S0(i, i).
inline FactorModel alg1_step(const CovarianceMatrix& s0, const FactorModel& model, double rel_floor = 1e-10) {
  return detail::alg1_step_impl(s0, model, rel_floor).next;
}

/// Iterate of the K/P/D recursion.
struct KPDState {
  Matrix k;
  Matrix p;
  Vector d;

  static KPDState from_model(const FactorModel& m) { return {m.k_factor(), m.p_factor(), m.d()}; }

  /// K P^-1 K^T.
  Matrix low_rank() const {
    const Matrix g = Cholesky(p, "P").solve_lower(k.transpose()).transpose();
    return g * g.transpose();
  }

  /// H = K Q^-1 with Q = sqrt_factor(P).
  FactorModel extract() const {
    const Cholesky chol(p, "P");
    return FactorModel(chol.solve_lower(k.transpose()).transpose(), d);
  }
};

namespace detail {

inline KPDState alg2_step_impl(const CovarianceMatrix& s0, const KPDState& st, double rel_floor, int* hits) {
  if (st.k.rows() != s0.dim() || st.d.size() != s0.dim() || st.p.rows() != st.k.cols() ||
      st.p.cols() != st.k.cols()) {
    throw DimensionError("alg2_step: inconsistent K, P, D shapes");
  }
  const Matrix dinv_k = st.d.cwiseInverse().asDiagonal() * st.k;
  Matrix g = st.p + st.k.transpose() * dinv_k;
  g = 0.5 * (g + g.transpose());
  const Cholesky g_chol(g, "P + K^T D^-1 K");
  // E = C^-1 K = D^-1 K G^-1 P
  const Matrix e = dinv_k * g_chol.solve(st.p);
  Matrix k_next = s0.matrix() * e;
  // P - K^T C^-1 K = P G^-1 P
  Matrix p_next = st.p * g_chol.solve(st.p) + e.transpose() * k_next;
  p_next = 0.5 * (p_next + p_next.transpose());
  std::optional<Cholesky> p_chol;
  try {
    p_chol.emplace(p_next, "P");
  } catch (const DefinitenessError& ex) {
    throw NumericalBreakdown(std::string("alg2_step: ") + ex.what() + "; |K| = " +
                             std::to_string(max_abs(st.k)) + ", |P| = " + std::to_string(max_abs(st.p)) +
                             ", min D = " + std::to_string(st.d.minCoeff()));
  }
  const Matrix h_next = p_chol->solve_lower(k_next.transpose()).transpose();
  Vector d_next = floored_diagonal(s0, h_next, absolute_floor(s0, rel_floor), hits);
  return {std::move(k_next), std::move(p_next), std::move(d_next)};
}

}  // namespace detail

inline KPDState alg2_step(const CovarianceMatrix& s0, const KPDState& state, double rel_floor = 1e-10) {
  return detail::alg2_step_impl(s0, state, rel_floor, nullptr);
}

/// Relative distance from the stationarity relations
///   H = (S0 - H H^T) D^-1 H,   D = Delta(S0 - H H^T).
inline std::pair<double, double> fixed_point_residual(const CovarianceMatrix& s0, const FactorModel& model) {
  if (model.n() != s0.dim()) throw DimensionError("fixed_point_residual: model and covariance sizes differ");
  const Matrix& h = model.h();
  const Matrix dinv_h = model.d().cwiseInverse().asDiagonal() * h;
  const Matrix mapped = s0.matrix() * dinv_h - h * (h.transpose() * dinv_h);
  const Vector delta = s0.matrix().diagonal() - h.rowwise().squaredNorm();
  const double rh = max_abs(h - mapped) / std::max(1.0, max_abs(h));
  const double rd = max_abs(model.d() - delta) / std::max(1.0, max_abs(model.d()));
  return {rh, rd};
}

/// Starting point for fit(). Principal components: the top-k eigenvectors
/// of S0 scaled by sqrt(lambda / 2), D0 = Delta(S0 - H0 H0^T) floored.
/// Random: N(0, 1) loadings scaled to half the mean variance, D0 = Delta(S0) / 2.
inline FactorModel init_model(const CovarianceMatrix& s0, const FitConfig& cfg) {
  const Index n = s0.dim();
  cfg.check(n);
  const Index k = cfg.k;
  const double floor = detail::absolute_floor(s0, cfg.diag_floor);

  switch (cfg.init.kind) {
    case InitKind::PrincipalComponents: {
      Eigen::SelfAdjointEigenSolver<Matrix> es(s0.matrix());
      Matrix h(n, k);
      for (Index j = 0; j < k; ++j) {
        const Index col = n - 1 - j;  // eigenvalues ascend
        Vector v = es.eigenvectors().col(col);
        Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        h.col(j) = v * std::sqrt(0.5 * es.eigenvalues()(col));
      }
      Vector d = (s0.matrix().diagonal() - h.rowwise().squaredNorm()).cwiseMax(floor);
      if (!detail::full_column_rank(h)) throw InputError("init_model: principal-component loadings are rank deficient");
      return FactorModel(std::move(h), std::move(d));
    }
    case InitKind::RandomSeeded: {
      CounterRng rng(cfg.init.seed);
      const double scale = std::sqrt(0.5 * s0.matrix().diagonal().mean() / static_cast<double>(k));
      for (int attempt = 0; attempt < 4; ++attempt) {
        Matrix h = scale * rng.normal_matrix(n, k);
        if (detail::full_column_rank(h)) return FactorModel(std::move(h), 0.5 * s0.matrix().diagonal());
      }
      throw InputError("init_model: random loadings stayed rank deficient after 4 draws");
    }
    case InitKind::Explicit: {
      if (!cfg.init.model) throw InputError("init_model: explicit initialization without a model");
      const FactorModel& m = *cfg.init.model;
      if (m.n() != n || m.k() != k) {
        throw DimensionError("init_model: explicit model is " + std::to_string(m.n()) + "x" +
                             std::to_string(m.k()) + ", expected " + std::to_string(n) + "x" + std::to_string(k));
      }
      if (!detail::full_column_rank(m.h())) throw InputError("init_model: explicit H is not of full column rank");
      return m;
    }
  }
  throw InputError("init_model: unknown initialization");
}

/// Largest central finite-difference partial derivative of the objective
/// with respect to the entries of H and D. Steps are h * max(1, |x|),
/// shrunk for D entries so that D stays positive.
inline double stationarity_check(const CovarianceMatrix& s0, const FactorModel& model, double h = 1e-6) {
  double worst = 0.0;
  Matrix hm = model.h();
  Vector dm = model.d();
  const auto eval = [&](const Matrix& hh, const Vector& dd) { return objective(s0, FactorModel(hh, dd)); };
  for (Index j = 0; j < hm.cols(); ++j) {
    for (Index i = 0; i < hm.rows(); ++i) {
      const double x = hm(i, j);
      const double step = h * std::max(1.0, std::abs(x));
      hm(i, j) = x + step;
      const double up = eval(hm, dm);
      hm(i, j) = x - step;
      const double down = eval(hm, dm);
      hm(i, j) = x;
      worst = std::max(worst, std::abs(up - down) / (2.0 * step));
    }
  }
  for (Index i = 0; i < dm.size(); ++i) {
    const double x = dm(i);
    const double step = std::min(h * std::max(1.0, x), 0.5 * x);
    dm(i) = x + step;
    const double up = eval(hm, dm);
    dm(i) = x - step;
    const double down = eval(hm, dm);
    dm(i) = x;
    worst = std::max(worst, std::abs(up - down) / (2.0 * step));
  }
  return worst;
}

namespace detail {

inline IterationRecord make_record(const CovarianceMatrix& s0, const FactorModel& model, int iter, double obj,
                                   double decrement, bool validate) {
  IterationRecord rec;
  rec.iter = iter;
  rec.objective = obj;
  rec.decrement = decrement;
  std::tie(rec.residual_h, rec.residual_d) = fixed_point_residual(s0, model);
  rec.min_d = model.d().minCoeff();
  if (validate) {
    rec.psd_slack = min_eigenvalue(SymMatrix(s0.matrix() - model.h() * model.h().transpose()));
    rec.min_singular_h = min_singular_value(model.h());
  }
  return rec;
}

// Empty string when every bound holds.
inline std::string bound_violation(const CovarianceMatrix& s0, const FactorModel& model, const IterationRecord& rec) {
  const Vector& d = model.d();
  for (Index i = 0; i < d.size(); ++i) {
    if (!(d(i) > 0.0) || d(i) > s0.matrix()(i, i) + 1e-12) {
      return "diagonal bound violated at entry " + std::to_string(i);
    }
  }
  if (rec.psd_slack < -1e-9) return "S0 - H H^T has eigenvalue " + std::to_string(rec.psd_slack);
  if (rec.decrement < -1e-12) return "objective increased by " + std::to_string(-rec.decrement);
  return {};
}

}  // namespace detail

/// Runs the configured recursion from init_model() until S0 is reproduced
/// exactly, both fixed-point residuals drop below tol_fixed_point, the
/// decrement drops below tol_divergence_decrement with the residuals under
/// stationarity_gate, or max_iter is hit.
inline FitResult fit(const CovarianceMatrix& s0, const FitConfig& cfg) {
  const Index n = s0.dim();
  cfg.check(n);
  FitResult result;
  result.config = cfg;
  result.fingerprint = input_fingerprint(s0.matrix());
  FitTrace& trace = result.trace;

  FactorModel model = init_model(s0, cfg);
  KPDState state;
  if (cfg.variant == Variant::Alg2) {
    const bool with_q = cfg.init.kind == InitKind::Explicit && model.has_q();
    state = with_q ? KPDState::from_model(model) : KPDState{model.h(), Matrix::Identity(cfg.k, cfg.k), model.d()};
  }
  model = model.without_q();

  double obj = objective(s0, model);
  trace.iterations.push_back(detail::make_record(s0, model, 0, obj, 0.0, cfg.validate));
  const auto finish = [&](TerminationKind kind, std::string reason = {}) {
    trace.termination = {kind, std::move(reason)};
    result.model = model;
    result.objective = obj;
    return result;
  };
  if (exact_fa_diagnostic(s0, model)) return finish(TerminationKind::ExactModelStop);

  for (int t = 1; t <= cfg.max_iter; ++t) {
    FactorModel next;
    double min_eig_r = std::numeric_limits<double>::quiet_NaN();
    int hits = 0;
    try {
      if (cfg.variant == Variant::Alg1) {
        detail::Alg1Work work = detail::alg1_step_impl(s0, model, cfg.diag_floor);
        if (cfg.validate) min_eig_r = min_eigenvalue(SymMatrix(work.r));
        hits = work.floor_hits;
        next = std::move(work.next);
      } else {
        state = detail::alg2_step_impl(s0, state, cfg.diag_floor, &hits);
        next = state.extract();
      }
    } catch (const Error& e) {
      return finish(TerminationKind::NumericalBreakdown, "iteration " + std::to_string(t) + ": " + e.what());
    }

    double next_obj = 0.0;
    try {
      next_obj = objective(s0, next);
    } catch (const Error& e) {
      return finish(TerminationKind::NumericalBreakdown, "iteration " + std::to_string(t) + ": " + e.what());
    }
    IterationRecord rec = detail::make_record(s0, next, t, next_obj, obj - next_obj, cfg.validate);
    rec.min_eig_r = min_eig_r;
    rec.floor_hits = hits;
    trace.floor_activations += hits;
    if (cfg.validate && !(rec.min_singular_h > 1e-12 * std::max(1.0, max_abs(next.h())))) ++trace.rank_warnings;

    model = std::move(next);
    obj = next_obj;
    trace.iterations.push_back(rec);

    if (cfg.validate) {
      std::string why = detail::bound_violation(s0, model, rec);
      if (!why.empty()) return finish(TerminationKind::NumericalBreakdown, "iteration " + std::to_string(t) + ": " + why);
    }
    if (exact_fa_diagnostic(s0, model)) return finish(TerminationKind::ExactModelStop);
    if (rec.residual_h < cfg.tol_fixed_point && rec.residual_d < cfg.tol_fixed_point) {
      return finish(TerminationKind::Converged);
    }
    if (rec.decrement < cfg.tol_divergence_decrement && rec.residual_h < cfg.stationarity_gate &&
        rec.residual_d < cfg.stationarity_gate) {
      return finish(TerminationKind::Converged);
    }
  }
  return finish(TerminationKind::MaxIter);
}

}  // namespace divfact
