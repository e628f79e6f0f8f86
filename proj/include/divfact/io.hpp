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
 * File formats.
 *
 * Matrices are CSV: one row per line, comma separated, written with 17
 * significant digits so that a write/read cycle is bit exact. An optional
 * first line "# dim=<n>" declares the (square) dimension; other lines
 * starting with '#' and blank lines are ignored.
 *
 * Fit results are one JSON document:
 *   { "H": [[...], ...], "D": [...], "objective": x, "iterations": t,
 *     "termination": "Converged", "manifest": {...}, "trace": [...] }
 * where "trace" is present only in trace files.
 */

#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "divfact/altmin.hpp"
#include "divfact/divergence.hpp"
#include "divfact/matops.hpp"
#include "divfact/model.hpp"
#include "divfact/version.hpp"

namespace divfact::io {

using json = nlohmann::json;

inline constexpr double kAsymmetryWarn = 1e-12;
inline constexpr double kAsymmetryReject = 1e-6;

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline double parse_double(std::string_view field, const std::string& source, std::size_t row, std::size_t col) {
  const std::string_view f = trim(field);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), value);
  if (f.empty() || ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(value)) {
    throw InputError(source + ": row " + std::to_string(row + 1) + ", column " + std::to_string(col + 1) +
                     ": cannot parse '" + std::string(f) + "' as a finite number");
  }
  return value;
}

}  // namespace detail

/// Parses a CSV matrix. Rows must all have the same number of fields.
inline Matrix parse_matrix_csv(std::istream& in, const std::string& source = "<input>") {
  std::vector<std::vector<double>> rows;
  std::optional<long> declared;
  std::string line;
  bool first_content = true;
  while (std::getline(in, line)) {
    const std::string_view t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      if (first_content && rows.empty()) {
        const std::string_view body = detail::trim(t.substr(1));
        if (body.starts_with("dim=")) {
          long dim = 0;
          const std::string_view num = detail::trim(body.substr(4));
          const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), dim);
          if (ec != std::errc() || ptr != num.data() + num.size() || dim < 1) {
            throw InputError(source + ": malformed header '" + std::string(t) + "'");
          }
          declared = dim;
        }
      }
      continue;
    }
    first_content = false;
    std::vector<double> row;
    std::size_t start = 0;
    const std::size_t r = rows.size();
    while (true) {
      const std::size_t comma = t.find(',', start);
      const std::string_view field = t.substr(start, comma == std::string_view::npos ? t.npos : comma - start);
      row.push_back(detail::parse_double(field, source, r, row.size()));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw InputError(source + ": row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                       " fields, expected " + std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError(source + ": no matrix rows found");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  if (declared && (m.rows() != *declared || m.cols() != *declared)) {
    throw InputError(source + ": header declares dim=" + std::to_string(*declared) + " but the matrix is " +
                     std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  return m;
}

inline Matrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path + ": cannot open file");
  return parse_matrix_csv(in, path);
}

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_matrix_csv(std::ostream& out, const Matrix& m, bool header = true) {
  if (header && m.rows() == m.cols()) out << "# dim=" << m.rows() << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

inline void write_matrix_csv(const std::string& path, const Matrix& m, bool header = true) {
  std::ofstream out(path);
  if (!out) throw InputError(path + ": cannot open for writing");
  write_matrix_csv(out, m, header);
  if (!out) throw InputError(path + ": write failed");
}

/// Square matrix -> covariance. Asymmetry above 1e-6 * max|M| is rejected;
/// above 1e-12 * max|M| it is symmetrized with a warning.
inline CovarianceMatrix to_covariance(const Matrix& m, const std::string& source,
                                      std::vector<std::string>* warnings = nullptr) {
  if (m.rows() != m.cols()) {
    throw InputError(source + ": covariance must be square, got " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()));
  }
  const double scale = max_abs(m);
  const double asym = max_abs(m - m.transpose());
  if (asym > kAsymmetryReject * scale) {
    throw InputError(source + ": matrix is not symmetric (max |M - M^T| = " + format_double(asym) + ")");
  }
  if (asym > kAsymmetryWarn * scale && warnings) {
    warnings->push_back(source + ": symmetrized input with max |M - M^T| = " + format_double(asym));
  }
  try {
    return CovarianceMatrix(m, source);
  } catch (const DefinitenessError& e) {
    throw InputError(source + ": matrix is not positive definite (pivot " + std::to_string(e.index()) + ")");
  }
}

inline CovarianceMatrix read_covariance_csv(const std::string& path, std::vector<std::string>* warnings = nullptr) {
  return to_covariance(read_matrix_csv(path), path, warnings);
}

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Matrix matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j.front().is_array()) throw InputError(what + ": expected a nested array");
  const std::size_t cols = j.front().size();
  Matrix m(static_cast<Index>(j.size()), static_cast<Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) throw InputError(what + ": ragged rows");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[i][c].is_number()) throw InputError(what + ": non-numeric entry");
      m(static_cast<Index>(i), static_cast<Index>(c)) = j[i][c].get<double>();
    }
  }
  return m;
}

inline Vector vector_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw InputError(what + ": expected a non-empty array");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InputError(what + ": non-numeric entry");
    v(static_cast<Index>(i)) = j[i].get<double>();
  }
  return v;
}

/// Reads "H" and "D" (and "Q" when present) from a result or model document.
inline FactorModel model_from_json(const json& doc, const std::string& source = "<model>") {
  if (!doc.is_object() || !doc.contains("H") || !doc.contains("D")) {
    throw InputError(source + ": expected an object with \"H\" and \"D\"");
  }
  try {
    Matrix h = matrix_from_json(doc.at("H"), source + ": H");
    Vector d = vector_from_json(doc.at("D"), source + ": D");
    std::optional<Matrix> q;
    if (doc.contains("Q")) q = matrix_from_json(doc.at("Q"), source + ": Q");
    return FactorModel(std::move(h), std::move(d), std::move(q));
  } catch (const InputError&) {
    throw;
  } catch (const Error& e) {
    throw InputError(source + ": " + e.what());
  }
}

inline json model_to_json(const FactorModel& m) {
  json doc = {{"H", matrix_to_json(m.h())}, {"D", vector_to_json(m.d())}};
  if (m.q()) doc["Q"] = matrix_to_json(*m.q());
  return doc;
}

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path + ": cannot open file");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path + ": invalid JSON (" + e.what() + ")");
  }
}

inline void write_json(const std::string& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw InputError(path + ": cannot open for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw InputError(path + ": write failed");
}

inline std::string hex64(std::uint64_t x) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

struct RunManifest {
  std::string command;
  std::vector<std::string> inputs;
  json config = json::object();
  std::optional<std::uint64_t> seed;
  std::string version = kVersion;
  std::optional<std::uint64_t> fingerprint;
  // Wall-clock stamp; only recorded on request so that repeated runs
  // produce identical files.
  std::optional<std::string> timestamp;
  std::optional<std::string> termination;

  json to_json() const {
    json j = {{"command", command}, {"inputs", inputs}, {"config", config}, {"tool_version", version}};
    j["seed"] = seed ? json(*seed) : json(nullptr);
    j["input_fingerprint"] = fingerprint ? json(hex64(*fingerprint)) : json(nullptr);
    if (timestamp) j["timestamp"] = *timestamp;
    if (termination) j["termination"] = *termination;
    return j;
  }
};

inline json config_to_json(const FitConfig& cfg) {
  json init;
  switch (cfg.init.kind) {
    case InitKind::PrincipalComponents: init = "pca"; break;
    case InitKind::RandomSeeded: init = "random"; break;
    case InitKind::Explicit: init = "file"; break;
  }
  return {{"k", cfg.k},
          {"variant", to_string(cfg.variant)},
          {"init", init},
          {"seed", cfg.init.seed},
          {"max_iter", cfg.max_iter},
          {"tol_decrement", cfg.tol_divergence_decrement},
          {"tol_fixed_point", cfg.tol_fixed_point},
          {"stationarity_gate", cfg.stationarity_gate},
          {"diag_floor", cfg.diag_floor},
          {"validate", cfg.validate}};
}

inline json record_to_json(const IterationRecord& r) {
  const auto num = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
  return {{"iter", r.iter},
          {"objective", r.objective},
          {"decrement", r.decrement},
          {"residual_h", r.residual_h},
          {"residual_d", r.residual_d},
          {"min_d", r.min_d},
          {"psd_slack", num(r.psd_slack)},
          {"min_singular_h", num(r.min_singular_h)},
          {"min_eig_r", num(r.min_eig_r)},
          {"floor_hits", r.floor_hits}};
}

inline json result_to_json(const FitResult& res, const RunManifest& manifest, bool with_trace) {
  json doc = {{"H", matrix_to_json(res.model.h())},
              {"D", vector_to_json(res.model.d())},
              {"objective", res.objective},
              {"iterations", res.iterations()},
              {"termination", to_string(res.trace.termination.kind)},
              {"floor_activations", res.trace.floor_activations},
              {"rank_warnings", res.trace.rank_warnings},
              {"manifest", manifest.to_json()}};
  if (!res.trace.termination.reason.empty()) doc["termination_reason"] = res.trace.termination.reason;
  if (with_trace) {
    json trace = json::array();
    for (const auto& r : res.trace.iterations) trace.push_back(record_to_json(r));
    doc["trace"] = std::move(trace);
  }
  return doc;
}

}  // namespace divfact::io
