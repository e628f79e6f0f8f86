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

// divfact: fit factor models by I-divergence minimization.
//
//   divfact fit --input S0.csv --k 2 [--output result.json] [--trace trace.json]
//   divfact synth --n 6 --k 2 --seed 7 --out-prefix out/p
//   divfact divergence A.csv B.csv
//
// Exit codes: 0 converged (or exact model), 1 bad input, 2 iteration cap,
// 3 numerical breakdown.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "divfact/divfact.hpp"
#include "divfact/io.hpp"

namespace {

using divfact::io::json;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitMaxIter = 2;
constexpr int kExitBreakdown = 3;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct FitArgs {
  std::string input;
  long k = 0;
  std::string variant = "alg1";
  std::string init = "pca";
  std::string init_file;
  std::uint64_t seed = 0;
  int max_iter = 10000;
  double tol_decrement = 1e-12;
  double tol_fixed_point = 1e-9;
  std::string trace;
  std::string validate;
  bool data = false;
  bool ridge = false;
  std::string output;
  std::string fitted_cov;
  bool timestamp = false;
};

int run_fit(const FitArgs& a) {
  using namespace divfact;
  std::vector<std::string> warnings;
  CovarianceMatrix s0;
  if (a.data) {
    const Matrix raw = io::read_matrix_csv(a.input);
    try {
      s0 = sample_covariance(raw, a.ridge);
    } catch (const DefinitenessError&) {
      throw InputError(a.input + ": sample covariance is rank deficient; rerun with --ridge");
    }
  } else {
    s0 = io::read_covariance_csv(a.input, &warnings);
  }
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';

  FitConfig cfg;
  cfg.k = a.k;
  cfg.variant = a.variant == "alg2" ? Variant::Alg2 : Variant::Alg1;
  cfg.max_iter = a.max_iter;
  cfg.tol_divergence_decrement = a.tol_decrement;
  cfg.tol_fixed_point = a.tol_fixed_point;
  std::string validate = a.validate;
  if (validate.empty()) {
    const char* env = std::getenv("DIVFACT_VALIDATE");
    validate = env ? env : "on";
  }
  if (validate != "on" && validate != "off") throw InputError("--validate must be 'on' or 'off', got '" + validate + "'");
  cfg.validate = validate == "on";
  if (a.init == "pca") {
    cfg.init = InitStrategy::principal_components();
  } else if (a.init == "random") {
    cfg.init = InitStrategy::random(a.seed);
  } else {
    if (a.init_file.empty()) throw InputError("--init file requires --init-file <model.json>");
    cfg.init = InitStrategy::explicit_model(io::model_from_json(io::read_json(a.init_file), a.init_file));
  }
  cfg.init.seed = a.seed;
  cfg.check(s0.dim());

  const FitResult res = fit(s0, cfg);

  io::RunManifest manifest;
  manifest.command = "fit";
  manifest.inputs = {a.input};
  if (!a.init_file.empty()) manifest.inputs.push_back(a.init_file);
  manifest.config = io::config_to_json(cfg);
  manifest.config["data"] = a.data;
  manifest.config["ridge"] = a.ridge;
  manifest.seed = a.seed;
  manifest.fingerprint = res.fingerprint;
  manifest.termination = to_string(res.trace.termination.kind);
  if (a.timestamp) manifest.timestamp = utc_now();

  const json doc = io::result_to_json(res, manifest, false);
  if (a.output.empty() || a.output == "-") {
    std::cout << doc.dump(2) << '\n';
  } else {
    io::write_json(a.output, doc);
  }
  if (!a.trace.empty()) io::write_json(a.trace, io::result_to_json(res, manifest, true));
  if (!a.fitted_cov.empty()) io::write_matrix_csv(a.fitted_cov, res.model.covariance());

  switch (res.trace.termination.kind) {
    case TerminationKind::Converged:
    case TerminationKind::ExactModelStop:
      return kExitOk;
    case TerminationKind::MaxIter:
      std::cerr << "divfact: iteration cap reached (" << cfg.max_iter << ")\n";
      return kExitMaxIter;
    case TerminationKind::NumericalBreakdown:
      std::cerr << "divfact: numerical breakdown: " << res.trace.termination.reason << '\n';
      return kExitBreakdown;
  }
  return kExitBreakdown;
}

struct SynthArgs {
  long n = 0;
  long k = 0;
  std::uint64_t seed = 0;
  double loading_scale = 1.0;
  double noise_scale = 1.0;
  double perturbation = 0.0;
  std::string prefix;
  bool timestamp = false;
};

int run_synth(const SynthArgs& a) {
  using namespace divfact;
  SyntheticSpec spec;
  spec.n = a.n;
  spec.k = a.k;
  spec.seed = a.seed;
  spec.loading_scale = a.loading_scale;
  spec.noise_scale = a.noise_scale;
  spec.perturbation = a.perturbation;
  const PlantedProblem p = plant_model(spec);

  io::RunManifest manifest;
  manifest.command = "synth";
  manifest.config = {{"n", a.n},
                     {"k", a.k},
                     {"loading_scale", a.loading_scale},
                     {"noise_scale", a.noise_scale},
                     {"perturbation", a.perturbation}};
  manifest.seed = a.seed;
  manifest.fingerprint = input_fingerprint(p.s0.matrix());
  if (a.timestamp) manifest.timestamp = utc_now();

  const std::string cov_path = a.prefix + ".cov.csv";
  io::write_matrix_csv(cov_path, p.s0.matrix());
  json model = io::model_to_json(p.truth);
  model["manifest"] = manifest.to_json();
  io::write_json(a.prefix + ".model.json", model);
  json m = manifest.to_json();
  m["outputs"] = {cov_path, a.prefix + ".model.json"};
  io::write_json(a.prefix + ".manifest.json", m);
  return kExitOk;
}

int run_divergence(const std::string& a, const std::string& b) {
  using namespace divfact;
  std::vector<std::string> warnings;
  const CovarianceMatrix s1 = io::read_covariance_csv(a, &warnings);
  const CovarianceMatrix s2 = io::read_covariance_csv(b, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  if (s1.dim() != s2.dim()) {
    throw InputError("dimension mismatch: " + a + " is " + std::to_string(s1.dim()) + "x" + std::to_string(s1.dim()) +
                     ", " + b + " is " + std::to_string(s2.dim()) + "x" + std::to_string(s2.dim()));
  }
  std::printf("%.15g\n", i_divergence(s1, s2));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Factor analysis by I-divergence minimization"};
  app.set_version_flag("--version", divfact::kVersion);
  app.require_subcommand(1);

  FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "Fit H H^T + D to a covariance matrix");
  fit_cmd->add_option("--input", fa.input, "CSV covariance (or raw data with --data)")->required();
  fit_cmd->add_option("--k", fa.k, "Number of factors (1 <= k < n)")->required();
  fit_cmd->add_option("--variant", fa.variant, "alg1 (H/D recursion) or alg2 (K/P/D recursion)")
      ->check(CLI::IsMember({"alg1", "alg2"}));
  fit_cmd->add_option("--init", fa.init, "pca, random or file")->check(CLI::IsMember({"pca", "random", "file"}));
  fit_cmd->add_option("--init-file", fa.init_file, "Model JSON with H and D for --init file");
  fit_cmd->add_option("--seed", fa.seed, "Seed for --init random");
  fit_cmd->add_option("--max-iter", fa.max_iter, "Iteration cap")->check(CLI::NonNegativeNumber);
  fit_cmd->add_option("--tol-decrement", fa.tol_decrement, "Objective decrement tolerance")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--tol-fixed-point", fa.tol_fixed_point, "Fixed-point residual tolerance")
      ->check(CLI::PositiveNumber);
  fit_cmd->add_option("--trace", fa.trace, "Write the result with per-iteration trace to this path");
  fit_cmd->add_option("--validate", fa.validate, "on|off per-iterate bound checks (default $DIVFACT_VALIDATE or on)");
  fit_cmd->add_flag("--data", fa.data, "Input holds raw m x n observations");
  fit_cmd->add_flag("--ridge", fa.ridge, "With --data, regularize a rank-deficient sample covariance");
  fit_cmd->add_option("--output,-o", fa.output, "Result JSON path (default stdout)");
  fit_cmd->add_option("--fitted-cov", fa.fitted_cov, "Also write H H^T + D as CSV");
  fit_cmd->add_flag("--timestamp", fa.timestamp, "Record wall-clock time in the manifest");

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a planted factor model and its covariance");
  synth_cmd->add_option("--n", sa.n, "Observed dimension")->required();
  synth_cmd->add_option("--k", sa.k, "Number of factors")->required();
  synth_cmd->add_option("--seed", sa.seed, "Generator seed");
  synth_cmd->add_option("--loading-scale", sa.loading_scale, "Scale of the loadings");
  synth_cmd->add_option("--noise-scale", sa.noise_scale, "Scale of the noise variances");
  synth_cmd->add_option("--perturbation", sa.perturbation, "Symmetric perturbation magnitude");
  synth_cmd->add_option("--out-prefix", sa.prefix, "Writes <prefix>.cov.csv, .model.json, .manifest.json")
      ->required();
  synth_cmd->add_flag("--timestamp", sa.timestamp, "Record wall-clock time in the manifest");

  std::string div_a;
  std::string div_b;
  auto* div_cmd = app.add_subcommand("divergence", "Print D(A || B) for two covariance CSV files");
  div_cmd->add_option("first", div_a, "A")->required();
  div_cmd->add_option("second", div_b, "B")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*fit_cmd) return run_fit(fa);
    if (*synth_cmd) return run_synth(sa);
    if (*div_cmd) return run_divergence(div_a, div_b);
  } catch (const divfact::InputError& e) {
    std::cerr << "divfact: " << e.what() << '\n';
    return kExitInput;
  } catch (const divfact::DimensionError& e) {
    std::cerr << "divfact: " << e.what() << '\n';
    return kExitInput;
  } catch (const divfact::Error& e) {
    std::cerr << "divfact: " << e.what() << '\n';
    return kExitBreakdown;
  }
  return kExitInput;
}
