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

// End-to-end runs of the divfact executable.

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <gtest/gtest.h>

#include "divfact/divfact.hpp"
#include "divfact/io.hpp"

namespace divfact {
namespace {

namespace fs = std::filesystem;
using io::json;

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("divfact_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  CliRun run(const std::string& args) const {
    const std::string out = path("stdout.txt");
    const std::string err = path("stderr.txt");
    const std::string cmd = std::string("\"") + DIVFACT_CLI + "\" " + args + " >\"" + out + "\" 2>\"" + err + "\"";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  void write(const std::string& name, const std::string& text) const { std::ofstream(path(name)) << text; }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  fs::path dir_;
};

TEST_F(Cli, SynthIsDeterministicAndExact) {
  ASSERT_EQ(run("synth --n 6 --k 2 --seed 7 --out-prefix " + path("a")).code, 0);
  ASSERT_EQ(run("synth --n 6 --k 2 --seed 7 --out-prefix " + path("b")).code, 0);
  EXPECT_EQ(slurp(path("a.cov.csv")), slurp(path("b.cov.csv")));
  EXPECT_EQ(slurp(path("a.model.json")), slurp(path("b.model.json")));

  const CovarianceMatrix s0 = io::read_covariance_csv(path("a.cov.csv"));
  const FactorModel truth = io::model_from_json(io::read_json(path("a.model.json")));
  EXPECT_TRUE(exact_fa_diagnostic(s0, truth));
  // Re-read values equal the generator's output bit for bit.
  SyntheticSpec spec;
  spec.seed = 7;
  EXPECT_EQ(s0.matrix(), plant_model(spec).s0.matrix());

  const json manifest = io::read_json(path("a.manifest.json"));
  EXPECT_EQ(manifest["seed"], 7);
  EXPECT_EQ(manifest["command"], "synth");
  EXPECT_TRUE(io::read_json(path("a.model.json")).contains("manifest"));
}

TEST_F(Cli, SynthRejectsKEqualN) {
  const CliRun r = run("synth --n 6 --k 6 --out-prefix " + path("x"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("k must be < n"), std::string::npos);
}

TEST_F(Cli, FitPlantedModel) {
  ASSERT_EQ(run("synth --n 6 --k 2 --seed 3 --out-prefix " + path("p")).code, 0);
  const CliRun r = run("fit --input " + path("p.cov.csv") + " --k 2 --output " + path("r.json") + " --trace " +
                    path("t.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  const json doc = io::read_json(path("r.json"));
  EXPECT_LT(doc["objective"].get<double>(), 1e-10);
  EXPECT_FALSE(doc.contains("trace"));
  const json traced = io::read_json(path("t.json"));
  ASSERT_TRUE(traced.contains("trace"));
  EXPECT_EQ(traced["trace"].size(), doc["iterations"].get<std::size_t>() + 1);
  const CovarianceMatrix s0 = io::read_covariance_csv(path("p.cov.csv"));
  EXPECT_NEAR(objective(s0, io::model_from_json(doc)), doc["objective"].get<double>(), 1e-12);
}

TEST_F(Cli, FitRejectsKEqualN) {
  write("i.csv", "1,0\n0,1\n");
  const CliRun r = run("fit --input " + path("i.csv") + " --k 2");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("k must be < n"), std::string::npos);
}

TEST_F(Cli, FitIdentity) {
  write("i.csv", "# dim=3\n1,0,0\n0,1,0\n0,0,1\n");
  const CliRun r = run("fit --input " + path("i.csv") + " --k 1");
  ASSERT_EQ(r.code, 0) << r.err;
  const json doc = json::parse(r.out);
  EXPECT_LT(doc["objective"].get<double>(), 1e-12);
  const FactorModel m = io::model_from_json(doc);
  EXPECT_LT(max_abs(m.covariance() - Matrix::Identity(3, 3)), 1e-12);
  EXPECT_TRUE((m.d().array() > 0.0).all() && (m.d().array() <= 1.0).all());
}

TEST_F(Cli, FitExitCodes) {
  CounterRng rng(5);
  io::write_matrix_csv(path("s.csv"), random_spd(7, rng).matrix());
  EXPECT_EQ(run("fit --input " + path("s.csv") + " --k 2 --max-iter 2").code, 2);
  EXPECT_EQ(run("fit --input " + path("s.csv") + " --k 2 --variant alg3").code, 1);
  EXPECT_EQ(run("fit --input " + path("missing.csv") + " --k 2").code, 1);
  EXPECT_EQ(run("fit --input " + path("s.csv") + " --k 2 --validate maybe").code, 1);
  EXPECT_EQ(run("fit --input " + path("s.csv") + " --k 2 --init file").code, 1);
  EXPECT_EQ(run("fit --k 2").code, 1);
  write("bad.csv", "1,2\n2,oops\n");
  const CliRun bad = run("fit --input " + path("bad.csv") + " --k 1");
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("row 2, column 2"), std::string::npos);
  write("neg.csv", "1,2\n2,1\n");
  EXPECT_EQ(run("fit --input " + path("neg.csv") + " --k 1").code, 1);
}

TEST_F(Cli, FitVariantsAndInitFromFile) {
  ASSERT_EQ(run("synth --n 5 --k 1 --seed 11 --out-prefix " + path("p")).code, 0);
  const std::string in = "fit --input " + path("p.cov.csv") + " --k 1 ";
  // Starting at the truth stops immediately.
  const CliRun exact = run(in + "--init file --init-file " + path("p.model.json"));
  ASSERT_EQ(exact.code, 0) << exact.err;
  EXPECT_EQ(json::parse(exact.out)["termination"], "ExactModelStop");
  EXPECT_EQ(json::parse(exact.out)["iterations"], 0);
  EXPECT_EQ(run(in + "--variant alg2 --init random --seed 4").code, 0);
}

TEST_F(Cli, FitRawData) {
  // Observations from a one-factor model.
  CounterRng rng(6);
  const Matrix loadings = (Matrix(4, 1) << 0.9, 0.8, -0.7, 0.6).finished();
  const Matrix x = rng.normal_matrix(500, 1) * loadings.transpose() + 0.5 * rng.normal_matrix(500, 4);
  io::write_matrix_csv(path("x.csv"), x, false);
  const CliRun r = run("fit --input " + path("x.csv") + " --k 1 --data");
  EXPECT_EQ(r.code, 0) << r.err;
  io::write_matrix_csv(path("flat.csv"), Matrix::Ones(10, 3), false);
  const CliRun flat = run("fit --input " + path("flat.csv") + " --k 1 --data");
  EXPECT_EQ(flat.code, 1);
  EXPECT_NE(flat.err.find("--ridge"), std::string::npos);
}

TEST_F(Cli, Divergence) {
  write("a.csv", "2\n");
  write("b.csv", "1\n");
  write("i2.csv", "1,0\n0,1\n");
  const CliRun r = run("divergence " + path("a.csv") + " " + path("b.csv"));
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "0.153426409720027\n");
  EXPECT_EQ(run("divergence " + path("i2.csv") + " " + path("i2.csv")).out, "0\n");
  EXPECT_EQ(run("divergence " + path("a.csv") + " " + path("i2.csv")).code, 1);
}

TEST_F(Cli, PipelineIsByteIdentical) {
  ASSERT_EQ(run("synth --n 6 --k 2 --seed 9 --perturbation 0.05 --out-prefix " + path("p")).code, 0);
  const std::string fit = "fit --input " + path("p.cov.csv") + " --k 2 --trace ";
  const CliRun a = run(fit + path("t1.json") + " --output " + path("r1.json") + " --fitted-cov " + path("f1.csv"));
  const CliRun b = run(fit + path("t2.json") + " --output " + path("r2.json") + " --fitted-cov " + path("f2.csv"));
  ASSERT_EQ(a.code, b.code);
  EXPECT_EQ(slurp(path("r1.json")), slurp(path("r2.json")));
  EXPECT_EQ(slurp(path("t1.json")), slurp(path("t2.json")));
  const CliRun d = run("divergence " + path("p.cov.csv") + " " + path("f1.csv"));
  ASSERT_EQ(d.code, 0);
  const double reported = io::read_json(path("r1.json"))["objective"].get<double>();
  EXPECT_NEAR(std::stod(d.out), reported, 1e-12);
}

}  // namespace
}  // namespace divfact
