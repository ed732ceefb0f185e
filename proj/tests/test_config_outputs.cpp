/*
 Copyright 2026 The sensi-dmpc Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dmpc/run_outputs.hpp"
#include "dmpc/scenario_config.hpp"

using namespace dmpc;
namespace fs = std::filesystem;

namespace {

const char* kBenchmarkJson = R"({
  "system": { "builtin": "coupled-vdp" },
  "horizon": { "T": 3.0, "dt": 0.05, "n_disc": 21 },
  "algorithm": { "mode": "criterion", "d": 0.1, "q_max": 50, "damping": 0.0,
                 "inner": { "tol_u": 1e-6, "max_iter": 200 } },
  "terminal": { "gamma": 1.2, "beta": "auto" },
  "simulation": { "t_final": 6.0, "x0": [[0.7, 0.0], [0.28, 0.0], [-0.61, 0.0]],
                  "oracle": true, "seed": 1 },
  "output": { "dir": "out", "emit": ["trace", "convergence", "comm"] }
})";

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("benchmark config parses") {
  ScenarioConfig cfg = ScenarioConfig::from_json_text(kBenchmarkJson);
  CHECK(cfg.builtin == "coupled-vdp");
  CHECK(cfg.T == 3.0);
  CHECK(cfg.dt == 0.05);
  CHECK(cfg.n_disc == 21);
  CHECK(cfg.d == 0.1);
  CHECK(cfg.oracle);
  CHECK_FALSE(cfg.beta.has_value());  // "auto"
  CHECK(cfg.x0.size() == 3);
  CHECK(cfg.x0_central().size() == 6);
  CHECK(cfg.x0_central()[0] == 0.7);
  CHECK(cfg.x0_central()[4] == -0.61);

  const AlgorithmConfig algo = cfg.algorithm();
  CHECK(algo.mode == TerminationMode::Criterion);
  CHECK(algo.inner.control_tolerance == 1e-6);
}

TEST_CASE("overrides rewrite nested keys") {
  ScenarioConfig cfg = ScenarioConfig::from_json_text(
      kBenchmarkJson, {"algorithm.d=0.01", "simulation.oracle=false", "horizon.n_disc=41",
                       "terminal.beta=1.05"});
  CHECK(cfg.d == 0.01);
  CHECK_FALSE(cfg.oracle);
  CHECK(cfg.n_disc == 41);
  REQUIRE(cfg.beta.has_value());
  CHECK(*cfg.beta == 1.05);
}

TEST_CASE("config validation rejects bad values") {
  CHECK_THROWS_AS(ScenarioConfig::from_json_text(kBenchmarkJson, {"horizon.dt=3.0"}), ConfigError);
  CHECK_THROWS_AS(ScenarioConfig::from_json_text(kBenchmarkJson, {"horizon.dt=4.0"}), ConfigError);
  CHECK_THROWS_AS(ScenarioConfig::from_json_text(kBenchmarkJson, {"horizon.n_disc=1"}), ConfigError);
  CHECK_THROWS_AS(ScenarioConfig::from_json_text(kBenchmarkJson, {"algorithm.d=0"}), ConfigError);
  CHECK_THROWS_AS(ScenarioConfig::from_json_text(kBenchmarkJson, {"algorithm.d=-1"}), ConfigError);
  CHECK_THROWS_AS(ScenarioConfig::from_json_text(kBenchmarkJson, {"algorithm.mode=\"x\""}),
                  ConfigError);
  CHECK_THROWS_AS(ScenarioConfig::from_json_text(kBenchmarkJson, {"terminal.gamma=1.0"}),
                  ConfigError);
  CHECK_THROWS_AS(ScenarioConfig::from_json_text("not json"), ConfigError);
  // fixed mode tolerates d = 0 (the criterion is not evaluated)
  ScenarioConfig cfg = ScenarioConfig::from_json_text(
      kBenchmarkJson, {"algorithm.mode=\"fixed\"", "algorithm.d=0"});
  CHECK(cfg.mode == "fixed");
}

TEST_CASE("scalar-coupled params flow into the network") {
  const char* json = R"({
    "system": { "builtin": "scalar-coupled",
                "params": { "mu": [1.0, 0.5], "eps": [[0.0, 0.5], [2.0, 0.0]] } },
    "horizon": { "T": 0.5, "dt": 0.05, "n_disc": 21 },
    "simulation": { "x0": [[-1.3], [1.4]] }
  })";
  ScenarioConfig cfg = ScenarioConfig::from_json_text(json);
  NetworkModel net = build_scenario_network(
      cfg, std::vector<MatrixXd>{MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1)});
  CHECK(net.agent_count() == 2);
  CHECK(net.graph().senders(0) == std::vector<int>{1});
  CHECK(net.graph().senders(1) == std::vector<int>{0});
  VectorXd x(1), u(1), xn(1);
  x << 0.0;
  u << 1.0;
  xn << 0.0;
  // mu_0 = 1: f = u at the origin
  CHECK(net.agent_dynamics(0, x, u, {{1, xn}})[0] == doctest::Approx(1.0));
}

TEST_CASE("trace csv schema and determinism") {
  MpcTrace trace;
  MpcStepRecord s;
  s.k = 0;
  s.t = 0.0;
  s.plant_state = (VectorXd(2) << 0.123456789012345, -1.0 / 3.0).finished();
  s.applied_control = VectorXd::Constant(1, 0.25);
  s.iterations = 4;
  s.oracle_cost = 12.5;
  s.stage_cost = 3.25;
  s.messages = 10;
  s.bytes = 3680;
  trace.steps.push_back(s);
  trace.final_state = (VectorXd(2) << 0.1, 0.2).finished();
  trace.final_time = 0.05;

  const fs::path dir = fs::temp_directory_path() / "dmpc_test_out";
  fs::create_directories(dir);
  const std::string path = (dir / "trace.csv").string();
  write_trace_csv(path, trace, 2, 1);
  const std::string first = read_file(path);
  write_trace_csv(path, trace, 2, 1);
  CHECK(first == read_file(path));

  std::istringstream lines(first);
  std::string header;
  std::getline(lines, header);
  CHECK(header == "k,t,x0,x1,u0,q_k,J_oracle,stage_cost,msgs,bytes,wall_ms");
  std::string row;
  std::getline(lines, row);
  CHECK(row.find("0.12345678901234499") != std::string::npos);
  CHECK(row.find(",4,") != std::string::npos);
  // final-state row is appended
  std::getline(lines, row);
  CHECK(row.substr(0, 2) == "1,");
}

TEST_CASE("region and convergence csv headers") {
  const fs::path dir = fs::temp_directory_path() / "dmpc_test_out";
  fs::create_directories(dir);

  std::vector<RegionRecord> recs{{(VectorXd(2) << -1.3, 1.4).finished(), 1, 0}};
  write_region_csv((dir / "region.csv").string(), recs, 2);
  std::istringstream region(read_file(dir / "region.csv"));
  std::string header;
  std::getline(region, header);
  CHECK(header == "x0_0,x0_1,stabilized,endpoint_in_terminal");
  std::string row;
  std::getline(region, row);
  CHECK(row == "-1.3,1.4,1,0");

  ConvergenceSample sample;
  sample.sample_id = 0;
  sample.table.rows = {{0, 1.0, 0.6, 0.8}, {1, 0.5, 0.3, 0.4}};
  sample.table.contraction_ratio = 0.5;
  write_convergence_csv((dir / "conv.csv").string(), {sample});
  std::istringstream conv(read_file(dir / "conv.csv"));
  std::getline(conv, header);
  CHECK(header == "sample_id,q,err_total,err_state,err_adjoint");
  std::getline(conv, row);
  CHECK(row == "0,0,1,0.59999999999999998,0.80000000000000004");
  // envelope (-1), median (-2) and ratio (-3) sentinel rows follow the data
  int sentinel_rows = 0;
  while (std::getline(conv, row))
    if (row.rfind("-", 0) == 0) ++sentinel_rows;
  CHECK(sentinel_rows == 5);  // 2 envelope + 2 median + 1 ratio
}

TEST_CASE("ingredients file round trip") {
  TerminalIngredients ing;
  ing.P_blocks = {(MatrixXd(2, 2) << 37.99, 1.96, 1.96, 2.2).finished(),
                  (MatrixXd(2, 2) << 38.75, 1.66, 1.66, 2.2).finished()};
  ing.K = MatrixXd::Random(2, 4);
  ing.gamma = 1.2;
  ing.beta = 0.0065;
  ing.alpha = 0.0067;
  ing.logdet_E = -12.5;
  ing.lmi_residual = -1e-9;
  ing.bounds = {0.1, 30.0, 2.09, 39.0};
  ing.clf = {true, -1e-4, VectorXd::Zero(4), true, 10000};

  const fs::path path = fs::temp_directory_path() / "dmpc_ing.json";
  save_ingredients(path.string(), ing, "coupled-vdp");
  TerminalIngredients back = load_ingredients(path.string());
  CHECK((back.P_blocks[0] - ing.P_blocks[0]).norm() == doctest::Approx(0.0));
  CHECK((back.K - ing.K).norm() == doctest::Approx(0.0));
  CHECK(back.beta == ing.beta);
  CHECK(back.alpha == ing.alpha);
  CHECK(back.bounds.m_V == ing.bounds.m_V);

  CHECK_THROWS_AS(load_ingredients("/nonexistent/path.json"), ConfigError);
}
