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

#ifndef DMPC_SCENARIO_CONFIG_HPP
#define DMPC_SCENARIO_CONFIG_HPP

#include <optional>
#include <string>
#include <vector>

#include "dmpc/algorithm.hpp"
#include "dmpc/benchmarks.hpp"
#include "dmpc/network_model.hpp"

namespace dmpc {

/// Scenario description loaded from a JSON config file. Key layout:
///
///   system:     { builtin, params: { mu: [...], eps: [[...]] } }
///   horizon:    { T, dt, n_disc }
///   algorithm:  { mode, d, q_max, damping, inner: { tol_u, max_iter } }
///   terminal:   { gamma, beta (number or "auto"), ingredients_file }
///   simulation: { t_final, x0: per-agent vectors, oracle, seed }
///   output:     { dir, emit: ["trace","convergence","comm"] }
struct ScenarioConfig {
  std::string builtin = "coupled-vdp";
  ScalarCoupledParams scalar_params;
  CoupledVdpParams vdp_params;

  double T = 3.0;
  double dt = 0.05;
  int n_disc = 21;

  std::string mode = "criterion";
  double d = 0.1;
  int q_max = 50;
  double damping = 0.0;
  double inner_tol_u = 1e-6;
  int inner_max_iter = 100;

  double gamma = 1.2;
  std::optional<double> beta;  // empty means "auto"
  std::string ingredients_file;

  double t_final = 6.0;
  std::vector<VectorXd> x0;
  bool oracle = false;
  std::uint64_t seed = 1;

  std::string out_dir = "out";
  std::vector<std::string> emit{"trace", "convergence", "comm"};

  bool parallel = false;  // set from the command line, not the file

  TimeGrid grid() const { return TimeGrid(T, n_disc); }
  AlgorithmConfig algorithm() const;
  VectorXd x0_central() const;

  /// Parses and validates; dotted overrides ("algorithm.d=0.01") are applied
  /// before validation. Throws ConfigError with the offending key.
  static ScenarioConfig load(const std::string& path, const std::vector<std::string>& overrides = {});
  static ScenarioConfig from_json_text(const std::string& text,
                                       const std::vector<std::string>& overrides = {});
};

/// Builds the configured network; P blocks must be supplied for simulation.
NetworkModel build_scenario_network(const ScenarioConfig& config,
                                    std::optional<std::vector<MatrixXd>> P = std::nullopt);

}  // namespace dmpc

#endif  // DMPC_SCENARIO_CONFIG_HPP
