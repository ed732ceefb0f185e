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

#ifndef DMPC_BENCHMARKS_HPP
#define DMPC_BENCHMARKS_HPP

#include <optional>
#include <string>
#include <vector>

#include "dmpc/network_model.hpp"

namespace dmpc {

/// Parameters of the scalar coupled-input system
///   xdot_i = (mu_i + (1 - mu_i) x_i) u_i + sum_j eps_ij x_j,  u_i in [-2, 2].
/// eps(i, j) != 0 declares an edge j -> i.
struct ScalarCoupledParams {
  std::vector<double> mu{0.5, 0.5};
  MatrixXd eps = (MatrixXd(2, 2) << 0.0, 2.0, 2.0, 0.0).finished();
  double input_bound = 2.0;
  double q_weight = 10.0;
  double r_weight = 1.0;
};

/// Three coupled oscillators with van der Pol style damping; agents have
/// states (theta_i, thetadot_i), scalar controls u_i in [-1, 1], and the
/// topology 1 -> {2,3}, 2 -> 3, 3 -> 2.
struct CoupledVdpParams {
  double q_weight = 30.0;
  double r_weight = 0.1;
  double input_bound = 1.0;
};

/// Builds the coupled-oscillator benchmark. Terminal weights P_i are required
/// for simulation; pass std::nullopt when the model only feeds synthesis.
NetworkModel make_coupled_vdp(const CoupledVdpParams& params = {},
                              std::optional<std::vector<MatrixXd>> P = std::nullopt);

NetworkModel make_scalar_coupled(const ScalarCoupledParams& params = {},
                                 std::optional<std::vector<MatrixXd>> P = std::nullopt);

/// Factory for the built-in models by name ("coupled-vdp", "scalar-coupled").
NetworkModel make_builtin(const std::string& name, const ScalarCoupledParams& scalar_params,
                          const CoupledVdpParams& vdp_params,
                          std::optional<std::vector<MatrixXd>> P = std::nullopt);

}  // namespace dmpc

#endif  // DMPC_BENCHMARKS_HPP
