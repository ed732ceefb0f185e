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

#include "dmpc/benchmarks.hpp"

namespace dmpc {

namespace {

LocalCost quadratic_local_cost(const MatrixXd& Q, const MatrixXd& R) {
  return LocalCost{
      [Q, R](const VectorXd& x, const VectorXd& u) {
        return (x.dot(Q * x) + u.dot(R * u));
      },
      [Q](const VectorXd& x, const VectorXd&) { return VectorXd(2.0 * Q * x); },
      [R](const VectorXd&, const VectorXd& u) { return VectorXd(2.0 * R * u); }};
}

TerminalCost quadratic_terminal_cost(const MatrixXd& P) {
  return TerminalCost{[P](const VectorXd& x) { return x.dot(P * x); },
                      [P](const VectorXd& x) { return VectorXd(2.0 * P * x); }};
}

// Second-order couplings of the oscillator benchmark enter only the velocity
// equation; both have the form [0; g(x_sender)].
CouplingDynamics product_coupling(double gain) {
  // [0, gain * xs0 * xs1]
  return CouplingDynamics{
      [gain](const VectorXd&, const VectorXd& xs) {
        VectorXd out(2);
        out << 0.0, gain * xs[0] * xs[1];
        return out;
      },
      [](const VectorXd&, const VectorXd&) { return MatrixXd::Zero(2, 2).eval(); },
      [gain](const VectorXd&, const VectorXd& xs) {
        MatrixXd J = MatrixXd::Zero(2, 2);
        J(1, 0) = gain * xs[1];
        J(1, 1) = gain * xs[0];
        return J;
      }};
}

CouplingDynamics velocity_coupling(double gain) {
  // [0, gain * xs1]
  return CouplingDynamics{
      [gain](const VectorXd&, const VectorXd& xs) {
        VectorXd out(2);
        out << 0.0, gain * xs[1];
        return out;
      },
      [](const VectorXd&, const VectorXd&) { return MatrixXd::Zero(2, 2).eval(); },
      [gain](const VectorXd&, const VectorXd&) {
        MatrixXd J = MatrixXd::Zero(2, 2);
        J(1, 1) = gain;
        return J;
      }};
}

}  // namespace

NetworkModel make_coupled_vdp(const CoupledVdpParams& params,
                              std::optional<std::vector<MatrixXd>> P) {
  const MatrixXd Q = params.q_weight * MatrixXd::Identity(2, 2);
  const MatrixXd R = params.r_weight * MatrixXd::Identity(1, 1);

  auto oscillator = [](double vdp_gain, double vdp_coeff, double stiffness,
                       double velocity_selfgain) {
    LocalDynamics d;
    d.f = [=](const VectorXd& x, const VectorXd& u) {
      VectorXd out(2);
      out << x[1], vdp_gain * (1.0 - vdp_coeff * x[0] * x[0]) * x[1] - stiffness * x[0] +
                       velocity_selfgain * x[1] + u[0];
      return out;
    };
    d.dx = [=](const VectorXd& x, const VectorXd&) {
      MatrixXd J(2, 2);
      J << 0.0, 1.0,  //
          -2.0 * vdp_gain * vdp_coeff * x[0] * x[1] - stiffness,
          vdp_gain * (1.0 - vdp_coeff * x[0] * x[0]) + velocity_selfgain;
      return J;
    };
    d.du = [](const VectorXd&, const VectorXd&) {
      MatrixXd J(2, 1);
      J << 0.0, 1.0;
      return J;
    };
    return d;
  };

  std::vector<AgentModel> agents(3);
  for (auto& a : agents) {
    a.state_dim = 2;
    a.input_dim = 1;
    a.input_box = Box::symmetric(1, params.input_bound);
    a.local_cost = quadratic_local_cost(Q, R);
  }
  agents[0].local_dynamics = oscillator(0.1, 5.25, 1.0, 0.0);
  agents[1].local_dynamics = oscillator(0.001, 6070.0, 4.0, 0.1);
  agents[2].local_dynamics = oscillator(0.001, 192.0, 4.0, 0.1);

  agents[1].coupling_dynamics[0] = product_coupling(0.057);
  agents[1].coupling_dynamics[2] = velocity_coupling(-0.1);
  agents[2].coupling_dynamics[0] = product_coupling(0.057);
  agents[2].coupling_dynamics[1] = velocity_coupling(-0.1);

  QuadraticCostSpec spec;
  spec.Q = {Q, Q, Q};
  spec.R = {R, R, R};
  for (int i = 0; i < 3; ++i)
    agents[i].terminal_cost = quadratic_terminal_cost(P ? (*P)[i] : MatrixXd::Zero(2, 2));
  if (P) spec.P = *P;

  CouplingGraph graph(3, {{0, 1}, {0, 2}, {1, 2}, {2, 1}});
  return NetworkModel::build(std::move(graph), std::move(agents), std::move(spec));
}

NetworkModel make_scalar_coupled(const ScalarCoupledParams& params,
                                 std::optional<std::vector<MatrixXd>> P) {
  const int N = static_cast<int>(params.mu.size());
  if (params.eps.rows() != N || params.eps.cols() != N)
    throw DimensionMismatch("scalar-coupled: eps must be N x N");

  std::set<std::pair<int, int>> edges;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      if (i != j && params.eps(i, j) != 0.0) edges.insert({j, i});

  std::vector<AgentModel> agents(N);
  const MatrixXd Q = params.q_weight * MatrixXd::Identity(1, 1);
  const MatrixXd R = params.r_weight * MatrixXd::Identity(1, 1);
  QuadraticCostSpec spec;
  for (int i = 0; i < N; ++i) {
    auto& a = agents[i];
    a.state_dim = 1;
    a.input_dim = 1;
    a.input_box = Box::symmetric(1, params.input_bound);
    const double mu = params.mu[i];
    a.local_dynamics.f = [mu](const VectorXd& x, const VectorXd& u) {
      VectorXd out(1);
      out << (mu + (1.0 - mu) * x[0]) * u[0];
      return out;
    };
    a.local_dynamics.dx = [mu](const VectorXd&, const VectorXd& u) {
      MatrixXd J(1, 1);
      J << (1.0 - mu) * u[0];
      return J;
    };
    a.local_dynamics.du = [mu](const VectorXd& x, const VectorXd&) {
      MatrixXd J(1, 1);
      J << mu + (1.0 - mu) * x[0];
      return J;
    };
    for (int j = 0; j < N; ++j) {
      if (i == j || params.eps(i, j) == 0.0) continue;
      const double eps = params.eps(i, j);
      a.coupling_dynamics[j] = CouplingDynamics{
          [eps](const VectorXd&, const VectorXd& xj) { return VectorXd(eps * xj); },
          [](const VectorXd&, const VectorXd&) { return MatrixXd::Zero(1, 1).eval(); },
          [eps](const VectorXd&, const VectorXd&) {
            return MatrixXd(MatrixXd::Constant(1, 1, eps));
          }};
    }
    a.local_cost = quadratic_local_cost(Q, R);
    a.terminal_cost = quadratic_terminal_cost(P ? (*P)[i] : MatrixXd::Zero(1, 1));
    spec.Q.push_back(Q);
    spec.R.push_back(R);
  }
  if (P) spec.P = *P;

  CouplingGraph graph(N, edges);
  return NetworkModel::build(std::move(graph), std::move(agents), std::move(spec));
}

NetworkModel make_builtin(const std::string& name, const ScalarCoupledParams& scalar_params,
                          const CoupledVdpParams& vdp_params,
                          std::optional<std::vector<MatrixXd>> P) {
  if (name == "coupled-vdp") return make_coupled_vdp(vdp_params, std::move(P));
  if (name == "scalar-coupled") return make_scalar_coupled(scalar_params, std::move(P));
  throw ConfigError("unknown builtin system '" + name + "'");
}

}  // namespace dmpc
