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

#ifndef DMPC_NETWORK_MODEL_HPP
#define DMPC_NETWORK_MODEL_HPP

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dmpc/trajectory.hpp"

namespace dmpc {

/// Directed coupling topology. An edge (j, i) means "agent j influences agent i".
class CouplingGraph {
 public:
  CouplingGraph() = default;
  CouplingGraph(int agent_count, const std::set<std::pair<int, int>>& edges);

  int agent_count() const { return agent_count_; }
  const std::set<std::pair<int, int>>& edges() const { return edges_; }

  /// Agents influencing i (i's dynamics/cost read their states).
  const std::vector<int>& senders(int i) const { return senders_[i]; }
  /// Agents influenced by i (they read i's state).
  const std::vector<int>& receivers(int i) const { return receivers_[i]; }
  /// Union of senders and receivers.
  const std::vector<int>& neighborhood(int i) const { return neighborhood_[i]; }

  bool has_edge(int from, int to) const { return edges_.count({from, to}) > 0; }
  bool is_neighbor(int i, int j) const;

 private:
  int agent_count_ = 0;
  std::set<std::pair<int, int>> edges_;
  std::vector<std::vector<int>> senders_, receivers_, neighborhood_;
};

/// Local dynamics f_ii(x_i, u_i) with Jacobians. Jacobians may be left empty;
/// a central finite-difference fallback is installed when the network is built.
struct LocalDynamics {
  std::function<VectorXd(const VectorXd&, const VectorXd&)> f;
  std::function<MatrixXd(const VectorXd&, const VectorXd&)> dx;  // n_i x n_i
  std::function<MatrixXd(const VectorXd&, const VectorXd&)> du;  // n_i x m_i
};

/// Coupling dynamics f_ij(x_i, x_j) of agent i w.r.t. sending neighbor j.
struct CouplingDynamics {
  std::function<VectorXd(const VectorXd&, const VectorXd&)> f;
  std::function<MatrixXd(const VectorXd&, const VectorXd&)> dx_own;     // n_i x n_i
  std::function<MatrixXd(const VectorXd&, const VectorXd&)> dx_sender;  // n_i x n_j
};

/// Local running cost l_ii(x_i, u_i) with gradients.
struct LocalCost {
  std::function<double(const VectorXd&, const VectorXd&)> l;
  std::function<VectorXd(const VectorXd&, const VectorXd&)> dx;
  std::function<VectorXd(const VectorXd&, const VectorXd&)> du;
};

/// Coupling cost l_ij(x_i, x_j) with gradients.
struct CouplingCost {
  std::function<double(const VectorXd&, const VectorXd&)> l;
  std::function<VectorXd(const VectorXd&, const VectorXd&)> dx_own;
  std::function<VectorXd(const VectorXd&, const VectorXd&)> dx_sender;
};

/// Terminal cost V_i(x_i) with gradient.
struct TerminalCost {
  std::function<double(const VectorXd&)> V;
  std::function<VectorXd(const VectorXd&)> dx;
};

struct AgentModel {
  int state_dim = 0;
  int input_dim = 0;
  LocalDynamics local_dynamics;
  std::map<int, CouplingDynamics> coupling_dynamics;  // keyed by sender id
  LocalCost local_cost;
  std::map<int, CouplingCost> coupling_costs;  // keyed by sender id
  TerminalCost terminal_cost;
  Box input_box;
};

/// Per-agent quadratic weights. P may stay unset until terminal synthesis ran.
struct QuadraticCostSpec {
  std::vector<MatrixXd> Q;
  std::vector<MatrixXd> R;
  std::optional<std::vector<MatrixXd>> P;
};

/// Eigenvalue bounds witnessing the quadratic cost sandwich for block-diagonal
/// weights: m_l (min over Q_i, R_i eigenvalues), M_l (max), and m_V, M_V over P_i.
struct CostBounds {
  double m_l = 0.0;
  double M_l = 0.0;
  double m_V = 0.0;
  double M_V = 0.0;
};

CostBounds compute_cost_bounds(const QuadraticCostSpec& spec);

/// Immutable, validated multi-agent system: topology, neighbor-affine dynamics
/// and costs, input boxes, and the stacked central representation.
class NetworkModel {
 public:
  static NetworkModel build(CouplingGraph graph, std::vector<AgentModel> agents,
                            std::optional<QuadraticCostSpec> quadratic = std::nullopt);

  const CouplingGraph& graph() const { return graph_; }
  const AgentModel& agent(int i) const { return agents_[i]; }
  int agent_count() const { return graph_.agent_count(); }
  const std::optional<QuadraticCostSpec>& quadratic_spec() const { return quadratic_; }

  int state_dim() const { return state_dim_; }
  int input_dim() const { return input_dim_; }
  int state_offset(int i) const { return state_offsets_[i]; }
  int input_offset(int i) const { return input_offsets_[i]; }

  // ---- stacking -------------------------------------------------------- //
  VectorXd stack_states(const std::vector<VectorXd>& per_agent) const;
  VectorXd stack_inputs(const std::vector<VectorXd>& per_agent) const;
  std::vector<VectorXd> unstack_states(const VectorXd& central) const;
  std::vector<VectorXd> unstack_inputs(const VectorXd& central) const;
  Eigen::Ref<const VectorXd> agent_state(const VectorXd& central, int i) const {
    return central.segment(state_offsets_[i], agents_[i].state_dim);
  }
  Eigen::Ref<const VectorXd> agent_input(const VectorXd& central, int i) const {
    return central.segment(input_offsets_[i], agents_[i].input_dim);
  }

  /// Product box over all agents.
  Box central_input_box() const;

  // ---- agent-level evaluation ------------------------------------------ //
  /// f_ii(x_i, u_i) + sum over senders j of f_ij(x_i, x_j).
  VectorXd agent_dynamics(int i, const VectorXd& x_i, const VectorXd& u_i,
                          const std::map<int, VectorXd>& x_neighbors) const;
  /// l_ii(x_i, u_i) + sum over senders j of l_ij(x_i, x_j).
  double agent_stage_cost(int i, const VectorXd& x_i, const VectorXd& u_i,
                          const std::map<int, VectorXd>& x_neighbors) const;

  // ---- central (stacked) evaluation ------------------------------------ //
  VectorXd central_dynamics(const VectorXd& x, const VectorXd& u) const;
  MatrixXd central_dynamics_dx(const VectorXd& x, const VectorXd& u) const;
  MatrixXd central_dynamics_du(const VectorXd& x, const VectorXd& u) const;
  double central_stage_cost(const VectorXd& x, const VectorXd& u) const;
  VectorXd central_stage_cost_dx(const VectorXd& x, const VectorXd& u) const;
  VectorXd central_stage_cost_du(const VectorXd& x, const VectorXd& u) const;
  double central_terminal_cost(const VectorXd& x) const;
  VectorXd central_terminal_cost_dx(const VectorXd& x) const;

 private:
  NetworkModel() = default;
  void validate() const;

  CouplingGraph graph_;
  std::vector<AgentModel> agents_;
  std::optional<QuadraticCostSpec> quadratic_;
  std::vector<int> state_offsets_, input_offsets_;
  int state_dim_ = 0, input_dim_ = 0;
};

/// Result of the finite-difference derivative audit.
struct DerivativeReport {
  struct Entry {
    std::string function;
    double worst_relative_error = 0.0;
  };
  std::vector<Entry> entries;
  double worst_relative_error = 0.0;
  bool passed = true;
};

/// Checks every supplied Jacobian/gradient against central finite differences
/// (step 1e-6, relative tolerance 1e-5) at `sample_count` random points drawn
/// from a box of half-width `box_halfwidth` around the origin. Throws
/// DerivativeMismatch when `throw_on_failure` is set and a check fails.
DerivativeReport validate_derivatives(const NetworkModel& model, int sample_count,
                                      std::uint64_t seed, double box_halfwidth = 0.5,
                                      bool throw_on_failure = true);

}  // namespace dmpc

#endif  // DMPC_NETWORK_MODEL_HPP
