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

#ifndef DMPC_ALGORITHM_HPP
#define DMPC_ALGORITHM_HPP

#include <map>
#include <optional>
#include <vector>

#include "dmpc/comm_bus.hpp"
#include "dmpc/network_model.hpp"
#include "dmpc/ocp_solver.hpp"

namespace dmpc {

/// Per-agent algorithm state at iteration q: own trajectories plus the
/// neighbor data received in the last exchange (state trajectories from all
/// neighbors, adjoint trajectories from the receiving neighbors, whose cost
/// functionals this agent tilts).
struct AgentIterate {
  Trajectory u, x, lambda;
  std::map<int, Trajectory> neighbor_x;       // j in N_i
  std::map<int, Trajectory> receiver_lambda;  // j in N_i^->
};

struct IterateState {
  std::vector<AgentIterate> agents;
  int iteration = 0;
};

enum class TerminationMode { Criterion, Fixed, Both };

struct AlgorithmConfig {
  TerminationMode mode = TerminationMode::Criterion;
  double d = 0.1;          // stopping-criterion scale
  int q_max = 50;          // iteration budget (the contract in Fixed mode)
  double damping = 0.0;    // epsilon in [0, 1)
  SolverConfig inner;      // local OCP solver
  double sampling_dt = 0.05;
  bool parallel = false;

  void validate(double horizon) const;
};

/// Sensitivity of receiver j's cost functional to this agent's state:
///   g_ji(tau) = dl_ji/dx_i + (df_ji/dx_i)^T lambda_j  at (x_j, x_i)(tau).
/// Evaluated with agent j's coupling terms, which agent i holds read-only.
Trajectory compute_coupling_gradient(const NetworkModel& network, int i, int j,
                                     const Trajectory& x_i_prev, const Trajectory& x_j_prev,
                                     const Trajectory& lambda_j_prev);

/// Local sensitivity-augmented OCP of agent i with frozen neighbor
/// trajectories; returns its OcpProblem so solver settings stay external.
OcpProblem build_local_problem(const NetworkModel& network, int i, const VectorXd& x_plant_i,
                               const AgentIterate& received, const TimeGrid& grid);

/// One local step: assemble the tilted OCP and solve it warm-started at the
/// previous control iterate.
OcpSolution local_step(const NetworkModel& network, int i, const VectorXd& x_plant_i,
                       const AgentIterate& received, const TimeGrid& grid,
                       const SolverConfig& config);

/// Damped update x <- (1-eps) x_new + eps x_old (nodewise); controls are not
/// damped. eps = 0 is the identity.
void damping_step(Trajectory& current, const Trajectory& previous, double eps);

struct StoppingReport {
  std::vector<double> deviation;   // per-agent stacked x/lambda L-inf deviation
  std::vector<double> threshold;   // d * |x_plant_i|
  std::vector<int> agent_pass;
  bool all_pass = false;
};

/// Stopping criterion: per agent, the max over nodes of the Euclidean norm of
/// the stacked deviation [x^q - x^{q-1}; lambda^q - lambda^{q-1}] compared
/// against d * |x_plant_i|.
StoppingReport stopping_check(const std::vector<AgentIterate>& current,
                              const std::vector<AgentIterate>& previous,
                              const std::vector<VectorXd>& x_plant, double d);

/// Cold start at the current plant state: x_i^0 constant at the plant state,
/// lambda_i^0 constant at dV_i/dx_i, u_i^0 = 0. Neighbor slots are filled by a
/// setup exchange through the bus.
IterateState init_iterate_state(const NetworkModel& network, const TimeGrid& grid,
                                const std::vector<VectorXd>& x_plant, CommBus& bus);

struct IterationDiagnostics {
  std::vector<StoppingReport> per_iteration;
};

/// Algorithm rounds at a fixed plant state: gradients, local solves, optional
/// damping, exchange, termination. Returns the executed iteration count q_k.
int dmpc_iterate(const NetworkModel& network, const std::vector<VectorXd>& x_plant,
                 IterateState& state, const AlgorithmConfig& config, const TimeGrid& grid,
                 CommBus& bus, IterationDiagnostics* diagnostics = nullptr);

struct MpcStepRecord {
  int k = 0;
  double t = 0.0;
  VectorXd plant_state;
  VectorXd applied_control;  // value applied at t_k (node 0 of the final iterate)
  int iterations = 0;
  double stage_cost = 0.0;        // instantaneous l at (plant_state, applied_control)
  double accumulated_cost = 0.0;  // realized closed-loop integral of l up to t_k
  std::optional<double> oracle_cost;
  std::uint64_t messages = 0;
  std::uint64_t bytes = 0;
  std::uint64_t component_trajectories = 0;
  double wall_ms = 0.0;
  std::vector<double> criterion_values;  // last-iteration per-agent deviations
};

struct MpcTrace {
  std::vector<MpcStepRecord> steps;
  VectorXd final_state;
  double final_time = 0.0;
  double total_cost = 0.0;  // realized closed-loop integral of l
  bool diverged = false;
};

struct ClosedLoopOptions {
  double t_final = 6.0;
  bool oracle = false;          // evaluate J*(x_k) with the central solver per step
  bool measure_wall_time = false;
};

/// Suboptimal DMPC driver: per step run the distributed rounds, apply the
/// first control segment to the plant (RK4 rollout of the true coupled
/// dynamics), re-initialize with the unshifted final trajectories, repeat.
MpcTrace mpc_closed_loop(const NetworkModel& network, const VectorXd& x0_central,
                         const TimeGrid& grid, const AlgorithmConfig& config, CommBus& bus,
                         const ClosedLoopOptions& options = {});

/// Centralized MPC twin with the same grid and plant integration; used for
/// lockstep comparisons against the distributed loop.
MpcTrace central_mpc_closed_loop(const NetworkModel& network, const VectorXd& x0_central,
                                 const TimeGrid& grid, double sampling_dt, double t_final,
                                 const SolverConfig& inner, int plant_substeps = 10);

struct ConvergenceRecord {
  int q = 0;
  double err_total = 0.0;
  double err_state = 0.0;
  double err_adjoint = 0.0;
};

struct ConvergenceTable {
  std::vector<ConvergenceRecord> rows;  // q = 0 .. q_probe
  double contraction_ratio = 0.0;       // geometric mean of tail ratios
};

/// Runs q_probe iterations at a fixed plant state and measures the stacked
/// state/adjoint error against the central solution after each round.
ConvergenceTable measure_convergence(const NetworkModel& network,
                                     const std::vector<VectorXd>& x_plant,
                                     const AlgorithmConfig& config, const TimeGrid& grid,
                                     int q_probe);

}  // namespace dmpc

#endif  // DMPC_ALGORITHM_HPP
