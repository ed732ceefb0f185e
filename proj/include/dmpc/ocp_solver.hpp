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

#ifndef DMPC_OCP_SOLVER_HPP
#define DMPC_OCP_SOLVER_HPP

#include <functional>
#include <optional>

#include "dmpc/network_model.hpp"
#include "dmpc/trajectory.hpp"

namespace dmpc {

/// Box-constrained optimal control problem on a uniform grid.
///
/// All callbacks are indexed by grid node so that frozen neighbor trajectories
/// and other time-varying data can enter without an interpolation layer. The
/// optional tilt adds the linear running-cost term g(tau)^T (x - x_ref(tau)).
struct OcpProblem {
  TimeGrid grid;
  int state_dim = 0;
  int input_dim = 0;
  VectorXd x0;

  std::function<VectorXd(int, const VectorXd&, const VectorXd&)> dynamics;
  std::function<MatrixXd(int, const VectorXd&, const VectorXd&)> dynamics_dx;
  std::function<MatrixXd(int, const VectorXd&, const VectorXd&)> dynamics_du;

  std::function<double(int, const VectorXd&, const VectorXd&)> stage_cost;
  std::function<VectorXd(int, const VectorXd&, const VectorXd&)> stage_cost_dx;
  std::function<VectorXd(int, const VectorXd&, const VectorXd&)> stage_cost_du;

  std::function<double(const VectorXd&)> terminal_cost;
  std::function<VectorXd(const VectorXd&)> terminal_cost_dx;

  Box input_box;

  std::optional<Trajectory> tilt;      // g(tau), one column per node
  std::optional<Trajectory> tilt_ref;  // x_ref(tau)
};

/// How the backtracking line search picks its first trial step.
enum class StepRule {
  WarmStart,        // previous accepted step (doubled after a clean accept)
  BarzilaiBorwein,  // spectral step from the last control/gradient change
};

struct SolverConfig {
  int max_gradient_iterations = 100;
  double control_tolerance = 1e-6;  // relative L-inf control change
  double backtracking_factor = 0.5;
  double sufficient_decrease = 1e-4;
  double initial_step = 1.0;
  int max_backtracks = 40;
  StepRule step_rule = StepRule::BarzilaiBorwein;
  int plant_substeps = 10;  // RK4 substeps per sampling interval
};

struct OcpSolution {
  Trajectory control;
  Trajectory state;
  Trajectory adjoint;
  double cost = 0.0;
  int iterations = 0;
  double projected_gradient_norm = 0.0;  // L-inf natural residual at the result
  bool converged = false;
};

/// Heun (explicit trapezoidal) rollout of node-indexed dynamics under the
/// piecewise-linear control u. Throws Divergence on non-finite states.
Trajectory integrate_forward(
    const std::function<VectorXd(int, const VectorXd&, const VectorXd&)>& dynamics,
    const Trajectory& u, const VectorXd& x0, const TimeGrid& grid);

/// Backward Heun integration of the adjoint equation
///   lambda_dot = -(dl/dx + g + (df/dx)^T lambda),  lambda(T) = dV/dx(x(T)).
Trajectory integrate_adjoint_backward(const OcpProblem& problem, const Trajectory& x,
                                      const Trajectory& u);

/// Terminal cost plus trapezoidal quadrature of the running cost (tilt included).
double evaluate_cost(const OcpProblem& problem, const Trajectory& x, const Trajectory& u);

/// Hamiltonian input gradient dH/du = dl/du + (df/du)^T lambda at every node.
Trajectory control_gradient(const OcpProblem& problem, const Trajectory& x, const Trajectory& u,
                            const Trajectory& lambda);

/// Exact gradient of the discretized cost (reverse mode through the Heun
/// rollout and the trapezoidal quadrature), scaled by the quadrature weights
/// so it approximates dH/du nodewise. This is the descent direction of the
/// projected gradient solver; it agrees with control_gradient up to the
/// discretization order.
Trajectory discrete_cost_gradient(const OcpProblem& problem, const Trajectory& x,
                                  const Trajectory& u);

/// Projected gradient method with Armijo backtracking. The initial control is
/// clamped into the box on entry. Terminates on the relative control-change
/// tolerance or the iteration budget; first-order stationarity is reported,
/// not enforced.
OcpSolution projected_gradient_solve(const OcpProblem& problem, const Trajectory& u_init,
                                     const SolverConfig& config);

/// Stacked OCP of the whole network.
OcpProblem build_central_problem(const NetworkModel& network, const VectorXd& x0_central,
                                 const TimeGrid& grid);

/// Centralized oracle: projected-gradient solve of the stacked problem with a
/// tight tolerance (tol 1e-8, 2000 iterations) unless `config` overrides it.
OcpSolution solve_central_ocp(const NetworkModel& network, const VectorXd& x0_central,
                              const TimeGrid& grid,
                              std::optional<SolverConfig> config = std::nullopt,
                              const Trajectory* u_warm = nullptr);

/// One plant step: classical RK4 with `substeps` fine steps over [0, dt],
/// applying the piecewise-linear control u to the true coupled dynamics.
/// Also accumulates the realized stage cost along the fine grid.
struct PlantStep {
  VectorXd state;
  double cost_integral = 0.0;
};
PlantStep rollout_plant(const NetworkModel& network, const VectorXd& x0, const Trajectory& u,
                        double dt, int substeps);

}  // namespace dmpc

#endif  // DMPC_OCP_SOLVER_HPP
