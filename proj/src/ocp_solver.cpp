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

#include "dmpc/ocp_solver.hpp"

#include <algorithm>
#include <cmath>

namespace dmpc {

namespace {

double trapezoid_weight(const TimeGrid& grid, int node) {
  const double h = grid.step();
  return (node == 0 || node == grid.point_count - 1) ? 0.5 * h : h;
}

}  // namespace

Trajectory integrate_forward(
    const std::function<VectorXd(int, const VectorXd&, const VectorXd&)>& dynamics,
    const Trajectory& u, const VectorXd& x0, const TimeGrid& grid) {
  if (!(u.grid() == grid)) throw DimensionMismatch("integrate_forward: control grid mismatch");
  if (!x0.allFinite()) throw Divergence("integrate_forward: non-finite initial state");
  Trajectory x(grid, static_cast<int>(x0.size()));
  x.at(0) = x0;
  const double h = grid.step();
  VectorXd k1, k2, predictor;
  for (int j = 0; j + 1 < grid.point_count; ++j) {
    k1 = dynamics(j, x.at(j), u.at(j));
    predictor = x.at(j) + h * k1;
    k2 = dynamics(j + 1, predictor, u.at(j + 1));
    x.at(j + 1) = x.at(j) + 0.5 * h * (k1 + k2);
    if (!x.at(j + 1).allFinite())
      throw Divergence("integrate_forward: non-finite state at node " + std::to_string(j + 1));
  }
  return x;
}

Trajectory integrate_adjoint_backward(const OcpProblem& problem, const Trajectory& x,
                                      const Trajectory& u) {
  const TimeGrid& grid = problem.grid;
  const int last = grid.point_count - 1;
  Trajectory lambda(grid, problem.state_dim);
  lambda.at(last) = problem.terminal_cost_dx(x.at(last));

  // Negative Hamiltonian state gradient; this is the backward-time RHS.
  auto rhs = [&](int node, const VectorXd& lam) -> VectorXd {
    VectorXd g = problem.stage_cost_dx(node, x.at(node), u.at(node));
    if (problem.tilt) g += problem.tilt->at(node);
    g.noalias() += problem.dynamics_dx(node, x.at(node), u.at(node)).transpose() * lam;
    return -g;
  };

  const double h = grid.step();
  VectorXd k1, k2, predictor;
  for (int j = last; j > 0; --j) {
    k1 = rhs(j, lambda.at(j));
    predictor = lambda.at(j) - h * k1;
    k2 = rhs(j - 1, predictor);
    lambda.at(j - 1) = lambda.at(j) - 0.5 * h * (k1 + k2);
    if (!lambda.at(j - 1).allFinite())
      throw Divergence("integrate_adjoint_backward: non-finite adjoint at node " +
                       std::to_string(j - 1));
  }
  return lambda;
}

double evaluate_cost(const OcpProblem& problem, const Trajectory& x, const Trajectory& u) {
  double J = problem.terminal_cost(x.at(problem.grid.point_count - 1));
  for (int j = 0; j < problem.grid.point_count; ++j) {
    double l = problem.stage_cost(j, x.at(j), u.at(j));
    if (problem.tilt) l += problem.tilt->at(j).dot(x.at(j) - problem.tilt_ref->at(j));
    J += trapezoid_weight(problem.grid, j) * l;
  }
  return J;
}

Trajectory control_gradient(const OcpProblem& problem, const Trajectory& x, const Trajectory& u,
                            const Trajectory& lambda) {
  Trajectory grad(problem.grid, problem.input_dim);
  for (int j = 0; j < problem.grid.point_count; ++j) {
    grad.at(j) = problem.stage_cost_du(j, x.at(j), u.at(j));
    grad.at(j).noalias() +=
        problem.dynamics_du(j, x.at(j), u.at(j)).transpose() * lambda.at(j);
  }
  return grad;
}

Trajectory discrete_cost_gradient(const OcpProblem& problem, const Trajectory& x,
                                  const Trajectory& u) {
  // Exact reverse-mode derivative of [Heun rollout + trapezoidal cost] with
  // respect to the node controls, divided by the quadrature weights so the
  // result is the discrete Riesz representative of dJ/du (it converges to
  // dH/du nodewise). Descending along it keeps the line search consistent
  // with the cost the solver actually evaluates.
  const TimeGrid& grid = problem.grid;
  const int last = grid.point_count - 1;
  const double h = grid.step();

  Trajectory grad(grid, problem.input_dim);
  auto running_dx = [&](int node) {
    VectorXd g = problem.stage_cost_dx(node, x.at(node), u.at(node));
    if (problem.tilt) g += problem.tilt->at(node);
    return g;
  };
  for (int j = 0; j <= last; ++j)
    grad.at(j) = trapezoid_weight(grid, j) * problem.stage_cost_du(j, x.at(j), u.at(j));

  // q_k = dJ/dx_k over the tail costs
  VectorXd q = problem.terminal_cost_dx(x.at(last)) + trapezoid_weight(grid, last) * running_dx(last);
  for (int k = last - 1; k >= 0; --k) {
    const VectorXd a = problem.dynamics(k, x.at(k), u.at(k));
    const VectorXd predictor = x.at(k) + h * a;
    const MatrixXd A = problem.dynamics_dx(k, x.at(k), u.at(k));
    const MatrixXd B = problem.dynamics_dx(k + 1, predictor, u.at(k + 1));
    const MatrixXd F = problem.dynamics_du(k, x.at(k), u.at(k));
    const MatrixXd G = problem.dynamics_du(k + 1, predictor, u.at(k + 1));

    grad.at(k + 1).noalias() += 0.5 * h * G.transpose() * q;
    grad.at(k).noalias() += 0.5 * h * F.transpose() * (q + h * (B.transpose() * q));
    // q_k = w_k dl/dx_k + (dx_{k+1}/dx_k)^T q_{k+1}
    const VectorXd Btq = B.transpose() * q;
    q = trapezoid_weight(grid, k) * running_dx(k) + q +
        0.5 * h * (A.transpose() * (q + h * Btq) + Btq);
  }
  for (int j = 0; j <= last; ++j) grad.at(j) /= trapezoid_weight(grid, j);
  return grad;
}

namespace {

// Natural residual of the projection map with unit step, max over nodes.
double projected_gradient_norm(const Trajectory& u, const Trajectory& grad, const Box& box) {
  double m = 0.0;
  for (int j = 0; j < u.nodes(); ++j)
    m = std::max(m, (u.at(j) - box.clamp(u.at(j) - grad.at(j))).norm());
  return m;
}

// Trapezoid-weighted inner product; the metric the preconditioned gradient
// direction lives in.
double traj_wdot(const Trajectory& a, const Trajectory& b) {
  double s = 0.0;
  for (int j = 0; j < a.nodes(); ++j)
    s += trapezoid_weight(a.grid(), j) * a.at(j).dot(b.at(j));
  return s;
}

}  // namespace

OcpSolution projected_gradient_solve(const OcpProblem& problem, const Trajectory& u_init,
                                     const SolverConfig& config) {
  OcpSolution sol;
  Trajectory u = u_init;
  clamp_in_place(u, problem.input_box);

  Trajectory x = integrate_forward(problem.dynamics, u, problem.x0, problem.grid);
  Trajectory grad = discrete_cost_gradient(problem, x, u);
  double cost = evaluate_cost(problem, x, u);

  double alpha = config.initial_step;
  Trajectory u_prev = u, grad_prev = grad;
  bool have_history = false;

  int iter = 0;
  for (; iter < config.max_gradient_iterations; ++iter) {
    // Initial trial step.
    double trial = alpha;
    if (config.step_rule == StepRule::BarzilaiBorwein && have_history) {
      Trajectory s = u, y = grad;
      s.values() -= u_prev.values();
      y.values() -= grad_prev.values();
      const double sy = traj_wdot(s, y);
      const double ss = traj_wdot(s, s);
      if (sy > 1e-300 && ss > 0.0) trial = std::clamp(ss / sy, 1e-8, 1e4);
    }

    Trajectory u_new, x_new;
    double cost_new = cost;
    bool accepted = false;
    bool at_floor = false;
    int backtracks = 0;
    for (; backtracks <= config.max_backtracks; ++backtracks) {
      u_new = u;
      u_new.values() -= trial * grad.values();
      clamp_in_place(u_new, problem.input_box);
      const double step_sq = (u_new.values() - u.values()).squaredNorm();
      if (step_sq == 0.0) {  // projected gradient vanished: stationary point
        x_new = x;
        cost_new = cost;
        accepted = true;
        break;
      }
      const double required = config.sufficient_decrease / trial * step_sq;
      bool finite = true;
      try {
        x_new = integrate_forward(problem.dynamics, u_new, problem.x0, problem.grid);
        cost_new = evaluate_cost(problem, x_new, u_new);
        finite = std::isfinite(cost_new);
      } catch (const Divergence&) {
        finite = false;
      }
      if (finite && cost_new <= cost - required) {
        accepted = true;
        break;
      }
      if (finite &&
          required <= config.sufficient_decrease * 1e-15 * (1.0 + std::abs(cost))) {
        // The achievable decrease (~required / sufficient_decrease) is below
        // floating-point resolution; the iterate cannot improve at this
        // scale. Stop here instead of failing.
        u_new = u;
        x_new = x;
        cost_new = cost;
        accepted = true;
        at_floor = true;
        break;
      }
      trial *= config.backtracking_factor;
    }
    if (!accepted)
      throw LineSearchFailure("projected_gradient_solve: no decrease after " +
                              std::to_string(config.max_backtracks) + " backtracks");

    // Accepted step becomes the next warm start; grow it again after a clean
    // accept so the warm rule does not shrink monotonically.
    alpha = (backtracks == 0) ? 2.0 * trial : trial;

    const double change = linf_distance(u_new, u);
    const double rel_change = change / std::max(1.0, u.max_node_norm());

    u_prev = u;
    grad_prev = grad;
    have_history = true;

    u = u_new;
    x = x_new;
    cost = cost_new;
    grad = discrete_cost_gradient(problem, x, u);

    if (at_floor || rel_change <= config.control_tolerance) {
      ++iter;
      sol.converged = true;
      break;
    }
  }

  sol.control = std::move(u);
  sol.state = std::move(x);
  sol.adjoint = integrate_adjoint_backward(problem, sol.state, sol.control);
  sol.cost = cost;
  sol.iterations = iter;
  sol.projected_gradient_norm = projected_gradient_norm(sol.control, grad, problem.input_box);
  return sol;
}

OcpProblem build_central_problem(const NetworkModel& network, const VectorXd& x0_central,
                                 const TimeGrid& grid) {
  if (x0_central.size() != network.state_dim())
    throw DimensionMismatch("build_central_problem: x0 dimension mismatch");
  OcpProblem p;
  p.grid = grid;
  p.state_dim = network.state_dim();
  p.input_dim = network.input_dim();
  p.x0 = x0_central;
  p.dynamics = [&network](int, const VectorXd& x, const VectorXd& u) {
    return network.central_dynamics(x, u);
  };
  p.dynamics_dx = [&network](int, const VectorXd& x, const VectorXd& u) {
    return network.central_dynamics_dx(x, u);
  };
  p.dynamics_du = [&network](int, const VectorXd& x, const VectorXd& u) {
    return network.central_dynamics_du(x, u);
  };
  p.stage_cost = [&network](int, const VectorXd& x, const VectorXd& u) {
    return network.central_stage_cost(x, u);
  };
  p.stage_cost_dx = [&network](int, const VectorXd& x, const VectorXd& u) {
    return network.central_stage_cost_dx(x, u);
  };
  p.stage_cost_du = [&network](int, const VectorXd& x, const VectorXd& u) {
    return network.central_stage_cost_du(x, u);
  };
  p.terminal_cost = [&network](const VectorXd& x) { return network.central_terminal_cost(x); };
  p.terminal_cost_dx = [&network](const VectorXd& x) {
    return network.central_terminal_cost_dx(x);
  };
  p.input_box = network.central_input_box();
  return p;
}

OcpSolution solve_central_ocp(const NetworkModel& network, const VectorXd& x0_central,
                              const TimeGrid& grid, std::optional<SolverConfig> config,
                              const Trajectory* u_warm) {
  SolverConfig cfg;
  if (config) {
    cfg = *config;
  } else {
    cfg.control_tolerance = 1e-8;
    cfg.max_gradient_iterations = 2000;
  }
  OcpProblem problem = build_central_problem(network, x0_central, grid);
  Trajectory u0 = u_warm ? *u_warm : Trajectory(grid, network.input_dim());
  return projected_gradient_solve(problem, u0, cfg);
}

PlantStep rollout_plant(const NetworkModel& network, const VectorXd& x0, const Trajectory& u,
                        double dt, int substeps) {
  if (substeps < 1) throw ConfigError("rollout_plant: substeps must be positive");
  PlantStep out;
  out.state = x0;
  const double h = dt / substeps;
  auto f = [&](double t, const VectorXd& x) {
    return network.central_dynamics(x, u.interpolate(t));
  };
  double prev_l = network.central_stage_cost(x0, u.interpolate(0.0));
  VectorXd k1, k2, k3, k4;
  for (int s = 0; s < substeps; ++s) {
    const double t = s * h;
    const VectorXd& x = out.state;
    k1 = f(t, x);
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1);
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2);
    k4 = f(t + h, x + h * k3);
    out.state = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!out.state.allFinite()) throw Divergence("rollout_plant: non-finite plant state");
    const double l = network.central_stage_cost(out.state, u.interpolate(t + h));
    out.cost_integral += 0.5 * h * (prev_l + l);
    prev_l = l;
  }
  return out;
}

}  // namespace dmpc
