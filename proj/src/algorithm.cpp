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

#include "dmpc/algorithm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

namespace dmpc {

namespace {

// Runs fn(i) for every agent, optionally on one thread per agent. Results are
// bitwise identical either way: agents touch disjoint data and no cross-agent
// floating-point reduction happens here.
void for_each_agent(int agent_count, bool parallel, const std::function<void(int)>& fn) {
  if (!parallel || agent_count == 1) {
    for (int i = 0; i < agent_count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(agent_count);
  std::vector<std::exception_ptr> errors(agent_count);
  for (int i = 0; i < agent_count; ++i)
    workers.emplace_back([&, i] {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

void AlgorithmConfig::validate(double horizon) const {
  if (sampling_dt <= 0.0 || sampling_dt >= horizon)
    throw ConfigError("AlgorithmConfig: sampling_dt must lie in (0, T)");
  if (mode != TerminationMode::Fixed && d <= 0.0)
    throw ConfigError("AlgorithmConfig: d must be positive in criterion mode");
  if (q_max < 1) throw ConfigError("AlgorithmConfig: q_max must be at least 1");
  if (damping < 0.0 || damping >= 1.0) throw ConfigError("AlgorithmConfig: damping must be in [0,1)");
}

Trajectory compute_coupling_gradient(const NetworkModel& network, int i, int j,
                                     const Trajectory& x_i_prev, const Trajectory& x_j_prev,
                                     const Trajectory& lambda_j_prev) {
  const auto& receivers = network.graph().receivers(i);
  if (!std::binary_search(receivers.begin(), receivers.end(), j))
    throw NotAReceiver("compute_coupling_gradient: agent " + std::to_string(j) +
                       " is not influenced by agent " + std::to_string(i));
  const AgentModel& rec = network.agent(j);
  const auto& fji = rec.coupling_dynamics.at(i);
  const CouplingCost* lji = nullptr;
  if (auto it = rec.coupling_costs.find(i); it != rec.coupling_costs.end()) lji = &it->second;

  Trajectory g(x_i_prev.grid(), network.agent(i).state_dim);
  for (int node = 0; node < g.nodes(); ++node) {
    const auto xj = x_j_prev.at(node);
    const auto xi = x_i_prev.at(node);
    VectorXd v = fji.dx_sender(xj, xi).transpose() * lambda_j_prev.at(node);
    if (lji) v += lji->dx_sender(xj, xi);
    g.at(node) = v;
  }
  return g;
}

OcpProblem build_local_problem(const NetworkModel& network, int i, const VectorXd& x_plant_i,
                               const AgentIterate& received, const TimeGrid& grid) {
  const AgentModel& a = network.agent(i);
  OcpProblem p;
  p.grid = grid;
  p.state_dim = a.state_dim;
  p.input_dim = a.input_dim;
  p.x0 = x_plant_i;
  p.input_box = a.input_box;

  // Frozen sender trajectories from the previous iteration.
  std::vector<std::pair<const CouplingDynamics*, const Trajectory*>> dyn_terms;
  std::vector<std::pair<const CouplingCost*, const Trajectory*>> cost_terms;
  for (int j : network.graph().senders(i)) {
    auto it = received.neighbor_x.find(j);
    if (it == received.neighbor_x.end())
      throw MissingNeighborState("local problem of agent " + std::to_string(i) +
                                 ": no trajectory from sender " + std::to_string(j));
    dyn_terms.emplace_back(&a.coupling_dynamics.at(j), &it->second);
    if (auto c = a.coupling_costs.find(j); c != a.coupling_costs.end())
      cost_terms.emplace_back(&c->second, &it->second);
  }

  p.dynamics = [&a, dyn_terms](int node, const VectorXd& x, const VectorXd& u) {
    VectorXd out = a.local_dynamics.f(x, u);
    for (const auto& [c, traj] : dyn_terms) out += c->f(x, traj->at(node));
    return out;
  };
  p.dynamics_dx = [&a, dyn_terms](int node, const VectorXd& x, const VectorXd& u) {
    MatrixXd J = a.local_dynamics.dx(x, u);
    for (const auto& [c, traj] : dyn_terms) J += c->dx_own(x, traj->at(node));
    return J;
  };
  p.dynamics_du = [&a](int, const VectorXd& x, const VectorXd& u) {
    return a.local_dynamics.du(x, u);
  };
  p.stage_cost = [&a, cost_terms](int node, const VectorXd& x, const VectorXd& u) {
    double l = a.local_cost.l(x, u);
    for (const auto& [c, traj] : cost_terms) l += c->l(x, traj->at(node));
    return l;
  };
  p.stage_cost_dx = [&a, cost_terms](int node, const VectorXd& x, const VectorXd& u) {
    VectorXd g = a.local_cost.dx(x, u);
    for (const auto& [c, traj] : cost_terms) g += c->dx_own(x, traj->at(node));
    return g;
  };
  p.stage_cost_du = [&a](int, const VectorXd& x, const VectorXd& u) {
    return a.local_cost.du(x, u);
  };
  p.terminal_cost = a.terminal_cost.V;
  p.terminal_cost_dx = a.terminal_cost.dx;

  // Sensitivity tilt: sum of g_ji over the receivers, referenced to the own
  // previous state iterate.
  const auto& receivers = network.graph().receivers(i);
  if (!receivers.empty()) {
    Trajectory tilt(grid, a.state_dim);
    for (int j : receivers) {
      auto lam = received.receiver_lambda.find(j);
      auto xj = received.neighbor_x.find(j);
      if (lam == received.receiver_lambda.end() || xj == received.neighbor_x.end())
        throw MissingNeighborState("local problem of agent " + std::to_string(i) +
                                   ": no adjoint/state from receiver " + std::to_string(j));
      Trajectory gji = compute_coupling_gradient(network, i, j, received.x, xj->second, lam->second);
      tilt.values() += gji.values();
    }
    p.tilt = std::move(tilt);
    p.tilt_ref = received.x;
  }
  return p;
}

OcpSolution local_step(const NetworkModel& network, int i, const VectorXd& x_plant_i,
                       const AgentIterate& received, const TimeGrid& grid,
                       const SolverConfig& config) {
  const OcpProblem problem = build_local_problem(network, i, x_plant_i, received, grid);
  const std::string tag = "agent " + std::to_string(i) + ": ";
  try {
    return projected_gradient_solve(problem, received.u, config);
  } catch (const Divergence& e) {
    throw Divergence(tag + e.what());
  } catch (const LineSearchFailure& e) {
    throw LineSearchFailure(tag + e.what());
  }
}

void damping_step(Trajectory& current, const Trajectory& previous, double eps) {
  if (eps == 0.0) return;
  current.values() = (1.0 - eps) * current.values() + eps * previous.values();
}

StoppingReport stopping_check(const std::vector<AgentIterate>& current,
                              const std::vector<AgentIterate>& previous,
                              const std::vector<VectorXd>& x_plant, double d) {
  StoppingReport rep;
  const int N = static_cast<int>(current.size());
  rep.deviation.resize(N);
  rep.threshold.resize(N);
  rep.agent_pass.resize(N);
  rep.all_pass = true;
  for (int i = 0; i < N; ++i) {
    double dev = 0.0;
    for (int node = 0; node < current[i].x.nodes(); ++node) {
      const double dx2 = (current[i].x.at(node) - previous[i].x.at(node)).squaredNorm();
      const double dl2 = (current[i].lambda.at(node) - previous[i].lambda.at(node)).squaredNorm();
      dev = std::max(dev, std::sqrt(dx2 + dl2));
    }
    rep.deviation[i] = dev;
    rep.threshold[i] = d * x_plant[i].norm();
    rep.agent_pass[i] = dev <= rep.threshold[i] ? 1 : 0;
    rep.all_pass = rep.all_pass && rep.agent_pass[i];
  }
  return rep;
}

IterateState init_iterate_state(const NetworkModel& network, const TimeGrid& grid,
                                const std::vector<VectorXd>& x_plant, CommBus& bus) {
  const int N = network.agent_count();
  IterateState state;
  state.iteration = 0;
  state.agents.resize(N);
  for (int i = 0; i < N; ++i) {
    auto& it = state.agents[i];
    it.u = Trajectory(grid, network.agent(i).input_dim);
    it.x = Trajectory::constant(grid, x_plant[i]);
    it.lambda = Trajectory::constant(grid, network.agent(i).terminal_cost.dx(x_plant[i]));
  }
  // Setup exchange of the initial trajectories (x to N_i, lambda to N_i^<-).
  std::vector<std::vector<Message>> outgoing(N);
  for (int i = 0; i < N; ++i) {
    for (int j : network.graph().neighborhood(i))
      outgoing[i].push_back({i, j, MessageKind::StateTraj, 0, state.agents[i].x});
    for (int j : network.graph().senders(i))
      outgoing[i].push_back({i, j, MessageKind::AdjointTraj, 0, state.agents[i].lambda});
  }
  auto inbox = bus.exchange_round(std::move(outgoing), /*setup_round=*/true);
  for (int i = 0; i < N; ++i)
    for (const Message& m : inbox[i]) {
      if (m.kind == MessageKind::StateTraj)
        state.agents[i].neighbor_x[m.sender] = m.payload;
      else
        state.agents[i].receiver_lambda[m.sender] = m.payload;
    }
  return state;
}

int dmpc_iterate(const NetworkModel& network, const std::vector<VectorXd>& x_plant,
                 IterateState& state, const AlgorithmConfig& config, const TimeGrid& grid,
                 CommBus& bus, IterationDiagnostics* diagnostics) {
  const int N = network.agent_count();
  int q = 0;
  while (true) {
    ++q;
    std::vector<OcpSolution> solutions(N);
    for_each_agent(N, config.parallel, [&](int i) {
      solutions[i] = local_step(network, i, x_plant[i], state.agents[i], grid, config.inner);
    });

    // Damping runs between the local solve and the exchange, so neighbors see
    // the damped trajectories next round.
    std::vector<AgentIterate> next(N);
    for (int i = 0; i < N; ++i) {
      next[i].u = std::move(solutions[i].control);
      next[i].x = std::move(solutions[i].state);
      next[i].lambda = std::move(solutions[i].adjoint);
      damping_step(next[i].x, state.agents[i].x, config.damping);
      damping_step(next[i].lambda, state.agents[i].lambda, config.damping);
    }

    std::vector<std::vector<Message>> outgoing(N);
    for (int i = 0; i < N; ++i) {
      for (int j : network.graph().neighborhood(i))
        outgoing[i].push_back({i, j, MessageKind::StateTraj, q, next[i].x});
      for (int j : network.graph().senders(i))
        outgoing[i].push_back({i, j, MessageKind::AdjointTraj, q, next[i].lambda});
    }
    auto inbox = bus.exchange_round(std::move(outgoing));
    for (int i = 0; i < N; ++i) {
      next[i].neighbor_x = std::move(state.agents[i].neighbor_x);
      next[i].receiver_lambda = std::move(state.agents[i].receiver_lambda);
      for (Message& m : inbox[i]) {
        if (m.kind == MessageKind::StateTraj)
          next[i].neighbor_x[m.sender] = std::move(m.payload);
        else
          next[i].receiver_lambda[m.sender] = std::move(m.payload);
      }
    }

    StoppingReport report = stopping_check(next, state.agents, x_plant, config.d);
    if (diagnostics) diagnostics->per_iteration.push_back(report);

    state.agents = std::move(next);
    state.iteration = q;

    const bool pass = bus.coordinator_reduce(report.agent_pass);
    switch (config.mode) {
      case TerminationMode::Criterion:
        if (pass) return q;
        if (q >= config.q_max)
          throw IterationBudgetExhausted(
              "dmpc_iterate: stopping criterion unmet after q_max = " +
              std::to_string(config.q_max) + " iterations");
        break;
      case TerminationMode::Fixed:
        if (q >= config.q_max) return q;
        break;
      case TerminationMode::Both:
        if (pass || q >= config.q_max) return q;
        break;
    }
  }
}

namespace {

Trajectory stack_control(const NetworkModel& network, const std::vector<AgentIterate>& agents) {
  const TimeGrid& grid = agents.front().u.grid();
  Trajectory u(grid, network.input_dim());
  for (int i = 0; i < network.agent_count(); ++i)
    u.values().middleRows(network.input_offset(i), network.agent(i).input_dim) =
        agents[i].u.values();
  return u;
}

}  // namespace

MpcTrace mpc_closed_loop(const NetworkModel& network, const VectorXd& x0_central,
                         const TimeGrid& grid, const AlgorithmConfig& config, CommBus& bus,
                         const ClosedLoopOptions& options) {
  config.validate(grid.horizon);
  const int steps = static_cast<int>(std::llround(options.t_final / config.sampling_dt));
  MpcTrace trace;
  trace.steps.reserve(steps);

  VectorXd x_plant = x0_central;
  std::vector<VectorXd> x_agents = network.unstack_states(x_plant);
  IterateState state;
  Trajectory oracle_warm;
  bool have_oracle_warm = false;
  double accumulated = 0.0;

  for (int k = 0; k < steps; ++k) {
    const auto t_start = std::chrono::steady_clock::now();
    bus.begin_step();
    if (k == 0) state = init_iterate_state(network, grid, x_agents, bus);

    MpcStepRecord rec;
    rec.k = k;
    rec.t = k * config.sampling_dt;
    rec.plant_state = x_plant;
    rec.accumulated_cost = accumulated;

    if (options.oracle) {
      try {
        OcpSolution oracle = solve_central_ocp(network, x_plant, grid, std::nullopt,
                                               have_oracle_warm ? &oracle_warm : nullptr);
        rec.oracle_cost = oracle.cost;
        oracle_warm = std::move(oracle.control);
        have_oracle_warm = true;
      } catch (const Error&) {
        rec.oracle_cost = std::nullopt;
      }
    }

    IterationDiagnostics diag;
    int q_k = 0;
    try {
      q_k = dmpc_iterate(network, x_agents, state, config, grid, bus, &diag);
    } catch (const Divergence&) {
      trace.diverged = true;
      trace.steps.push_back(std::move(rec));
      break;
    }
    rec.iterations = q_k;
    if (!diag.per_iteration.empty()) rec.criterion_values = diag.per_iteration.back().deviation;

    const Trajectory u_central = stack_control(network, state.agents);
    rec.applied_control = u_central.at(0);
    rec.stage_cost = network.central_stage_cost(x_plant, rec.applied_control);
    rec.messages = bus.step_stats().messages;
    rec.bytes = bus.step_stats().bytes;
    rec.component_trajectories = bus.step_stats().component_trajectories;

    PlantStep plant;
    try {
      plant = rollout_plant(network, x_plant, u_central, config.sampling_dt,
                            config.inner.plant_substeps);
    } catch (const Divergence&) {
      trace.diverged = true;
      trace.steps.push_back(std::move(rec));
      break;
    }
    x_plant = plant.state;
    x_agents = network.unstack_states(x_plant);
    accumulated += plant.cost_integral;
    trace.total_cost = accumulated;

    if (options.measure_wall_time) {
      rec.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t_start)
                        .count();
    }
    trace.steps.push_back(std::move(rec));
    // Warm start of step k+1 is the unshifted final iterate of step k; the
    // neighbor copies delivered in the last exchange stay valid as iteration 0.
  }

  trace.final_state = x_plant;
  trace.final_time = trace.diverged ? trace.steps.size() * config.sampling_dt : options.t_final;
  return trace;
}

MpcTrace central_mpc_closed_loop(const NetworkModel& network, const VectorXd& x0_central,
                                 const TimeGrid& grid, double sampling_dt, double t_final,
                                 const SolverConfig& inner, int plant_substeps) {
  const int steps = static_cast<int>(std::llround(t_final / sampling_dt));
  MpcTrace trace;
  VectorXd x_plant = x0_central;
  Trajectory warm(grid, network.input_dim());
  double accumulated = 0.0;
  for (int k = 0; k < steps; ++k) {
    MpcStepRecord rec;
    rec.k = k;
    rec.t = k * sampling_dt;
    rec.plant_state = x_plant;
    rec.accumulated_cost = accumulated;
    OcpSolution sol;
    try {
      sol = solve_central_ocp(network, x_plant, grid, inner, &warm);
    } catch (const Error&) {
      trace.diverged = true;
      trace.steps.push_back(std::move(rec));
      break;
    }
    warm = sol.control;
    rec.oracle_cost = sol.cost;
    rec.applied_control = sol.control.at(0);
    rec.stage_cost = network.central_stage_cost(x_plant, rec.applied_control);
    rec.iterations = sol.iterations;
    PlantStep plant;
    try {
      plant = rollout_plant(network, x_plant, sol.control, sampling_dt, plant_substeps);
    } catch (const Divergence&) {
      trace.diverged = true;
      trace.steps.push_back(std::move(rec));
      break;
    }
    x_plant = plant.state;
    accumulated += plant.cost_integral;
    trace.total_cost = accumulated;
    trace.steps.push_back(std::move(rec));
  }
  trace.final_state = x_plant;
  trace.final_time = trace.diverged ? trace.steps.size() * sampling_dt : t_final;
  return trace;
}

ConvergenceTable measure_convergence(const NetworkModel& network,
                                     const std::vector<VectorXd>& x_plant,
                                     const AlgorithmConfig& config, const TimeGrid& grid,
                                     int q_probe) {
  OcpSolution central;
  try {
    central = solve_central_ocp(network, network.stack_states(x_plant), grid);
  } catch (const Error& e) {
    throw OracleFailure(std::string("measure_convergence: central solve failed: ") + e.what());
  }

  ConvergenceTable table;
  CommBus bus(network.graph(), grid.point_count);
  IterateState state = init_iterate_state(network, grid, x_plant, bus);

  auto measure = [&](int q) {
    double err_state = 0.0, err_adjoint = 0.0, err_total = 0.0;
    for (int node = 0; node < grid.point_count; ++node) {
      double sx = 0.0, sl = 0.0;
      for (int i = 0; i < network.agent_count(); ++i) {
        const auto xs = central.state.at(node).segment(network.state_offset(i),
                                                       network.agent(i).state_dim);
        const auto ls = central.adjoint.at(node).segment(network.state_offset(i),
                                                         network.agent(i).state_dim);
        sx += (state.agents[i].x.at(node) - xs).squaredNorm();
        sl += (state.agents[i].lambda.at(node) - ls).squaredNorm();
      }
      err_state = std::max(err_state, std::sqrt(sx));
      err_adjoint = std::max(err_adjoint, std::sqrt(sl));
      err_total = std::max(err_total, std::sqrt(sx + sl));
    }
    table.rows.push_back({q, err_total, err_state, err_adjoint});
  };

  measure(0);
  AlgorithmConfig one_round = config;
  one_round.mode = TerminationMode::Fixed;
  one_round.q_max = 1;
  for (int q = 1; q <= q_probe; ++q) {
    dmpc_iterate(network, x_plant, state, one_round, grid, bus);
    measure(q);
  }

  // Fitted contraction ratio: geometric mean of E_q / E_{q-1} over the tail
  // (the cold-start ratio E_1/E_0 is excluded).
  double log_sum = 0.0;
  int count = 0;
  for (std::size_t q = 2; q < table.rows.size(); ++q) {
    const double e_prev = table.rows[q - 1].err_total;
    const double e_cur = table.rows[q].err_total;
    if (e_prev > 0.0 && e_cur > 0.0) {
      log_sum += std::log(e_cur / e_prev);
      ++count;
    }
  }
  table.contraction_ratio = count > 0 ? std::exp(log_sum / count) : 0.0;
  return table;
}

}  // namespace dmpc
