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

#include "dmpc/algorithm.hpp"
#include "dmpc/benchmarks.hpp"

using namespace dmpc;

namespace {

std::vector<MatrixXd> identity_P(int count, int dim) {
  return std::vector<MatrixXd>(count, MatrixXd::Identity(dim, dim));
}

// benchmark terminal weights close to the synthesized ones
std::vector<MatrixXd> vdp_P() {
  return {(MatrixXd(2, 2) << 37.99, 1.96, 1.96, 2.2).finished(),
          (MatrixXd(2, 2) << 38.75, 1.66, 1.66, 2.2).finished(),
          (MatrixXd(2, 2) << 38.75, 1.66, 1.66, 2.2).finished()};
}

NetworkModel fig5_network() {
  ScalarCoupledParams params;
  params.mu = {1.0, 0.5};
  params.eps.setZero(2, 2);
  params.eps(0, 1) = 0.5;
  params.eps(1, 0) = 2.0;
  // synthesized terminal weights for this configuration (gamma = 1.1)
  std::vector<MatrixXd> P{MatrixXd::Constant(1, 1, 8.057), MatrixXd::Constant(1, 1, 10.116)};
  return make_scalar_coupled(params, P);
}

AlgorithmConfig benchmark_config() {
  AlgorithmConfig cfg;
  cfg.mode = TerminationMode::Criterion;
  cfg.d = 0.1;
  cfg.q_max = 50;
  cfg.sampling_dt = 0.05;
  cfg.inner.control_tolerance = 1e-6;
  cfg.inner.max_gradient_iterations = 200;
  return cfg;
}

}  // namespace

TEST_CASE("decoupled network reaches the fixed point in one solve") {
  ScalarCoupledParams params;
  params.mu = {0.5, 0.5};
  params.eps = MatrixXd::Zero(2, 2);
  NetworkModel net = make_scalar_coupled(params, identity_P(2, 1));
  TimeGrid grid(1.0, 21);
  std::vector<VectorXd> x_plant{VectorXd::Constant(1, 0.7), VectorXd::Constant(1, -0.4)};

  CommBus bus(net.graph(), grid.point_count);
  IterateState state = init_iterate_state(net, grid, x_plant, bus);
  AlgorithmConfig cfg = benchmark_config();
  cfg.inner.control_tolerance = 1e-10;
  cfg.inner.max_gradient_iterations = 2000;
  cfg.d = 1e-6;

  // first round moves from the cold start, second confirms the fixed point
  IterationDiagnostics diag;
  const int q = dmpc_iterate(net, x_plant, state, cfg, grid, bus, &diag);
  CHECK(q == 2);
  CHECK(diag.per_iteration.back().all_pass);

  // warm-started re-run terminates after one confirming iteration
  const int q2 = dmpc_iterate(net, x_plant, state, cfg, grid, bus);
  CHECK(q2 == 1);
}

TEST_CASE("fixed mode runs exactly q_max rounds and is not an error") {
  NetworkModel net = fig5_network();
  TimeGrid grid(0.5, 21);
  std::vector<VectorXd> x_plant{VectorXd::Constant(1, -1.3), VectorXd::Constant(1, 1.4)};
  CommBus bus(net.graph(), grid.point_count);
  IterateState state = init_iterate_state(net, grid, x_plant, bus);
  AlgorithmConfig cfg = benchmark_config();
  cfg.mode = TerminationMode::Fixed;
  cfg.q_max = 1;
  CHECK(dmpc_iterate(net, x_plant, state, cfg, grid, bus) == 1);
  CHECK(bus.step_stats().rounds == 1);
}

TEST_CASE("criterion mode raises when the budget is exhausted") {
  NetworkModel net = fig5_network();
  TimeGrid grid(0.5, 21);
  std::vector<VectorXd> x_plant{VectorXd::Constant(1, -1.3), VectorXd::Constant(1, 1.4)};
  CommBus bus(net.graph(), grid.point_count);
  IterateState state = init_iterate_state(net, grid, x_plant, bus);
  AlgorithmConfig cfg = benchmark_config();
  cfg.d = 1e-12;  // unreachably tight
  cfg.q_max = 2;
  CHECK_THROWS_AS(dmpc_iterate(net, x_plant, state, cfg, grid, bus), IterationBudgetExhausted);
}

TEST_CASE("oscillator benchmark iteration counts match the published behavior") {
  NetworkModel net = make_coupled_vdp({}, vdp_P());
  TimeGrid grid(3.0, 21);
  VectorXd x0(6);
  x0 << 0.7, 0.0, 0.28, 0.0, -0.61, 0.0;

  CommBus bus(net.graph(), grid.point_count);
  ClosedLoopOptions opts;
  opts.t_final = 1.0;
  const MpcTrace trace = mpc_closed_loop(net, x0, grid, benchmark_config(), bus, opts);
  REQUIRE(trace.steps.size() == 20);

  // four-ish iterations to overcome the cold start, then two-ish
  CHECK(trace.steps[0].iterations >= 3);
  CHECK(trace.steps[0].iterations <= 5);
  for (std::size_t k = 5; k < trace.steps.size(); ++k) {
    CHECK(trace.steps[k].iterations >= 1);
    CHECK(trace.steps[k].iterations <= 3);
  }
  // warm start benefit
  for (std::size_t k = 1; k < trace.steps.size(); ++k)
    CHECK(trace.steps[k].iterations <= trace.steps[0].iterations);

  // published communication counts: q_k * sum_i n_i (|N_i^<-| + |N_i|) = 20 q_k
  for (const auto& s : trace.steps)
    CHECK(s.component_trajectories == 20u * static_cast<unsigned>(s.iterations));
}

TEST_CASE("closed loop from the origin stays at the origin") {
  NetworkModel net = make_coupled_vdp({}, vdp_P());
  TimeGrid grid(3.0, 21);
  CommBus bus(net.graph(), grid.point_count);
  ClosedLoopOptions opts;
  opts.t_final = 0.25;
  const MpcTrace trace = mpc_closed_loop(net, VectorXd::Zero(6), grid, benchmark_config(), bus, opts);
  CHECK(trace.final_state.norm() == doctest::Approx(0.0));
  CHECK(trace.total_cost == doctest::Approx(0.0));
  for (const auto& s : trace.steps) {
    CHECK(s.applied_control.norm() == doctest::Approx(0.0));
    CHECK(s.iterations >= 1);
  }
}

TEST_CASE("mode equivalence: fixed q_max replays the criterion run") {
  NetworkModel net = make_coupled_vdp({}, vdp_P());
  TimeGrid grid(3.0, 21);
  VectorXd x0(6);
  x0 << 0.7, 0.0, 0.28, 0.0, -0.61, 0.0;

  AlgorithmConfig crit = benchmark_config();
  CommBus bus1(net.graph(), grid.point_count);
  ClosedLoopOptions opts;
  opts.t_final = 0.05;  // one MPC step
  const MpcTrace a = mpc_closed_loop(net, x0, grid, crit, bus1, opts);

  AlgorithmConfig fixed = crit;
  fixed.mode = TerminationMode::Fixed;
  fixed.q_max = a.steps[0].iterations;
  CommBus bus2(net.graph(), grid.point_count);
  const MpcTrace b = mpc_closed_loop(net, x0, grid, fixed, bus2, opts);

  // identical computation path, bitwise identical applied controls
  CHECK((a.steps[0].applied_control - b.steps[0].applied_control).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.final_state - b.final_state).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("parallel execution is bitwise identical to sequential") {
  NetworkModel net = make_coupled_vdp({}, vdp_P());
  TimeGrid grid(3.0, 21);
  VectorXd x0(6);
  x0 << 0.7, 0.0, 0.28, 0.0, -0.61, 0.0;
  ClosedLoopOptions opts;
  opts.t_final = 0.25;

  AlgorithmConfig seq = benchmark_config();
  CommBus bus1(net.graph(), grid.point_count);
  const MpcTrace a = mpc_closed_loop(net, x0, grid, seq, bus1, opts);

  AlgorithmConfig par = seq;
  par.parallel = true;
  CommBus bus2(net.graph(), grid.point_count);
  const MpcTrace b = mpc_closed_loop(net, x0, grid, par, bus2, opts);

  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t k = 0; k < a.steps.size(); ++k) {
    CHECK((a.steps[k].plant_state - b.steps[k].plant_state).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.steps[k].applied_control - b.steps[k].applied_control).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.steps[k].iterations == b.steps[k].iterations);
  }
}

TEST_CASE("damped iterations still converge on the benchmark") {
  NetworkModel net = make_coupled_vdp({}, vdp_P());
  TimeGrid grid(3.0, 201);
  VectorXd x0(6);
  x0 << 0.7, 0.0, 0.28, 0.0, -0.61, 0.0;

  AlgorithmConfig cfg = benchmark_config();
  cfg.damping = 0.5;
  cfg.inner.control_tolerance = 1e-8;
  cfg.inner.max_gradient_iterations = 1000;
  const ConvergenceTable t =
      measure_convergence(net, net.unstack_states(x0), cfg, grid, 10);
  // error to the central solution decreasing despite (slower) damped updates
  for (std::size_t q = 2; q < t.rows.size(); ++q)
    CHECK(t.rows[q].err_total < t.rows[q - 1].err_total);
  CHECK(t.contraction_ratio < 1.0);
}

TEST_CASE("convergence measurement on the benchmark") {
  NetworkModel net = make_coupled_vdp({}, vdp_P());
  // Finer grid than the MPC runs: the measured error is the distance to the
  // central discrete solution, and the distributed fixed point sits O(h^2)
  // away from it, so the grid sets the observable floor of E_q.
  TimeGrid grid(3.0, 201);
  VectorXd x0(6);
  x0 << 0.7, 0.0, 0.28, 0.0, -0.61, 0.0;

  AlgorithmConfig cfg = benchmark_config();
  cfg.inner.control_tolerance = 1e-8;
  cfg.inner.max_gradient_iterations = 1000;
  const ConvergenceTable t = measure_convergence(net, net.unstack_states(x0), cfg, grid, 8);
  REQUIRE(t.rows.size() == 9);

  // strict decrease and linear-rate fit below one
  for (std::size_t q = 1; q < t.rows.size(); ++q)
    CHECK(t.rows[q].err_total < t.rows[q - 1].err_total);
  CHECK(t.contraction_ratio < 1.0);

  // the adjoints lag the states early on
  CHECK(t.rows[1].err_adjoint >= t.rows[1].err_state);

  SUBCASE("zero initial state has zero errors") {
    const ConvergenceTable z =
        measure_convergence(net, net.unstack_states(VectorXd::Zero(6)), cfg, grid, 3);
    for (const auto& r : z.rows) CHECK(r.err_total == doctest::Approx(0.0));
  }
}

TEST_CASE("suboptimal single-iteration MPC still stabilizes the scalar system") {
  NetworkModel net = fig5_network();
  TimeGrid grid(0.5, 21);
  VectorXd x0(2);
  x0 << -1.3, 1.4;

  AlgorithmConfig cfg = benchmark_config();
  cfg.mode = TerminationMode::Fixed;
  cfg.q_max = 1;
  CommBus bus(net.graph(), grid.point_count);
  ClosedLoopOptions opts;
  opts.t_final = 4.0;
  const MpcTrace trace = mpc_closed_loop(net, x0, grid, cfg, bus, opts);
  CHECK_FALSE(trace.diverged);
  CHECK(trace.final_state.norm() < 1e-2);
  for (const auto& s : trace.steps) CHECK(s.iterations == 1);
}

TEST_CASE("unstable run yields a partial trace flagged as diverged") {
  // scalar unstable plant with a box too weak to hold it from far away
  AgentModel a;
  a.state_dim = 1;
  a.input_dim = 1;
  a.input_box = Box::symmetric(1, 0.1);
  a.local_dynamics.f = [](const VectorXd& x, const VectorXd& u) {
    return VectorXd(x.array().pow(3).matrix() + u);
  };
  a.local_cost.l = [](const VectorXd& x, const VectorXd& u) {
    return x.squaredNorm() + u.squaredNorm();
  };
  a.terminal_cost.V = [](const VectorXd& x) { return x.squaredNorm(); };
  NetworkModel net = NetworkModel::build(CouplingGraph(1, {}), {a});
  TimeGrid grid(1.0, 21);
  AlgorithmConfig cfg = benchmark_config();
  cfg.mode = TerminationMode::Fixed;
  cfg.q_max = 1;
  CommBus bus(net.graph(), grid.point_count);
  ClosedLoopOptions opts;
  opts.t_final = 2.0;
  const MpcTrace trace = mpc_closed_loop(net, VectorXd::Constant(1, 5.0), grid, cfg, bus, opts);
  CHECK(trace.diverged);
  CHECK(trace.steps.size() < 40);
}
