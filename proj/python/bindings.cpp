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

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dmpc/algorithm.hpp"
#include "dmpc/benchmarks.hpp"
#include "dmpc/ocp_solver.hpp"
#include "dmpc/terminal_design.hpp"

namespace py = pybind11;
using namespace dmpc;

namespace {

NetworkModel build_named(const std::string& name, std::optional<std::vector<MatrixXd>> P,
                         std::optional<std::vector<double>> mu, std::optional<MatrixXd> eps) {
  ScalarCoupledParams sp;
  if (mu) sp.mu = *mu;
  if (eps) sp.eps = *eps;
  return make_builtin(name, sp, CoupledVdpParams{}, std::move(P));
}

struct PySolution {
  MatrixXd control, state, adjoint;
  double cost;
  int iterations;
  double projected_gradient_norm;
  bool converged;
};

PySolution to_py(OcpSolution&& sol) {
  return {sol.control.values(), sol.state.values(),         sol.adjoint.values(), sol.cost,
          sol.iterations,       sol.projected_gradient_norm, sol.converged};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Sensitivity-based distributed MPC for coupled nonlinear systems";

  py::register_exception<Error>(m, "DmpcError");

  py::class_<NetworkModel>(m, "NetworkModel")
      .def_property_readonly("agent_count", &NetworkModel::agent_count)
      .def_property_readonly("state_dim", &NetworkModel::state_dim)
      .def_property_readonly("input_dim", &NetworkModel::input_dim);

  m.def("make_benchmark", &build_named, py::arg("name"), py::arg("P") = std::nullopt,
        py::arg("mu") = std::nullopt, py::arg("eps") = std::nullopt,
        "Build a built-in benchmark network ('coupled-vdp' or 'scalar-coupled').");

  py::class_<PySolution>(m, "OcpSolution")
      .def_readonly("control", &PySolution::control)
      .def_readonly("state", &PySolution::state)
      .def_readonly("adjoint", &PySolution::adjoint)
      .def_readonly("cost", &PySolution::cost)
      .def_readonly("iterations", &PySolution::iterations)
      .def_readonly("projected_gradient_norm", &PySolution::projected_gradient_norm)
      .def_readonly("converged", &PySolution::converged);

  m.def(
      "solve_central_ocp",
      [](const NetworkModel& net, const VectorXd& x0, double T, int n_disc) {
        return to_py(solve_central_ocp(net, x0, TimeGrid(T, n_disc)));
      },
      py::arg("network"), py::arg("x0"), py::arg("T"), py::arg("n_disc") = 21,
      "Tightly solve the stacked central OCP; returns trajectories as arrays (dim x nodes).");

  py::class_<TerminalIngredients>(m, "TerminalIngredients")
      .def_readonly("P_blocks", &TerminalIngredients::P_blocks)
      .def_readonly("K", &TerminalIngredients::K)
      .def_readonly("gamma", &TerminalIngredients::gamma)
      .def_readonly("beta", &TerminalIngredients::beta)
      .def_readonly("alpha", &TerminalIngredients::alpha)
      .def_readonly("logdet_E", &TerminalIngredients::logdet_E)
      .def_readonly("lmi_residual", &TerminalIngredients::lmi_residual)
      .def_property_readonly("clf_pass",
                             [](const TerminalIngredients& t) { return t.clf.pass; });

  m.def(
      "synthesize_terminal",
      [](const NetworkModel& net, double gamma, double horizon, bool structured,
         double beta_max) {
        SynthesisOptions opt;
        opt.gamma = gamma;
        opt.horizon = horizon;
        opt.structured = structured;
        opt.beta_max = beta_max;
        return synthesize_terminal_ingredients(net, opt);
      },
      py::arg("network"), py::arg("gamma"), py::arg("horizon"), py::arg("structured") = true,
      py::arg("beta_max") = 10.0, "Offline terminal-cost/gain synthesis with certificates.");

  py::class_<MpcStepRecord>(m, "MpcStepRecord")
      .def_readonly("k", &MpcStepRecord::k)
      .def_readonly("t", &MpcStepRecord::t)
      .def_readonly("plant_state", &MpcStepRecord::plant_state)
      .def_readonly("applied_control", &MpcStepRecord::applied_control)
      .def_readonly("iterations", &MpcStepRecord::iterations)
      .def_readonly("stage_cost", &MpcStepRecord::stage_cost)
      .def_property_readonly("oracle_cost",
                             [](const MpcStepRecord& r) -> py::object {
                               if (r.oracle_cost) return py::float_(*r.oracle_cost);
                               return py::none();
                             })
      .def_readonly("messages", &MpcStepRecord::messages)
      .def_readonly("component_trajectories", &MpcStepRecord::component_trajectories)
      .def_readonly("bytes", &MpcStepRecord::bytes);

  py::class_<MpcTrace>(m, "MpcTrace")
      .def_readonly("steps", &MpcTrace::steps)
      .def_readonly("final_state", &MpcTrace::final_state)
      .def_readonly("final_time", &MpcTrace::final_time)
      .def_readonly("total_cost", &MpcTrace::total_cost)
      .def_readonly("diverged", &MpcTrace::diverged);

  m.def(
      "run_closed_loop",
      [](const NetworkModel& net, const VectorXd& x0, double T, int n_disc, double dt,
         double t_final, const std::string& mode, double d, int q_max, double damping,
         double inner_tol, int inner_max_iter, bool oracle, bool parallel) {
        AlgorithmConfig cfg;
        if (mode == "criterion")
          cfg.mode = TerminationMode::Criterion;
        else if (mode == "fixed")
          cfg.mode = TerminationMode::Fixed;
        else if (mode == "both")
          cfg.mode = TerminationMode::Both;
        else
          throw ConfigError("mode must be criterion | fixed | both");
        cfg.d = d;
        cfg.q_max = q_max;
        cfg.damping = damping;
        cfg.sampling_dt = dt;
        cfg.parallel = parallel;
        cfg.inner.control_tolerance = inner_tol;
        cfg.inner.max_gradient_iterations = inner_max_iter;
        const TimeGrid grid(T, n_disc);
        CommBus bus(net.graph(), n_disc);
        ClosedLoopOptions opts;
        opts.t_final = t_final;
        opts.oracle = oracle;
        return mpc_closed_loop(net, x0, grid, cfg, bus, opts);
      },
      py::arg("network"), py::arg("x0"), py::arg("T"), py::arg("n_disc"), py::arg("dt"),
      py::arg("t_final"), py::arg("mode") = "criterion", py::arg("d") = 0.1,
      py::arg("q_max") = 50, py::arg("damping") = 0.0, py::arg("inner_tol") = 1e-6,
      py::arg("inner_max_iter") = 100, py::arg("oracle") = false, py::arg("parallel") = false,
      "Suboptimal distributed MPC closed loop; returns the step-by-step trace.");

  m.def(
      "measure_convergence",
      [](const NetworkModel& net, const VectorXd& x0, double T, int n_disc, int q_probe,
         double inner_tol, int inner_max_iter) {
        AlgorithmConfig cfg;
        cfg.inner.control_tolerance = inner_tol;
        cfg.inner.max_gradient_iterations = inner_max_iter;
        cfg.sampling_dt = T / 2;  // unused by the probe
        std::vector<VectorXd> per_agent = net.unstack_states(x0);
        const ConvergenceTable t = measure_convergence(net, per_agent, cfg, TimeGrid(T, n_disc), q_probe);
        std::vector<std::tuple<int, double, double, double>> rows;
        for (const auto& r : t.rows) rows.emplace_back(r.q, r.err_total, r.err_state, r.err_adjoint);
        return py::make_tuple(rows, t.contraction_ratio);
      },
      py::arg("network"), py::arg("x0"), py::arg("T"), py::arg("n_disc"), py::arg("q_probe") = 8,
      py::arg("inner_tol") = 1e-8, py::arg("inner_max_iter") = 1000,
      "Iteration-wise error against the central solution at a fixed state; "
      "returns (rows, contraction_ratio).");

  m.def(
      "validate_derivatives",
      [](const NetworkModel& net, int samples, std::uint64_t seed) {
        const DerivativeReport rep = validate_derivatives(net, samples, seed);
        return py::make_tuple(rep.passed, rep.worst_relative_error);
      },
      py::arg("network"), py::arg("samples") = 50, py::arg("seed") = 0,
      "Finite-difference audit of all supplied Jacobians/gradients.");
}
