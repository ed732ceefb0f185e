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

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "dmpc/run_outputs.hpp"
#include "dmpc/scenario_config.hpp"

namespace fs = std::filesystem;
using namespace dmpc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitDivergence = 4;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool parallel = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "scenario config file (JSON)")->required();
  cmd->add_option("--out-dir", args.out_dir, "output directory (overrides output.dir)");
  cmd->add_option("--override", args.overrides, "dotted config override key.path=value");
  cmd->add_option("--seed", args.seed, "override simulation.seed");
  cmd->add_flag("--parallel", args.parallel, "run agent computations on one thread each");
}

ScenarioConfig load_config(const CommonArgs& args) {
  ScenarioConfig cfg = ScenarioConfig::load(args.config_path, args.overrides);
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (args.seed) cfg.seed = *args.seed;
  cfg.parallel = args.parallel;
  fs::create_directories(cfg.out_dir);
  return cfg;
}

/// Terminal ingredients for a run: loaded from the configured file when given,
/// synthesized on the spot otherwise.
TerminalIngredients obtain_ingredients(const ScenarioConfig& cfg) {
  if (!cfg.ingredients_file.empty()) return load_ingredients(cfg.ingredients_file);
  NetworkModel synth_net = build_scenario_network(cfg);
  SynthesisOptions opt;
  opt.gamma = cfg.gamma;
  opt.horizon = cfg.T;
  TerminalIngredients ing = synthesize_terminal_ingredients(synth_net, opt);
  if (cfg.beta) ing.beta = *cfg.beta;
  return ing;
}

void emit_trace(const ScenarioConfig& cfg, const MpcTrace& trace, const NetworkModel& net,
                const std::string& name = "trace.csv") {
  const bool want = std::find(cfg.emit.begin(), cfg.emit.end(), "trace") != cfg.emit.end();
  if (!want) return;
  write_trace_csv((fs::path(cfg.out_dir) / name).string(), trace, net.state_dim(),
                  net.input_dim());
}

void emit_comm_summary(const ScenarioConfig& cfg, const MpcTrace& trace) {
  if (std::find(cfg.emit.begin(), cfg.emit.end(), "comm") == cfg.emit.end()) return;
  std::ofstream out(fs::path(cfg.out_dir) / "comm.csv");
  out << "k,msgs,component_trajectories,bytes\n";
  for (const auto& s : trace.steps)
    out << s.k << ',' << s.messages << ',' << s.component_trajectories << ',' << s.bytes << '\n';
}

int cmd_simulate(const CommonArgs& args, bool timing) {
  const ScenarioConfig cfg = load_config(args);
  const TerminalIngredients ing = obtain_ingredients(cfg);
  const NetworkModel net = build_scenario_network(cfg, ing.P_blocks);
  CommBus bus(net.graph(), cfg.n_disc);
  ClosedLoopOptions opts;
  opts.t_final = cfg.t_final;
  opts.oracle = cfg.oracle;
  opts.measure_wall_time = timing;
  const MpcTrace trace =
      mpc_closed_loop(net, cfg.x0_central(), cfg.grid(), cfg.algorithm(), bus, opts);
  emit_trace(cfg, trace, net);
  emit_comm_summary(cfg, trace);
  std::cout << "simulate: " << trace.steps.size() << " steps, final |x| = "
            << trace.final_state.norm() << ", closed-loop cost = " << trace.total_cost
            << (trace.diverged ? " [DIVERGED]" : "") << "\n";
  return trace.diverged ? kExitDivergence : kExitOk;
}

int cmd_converge(const CommonArgs& args, int samples, int q_probe, double x0_halfwidth) {
  const ScenarioConfig cfg = load_config(args);
  const TerminalIngredients ing = obtain_ingredients(cfg);
  const NetworkModel net = build_scenario_network(cfg, ing.P_blocks);

  // Convergence measurement wants the outer-loop error to dominate, so the
  // inner solves run tighter than the simulation defaults.
  AlgorithmConfig algo = cfg.algorithm();
  algo.inner.control_tolerance = std::min(algo.inner.control_tolerance, 1e-8);
  algo.inner.max_gradient_iterations = std::max(algo.inner.max_gradient_iterations, 1000);

  const VectorXd center = cfg.x0_central();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> dist(-x0_halfwidth, x0_halfwidth);
  std::vector<std::vector<VectorXd>> draws(samples);
  for (int s = 0; s < samples; ++s) {
    VectorXd x0 = center;
    for (int k = 0; k < x0.size(); ++k) x0[k] += dist(rng);
    draws[s] = net.unstack_states(x0);
  }

  std::vector<ConvergenceSample> results(samples);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int s = next.fetch_add(1); s < samples; s = next.fetch_add(1)) {
      results[s].sample_id = s;
      try {
        results[s].table = measure_convergence(net, draws[s], algo, cfg.grid(), q_probe);
      } catch (const OracleFailure&) {
        results[s].oracle_failed = true;
      }
    }
  };
  if (cfg.parallel) {
    const unsigned n_workers =
        std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()), samples);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  } else {
    worker();
  }

  write_convergence_csv((fs::path(cfg.out_dir) / "convergence.csv").string(), results);
  int failed = 0;
  double worst_ratio = 0.0;
  for (const auto& r : results) {
    if (r.oracle_failed) ++failed;
    else worst_ratio = std::max(worst_ratio, r.table.contraction_ratio);
  }
  std::cout << "converge: " << samples << " samples, q_probe = " << q_probe
            << ", worst contraction ratio = " << worst_ratio << ", oracle failures = " << failed
            << "\n";
  return kExitOk;
}

int cmd_synthesize(const CommonArgs& args, bool unstructured) {
  const ScenarioConfig cfg = load_config(args);
  NetworkModel net = build_scenario_network(cfg);
  SynthesisOptions opt;
  opt.gamma = cfg.gamma;
  opt.horizon = cfg.T;
  opt.structured = !unstructured;
  const TerminalIngredients ing = synthesize_terminal_ingredients(net, opt);
  const std::string name = unstructured ? "ingredients_unstructured.json" : "ingredients.json";
  save_ingredients((fs::path(cfg.out_dir) / name).string(), ing, cfg.builtin);
  std::cout << "synthesize: beta = " << ing.beta << ", alpha = " << ing.alpha
            << ", logdet(E) = " << ing.logdet_E << ", lmi residual = " << ing.lmi_residual
            << ", clf " << (ing.clf.pass ? "pass" : "FAIL") << " -> " << name << "\n";
  return ing.clf.pass ? kExitOk : kExitInfeasible;
}

struct GridAxis {
  double lo = 0.0, hi = 0.0;
  int count = 1;
};

std::vector<GridAxis> parse_grid(const std::string& spec) {
  std::vector<GridAxis> axes;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    GridAxis axis;
    if (std::sscanf(part.c_str(), "%lf:%lf:%d", &axis.lo, &axis.hi, &axis.count) != 3 ||
        axis.count < 1)
      throw ConfigError("grid axis '" + part + "' is not min:max:count");
    axes.push_back(axis);
  }
  if (axes.empty()) throw ConfigError("empty grid spec");
  return axes;
}

int cmd_region(const CommonArgs& args, const std::string& grid_spec) {
  const ScenarioConfig cfg = load_config(args);
  const TerminalIngredients ing = obtain_ingredients(cfg);
  const NetworkModel net = build_scenario_network(cfg, ing.P_blocks);
  const double beta = cfg.beta.value_or(ing.beta);
  MatrixXd P = MatrixXd::Zero(net.state_dim(), net.state_dim());
  for (int i = 0; i < net.agent_count(); ++i)
    P.block(net.state_offset(i), net.state_offset(i), ing.P_blocks[i].rows(),
            ing.P_blocks[i].cols()) = ing.P_blocks[i];

  const auto axes = parse_grid(grid_spec);
  if (static_cast<int>(axes.size()) != net.state_dim())
    throw ConfigError("region grid must have one axis per state dimension (" +
                      std::to_string(net.state_dim()) + ")");

  std::vector<RegionRecord> records;
  std::vector<int> idx(axes.size(), 0);
  bool done = false;
  while (!done) {
    VectorXd x0(net.state_dim());
    for (std::size_t a = 0; a < axes.size(); ++a)
      x0[a] = axes[a].count == 1
                  ? axes[a].lo
                  : axes[a].lo + (axes[a].hi - axes[a].lo) * idx[a] / (axes[a].count - 1);
    RegionRecord rec;
    rec.x0 = x0;
    try {
      const OcpSolution central = solve_central_ocp(net, x0, cfg.grid());
      const VectorXd xT = central.state.at(cfg.n_disc - 1);
      rec.endpoint_in_terminal = (xT.dot(P * xT) <= beta) ? 1 : 0;
      CommBus bus(net.graph(), cfg.n_disc);
      ClosedLoopOptions opts;
      opts.t_final = cfg.t_final;
      const MpcTrace trace = mpc_closed_loop(net, x0, cfg.grid(), cfg.algorithm(), bus, opts);
      rec.stabilized = (!trace.diverged && trace.final_state.norm() < 1e-2) ? 1 : 0;
    } catch (const Error&) {
      rec.stabilized = 0;
      rec.endpoint_in_terminal = 0;
    }
    records.push_back(std::move(rec));
    done = true;
    for (int a = static_cast<int>(axes.size()) - 1; a >= 0; --a) {
      if (++idx[a] < axes[a].count) {
        done = false;
        break;
      }
      idx[a] = 0;
    }
  }
  write_region_csv((fs::path(cfg.out_dir) / "region.csv").string(), records, net.state_dim());
  int stabilized = 0;
  for (const auto& r : records) stabilized += r.stabilized;
  std::cout << "region: " << records.size() << " points, " << stabilized << " stabilized\n";
  return kExitOk;
}

int cmd_compare_central(const CommonArgs& args) {
  const ScenarioConfig cfg = load_config(args);
  const TerminalIngredients ing = obtain_ingredients(cfg);
  const NetworkModel net = build_scenario_network(cfg, ing.P_blocks);

  CommBus bus(net.graph(), cfg.n_disc);
  ClosedLoopOptions opts;
  opts.t_final = cfg.t_final;
  const MpcTrace dist = mpc_closed_loop(net, cfg.x0_central(), cfg.grid(), cfg.algorithm(), bus, opts);

  SolverConfig central_inner;
  central_inner.control_tolerance = 1e-8;
  central_inner.max_gradient_iterations = 2000;
  const MpcTrace central = central_mpc_closed_loop(net, cfg.x0_central(), cfg.grid(), cfg.dt,
                                                   cfg.t_final, central_inner);

  std::vector<CompareRecord> records;
  const std::size_t steps = std::min(dist.steps.size(), central.steps.size());
  double max_u_dev = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    CompareRecord rec;
    rec.k = static_cast<int>(k);
    rec.t = dist.steps[k].t;
    rec.x_dist = dist.steps[k].plant_state;
    rec.u_dist = dist.steps[k].applied_control;
    rec.x_central = central.steps[k].plant_state;
    rec.u_central = central.steps[k].applied_control;
    rec.control_deviation = (rec.u_dist - rec.u_central).norm();
    rec.state_deviation = (rec.x_dist - rec.x_central).norm();
    max_u_dev = std::max(max_u_dev, rec.control_deviation);
    records.push_back(std::move(rec));
  }
  write_compare_csv((fs::path(cfg.out_dir) / "trace_compare.csv").string(), records,
                    net.state_dim(), net.input_dim());
  emit_trace(cfg, dist, net, "trace.csv");
  std::cout << "compare-central: " << steps << " steps, max control deviation = " << max_u_dev
            << "\n";
  return (dist.diverged || central.diverged) ? kExitDivergence : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sensitivity-based distributed MPC bench"};
  app.require_subcommand(1);

  CommonArgs sim_args, conv_args, synth_args, region_args, cmp_args;
  bool timing = false;
  bool unstructured = false;
  int samples = 50, q_probe = 8;
  double x0_halfwidth = 1.0;
  std::string grid_spec = "-2:2:21,-2:2:21";

  auto* simulate = app.add_subcommand("simulate", "closed-loop distributed MPC run");
  add_common(simulate, sim_args);
  simulate->add_flag("--timing", timing, "record wall time per step (breaks byte determinism)");

  auto* converge = app.add_subcommand("converge", "per-iteration convergence measurement");
  add_common(converge, conv_args);
  converge->add_option("--samples", samples, "number of sampled initial conditions");
  converge->add_option("--q-probe", q_probe, "iterations to probe per sample");
  converge->add_option("--x0-box", x0_halfwidth, "half-width of the sampling box around x0");

  auto* synthesize = app.add_subcommand("synthesize", "offline terminal-ingredient synthesis");
  add_common(synthesize, synth_args);
  synthesize->add_flag("--unstructured", unstructured,
                       "drop the separability/structure constraints");

  auto* region = app.add_subcommand("region", "initial-condition classification grid");
  add_common(region, region_args);
  region->add_option("--grid", grid_spec, "per-dimension grid min:max:count[,...]");

  auto* compare = app.add_subcommand("compare-central", "distributed vs centralized MPC");
  add_common(compare, cmp_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return cmd_simulate(sim_args, timing);
    if (converge->parsed()) return cmd_converge(conv_args, samples, q_probe, x0_halfwidth);
    if (synthesize->parsed()) return cmd_synthesize(synth_args, unstructured);
    if (region->parsed()) return cmd_region(region_args, grid_spec);
    if (compare->parsed()) return cmd_compare_central(cmp_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Infeasible& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const Divergence& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
