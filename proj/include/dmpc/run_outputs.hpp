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

#ifndef DMPC_RUN_OUTPUTS_HPP
#define DMPC_RUN_OUTPUTS_HPP

#include <string>
#include <vector>

#include "dmpc/algorithm.hpp"
#include "dmpc/terminal_design.hpp"

namespace dmpc {

/// Deterministic shortest-roundtrip formatting ("%.17g"); identical bits
/// yield identical text, which is what the byte-level reproducibility
/// contract of the CSV outputs relies on.
std::string format_double(double v);

/// trace.csv: k, t, x0.., u0.., q_k, J_oracle, stage_cost, msgs, bytes, wall_ms.
/// One row per MPC step plus a final row carrying the terminal state (u and
/// the per-step columns are zero there). wall_ms is zero unless the run
/// measured wall time; timing is opt-in because it breaks byte determinism.
void write_trace_csv(const std::string& path, const MpcTrace& trace, int state_dim,
                     int input_dim);

struct ConvergenceSample {
  int sample_id = 0;
  ConvergenceTable table;
  bool oracle_failed = false;
};

/// convergence.csv: sample_id, q, err_total, err_state, err_adjoint.
/// Summary rows reuse the schema with sentinel ids: -1 envelope max per q,
/// -2 median per q, -3 fitted contraction ratios (stored in the err columns).
void write_convergence_csv(const std::string& path, const std::vector<ConvergenceSample>& samples);

struct RegionRecord {
  VectorXd x0;
  int stabilized = 0;
  int endpoint_in_terminal = 0;
};

/// region.csv: x0_0.., stabilized, endpoint_in_terminal.
void write_region_csv(const std::string& path, const std::vector<RegionRecord>& records,
                      int state_dim);

struct CompareRecord {
  int k = 0;
  double t = 0.0;
  VectorXd x_dist, u_dist, x_central, u_central;
  double control_deviation = 0.0;  // max over the applied segment
  double state_deviation = 0.0;
};

/// trace_compare.csv: paired distributed/centralized columns plus deviations.
void write_compare_csv(const std::string& path, const std::vector<CompareRecord>& records,
                       int state_dim, int input_dim);

/// Ingredients-file round trip (JSON).
void save_ingredients(const std::string& path, const TerminalIngredients& ingredients,
                      const std::string& system_name);
TerminalIngredients load_ingredients(const std::string& path);

}  // namespace dmpc

#endif  // DMPC_RUN_OUTPUTS_HPP
