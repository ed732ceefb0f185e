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

#ifndef DMPC_TERMINAL_DESIGN_HPP
#define DMPC_TERMINAL_DESIGN_HPP

#include <cstdint>
#include <vector>

#include "dmpc/network_model.hpp"

namespace dmpc {

/// Linearization of the coupled dynamics at the origin. A inherits the graph
/// sparsity (A_ij nonzero only for senders j), B is block diagonal.
struct Linearization {
  MatrixXd A;
  MatrixXd B;
  std::vector<int> state_offsets, input_offsets;
  std::vector<int> state_dims, input_dims;

  int agent_count() const { return static_cast<int>(state_dims.size()); }
  Eigen::Block<const MatrixXd> A_block(int i, int j) const {
    return A.block(state_offsets[i], state_offsets[j], state_dims[i], state_dims[j]);
  }
};

Linearization linearize_at_origin(const NetworkModel& network);

/// Allowed agent-block pattern of the gain K (and the SDP variable Y).
struct GainSparsity {
  // allowed(i, j) == 1 permits a nonzero block K_ij.
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> allowed;

  /// Neighborhood pattern: K_ij = 0 for j outside N_i and the diagonal.
  static GainSparsity from_graph(const CouplingGraph& graph);
  /// No structural zeros.
  static GainSparsity dense(int agent_count);
};

struct SdpOptions {
  bool structured = true;       // block-diagonal E (separable terminal cost)
  double lmi_margin = 1e-8;     // enforced slack: LMI <= -margin * I
  double e_margin = 1e-6;       // required minimum eigenvalue of E
  double gap_tolerance = 1e-7;  // barrier duality-gap proxy
  double mu_factor = 0.2;
  int max_newton_iterations = 200;
};

struct SdpResult {
  std::vector<MatrixXd> P_blocks;  // per agent (structured runs)
  MatrixXd P;                      // full terminal weight
  MatrixXd K;                      // full gain, structural zeros exact
  double logdet_E = 0.0;           // attained objective (maximized)
  double lmi_residual = 0.0;       // max eigenvalue of the closed-loop CLF matrix
  int newton_iterations = 0;
};

/// Log-det synthesis of the terminal weight P = E^{-1} and gain K = Y E^{-1}
/// subject to the closed-loop CLF matrix inequality at margin. The problem
/// decomposes across connected components of the linearized coupling graph;
/// gain blocks between components are exactly zero (a symmetry argument shows
/// an optimizer with such zeros always exists). Custom two-phase barrier
/// method with dense Newton steps; throws Infeasible when phase one cannot
/// reach a strictly feasible point.
SdpResult solve_structured_sdp(const Linearization& lin, const MatrixXd& Q, const MatrixXd& R,
                               double gamma, const GainSparsity& sparsity,
                               const SdpOptions& options = {});

struct LevelOptions {
  int boundary_samples = 2000;
  int bisection_iterations = 30;
  std::uint64_t seed = 20260401;
  double clf_tolerance = 1e-8;
};

/// Largest beta <= beta_max such that the linear feedback respects the input
/// boxes on the ellipsoid x^T P x <= beta (exact support-function test) and
/// the sampled nonlinear CLF decrease holds on the boundary.
double compute_terminal_level(const NetworkModel& network, const MatrixXd& P, const MatrixXd& K,
                              double beta_max, const LevelOptions& options = {});

/// alpha = beta (1 + m_l T / m_V).
double compute_attraction_level(double beta, double m_l, double m_V, double T);

struct ClfReport {
  bool pass = false;
  double worst_margin = 0.0;
  VectorXd worst_point;
  bool inputs_feasible = true;
  int samples = 0;
};

/// Samples x uniformly inside the ellipsoid x^T P x <= beta and checks
/// Vdot(x, Kx) + l(x, Kx) <= tolerance and K x in U at every sample.
ClfReport verify_clf(const NetworkModel& network, const MatrixXd& P, const MatrixXd& K,
                     double beta, int sample_count, std::uint64_t seed,
                     double tolerance = 1e-8);

/// Everything a simulation run needs from the offline design stage.
struct TerminalIngredients {
  std::vector<MatrixXd> P_blocks;
  MatrixXd K;
  double gamma = 0.0;
  double beta = 0.0;
  double alpha = 0.0;
  double logdet_E = 0.0;
  double lmi_residual = 0.0;
  CostBounds bounds;
  ClfReport clf;
};

struct SynthesisOptions {
  double gamma = 1.2;
  double beta_max = 10.0;
  double horizon = 0.0;  // MPC horizon T entering the attraction level
  bool structured = true;
  LevelOptions level;
  int verify_samples = 10000;
  SdpOptions sdp;
};

/// Full offline pipeline: linearize, solve the SDP, certify the terminal
/// level, derive the attraction level, and re-verify the CLF with a fresh
/// sample set. Requires the network's quadratic cost spec.
TerminalIngredients synthesize_terminal_ingredients(const NetworkModel& network,
                                                    const SynthesisOptions& options);

}  // namespace dmpc

#endif  // DMPC_TERMINAL_DESIGN_HPP
