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

#include "dmpc/terminal_design.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

namespace dmpc {

namespace {

struct EllipsoidMap {
  MatrixXd P_inv_sqrt;  // maps unit sphere directions onto the P-ellipsoid
  MatrixXd P_inv;
};

EllipsoidMap ellipsoid_map(const MatrixXd& P) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(P);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw NumericalFailure("terminal level: P is not positive definite");
  EllipsoidMap map;
  map.P_inv_sqrt = es.eigenvectors() * es.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal() *
                   es.eigenvectors().transpose();
  map.P_inv = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
              es.eigenvectors().transpose();
  return map;
}

// Vdot + l under the linear terminal feedback at x.
double clf_margin(const NetworkModel& network, const MatrixXd& P, const MatrixXd& K,
                  const VectorXd& x) {
  const VectorXd u = K * x;
  const VectorXd grad_V = 2.0 * P * x;
  return grad_V.dot(network.central_dynamics(x, u)) + network.central_stage_cost(x, u);
}

// Exact input-box feasibility of u = Kx over the ellipsoid x'Px <= beta:
// the support of row k over the ellipsoid is sqrt(beta * k P^{-1} k').
bool inputs_feasible_on_level(const NetworkModel& network, const MatrixXd& K,
                              const EllipsoidMap& map, double beta) {
  const Box box = network.central_input_box();
  for (int r = 0; r < K.rows(); ++r) {
    const double support = std::sqrt(beta * (K.row(r) * map.P_inv * K.row(r).transpose())(0, 0));
    const double bound = std::min(-box.lower[r], box.upper[r]);
    if (support > bound) return false;
  }
  return true;
}

}  // namespace

double compute_terminal_level(const NetworkModel& network, const MatrixXd& P, const MatrixXd& K,
                              double beta_max, const LevelOptions& options) {
  if (beta_max <= 0.0) throw ConfigError("compute_terminal_level: beta_max must be positive");
  const EllipsoidMap map = ellipsoid_map(P);
  const int n = static_cast<int>(P.rows());

  // One fixed direction set reused at every level keeps the bisection
  // monotone and deterministic.
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<VectorXd> directions;
  directions.reserve(options.boundary_samples);
  for (int s = 0; s < options.boundary_samples; ++s) {
    VectorXd dir(n);
    for (int k = 0; k < n; ++k) dir[k] = gauss(rng);
    const double norm = dir.norm();
    if (norm > 0.0) directions.push_back(map.P_inv_sqrt * (dir / norm));
  }

  auto level_ok = [&](double beta) {
    if (!inputs_feasible_on_level(network, K, map, beta)) return false;
    const double scale = std::sqrt(beta);
    for (const auto& dir : directions)
      if (clf_margin(network, P, K, scale * dir) > options.clf_tolerance) return false;
    return true;
  };

  if (level_ok(beta_max)) return beta_max;
  double lo = 0.0, hi = beta_max;
  for (int it = 0; it < options.bisection_iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (level_ok(mid))
      lo = mid;
    else
      hi = mid;
  }
  if (lo < 1e-9)
    throw NoFeasibleLevel("compute_terminal_level: no certifiable level above 1e-9");
  return lo;
}

double compute_attraction_level(double beta, double m_l, double m_V, double T) {
  if (beta <= 0.0 || m_l < 0.0 || m_V <= 0.0 || T < 0.0)
    throw ConfigError("compute_attraction_level: invalid inputs");
  return beta * (1.0 + m_l * T / m_V);
}

ClfReport verify_clf(const NetworkModel& network, const MatrixXd& P, const MatrixXd& K,
                     double beta, int sample_count, std::uint64_t seed, double tolerance) {
  const EllipsoidMap map = ellipsoid_map(P);
  const int n = static_cast<int>(P.rows());
  const Box box = network.central_input_box();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  ClfReport report;
  report.samples = sample_count;
  report.worst_margin = -std::numeric_limits<double>::infinity();
  report.worst_point = VectorXd::Zero(n);
  for (int s = 0; s < sample_count; ++s) {
    // Uniform draw inside the ellipsoid: uniform ball sample mapped through
    // the linear map sqrt(beta) P^{-1/2}.
    VectorXd dir(n);
    for (int k = 0; k < n; ++k) dir[k] = gauss(rng);
    const double norm = dir.norm();
    if (norm == 0.0) continue;
    const double radius = std::pow(unif(rng), 1.0 / n);
    const VectorXd x = std::sqrt(beta) * radius * (map.P_inv_sqrt * (dir / norm));
    const double margin = clf_margin(network, P, K, x);
    if (margin > report.worst_margin) {
      report.worst_margin = margin;
      report.worst_point = x;
    }
    if (!box.contains(K * x)) report.inputs_feasible = false;
  }
  report.pass = report.inputs_feasible && report.worst_margin <= tolerance;
  return report;
}

TerminalIngredients synthesize_terminal_ingredients(const NetworkModel& network,
                                                    const SynthesisOptions& options) {
  if (!network.quadratic_spec())
    throw MissingTerminalWeights("synthesize_terminal_ingredients: quadratic cost spec required");
  const auto& spec = *network.quadratic_spec();

  MatrixXd Q = MatrixXd::Zero(network.state_dim(), network.state_dim());
  MatrixXd R = MatrixXd::Zero(network.input_dim(), network.input_dim());
  for (int i = 0; i < network.agent_count(); ++i) {
    Q.block(network.state_offset(i), network.state_offset(i), spec.Q[i].rows(), spec.Q[i].cols()) =
        spec.Q[i];
    R.block(network.input_offset(i), network.input_offset(i), spec.R[i].rows(), spec.R[i].cols()) =
        spec.R[i];
  }

  const Linearization lin = linearize_at_origin(network);
  SdpOptions sdp_options = options.sdp;
  sdp_options.structured = options.structured;
  const GainSparsity sparsity = options.structured ? GainSparsity::from_graph(network.graph())
                                                   : GainSparsity::dense(network.agent_count());
  const SdpResult sdp = solve_structured_sdp(lin, Q, R, options.gamma, sparsity, sdp_options);

  TerminalIngredients ing;
  ing.P_blocks = sdp.P_blocks;
  ing.K = sdp.K;
  ing.gamma = options.gamma;
  ing.logdet_E = sdp.logdet_E;
  ing.lmi_residual = sdp.lmi_residual;

  ing.beta = compute_terminal_level(network, sdp.P, sdp.K, options.beta_max, options.level);

  QuadraticCostSpec with_P = spec;
  with_P.P = sdp.P_blocks;
  ing.bounds = compute_cost_bounds(with_P);
  ing.alpha = compute_attraction_level(ing.beta, ing.bounds.m_l, ing.bounds.m_V, options.horizon);

  // Certificate at the returned level with a fresh seed.
  ing.clf = verify_clf(network, sdp.P, sdp.K, ing.beta, options.verify_samples,
                       options.level.seed + 1, options.level.clf_tolerance);
  return ing;
}

}  // namespace dmpc
