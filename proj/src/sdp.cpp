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

// Custom dense barrier solver for the structured log-det synthesis problem:
//
//   max log det E   s.t.   M(E, Y) <= -margin I,  E block diagonal,
//                          Y restricted to an agent-block sparsity pattern,
//
// where M is the 3x3 block matrix coupling (A, B, Q^{1/2}, R^{1/2}, gamma).
// Problem sizes are a handful of variables, so everything is dense and the
// central path is followed with damped Newton steps.

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "dmpc/errors.hpp"
#include "dmpc/terminal_design.hpp"

namespace dmpc {

namespace {

using Eigen::LLT;

// One connected component of the linearized coupling graph, with local
// state/input indexing.
struct Component {
  std::vector<int> agents;          // global agent ids, ascending
  std::vector<int> state_offset;    // local offsets per member
  std::vector<int> input_offset;
  int n = 0, m = 0;
};

struct VariableBasis {
  // Basis matrices per scalar variable: E direction (n x n, symmetric) and
  // Y direction (m x n); exactly one of them is nonzero.
  std::vector<MatrixXd> E_dir;
  std::vector<MatrixXd> Y_dir;
  int count() const { return static_cast<int>(E_dir.size()); }
};

// Assembles the symmetric constraint matrix
//   M = [ A E + E A' + B Y + Y' B',  E Qh,      Y' Rh ]
//       [ Qh E,                      -(1/g) I,  0     ]
//       [ Rh Y,                      0,         -(1/g) I ]
MatrixXd assemble_M(const MatrixXd& A, const MatrixXd& B, const MatrixXd& Qh, const MatrixXd& Rh,
                    double gamma, const MatrixXd& E, const MatrixXd& Y) {
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());
  MatrixXd M = MatrixXd::Zero(2 * n + m, 2 * n + m);
  M.topLeftCorner(n, n) = A * E + E * A.transpose() + B * Y + Y.transpose() * B.transpose();
  M.block(0, n, n, n) = E * Qh;
  M.block(n, 0, n, n) = Qh * E;
  M.block(0, 2 * n, n, m) = Y.transpose() * Rh;
  M.block(2 * n, 0, m, n) = Rh * Y;
  M.block(n, n, n, n) = -(1.0 / gamma) * MatrixXd::Identity(n, n);
  M.bottomRightCorner(m, m) = -(1.0 / gamma) * MatrixXd::Identity(m, m);
  return M;
}

// Splits the agents into connected components of the symmetrized nonzero
// pattern of the off-diagonal A blocks. Q and R are block diagonal, so the
// constraint decouples across components once the cross-component Y blocks
// are pinned to zero (which loses no optimality; see header note).
std::vector<Component> split_components(const Linearization& lin) {
  const int N = lin.agent_count();
  std::vector<int> comp(N, -1);
  int n_comp = 0;
  for (int start = 0; start < N; ++start) {
    if (comp[start] >= 0) continue;
    std::vector<int> stack{start};
    comp[start] = n_comp;
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      for (int j = 0; j < N; ++j) {
        if (comp[j] >= 0 || i == j) continue;
        const bool coupled = lin.A_block(i, j).cwiseAbs().maxCoeff() > 0.0 ||
                             lin.A_block(j, i).cwiseAbs().maxCoeff() > 0.0;
        if (coupled) {
          comp[j] = comp[start];
          stack.push_back(j);
        }
      }
    }
    ++n_comp;
  }
  std::vector<Component> components(n_comp);
  for (int i = 0; i < N; ++i) components[comp[i]].agents.push_back(i);
  for (auto& c : components) {
    for (int a : c.agents) {
      c.state_offset.push_back(c.n);
      c.input_offset.push_back(c.m);
      c.n += lin.state_dims[a];
      c.m += lin.input_dims[a];
    }
  }
  return components;
}

VariableBasis build_basis(const Component& c, const Linearization& lin,
                          const GainSparsity& sparsity, bool structured) {
  VariableBasis basis;
  const int n = c.n, m = c.m;
  auto push_E = [&](int r, int col) {
    MatrixXd Ed = MatrixXd::Zero(n, n);
    Ed(r, col) = 1.0;
    Ed(col, r) = 1.0;
    basis.E_dir.push_back(std::move(Ed));
    basis.Y_dir.push_back(MatrixXd::Zero(m, n));
  };
  if (structured) {
    for (std::size_t a = 0; a < c.agents.size(); ++a) {
      const int off = c.state_offset[a];
      const int na = lin.state_dims[c.agents[a]];
      for (int r = 0; r < na; ++r)
        for (int col = r; col < na; ++col) push_E(off + r, off + col);
    }
  } else {
    for (int r = 0; r < n; ++r)
      for (int col = r; col < n; ++col) push_E(r, col);
  }
  for (std::size_t a = 0; a < c.agents.size(); ++a) {
    for (std::size_t b = 0; b < c.agents.size(); ++b) {
      if (!sparsity.allowed(c.agents[a], c.agents[b])) continue;
      const int ro = c.input_offset[a], co = c.state_offset[b];
      for (int r = 0; r < lin.input_dims[c.agents[a]]; ++r)
        for (int col = 0; col < lin.state_dims[c.agents[b]]; ++col) {
          MatrixXd Yd = MatrixXd::Zero(m, n);
          Yd(ro + r, co + col) = 1.0;
          basis.E_dir.push_back(MatrixXd::Zero(n, n));
          basis.Y_dir.push_back(std::move(Yd));
        }
    }
  }
  return basis;
}

struct ComponentProblem {
  MatrixXd A, B, Qh, Rh;
  double gamma = 0.0;
  VariableBasis basis;
  int n = 0, m = 0, dim_M = 0;

  MatrixXd E_of(const VectorXd& theta) const {
    MatrixXd E = MatrixXd::Zero(n, n);
    for (int a = 0; a < basis.count(); ++a)
      if (basis.E_dir[a].size() > 0 && basis.E_dir[a].cwiseAbs().maxCoeff() > 0.0)
        E += theta[a] * basis.E_dir[a];
    return E;
  }
  MatrixXd Y_of(const VectorXd& theta) const {
    MatrixXd Y = MatrixXd::Zero(m, n);
    for (int a = 0; a < basis.count(); ++a)
      if (basis.Y_dir[a].cwiseAbs().maxCoeff() > 0.0) Y += theta[a] * basis.Y_dir[a];
    return Y;
  }
  // Directional derivative of M along basis variable a.
  MatrixXd M_dir(int a) const {
    return assemble_M(A, B, Qh, Rh, gamma, basis.E_dir[a], basis.Y_dir[a]) -
           assemble_M(A, B, Qh, Rh, gamma, MatrixXd::Zero(n, n), MatrixXd::Zero(m, n));
  }
};

MatrixXd matrix_sqrt(const MatrixXd& W) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(W);
  if (es.eigenvalues().minCoeff() < 0.0)
    throw NumericalFailure("matrix_sqrt: matrix is not positive semidefinite");
  return es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

// Cholesky-based positive definiteness probe.
bool is_pd(const MatrixXd& S) {
  LLT<MatrixXd> llt(S);
  return llt.info() == Eigen::Success;
}

double logdet_pd(const MatrixXd& S) {
  LLT<MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

struct NewtonResult {
  VectorXd theta;
  int iterations = 0;
};

// Damped Newton minimization of a smooth barrier objective with feasibility
// guarded via the callbacks. Value/gradient/Hessian come from `oracle`.
template <typename Oracle, typename Feasible>
NewtonResult newton_minimize(VectorXd theta, const Oracle& oracle, const Feasible& feasible,
                             int max_iterations, double decrement_tol = 1e-10) {
  NewtonResult res;
  double value;
  VectorXd grad;
  MatrixXd hess;
  for (int it = 0; it < max_iterations; ++it) {
    oracle(theta, value, grad, hess);
    // Levenberg fallback keeps the step well defined near the boundary.
    Eigen::LDLT<MatrixXd> ldlt(hess);
    VectorXd step = -ldlt.solve(grad);
    if (ldlt.info() != Eigen::Success || !step.allFinite() || grad.dot(step) > 0.0) {
      ldlt.compute(hess + 1e-8 * MatrixXd::Identity(hess.rows(), hess.cols()));
      step = -ldlt.solve(grad);
      if (!step.allFinite()) step = -grad;
    }
    const double decrement = -0.5 * grad.dot(step);
    ++res.iterations;
    double alpha = 1.0;
    VectorXd cand;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      cand = theta + alpha * step;
      if (feasible(cand)) {
        double cand_value;
        VectorXd g_unused;
        MatrixXd h_unused;
        oracle(cand, cand_value, g_unused, h_unused);
        if (cand_value <= value + 1e-4 * alpha * grad.dot(step) ||
            (cand_value < value && ls > 20)) {
          theta = cand;
          moved = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!moved || decrement < decrement_tol) break;
  }
  res.theta = theta;
  return res;
}

}  // namespace

Linearization linearize_at_origin(const NetworkModel& network) {
  Linearization lin;
  const int N = network.agent_count();
  lin.A = MatrixXd::Zero(network.state_dim(), network.state_dim());
  lin.B = MatrixXd::Zero(network.state_dim(), network.input_dim());
  for (int i = 0; i < N; ++i) {
    lin.state_offsets.push_back(network.state_offset(i));
    lin.input_offsets.push_back(network.input_offset(i));
    lin.state_dims.push_back(network.agent(i).state_dim);
    lin.input_dims.push_back(network.agent(i).input_dim);
  }
  for (int i = 0; i < N; ++i) {
    const auto& a = network.agent(i);
    const VectorXd xi = VectorXd::Zero(a.state_dim);
    const VectorXd ui = VectorXd::Zero(a.input_dim);
    MatrixXd Aii = a.local_dynamics.dx(xi, ui);
    for (int j : network.graph().senders(i)) {
      const VectorXd xj = VectorXd::Zero(network.agent(j).state_dim);
      Aii += a.coupling_dynamics.at(j).dx_own(xi, xj);
      lin.A.block(lin.state_offsets[i], lin.state_offsets[j], a.state_dim,
                  network.agent(j).state_dim) = a.coupling_dynamics.at(j).dx_sender(xi, xj);
    }
    lin.A.block(lin.state_offsets[i], lin.state_offsets[i], a.state_dim, a.state_dim) = Aii;
    lin.B.block(lin.state_offsets[i], lin.input_offsets[i], a.state_dim, a.input_dim) =
        a.local_dynamics.du(xi, ui);
  }
  return lin;
}

GainSparsity GainSparsity::from_graph(const CouplingGraph& graph) {
  GainSparsity s;
  const int N = graph.agent_count();
  s.allowed.setZero(N, N);
  for (int i = 0; i < N; ++i) {
    s.allowed(i, i) = 1;
    for (int j : graph.neighborhood(i)) s.allowed(i, j) = 1;
  }
  return s;
}

GainSparsity GainSparsity::dense(int agent_count) {
  GainSparsity s;
  s.allowed.setOnes(agent_count, agent_count);
  return s;
}

SdpResult solve_structured_sdp(const Linearization& lin, const MatrixXd& Q, const MatrixXd& R,
                               double gamma, const GainSparsity& sparsity,
                               const SdpOptions& options) {
  if (gamma <= 1.0) throw ConfigError("solve_structured_sdp: gamma must exceed 1");
  const int n = static_cast<int>(lin.A.rows());
  const int m = static_cast<int>(lin.B.cols());
  const MatrixXd Qh_full = matrix_sqrt(Q);
  const MatrixXd Rh_full = matrix_sqrt(R);

  SdpResult result;
  result.P = MatrixXd::Zero(n, n);
  result.K = MatrixXd::Zero(m, n);

  for (const Component& c : split_components(lin)) {
    ComponentProblem prob;
    prob.n = c.n;
    prob.m = c.m;
    prob.dim_M = 2 * c.n + c.m;
    prob.gamma = gamma;
    prob.A.setZero(c.n, c.n);
    prob.B.setZero(c.n, c.m);
    prob.Qh.setZero(c.n, c.n);
    prob.Rh.setZero(c.m, c.m);
    for (std::size_t a = 0; a < c.agents.size(); ++a) {
      const int ga = c.agents[a];
      for (std::size_t b = 0; b < c.agents.size(); ++b) {
        const int gb = c.agents[b];
        prob.A.block(c.state_offset[a], c.state_offset[b], lin.state_dims[ga],
                     lin.state_dims[gb]) = lin.A_block(ga, gb);
        prob.Qh.block(c.state_offset[a], c.state_offset[b], lin.state_dims[ga],
                      lin.state_dims[gb]) =
            Qh_full.block(lin.state_offsets[ga], lin.state_offsets[gb], lin.state_dims[ga],
                          lin.state_dims[gb]);
        prob.Rh.block(c.input_offset[a], c.input_offset[b], lin.input_dims[ga],
                      lin.input_dims[gb]) =
            Rh_full.block(lin.input_offsets[ga], lin.input_offsets[gb], lin.input_dims[ga],
                          lin.input_dims[gb]);
      }
      prob.B.block(c.state_offset[a], c.input_offset[a], lin.state_dims[ga],
                   lin.input_dims[ga]) =
          lin.B.block(lin.state_offsets[ga], lin.input_offsets[ga], lin.state_dims[ga],
                      lin.input_dims[ga]);
    }
    prob.basis = build_basis(c, lin, sparsity, options.structured);
    const int nvar = prob.basis.count();

    // Precompute the affine pieces of M.
    const MatrixXd M_const = assemble_M(prob.A, prob.B, prob.Qh, prob.Rh, gamma,
                                        MatrixXd::Zero(c.n, c.n), MatrixXd::Zero(c.m, c.n));
    std::vector<MatrixXd> M_dirs(nvar);
    for (int a = 0; a < nvar; ++a)
      M_dirs[a] = assemble_M(prob.A, prob.B, prob.Qh, prob.Rh, gamma, prob.basis.E_dir[a],
                             prob.basis.Y_dir[a]) -
                  M_const;

    auto M_of = [&](const VectorXd& theta) {
      MatrixXd M = M_const;
      for (int a = 0; a < nvar; ++a) M += theta[a] * M_dirs[a];
      return M;
    };
    const MatrixXd margin_I = options.lmi_margin * MatrixXd::Identity(prob.dim_M, prob.dim_M);

    // Initial point: E = identity, Y = 0.
    VectorXd theta = VectorXd::Zero(nvar);
    for (int a = 0; a < nvar; ++a)
      if (prob.basis.E_dir[a].diagonal().cwiseAbs().maxCoeff() > 0.0) theta[a] = 1.0;

    // ---- Phase one: minimize t with M + margin I <= t I ------------------ //
    {
      MatrixXd M0 = M_of(theta) + margin_I;
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(M0);
      double t = es.eigenvalues().maxCoeff() + 1.0;
      VectorXd z(nvar + 1);
      z.head(nvar) = theta;
      z[nvar] = t;

      auto feasible = [&](const VectorXd& zz) {
        const MatrixXd S =
            zz[nvar] * MatrixXd::Identity(prob.dim_M, prob.dim_M) - (M_of(zz.head(nvar)) + margin_I);
        return is_pd(S) && is_pd(prob.E_of(zz.head(nvar)));
      };

      bool strictly_feasible = false;
      for (double mu = 1.0; mu > 1e-12; mu *= options.mu_factor) {
        auto oracle = [&](const VectorXd& zz, double& value, VectorXd& grad, MatrixXd& hess) {
          const VectorXd th = zz.head(nvar);
          const double tt = zz[nvar];
          const MatrixXd S =
              tt * MatrixXd::Identity(prob.dim_M, prob.dim_M) - (M_of(th) + margin_I);
          const MatrixXd E = prob.E_of(th);
          value = tt - mu * (logdet_pd(S) + logdet_pd(E));
          if (!std::isfinite(value)) {
            grad = VectorXd::Zero(nvar + 1);
            hess = MatrixXd::Identity(nvar + 1, nvar + 1);
            return;
          }
          const MatrixXd Sinv = S.llt().solve(MatrixXd::Identity(prob.dim_M, prob.dim_M));
          const MatrixXd Einv = E.llt().solve(MatrixXd::Identity(prob.n, prob.n));
          grad.setZero(nvar + 1);
          hess.setZero(nvar + 1, nvar + 1);
          std::vector<MatrixXd> W(nvar);
          std::vector<MatrixXd> V(nvar);
          for (int a = 0; a < nvar; ++a) {
            W[a] = Sinv * M_dirs[a];
            V[a] = Einv * prob.basis.E_dir[a];
            grad[a] = mu * (W[a].trace() - V[a].trace());
          }
          grad[nvar] = 1.0 - mu * Sinv.trace();
          for (int a = 0; a < nvar; ++a) {
            for (int b = a; b < nvar; ++b) {
              const double hab =
                  mu * ((W[a].array() * W[b].transpose().array()).sum() +
                        (V[a].array() * V[b].transpose().array()).sum());
              hess(a, b) = hab;
              hess(b, a) = hab;
            }
            const double hat = -mu * (W[a] * Sinv).trace();
            hess(a, nvar) = hat;
            hess(nvar, a) = hat;
          }
          hess(nvar, nvar) = mu * (Sinv.array() * Sinv.transpose().array()).sum();
        };
        NewtonResult nr = newton_minimize(z, oracle, feasible, options.max_newton_iterations);
        z = nr.theta;
        result.newton_iterations += nr.iterations;
        if (z[nvar] < -options.lmi_margin) {
          strictly_feasible = true;
          break;
        }
      }
      if (!strictly_feasible)
        throw Infeasible("solve_structured_sdp: no strictly feasible point (phase one stalled at t = " +
                         std::to_string(z[nvar]) + ")");
      theta = z.head(nvar);
    }

    // ---- Phase two: central path for -log det E -------------------------- //
    auto feasible = [&](const VectorXd& th) {
      return is_pd(-(M_of(th) + margin_I)) && is_pd(prob.E_of(th));
    };
    const double nu = prob.dim_M;  // barrier parameter of the LMI cone
    for (double mu = 1.0; mu * nu > options.gap_tolerance; mu *= options.mu_factor) {
      auto oracle = [&](const VectorXd& th, double& value, VectorXd& grad, MatrixXd& hess) {
        const MatrixXd S = -(M_of(th) + margin_I);
        const MatrixXd E = prob.E_of(th);
        value = -logdet_pd(E) - mu * logdet_pd(S);
        if (!std::isfinite(value)) {
          grad = VectorXd::Zero(nvar);
          hess = MatrixXd::Identity(nvar, nvar);
          return;
        }
        const MatrixXd Sinv = S.llt().solve(MatrixXd::Identity(prob.dim_M, prob.dim_M));
        const MatrixXd Einv = E.llt().solve(MatrixXd::Identity(prob.n, prob.n));
        grad.setZero(nvar);
        hess.setZero(nvar, nvar);
        std::vector<MatrixXd> W(nvar), V(nvar);
        for (int a = 0; a < nvar; ++a) {
          W[a] = Sinv * M_dirs[a];  // note S = -M - margin, dS = -M_dir
          V[a] = Einv * prob.basis.E_dir[a];
          grad[a] = mu * W[a].trace() - V[a].trace();
        }
        for (int a = 0; a < nvar; ++a)
          for (int b = a; b < nvar; ++b) {
            const double hab = mu * (W[a].array() * W[b].transpose().array()).sum() +
                               (V[a].array() * V[b].transpose().array()).sum();
            hess(a, b) = hab;
            hess(b, a) = hab;
          }
      };
      NewtonResult nr = newton_minimize(theta, oracle, feasible, options.max_newton_iterations);
      theta = nr.theta;
      result.newton_iterations += nr.iterations;
    }

    const MatrixXd E = prob.E_of(theta);
    const MatrixXd Y = prob.Y_of(theta);
    Eigen::SelfAdjointEigenSolver<MatrixXd> esE(E);
    if (esE.eigenvalues().minCoeff() < options.e_margin)
      throw NumericalFailure("solve_structured_sdp: E lost definiteness");
    const MatrixXd Einv = E.llt().solve(MatrixXd::Identity(prob.n, prob.n));
    const MatrixXd Kc = Y * Einv;
    result.logdet_E += logdet_pd(E);

    // Scatter back to global coordinates.
    for (std::size_t a = 0; a < c.agents.size(); ++a) {
      const int ga = c.agents[a];
      for (std::size_t b = 0; b < c.agents.size(); ++b) {
        const int gb = c.agents[b];
        result.P.block(lin.state_offsets[ga], lin.state_offsets[gb], lin.state_dims[ga],
                       lin.state_dims[gb]) =
            Einv.block(c.state_offset[a], c.state_offset[b], lin.state_dims[ga],
                       lin.state_dims[gb]);
        result.K.block(lin.input_offsets[ga], lin.state_offsets[gb], lin.input_dims[ga],
                       lin.state_dims[gb]) =
            Kc.block(c.input_offset[a], c.state_offset[b], lin.input_dims[ga],
                     lin.state_dims[gb]);
      }
    }
  }

  // Per-agent terminal weights (exact blocks when structured).
  for (int i = 0; i < lin.agent_count(); ++i)
    result.P_blocks.push_back(result.P.block(lin.state_offsets[i], lin.state_offsets[i],
                                             lin.state_dims[i], lin.state_dims[i]));

  // Certificate on the original closed-loop inequality.
  const MatrixXd Acl = lin.A + lin.B * result.K;
  const MatrixXd clf = Acl.transpose() * result.P + result.P * Acl +
                       gamma * (Q + result.K.transpose() * R * result.K);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(clf);
  result.lmi_residual = es.eigenvalues().maxCoeff();
  return result;
}

}  // namespace dmpc
