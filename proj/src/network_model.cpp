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

#include "dmpc/network_model.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <random>
#include <sstream>

namespace dmpc {

namespace {

constexpr double kFdStep = 1e-6;
constexpr double kEquilibriumTol = 1e-9;

// Central finite difference of a vector-valued function along coordinate k.
template <typename F>
MatrixXd fd_jacobian(const F& f, const VectorXd& at, int out_dim) {
  MatrixXd J(out_dim, at.size());
  VectorXd lo = at, hi = at;
  for (int k = 0; k < at.size(); ++k) {
    hi[k] += kFdStep;
    lo[k] -= kFdStep;
    J.col(k) = (f(hi) - f(lo)) / (2.0 * kFdStep);
    hi[k] = at[k];
    lo[k] = at[k];
  }
  return J;
}

template <typename F>
VectorXd fd_gradient(const F& f, const VectorXd& at) {
  VectorXd g(at.size());
  VectorXd lo = at, hi = at;
  for (int k = 0; k < at.size(); ++k) {
    hi[k] += kFdStep;
    lo[k] -= kFdStep;
    g[k] = (f(hi) - f(lo)) / (2.0 * kFdStep);
    hi[k] = at[k];
    lo[k] = at[k];
  }
  return g;
}

double relative_error(const MatrixXd& got, const MatrixXd& expected) {
  return (got - expected).norm() / std::max(1.0, expected.norm());
}

// Installs finite-difference fallbacks for any Jacobian/gradient left empty.
void install_fd_fallbacks(AgentModel& a) {
  if (a.local_dynamics.f) {
    auto f = a.local_dynamics.f;
    const int n = a.state_dim;
    if (!a.local_dynamics.dx)
      a.local_dynamics.dx = [f, n](const VectorXd& x, const VectorXd& u) {
        return fd_jacobian([&](const VectorXd& xx) { return f(xx, u); }, x, n);
      };
    if (!a.local_dynamics.du)
      a.local_dynamics.du = [f, n](const VectorXd& x, const VectorXd& u) {
        return fd_jacobian([&](const VectorXd& uu) { return f(x, uu); }, u, n);
      };
  }
  for (auto& [j, c] : a.coupling_dynamics) {
    auto f = c.f;
    const int n = a.state_dim;
    if (!c.dx_own)
      c.dx_own = [f, n](const VectorXd& xi, const VectorXd& xj) {
        return fd_jacobian([&](const VectorXd& xx) { return f(xx, xj); }, xi, n);
      };
    if (!c.dx_sender)
      c.dx_sender = [f, n](const VectorXd& xi, const VectorXd& xj) {
        return fd_jacobian([&](const VectorXd& xx) { return f(xi, xx); }, xj, n);
      };
  }
  if (a.local_cost.l) {
    auto l = a.local_cost.l;
    if (!a.local_cost.dx)
      a.local_cost.dx = [l](const VectorXd& x, const VectorXd& u) {
        return fd_gradient([&](const VectorXd& xx) { return l(xx, u); }, x);
      };
    if (!a.local_cost.du)
      a.local_cost.du = [l](const VectorXd& x, const VectorXd& u) {
        return fd_gradient([&](const VectorXd& uu) { return l(x, uu); }, u);
      };
  }
  for (auto& [j, c] : a.coupling_costs) {
    auto l = c.l;
    if (!c.dx_own)
      c.dx_own = [l](const VectorXd& xi, const VectorXd& xj) {
        return fd_gradient([&](const VectorXd& xx) { return l(xx, xj); }, xi);
      };
    if (!c.dx_sender)
      c.dx_sender = [l](const VectorXd& xi, const VectorXd& xj) {
        return fd_gradient([&](const VectorXd& xx) { return l(xi, xx); }, xj);
      };
  }
  if (a.terminal_cost.V && !a.terminal_cost.dx) {
    auto V = a.terminal_cost.V;
    a.terminal_cost.dx = [V](const VectorXd& x) {
      return fd_gradient([&](const VectorXd& xx) { return V(xx); }, x);
    };
  }
}

}  // namespace

CouplingGraph::CouplingGraph(int agent_count, const std::set<std::pair<int, int>>& edges)
    : agent_count_(agent_count), edges_(edges) {
  if (agent_count <= 0) throw InconsistentTopology("CouplingGraph: agent_count must be positive");
  senders_.resize(agent_count);
  receivers_.resize(agent_count);
  neighborhood_.resize(agent_count);
  for (const auto& [from, to] : edges_) {
    if (from == to)
      throw InconsistentTopology("CouplingGraph: self-edge (" + std::to_string(from) + "," +
                                 std::to_string(to) + ")");
    if (from < 0 || to < 0 || from >= agent_count || to >= agent_count)
      throw InconsistentTopology("CouplingGraph: edge index out of range");
    senders_[to].push_back(from);
    receivers_[from].push_back(to);
  }
  for (int i = 0; i < agent_count; ++i) {
    std::sort(senders_[i].begin(), senders_[i].end());
    std::sort(receivers_[i].begin(), receivers_[i].end());
    std::set<int> nb(senders_[i].begin(), senders_[i].end());
    nb.insert(receivers_[i].begin(), receivers_[i].end());
    neighborhood_[i].assign(nb.begin(), nb.end());
  }
  // Duality: j in senders(i) iff i in receivers(j). Holds by construction;
  // checked exhaustively anyway since custom graphs feed the whole pipeline.
  for (int i = 0; i < agent_count; ++i)
    for (int j : senders_[i]) {
      const auto& r = receivers_[j];
      if (!std::binary_search(r.begin(), r.end(), i))
        throw InconsistentTopology("CouplingGraph: sender/receiver sets disagree");
    }
}

bool CouplingGraph::is_neighbor(int i, int j) const {
  const auto& nb = neighborhood_[i];
  return std::binary_search(nb.begin(), nb.end(), j);
}

CostBounds compute_cost_bounds(const QuadraticCostSpec& spec) {
  if (!spec.P.has_value()) throw MissingTerminalWeights("compute_cost_bounds: P not set");
  CostBounds b;
  b.m_l = std::numeric_limits<double>::infinity();
  b.m_V = std::numeric_limits<double>::infinity();
  b.M_l = -std::numeric_limits<double>::infinity();
  b.M_V = -std::numeric_limits<double>::infinity();
  auto fold = [](const MatrixXd& W, double& lo, double& hi) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(W);
    lo = std::min(lo, es.eigenvalues().minCoeff());
    hi = std::max(hi, es.eigenvalues().maxCoeff());
  };
  for (const auto& Q : spec.Q) fold(Q, b.m_l, b.M_l);
  for (const auto& R : spec.R) fold(R, b.m_l, b.M_l);
  for (const auto& P : *spec.P) fold(P, b.m_V, b.M_V);
  return b;
}

NetworkModel NetworkModel::build(CouplingGraph graph, std::vector<AgentModel> agents,
                                 std::optional<QuadraticCostSpec> quadratic) {
  NetworkModel m;
  m.graph_ = std::move(graph);
  m.agents_ = std::move(agents);
  m.quadratic_ = std::move(quadratic);
  if (static_cast<int>(m.agents_.size()) != m.graph_.agent_count())
    throw DimensionMismatch("build_network: agent list size does not match graph");
  for (auto& a : m.agents_) install_fd_fallbacks(a);
  m.state_offsets_.resize(m.agents_.size());
  m.input_offsets_.resize(m.agents_.size());
  for (std::size_t i = 0; i < m.agents_.size(); ++i) {
    m.state_offsets_[i] = m.state_dim_;
    m.input_offsets_[i] = m.input_dim_;
    m.state_dim_ += m.agents_[i].state_dim;
    m.input_dim_ += m.agents_[i].input_dim;
  }
  m.validate();
  return m;
}

void NetworkModel::validate() const {
  const int N = graph_.agent_count();
  for (int i = 0; i < N; ++i) {
    const auto& a = agents_[i];
    if (a.state_dim <= 0 || a.input_dim <= 0)
      throw DimensionMismatch("agent " + std::to_string(i) + ": dimensions must be positive");
    if (!a.local_dynamics.f || !a.local_cost.l || !a.terminal_cost.V)
      throw DimensionMismatch("agent " + std::to_string(i) + ": missing f_ii, l_ii or V_i");
    if (a.input_box.dim() != a.input_dim)
      throw DimensionMismatch("agent " + std::to_string(i) + ": input box dimension mismatch");
    if (!a.input_box.contains_origin_strictly())
      throw ConfigError("agent " + std::to_string(i) + ": origin not strictly inside input box");

    // Coupling terms must exist exactly for the sending neighbors.
    const auto& senders = graph_.senders(i);
    if (a.coupling_dynamics.size() != senders.size())
      throw InconsistentTopology("agent " + std::to_string(i) +
                                 ": coupling dynamics do not match sender set");
    for (int j : senders) {
      auto it = a.coupling_dynamics.find(j);
      if (it == a.coupling_dynamics.end())
        throw InconsistentTopology("agent " + std::to_string(i) + ": missing f_ij for sender " +
                                   std::to_string(j));
      // Signature check: f_ij must accept x_j of dimension n_j.
      const VectorXd zi = VectorXd::Zero(a.state_dim);
      const VectorXd zj = VectorXd::Zero(agents_[j].state_dim);
      VectorXd out;
      try {
        out = it->second.f(zi, zj);
      } catch (const std::exception& e) {
        throw DimensionMismatch("agent " + std::to_string(i) + ": f_i" + std::to_string(j) +
                                " rejects x_j of dimension n_j: " + e.what());
      }
      if (out.size() != a.state_dim)
        throw DimensionMismatch("agent " + std::to_string(i) + ": f_i" + std::to_string(j) +
                                " output dimension mismatch");
    }
    for (const auto& [j, c] : a.coupling_costs)
      if (!std::binary_search(senders.begin(), senders.end(), j))
        throw InconsistentTopology("agent " + std::to_string(i) + ": coupling cost for non-sender " +
                                   std::to_string(j));
  }

  // Origin must be an equilibrium of the coupled system.
  const VectorXd x0 = VectorXd::Zero(state_dim_);
  const VectorXd u0 = VectorXd::Zero(input_dim_);
  const double f0 = central_dynamics(x0, u0).norm();
  if (f0 > kEquilibriumTol) {
    std::ostringstream os;
    os << "build_network: origin is not an equilibrium, |f(0,0)| = " << f0;
    throw NotEquilibrium(os.str());
  }

  if (quadratic_) {
    if (quadratic_->Q.size() != agents_.size() || quadratic_->R.size() != agents_.size())
      throw DimensionMismatch("quadratic spec: one Q_i and R_i per agent required");
    auto check_spd = [](const MatrixXd& W, const std::string& name) {
      if ((W - W.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw ConfigError(name + " is not symmetric");
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(W);
      if (es.eigenvalues().minCoeff() <= 0.0) throw ConfigError(name + " is not positive definite");
    };
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      check_spd(quadratic_->Q[i], "Q_" + std::to_string(i));
      check_spd(quadratic_->R[i], "R_" + std::to_string(i));
      if (quadratic_->P) check_spd((*quadratic_->P)[i], "P_" + std::to_string(i));
    }
  }
}

VectorXd NetworkModel::stack_states(const std::vector<VectorXd>& per_agent) const {
  if (static_cast<int>(per_agent.size()) != agent_count())
    throw DimensionMismatch("stack_states: wrong number of agents");
  VectorXd out(state_dim_);
  for (int i = 0; i < agent_count(); ++i) {
    if (per_agent[i].size() != agents_[i].state_dim)
      throw DimensionMismatch("stack_states: agent " + std::to_string(i) + " dimension mismatch");
    out.segment(state_offsets_[i], agents_[i].state_dim) = per_agent[i];
  }
  return out;
}

VectorXd NetworkModel::stack_inputs(const std::vector<VectorXd>& per_agent) const {
  if (static_cast<int>(per_agent.size()) != agent_count())
    throw DimensionMismatch("stack_inputs: wrong number of agents");
  VectorXd out(input_dim_);
  for (int i = 0; i < agent_count(); ++i) {
    if (per_agent[i].size() != agents_[i].input_dim)
      throw DimensionMismatch("stack_inputs: agent " + std::to_string(i) + " dimension mismatch");
    out.segment(input_offsets_[i], agents_[i].input_dim) = per_agent[i];
  }
  return out;
}

std::vector<VectorXd> NetworkModel::unstack_states(const VectorXd& central) const {
  if (central.size() != state_dim_) throw DimensionMismatch("unstack_states: dimension mismatch");
  std::vector<VectorXd> out(agent_count());
  for (int i = 0; i < agent_count(); ++i)
    out[i] = central.segment(state_offsets_[i], agents_[i].state_dim);
  return out;
}

std::vector<VectorXd> NetworkModel::unstack_inputs(const VectorXd& central) const {
  if (central.size() != input_dim_) throw DimensionMismatch("unstack_inputs: dimension mismatch");
  std::vector<VectorXd> out(agent_count());
  for (int i = 0; i < agent_count(); ++i)
    out[i] = central.segment(input_offsets_[i], agents_[i].input_dim);
  return out;
}

Box NetworkModel::central_input_box() const {
  std::vector<Box> boxes;
  boxes.reserve(agents_.size());
  for (const auto& a : agents_) boxes.push_back(a.input_box);
  return Box::product(boxes);
}

VectorXd NetworkModel::agent_dynamics(int i, const VectorXd& x_i, const VectorXd& u_i,
                                      const std::map<int, VectorXd>& x_neighbors) const {
  const auto& a = agents_[i];
  VectorXd out = a.local_dynamics.f(x_i, u_i);
  for (int j : graph_.senders(i)) {
    auto it = x_neighbors.find(j);
    if (it == x_neighbors.end())
      throw MissingNeighborState("agent " + std::to_string(i) + ": missing state of sender " +
                                 std::to_string(j));
    out += a.coupling_dynamics.at(j).f(x_i, it->second);
  }
  return out;
}

double NetworkModel::agent_stage_cost(int i, const VectorXd& x_i, const VectorXd& u_i,
                                      const std::map<int, VectorXd>& x_neighbors) const {
  const auto& a = agents_[i];
  double out = a.local_cost.l(x_i, u_i);
  for (const auto& [j, c] : a.coupling_costs) {
    auto it = x_neighbors.find(j);
    if (it == x_neighbors.end())
      throw MissingNeighborState("agent " + std::to_string(i) + ": missing state of sender " +
                                 std::to_string(j));
    out += c.l(x_i, it->second);
  }
  return out;
}

VectorXd NetworkModel::central_dynamics(const VectorXd& x, const VectorXd& u) const {
  VectorXd out(state_dim_);
  for (int i = 0; i < agent_count(); ++i) {
    const auto& a = agents_[i];
    VectorXd fi = a.local_dynamics.f(agent_state(x, i), agent_input(u, i));
    for (int j : graph_.senders(i)) fi += a.coupling_dynamics.at(j).f(agent_state(x, i), agent_state(x, j));
    out.segment(state_offsets_[i], a.state_dim) = fi;
  }
  return out;
}

MatrixXd NetworkModel::central_dynamics_dx(const VectorXd& x, const VectorXd& u) const {
  MatrixXd J = MatrixXd::Zero(state_dim_, state_dim_);
  for (int i = 0; i < agent_count(); ++i) {
    const auto& a = agents_[i];
    const auto xi = agent_state(x, i);
    MatrixXd dii = a.local_dynamics.dx(xi, agent_input(u, i));
    for (int j : graph_.senders(i)) {
      const auto xj = agent_state(x, j);
      dii += a.coupling_dynamics.at(j).dx_own(xi, xj);
      J.block(state_offsets_[i], state_offsets_[j], a.state_dim, agents_[j].state_dim) =
          a.coupling_dynamics.at(j).dx_sender(xi, xj);
    }
    J.block(state_offsets_[i], state_offsets_[i], a.state_dim, a.state_dim) = dii;
  }
  return J;
}

MatrixXd NetworkModel::central_dynamics_du(const VectorXd& x, const VectorXd& u) const {
  MatrixXd J = MatrixXd::Zero(state_dim_, input_dim_);
  for (int i = 0; i < agent_count(); ++i) {
    const auto& a = agents_[i];
    J.block(state_offsets_[i], input_offsets_[i], a.state_dim, a.input_dim) =
        a.local_dynamics.du(agent_state(x, i), agent_input(u, i));
  }
  return J;
}

double NetworkModel::central_stage_cost(const VectorXd& x, const VectorXd& u) const {
  double out = 0.0;
  for (int i = 0; i < agent_count(); ++i) {
    const auto& a = agents_[i];
    out += a.local_cost.l(agent_state(x, i), agent_input(u, i));
    for (const auto& [j, c] : a.coupling_costs) out += c.l(agent_state(x, i), agent_state(x, j));
  }
  return out;
}

VectorXd NetworkModel::central_stage_cost_dx(const VectorXd& x, const VectorXd& u) const {
  VectorXd g = VectorXd::Zero(state_dim_);
  for (int i = 0; i < agent_count(); ++i) {
    const auto& a = agents_[i];
    const auto xi = agent_state(x, i);
    g.segment(state_offsets_[i], a.state_dim) += a.local_cost.dx(xi, agent_input(u, i));
    for (const auto& [j, c] : a.coupling_costs) {
      const auto xj = agent_state(x, j);
      g.segment(state_offsets_[i], a.state_dim) += c.dx_own(xi, xj);
      g.segment(state_offsets_[j], agents_[j].state_dim) += c.dx_sender(xi, xj);
    }
  }
  return g;
}

VectorXd NetworkModel::central_stage_cost_du(const VectorXd& x, const VectorXd& u) const {
  VectorXd g(input_dim_);
  for (int i = 0; i < agent_count(); ++i)
    g.segment(input_offsets_[i], agents_[i].input_dim) =
        agents_[i].local_cost.du(agent_state(x, i), agent_input(u, i));
  return g;
}

double NetworkModel::central_terminal_cost(const VectorXd& x) const {
  double out = 0.0;
  for (int i = 0; i < agent_count(); ++i) out += agents_[i].terminal_cost.V(agent_state(x, i));
  return out;
}

VectorXd NetworkModel::central_terminal_cost_dx(const VectorXd& x) const {
  VectorXd g(state_dim_);
  for (int i = 0; i < agent_count(); ++i)
    g.segment(state_offsets_[i], agents_[i].state_dim) = agents_[i].terminal_cost.dx(agent_state(x, i));
  return g;
}

DerivativeReport validate_derivatives(const NetworkModel& model, int sample_count,
                                      std::uint64_t seed, double box_halfwidth,
                                      bool throw_on_failure) {
  constexpr double kTol = 1e-5;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-box_halfwidth, box_halfwidth);
  DerivativeReport report;
  std::map<std::string, double> worst;

  auto record = [&](const std::string& name, double err, const VectorXd& at) {
    auto& w = worst[name];
    w = std::max(w, err);
    if (err > kTol && throw_on_failure) {
      std::ostringstream os;
      os << "DerivativeMismatch: " << name << " relative error " << err << " at point ["
         << at.transpose() << "]";
      throw DerivativeMismatch(os.str());
    }
  };

  for (int s = 0; s < sample_count; ++s) {
    for (int i = 0; i < model.agent_count(); ++i) {
      const auto& a = model.agent(i);
      VectorXd xi(a.state_dim), ui(a.input_dim);
      for (int k = 0; k < xi.size(); ++k) xi[k] = dist(rng);
      for (int k = 0; k < ui.size(); ++k) ui[k] = dist(rng);
      ui = a.input_box.clamp(ui);
      const std::string tag = "agent" + std::to_string(i);

      record(tag + ".f_ii.dx",
             relative_error(a.local_dynamics.dx(xi, ui),
                            fd_jacobian([&](const VectorXd& xx) { return a.local_dynamics.f(xx, ui); },
                                        xi, a.state_dim)),
             xi);
      record(tag + ".f_ii.du",
             relative_error(a.local_dynamics.du(xi, ui),
                            fd_jacobian([&](const VectorXd& uu) { return a.local_dynamics.f(xi, uu); },
                                        ui, a.state_dim)),
             ui);
      record(tag + ".l_ii.dx",
             relative_error(a.local_cost.dx(xi, ui),
                            fd_gradient([&](const VectorXd& xx) { return a.local_cost.l(xx, ui); }, xi)),
             xi);
      record(tag + ".l_ii.du",
             relative_error(a.local_cost.du(xi, ui),
                            fd_gradient([&](const VectorXd& uu) { return a.local_cost.l(xi, uu); }, ui)),
             ui);
      record(tag + ".V.dx",
             relative_error(a.terminal_cost.dx(xi),
                            fd_gradient([&](const VectorXd& xx) { return a.terminal_cost.V(xx); }, xi)),
             xi);

      for (const auto& [j, c] : a.coupling_dynamics) {
        VectorXd xj(model.agent(j).state_dim);
        for (int k = 0; k < xj.size(); ++k) xj[k] = dist(rng);
        const std::string ctag = tag + ".f_i" + std::to_string(j);
        record(ctag + ".dx_own",
               relative_error(c.dx_own(xi, xj),
                              fd_jacobian([&](const VectorXd& xx) { return c.f(xx, xj); }, xi,
                                          a.state_dim)),
               xi);
        record(ctag + ".dx_sender",
               relative_error(c.dx_sender(xi, xj),
                              fd_jacobian([&](const VectorXd& xx) { return c.f(xi, xx); }, xj,
                                          a.state_dim)),
               xj);
      }
      for (const auto& [j, c] : a.coupling_costs) {
        VectorXd xj(model.agent(j).state_dim);
        for (int k = 0; k < xj.size(); ++k) xj[k] = dist(rng);
        const std::string ctag = tag + ".l_i" + std::to_string(j);
        record(ctag + ".dx_own",
               relative_error(c.dx_own(xi, xj),
                              fd_gradient([&](const VectorXd& xx) { return c.l(xx, xj); }, xi)),
               xi);
        record(ctag + ".dx_sender",
               relative_error(c.dx_sender(xi, xj),
                              fd_gradient([&](const VectorXd& xx) { return c.l(xi, xx); }, xj)),
               xj);
      }
    }
  }

  for (const auto& [name, err] : worst) {
    report.entries.push_back({name, err});
    report.worst_relative_error = std::max(report.worst_relative_error, err);
    if (err > kTol) report.passed = false;
  }
  return report;
}

}  // namespace dmpc
