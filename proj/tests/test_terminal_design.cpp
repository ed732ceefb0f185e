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

#include <Eigen/Eigenvalues>

#include "dmpc/benchmarks.hpp"
#include "dmpc/terminal_design.hpp"

using namespace dmpc;

namespace {

MatrixXd stack_Q(const NetworkModel& net) {
  MatrixXd Q = MatrixXd::Zero(net.state_dim(), net.state_dim());
  const auto& spec = *net.quadratic_spec();
  for (int i = 0; i < net.agent_count(); ++i)
    Q.block(net.state_offset(i), net.state_offset(i), spec.Q[i].rows(), spec.Q[i].cols()) =
        spec.Q[i];
  return Q;
}

MatrixXd stack_R(const NetworkModel& net) {
  MatrixXd R = MatrixXd::Zero(net.input_dim(), net.input_dim());
  const auto& spec = *net.quadratic_spec();
  for (int i = 0; i < net.agent_count(); ++i)
    R.block(net.input_offset(i), net.input_offset(i), spec.R[i].rows(), spec.R[i].cols()) =
        spec.R[i];
  return R;
}

double clf_lambda_max(const Linearization& lin, const MatrixXd& Q, const MatrixXd& R,
                      double gamma, const SdpResult& res) {
  const MatrixXd Acl = lin.A + lin.B * res.K;
  const MatrixXd M =
      Acl.transpose() * res.P + res.P * Acl + gamma * (Q + res.K.transpose() * R * res.K);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(M);
  return es.eigenvalues().maxCoeff();
}

}  // namespace

TEST_CASE("linearization of the scalar coupled system") {
  ScalarCoupledParams params;
  params.mu = {0.5, 0.5};
  params.eps.setZero(2, 2);
  params.eps(0, 1) = 2.0;
  params.eps(1, 0) = 2.0;
  NetworkModel net = make_scalar_coupled(params, std::vector<MatrixXd>(2, MatrixXd::Identity(1, 1)));
  Linearization lin = linearize_at_origin(net);
  MatrixXd A_expected(2, 2);
  A_expected << 0.0, 2.0, 2.0, 0.0;
  CHECK((lin.A - A_expected).norm() == doctest::Approx(0.0));
  CHECK(lin.B(0, 0) == doctest::Approx(0.5));
  CHECK(lin.B(1, 1) == doctest::Approx(0.5));
  CHECK(lin.B(0, 1) == 0.0);
}

TEST_CASE("linearization of the oscillator benchmark") {
  NetworkModel net = make_coupled_vdp({}, std::vector<MatrixXd>(3, MatrixXd::Identity(2, 2)));
  Linearization lin = linearize_at_origin(net);

  MatrixXd A1(2, 2);
  A1 << 0.0, 1.0, -1.0, 0.1;
  CHECK((lin.A_block(0, 0) - A1).norm() == doctest::Approx(0.0));

  MatrixXd A2(2, 2);
  A2 << 0.0, 1.0, -4.0, 0.101;
  CHECK((lin.A_block(1, 1) - A2).norm() == doctest::Approx(0.0));
  CHECK((lin.A_block(2, 2) - A2).norm() == doctest::Approx(0.0));

  // the quadratic couplings from agent 0 vanish at the origin
  CHECK(lin.A_block(1, 0).norm() == 0.0);
  CHECK(lin.A_block(2, 0).norm() == 0.0);
  // velocity couplings between agents 1 and 2
  CHECK(lin.A_block(1, 2)(1, 1) == doctest::Approx(-0.1));
  CHECK(lin.A_block(2, 1)(1, 1) == doctest::Approx(-0.1));
  // never an upward edge into agent 0
  CHECK(lin.A_block(0, 1).norm() == 0.0);
  CHECK(lin.A_block(0, 2).norm() == 0.0);

  // B is block diagonal with [0;1] blocks
  CHECK(lin.B.rows() == 6);
  CHECK(lin.B(1, 0) == doctest::Approx(1.0));
  CHECK(lin.B(3, 1) == doctest::Approx(1.0));
  CHECK(lin.B(5, 2) == doctest::Approx(1.0));
  CHECK(lin.B(0, 0) == 0.0);
  CHECK(std::abs(lin.B(3, 0)) + std::abs(lin.B(1, 1)) == 0.0);
}

TEST_CASE("structured synthesis reproduces the published oscillator design") {
  NetworkModel net = make_coupled_vdp({}, std::nullopt);
  Linearization lin = linearize_at_origin(net);
  const MatrixXd Q = stack_Q(net);
  const MatrixXd R = stack_R(net);
  const SdpResult res =
      solve_structured_sdp(lin, Q, R, 1.2, GainSparsity::from_graph(net.graph()));

  // published values: P1, P2 = P3, structured gain rows
  MatrixXd P1(2, 2), P23(2, 2);
  P1 << 37.4, 2.0, 2.0, 2.2;
  P23 << 38.8, 1.7, 1.7, 2.2;

  std::ostringstream os;
  os << "P1 =\n" << res.P_blocks[0] << "\nP2 =\n" << res.P_blocks[1] << "\nK =\n" << res.K;
  INFO(os.str());
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      CHECK(res.P_blocks[0](r, c) == doctest::Approx(P1(r, c)).epsilon(0.05));
      CHECK(res.P_blocks[1](r, c) == doctest::Approx(P23(r, c)).epsilon(0.05));
      CHECK(res.P_blocks[2](r, c) == doctest::Approx(P23(r, c)).epsilon(0.05));
    }

  // gain: K11 ~ [-16.3, -18.3] and the position gains of agents 2/3 are pinned
  // by the problem; the velocity gains of agents 2/3 lie on a non-unique face
  // of the optimum (several solvers return different values there), so only
  // stability-relevant facts are asserted for them.
  CHECK(res.K(0, 0) == doctest::Approx(-16.3).epsilon(0.10));
  CHECK(res.K(0, 1) == doctest::Approx(-18.3).epsilon(0.10));
  CHECK(res.K(1, 2) == doctest::Approx(-13.8).epsilon(0.10));
  CHECK(res.K(2, 4) == doctest::Approx(-13.8).epsilon(0.10));
  CHECK(res.K(1, 3) < -10.0);
  CHECK(res.K(2, 5) < -10.0);
  // identical agents get identical rows
  CHECK(res.K(1, 2) == doctest::Approx(res.K(2, 4)));
  CHECK(res.K(1, 3) == doctest::Approx(res.K(2, 5)));
  // cross-component gains are exactly zero
  CHECK(res.K(0, 2) == 0.0);
  CHECK(res.K(0, 3) == 0.0);
  CHECK(res.K(0, 4) == 0.0);
  CHECK(res.K(0, 5) == 0.0);
  CHECK(res.K(1, 0) == 0.0);
  CHECK(res.K(1, 1) == 0.0);
  CHECK(res.K(2, 0) == 0.0);
  CHECK(res.K(2, 1) == 0.0);

  // P block diagonal: off-block mass is zero for the structured run
  MatrixXd offblock = res.P;
  for (int i = 0; i < 3; ++i) offblock.block(2 * i, 2 * i, 2, 2).setZero();
  CHECK(offblock.cwiseAbs().maxCoeff() <= 1e-10);

  // certificate on the original inequality
  CHECK(clf_lambda_max(lin, Q, R, 1.2, res) <= 1e-8);
}

TEST_CASE("structure never enlarges the terminal ellipsoid") {
  for (double eps : {0.5, 1.0, 2.0}) {
    for (double mu : {0.5, 1.0}) {
      ScalarCoupledParams params;
      params.mu = {mu, mu};
      params.eps.setZero(2, 2);
      params.eps(0, 1) = eps;
      params.eps(1, 0) = eps;
      NetworkModel net = make_scalar_coupled(params, std::nullopt);
      Linearization lin = linearize_at_origin(net);
      const MatrixXd Q = stack_Q(net), R = stack_R(net);

      SdpOptions structured_opt;
      structured_opt.structured = true;
      SdpOptions dense_opt;
      dense_opt.structured = false;
      const SdpResult dist = solve_structured_sdp(lin, Q, R, 1.1,
                                                  GainSparsity::from_graph(net.graph()),
                                                  structured_opt);
      const SdpResult cent =
          solve_structured_sdp(lin, Q, R, 1.1, GainSparsity::dense(2), dense_opt);
      // det(P^-1) = det(E); the structured optimum cannot beat the unstructured one
      CHECK(dist.logdet_E <= cent.logdet_E + 1e-6);
      CHECK(clf_lambda_max(lin, Q, R, 1.1, dist) <= 1e-8);
      CHECK(clf_lambda_max(lin, Q, R, 1.1, cent) <= 1e-8);
    }
  }
}

TEST_CASE("infeasible synthesis is reported") {
  // uncontrollable unstable mode: xdot = x + 0*u
  AgentModel a;
  a.state_dim = 1;
  a.input_dim = 1;
  a.input_box = Box::symmetric(1, 1.0);
  a.local_dynamics.f = [](const VectorXd& x, const VectorXd&) { return VectorXd(x); };
  a.local_dynamics.dx = [](const VectorXd&, const VectorXd&) {
    return MatrixXd(MatrixXd::Identity(1, 1));
  };
  a.local_dynamics.du = [](const VectorXd&, const VectorXd&) {
    return MatrixXd(MatrixXd::Zero(1, 1));
  };
  a.local_cost.l = [](const VectorXd& x, const VectorXd& u) {
    return x.squaredNorm() + u.squaredNorm();
  };
  a.terminal_cost.V = [](const VectorXd& x) { return x.squaredNorm(); };
  QuadraticCostSpec spec;
  spec.Q = {MatrixXd::Identity(1, 1)};
  spec.R = {MatrixXd::Identity(1, 1)};
  NetworkModel net = NetworkModel::build(CouplingGraph(1, {}), {a}, spec);
  Linearization lin = linearize_at_origin(net);
  CHECK_THROWS_AS(solve_structured_sdp(lin, MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1),
                                       1.2, GainSparsity::dense(1)),
                  Infeasible);
}

TEST_CASE("attraction level arithmetic") {
  CHECK(compute_attraction_level(0.9, 0.1, 2.09, 3.0) ==
        doctest::Approx(0.9 * (1.0 + 0.3 / 2.09)));
  CHECK(compute_attraction_level(0.9, 0.1, 2.09, 0.0) == doctest::Approx(0.9));
  CHECK(compute_attraction_level(0.9, 0.0, 2.09, 3.0) == doctest::Approx(0.9));
}

TEST_CASE("terminal level certification") {
  SUBCASE("linear system with generous bounds is limited only by beta_max") {
    AgentModel a;
    a.state_dim = 1;
    a.input_dim = 1;
    a.input_box = Box::symmetric(1, 1e6);
    a.local_dynamics.f = [](const VectorXd& x, const VectorXd& u) { return VectorXd(-x + u); };
    a.local_dynamics.dx = [](const VectorXd&, const VectorXd&) {
      return MatrixXd(-MatrixXd::Identity(1, 1));
    };
    a.local_dynamics.du = [](const VectorXd&, const VectorXd&) {
      return MatrixXd(MatrixXd::Identity(1, 1));
    };
    a.local_cost.l = [](const VectorXd& x, const VectorXd& u) {
      return x.squaredNorm() + u.squaredNorm();
    };
    a.local_cost.dx = [](const VectorXd& x, const VectorXd&) { return VectorXd(2.0 * x); };
    a.local_cost.du = [](const VectorXd&, const VectorXd& u) { return VectorXd(2.0 * u); };
    a.terminal_cost.V = [](const VectorXd& x) { return x.squaredNorm(); };
    a.terminal_cost.dx = [](const VectorXd& x) { return VectorXd(2.0 * x); };
    QuadraticCostSpec spec;
    spec.Q = {MatrixXd::Identity(1, 1)};
    spec.R = {MatrixXd::Identity(1, 1)};
    NetworkModel net = NetworkModel::build(CouplingGraph(1, {}), {a}, spec);
    Linearization lin = linearize_at_origin(net);
    const SdpResult res = solve_structured_sdp(lin, MatrixXd::Identity(1, 1),
                                               MatrixXd::Identity(1, 1), 1.2, GainSparsity::dense(1));
    const double beta = compute_terminal_level(net, res.P, res.K, 50.0);
    CHECK(beta == doctest::Approx(50.0));
  }

  SUBCASE("oscillator benchmark: level capped by the input support condition") {
    NetworkModel net = make_coupled_vdp({}, std::nullopt);
    Linearization lin = linearize_at_origin(net);
    const SdpResult res = solve_structured_sdp(lin, stack_Q(net), stack_R(net), 1.2,
                                               GainSparsity::from_graph(net.graph()));
    const double beta = compute_terminal_level(net, res.P, res.K, 10.0);

    // the aggressive gain makes the input-feasibility support test binding:
    // beta_max = min_r u_r^2 / (k_r P^-1 k_r')
    const MatrixXd Pinv = res.P.inverse();
    double cap = std::numeric_limits<double>::infinity();
    for (int r = 0; r < res.K.rows(); ++r)
      cap = std::min(cap, 1.0 / (res.K.row(r) * Pinv * res.K.row(r).transpose())(0, 0));
    CHECK(beta <= cap + 1e-9);
    CHECK(beta >= 0.95 * cap);

    // re-verification with a fresh seed at the certified level
    const ClfReport rep = verify_clf(net, res.P, res.K, beta, 10000, 999);
    CHECK(rep.pass);

    // inflating the certified level by 100x breaks the certificate (here the
    // input bounds give way first; the oscillator's damping grows with
    // amplitude, so its unsaturated decrease condition is robust)
    const ClfReport bad = verify_clf(net, res.P, res.K, 100.0 * beta, 10000, 1000);
    CHECK_FALSE(bad.pass);
    CHECK_FALSE(bad.inputs_feasible);
  }

  SUBCASE("scalar system: nonlinearity breaks the inflated certificate") {
    ScalarCoupledParams params;
    params.mu = {1.0, 0.5};
    params.eps.setZero(2, 2);
    params.eps(0, 1) = 0.5;
    params.eps(1, 0) = 2.0;
    NetworkModel net = make_scalar_coupled(params, std::nullopt);
    Linearization lin = linearize_at_origin(net);
    const SdpResult res = solve_structured_sdp(lin, stack_Q(net), stack_R(net), 1.1,
                                               GainSparsity::from_graph(net.graph()));
    const double beta = compute_terminal_level(net, res.P, res.K, 10.0);
    CHECK(beta > 0.0);
    CHECK(verify_clf(net, res.P, res.K, beta, 10000, 31).pass);
    // the bilinear input term violates the sampled decrease away from the origin
    const ClfReport bad = verify_clf(net, res.P, res.K, 20.0 * beta, 10000, 32);
    CHECK_FALSE(bad.pass);
    CHECK(bad.worst_margin > 0.0);
  }
}

TEST_CASE("clf margin vanishes at the origin") {
  NetworkModel net = make_coupled_vdp({}, std::vector<MatrixXd>(3, MatrixXd::Identity(2, 2)));
  const MatrixXd P = MatrixXd::Identity(6, 6);
  const MatrixXd K = MatrixXd::Zero(3, 6);
  const VectorXd x = VectorXd::Zero(6);
  const VectorXd u = K * x;
  CHECK(2.0 * (P * x).dot(net.central_dynamics(x, u)) + net.central_stage_cost(x, u) == 0.0);
}
