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

#include "dmpc/comm_bus.hpp"

using namespace dmpc;

namespace {

// oscillator topology: 0 -> {1,2}, 1 -> 2, 2 -> 1
CouplingGraph vdp_graph() { return CouplingGraph(3, {{0, 1}, {0, 2}, {1, 2}, {2, 1}}); }

Message msg(int from, int to, MessageKind kind, const TimeGrid& grid, int dim) {
  return Message{from, to, kind, 1, Trajectory(grid, dim)};
}

// every agent sends its state to N_i and its adjoint to N_i^<-
std::vector<std::vector<Message>> full_round(const CouplingGraph& g, const TimeGrid& grid,
                                             int dim) {
  std::vector<std::vector<Message>> outgoing(g.agent_count());
  for (int i = 0; i < g.agent_count(); ++i) {
    for (int j : g.neighborhood(i)) outgoing[i].push_back(msg(i, j, MessageKind::StateTraj, grid, dim));
    for (int j : g.senders(i)) outgoing[i].push_back(msg(i, j, MessageKind::AdjointTraj, grid, dim));
  }
  return outgoing;
}

}  // namespace

TEST_CASE("one exchange round of the oscillator topology") {
  CouplingGraph g = vdp_graph();
  TimeGrid grid(3.0, 21);
  CommBus bus(g, grid.point_count);
  bus.begin_step();

  auto inbox = bus.exchange_round(full_round(g, grid, 2));

  // per-iteration totals: sum_i (|N_i| + |N_i^<-|) = (2+0) + (2+2) + (2+2) = 10
  CHECK(bus.step_stats().messages == 10);
  // component count weights each message by its dimension n_i = 2
  CHECK(bus.step_stats().component_trajectories == 20);
  CHECK(bus.step_stats().rounds == 1);
  // agent 0 sends 2 state messages and no adjoints
  CHECK(bus.step_stats().messages_per_agent[0] == 2);
  CHECK(bus.step_stats().messages_per_agent[1] == 4);
  CHECK(bus.step_stats().messages_per_agent[2] == 4);

  // agent 0 receives states from {1,2} plus adjoints from both receivers
  CHECK(inbox[0].size() == 4);
  CHECK(inbox[1].size() == 3);
  CHECK(inbox[2].size() == 3);
}

TEST_CASE("inbox contents and deterministic ordering") {
  CouplingGraph g = vdp_graph();
  TimeGrid grid(1.0, 5);
  CommBus bus(g, grid.point_count);
  auto inbox = bus.exchange_round(full_round(g, grid, 2));

  // agent 0: states from neighbors {1,2}; adjoints from 1 and 2 (0 in N_1^<- and N_2^<-)
  REQUIRE(inbox[0].size() == 4);
  CHECK(inbox[0][0].sender == 1);
  CHECK(inbox[0][0].kind == MessageKind::StateTraj);
  CHECK(inbox[0][1].sender == 1);
  CHECK(inbox[0][1].kind == MessageKind::AdjointTraj);
  CHECK(inbox[0][2].sender == 2);
  CHECK(inbox[0][2].kind == MessageKind::StateTraj);
  CHECK(inbox[0][3].sender == 2);
  CHECK(inbox[0][3].kind == MessageKind::AdjointTraj);

  // agent 1: states from {0, 2}, adjoint from 2 (1 in N_2^<-), no adjoint from 0
  REQUIRE(inbox[1].size() == 3);
  CHECK(inbox[1][0].sender == 0);
  CHECK(inbox[1][1].sender == 2);
  CHECK(inbox[1][1].kind == MessageKind::StateTraj);
  CHECK(inbox[1][2].sender == 2);
  CHECK(inbox[1][2].kind == MessageKind::AdjointTraj);

  // two identical rounds deliver identical sequences
  CommBus bus2(g, grid.point_count);
  auto inbox2 = bus2.exchange_round(full_round(g, grid, 2));
  REQUIRE(inbox2[0].size() == inbox[0].size());
  for (std::size_t k = 0; k < inbox[0].size(); ++k) {
    CHECK(inbox2[0][k].sender == inbox[0][k].sender);
    CHECK(inbox2[0][k].kind == inbox[0][k].kind);
  }
}

TEST_CASE("byte accounting") {
  CouplingGraph g = vdp_graph();
  TimeGrid grid(3.0, 21);
  CommBus bus(g, grid.point_count);
  bus.exchange_round(full_round(g, grid, 2));
  // 10 messages, each 32 + 8 * 2 * 21 = 368 bytes
  CHECK(bus.step_stats().bytes == 10u * (32u + 8u * 2u * 21u));
}

TEST_CASE("no edges means no traffic") {
  CouplingGraph g(3, {});
  TimeGrid grid(1.0, 5);
  CommBus bus(g, grid.point_count);
  auto inbox = bus.exchange_round(full_round(g, grid, 1));
  CHECK(bus.step_stats().messages == 0);
  for (const auto& box : inbox) CHECK(box.empty());
}

TEST_CASE("topology violations are rejected") {
  CouplingGraph g = vdp_graph();
  TimeGrid grid(1.0, 5);
  CommBus bus(g, grid.point_count);

  SUBCASE("state along a non-edge") {
    // agents 1 and 0 are neighbors, but 1 and itself is not a message
    std::vector<std::vector<Message>> outgoing(3);
    outgoing[1].push_back(msg(1, 1, MessageKind::StateTraj, grid, 2));
    CHECK_THROWS_AS(bus.exchange_round(std::move(outgoing)), TopologyViolation);
  }
  SUBCASE("adjoint to a non-sender") {
    // agent 0 has no sending neighbors, so it must not emit adjoints
    std::vector<std::vector<Message>> outgoing(3);
    outgoing[0].push_back(msg(0, 1, MessageKind::AdjointTraj, grid, 2));
    CHECK_THROWS_AS(bus.exchange_round(std::move(outgoing)), TopologyViolation);
  }
  SUBCASE("state to a non-neighbor") {
    CouplingGraph line(3, {{0, 1}, {1, 2}});  // 0 and 2 unrelated
    CommBus lb(line, grid.point_count);
    std::vector<std::vector<Message>> outgoing(3);
    outgoing[0].push_back(msg(0, 2, MessageKind::StateTraj, grid, 1));
    CHECK_THROWS_AS(lb.exchange_round(std::move(outgoing)), TopologyViolation);
  }
}

TEST_CASE("coordinator reduction") {
  CouplingGraph g = vdp_graph();
  CommBus bus(g, 21);
  CHECK(bus.coordinator_reduce({1, 1, 1}));
  CHECK_FALSE(bus.coordinator_reduce({1, 0, 1}));
  CHECK_THROWS_AS(bus.coordinator_reduce({1, 1}), MissingReport);
}

TEST_CASE("setup rounds are tracked separately") {
  CouplingGraph g = vdp_graph();
  TimeGrid grid(3.0, 21);
  CommBus bus(g, grid.point_count);
  bus.exchange_round(full_round(g, grid, 2), /*setup_round=*/true);
  CHECK(bus.step_stats().messages == 0);
  CHECK(bus.step_stats().rounds == 0);
  CHECK(bus.step_stats().setup_messages == 10);

  bus.exchange_round(full_round(g, grid, 2));
  CHECK(bus.step_stats().messages == 10);

  bus.begin_step();
  CHECK(bus.step_stats().messages == 0);
  CHECK(bus.total_stats().messages == 10);
  CHECK(bus.total_stats().setup_messages == 10);
}
