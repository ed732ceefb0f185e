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

#include "dmpc/comm_bus.hpp"

#include <algorithm>

namespace dmpc {

namespace {
constexpr std::uint64_t kHeaderBytes = 32;
constexpr std::uint64_t kScalarBytes = 8;
}  // namespace

CommBus::CommBus(const CouplingGraph& graph, int grid_points)
    : graph_(&graph), grid_points_(grid_points) {
  step_stats_.reset(graph.agent_count());
  total_stats_.reset(graph.agent_count());
}

void CommBus::begin_step() { step_stats_.reset(graph_->agent_count()); }

void CommBus::validate(const Message& m) const {
  if (m.sender < 0 || m.sender >= graph_->agent_count() || m.receiver < 0 ||
      m.receiver >= graph_->agent_count() || m.sender == m.receiver)
    throw TopologyViolation("message with invalid endpoints " + std::to_string(m.sender) + " -> " +
                            std::to_string(m.receiver));
  if (m.kind == MessageKind::StateTraj) {
    if (!graph_->is_neighbor(m.sender, m.receiver))
      throw TopologyViolation("state trajectory along non-edge " + std::to_string(m.sender) +
                              " -> " + std::to_string(m.receiver));
  } else {
    // i sends adjoints to its sending neighbors N_i^<-, i.e. along edge (receiver -> sender).
    const auto& senders = graph_->senders(m.sender);
    if (!std::binary_search(senders.begin(), senders.end(), m.receiver))
      throw TopologyViolation("adjoint trajectory to non-sender " + std::to_string(m.sender) +
                              " -> " + std::to_string(m.receiver));
  }
}

std::uint64_t CommBus::payload_bytes(const Message& m) const {
  return kHeaderBytes + kScalarBytes * static_cast<std::uint64_t>(m.payload.dim()) *
                            static_cast<std::uint64_t>(grid_points_);
}

std::vector<std::vector<Message>> CommBus::exchange_round(
    std::vector<std::vector<Message>> outgoing, bool setup_round) {
  const int N = graph_->agent_count();
  if (static_cast<int>(outgoing.size()) != N)
    throw TopologyViolation("exchange_round: one outbox per agent required");

  std::vector<std::vector<Message>> inbox(N);
  // Deterministic delivery: senders in id order, states before adjoints.
  for (int pass = 0; pass < 2; ++pass) {
    const MessageKind kind = pass == 0 ? MessageKind::StateTraj : MessageKind::AdjointTraj;
    for (int s = 0; s < N; ++s) {
      for (const Message& m : outgoing[s]) {
        if (m.kind != kind) continue;
        validate(m);
        if (setup_round) {
          ++step_stats_.setup_messages;
          ++total_stats_.setup_messages;
        } else {
          for (CommStats* st : {&step_stats_, &total_stats_}) {
            ++st->messages;
            st->component_trajectories += m.payload.dim();
            st->bytes += payload_bytes(m);
            ++st->messages_per_agent[m.sender];
            st->components_per_agent[m.sender] += m.payload.dim();
          }
        }
        inbox[m.receiver].push_back(m);
      }
    }
  }
  for (auto& box : inbox)
    std::stable_sort(box.begin(), box.end(), [](const Message& a, const Message& b) {
      if (a.sender != b.sender) return a.sender < b.sender;
      return static_cast<int>(a.kind) < static_cast<int>(b.kind);
    });
  if (!setup_round) {
    ++step_stats_.rounds;
    ++total_stats_.rounds;
  }
  return inbox;
}

bool CommBus::coordinator_reduce(const std::vector<int>& agent_pass) const {
  if (static_cast<int>(agent_pass.size()) != graph_->agent_count())
    throw MissingReport("coordinator_reduce: not all agents reported");
  return std::all_of(agent_pass.begin(), agent_pass.end(), [](int b) { return b != 0; });
}

}  // namespace dmpc
