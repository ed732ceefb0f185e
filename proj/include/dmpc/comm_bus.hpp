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

#ifndef DMPC_COMM_BUS_HPP
#define DMPC_COMM_BUS_HPP

#include <cstdint>
#include <vector>

#include "dmpc/network_model.hpp"
#include "dmpc/trajectory.hpp"

namespace dmpc {

enum class MessageKind { StateTraj, AdjointTraj };

/// One trajectory in flight. State trajectories may flow from i to any
/// neighbor j in N_i; adjoint trajectories only to sending neighbors N_i^<-.
struct Message {
  int sender = -1;
  int receiver = -1;
  MessageKind kind = MessageKind::StateTraj;
  int iteration = 0;
  Trajectory payload;
};

/// Communication accounting. `messages` counts trajectories as sent (one per
/// message); `component_trajectories` weights each message by its vector
/// dimension, which is the convention used when reporting per-agent totals of
/// q_k * n_i * (|N_i^<-| + |N_i|). Bytes assume 8-byte scalars plus a fixed
/// 32-byte header per message; this is a reporting convention, not a wire
/// format. Setup exchanges (initial trajectories before iteration 1) are
/// tracked separately and excluded from the per-iteration totals.
struct CommStats {
  std::uint64_t messages = 0;
  std::uint64_t component_trajectories = 0;
  std::uint64_t bytes = 0;
  std::uint64_t rounds = 0;
  std::uint64_t setup_messages = 0;
  std::vector<std::uint64_t> messages_per_agent;
  std::vector<std::uint64_t> components_per_agent;

  void reset(int agent_count) {
    messages = component_trajectories = bytes = rounds = setup_messages = 0;
    messages_per_agent.assign(agent_count, 0);
    components_per_agent.assign(agent_count, 0);
  }
};

/// In-process, synchronous, lossless neighbor-to-neighbor transport. A round
/// is a barrier: all messages of iteration q are delivered atomically and in
/// a deterministic order (sender id, then kind). The coordinator role is the
/// logical AND over the per-agent stopping reports.
class CommBus {
 public:
  CommBus(const CouplingGraph& graph, int grid_points);

  /// Delivers one round. `outgoing[i]` holds agent i's messages. Returns the
  /// inbox of every agent, sorted by (sender, kind). Throws TopologyViolation
  /// for a message along a non-edge. Setup rounds are delivered and counted
  /// in `setup_messages` but excluded from the round/message totals.
  std::vector<std::vector<Message>> exchange_round(std::vector<std::vector<Message>> outgoing,
                                                   bool setup_round = false);

  /// Logical AND over all agents' reports; every agent must have reported.
  bool coordinator_reduce(const std::vector<int>& agent_pass) const;

  /// Accounting for the current MPC step (reset via begin_step).
  const CommStats& step_stats() const { return step_stats_; }
  /// Accounting since construction.
  const CommStats& total_stats() const { return total_stats_; }

  void begin_step();

 private:
  void validate(const Message& m) const;
  std::uint64_t payload_bytes(const Message& m) const;

  const CouplingGraph* graph_;
  int grid_points_;
  CommStats step_stats_, total_stats_;
};

}  // namespace dmpc

#endif  // DMPC_COMM_BUS_HPP
