/*
Copyright 2026 The lagsim Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lagsim/core.hpp"
#include "lagsim/lacp.hpp"

namespace lagsim {

// Folds a MAC to one octet by XOR of its six octets.
std::uint8_t fold_mac(const MacAddress& mac);

// Conversation-to-index hash: fold(src) XOR fold(dst), reduced modulo the
// choice count. Both directions of a host pair land on the same index.
std::uint8_t conversation_hash(const ConversationId& conv);

// Picks ports[hash mod |ports|] with ports sorted ascending by port number.
// Deterministic and stateless. Throws NoDistributingPortError when empty.
PortIdentity hash_select(const Frame& frame, std::vector<PortIdentity> ports);

// Same selection over bare switch port numbers (controller-side use).
std::uint16_t hash_select_port(const ConversationId& conv, std::vector<std::uint16_t> ports);

// The data-plane face of one aggregation group: the virtual MAC plus the
// ports bound to it and the subset currently carrying traffic.
struct Aggregator {
    AggregatorId id = 0;
    MacAddress mac{};
    std::vector<PortIdentity> attached_ports;      // sorted by port number
    std::vector<PortIdentity> distributing_ports;  // subset of attached

    bool is_attached(const PortIdentity& p) const;
};

// Binds / unbinds a port. Detach also removes the port from the
// distributing set so the subset invariant cannot break.
Aggregator attach_port(Aggregator agg, const PortIdentity& port);
Aggregator detach_port(Aggregator agg, const PortIdentity& port);

struct DistributeResult {
    PortIdentity port;
    Frame frame;
};

// Stateless frame distribution: delegates to hash_select over the
// distributing set, so one conversation sticks to one port for as long as
// the set is unchanged. Throws NoDistributingPortError when none carry.
DistributeResult distribute(const Frame& frame, const Aggregator& agg);

struct RemapEntry {
    SimTime time;
    ConversationId conversation;
    PortIdentity old_port;
    PortIdentity new_port;
};

struct PortChangeResult {
    Aggregator agg;
    std::vector<RemapEntry> remaps;
};

// Flips one port's distributing flag and reports every observed
// conversation whose hash_select output moved under the new set. The
// report is exactly { c : select(c, old set) != select(c, new set) }:
// the modulus hash may move conversations that sat on surviving ports.
// With either set empty there is nothing to compare, so no entries.
PortChangeResult on_port_state_change(Aggregator agg, const PortIdentity& port,
                                      bool distributing,
                                      const std::vector<ConversationId>& observed, SimTime now);

// CSV rows for a remap report:
// time,conversation_src,conversation_dst,old_port,new_port
std::string remap_report_to_csv(const std::vector<RemapEntry>& remaps);

struct CollectVerdict {
    bool duplicate = false;  // (conversation, seq) already delivered
    bool reordered = false;  // seq below the conversation's delivered max
};

// Receive-side merge point. Frames from one port are handed up in arrival
// order (the event loop delivers one frame at a time, so collect is called
// in that order); cross-port interleaving is whatever arrival gave us.
class CollectorState {
  public:
    // Flags the frame against the conversation's delivered log and, unless
    // it is a duplicate, logs it as delivered.
    CollectVerdict collect(const Frame& frame, const PortIdentity& from);

    std::uint64_t duplicates() const { return duplicates_; }
    std::uint64_t reorderings() const { return reorderings_; }
    std::uint64_t delivered() const { return delivered_; }

    // Conversations flagged duplicate at least once, in sorted order.
    std::vector<ConversationId> duplicate_conversations() const;

  private:
    struct ConvLog {
        // Compressed delivered log: every seq below next_expected was
        // delivered; ahead holds delivered seqs beyond that prefix, so
        // memory is bounded by outstanding gaps, not stream length.
        std::uint64_t next_expected = 0;
        std::uint64_t highest = 0;
        bool any = false;
        std::map<std::uint64_t, bool> ahead;
        std::uint64_t dup_count = 0;
    };

    std::map<ConversationId, ConvLog> conv_;
    std::uint64_t duplicates_ = 0;
    std::uint64_t reorderings_ = 0;
    std::uint64_t delivered_ = 0;
};

enum class DistributionPolicy {
    XorHash,     // stable per-conversation mapping (default)
    RoundRobin,  // per-frame rotation, ignores the conversation
};

DistributionPolicy parse_distribution_policy(const std::string& name);

// Stateful convenience wrapper used by the bond driver: owns the
// Aggregator, remembers every conversation it has distributed, and keeps
// the cumulative remap log across port changes.
class Distributor {
  public:
    explicit Distributor(DistributionPolicy policy = DistributionPolicy::XorHash);

    Aggregator& aggregator() { return agg_; }
    const Aggregator& aggregator() const { return agg_; }

    void attach(const PortIdentity& port);
    void detach(const PortIdentity& port, SimTime now);
    void set_distributing(const PortIdentity& port, bool distributing, SimTime now);

    // Picks the egress port and notes the conversation as observed.
    PortIdentity pick(const Frame& frame);

    const std::vector<RemapEntry>& remap_log() const { return remaps_; }
    std::vector<ConversationId> observed() const;

  private:
    DistributionPolicy policy_;
    Aggregator agg_;
    std::map<ConversationId, bool> observed_;
    std::vector<RemapEntry> remaps_;
    std::size_t rr_next_ = 0;
};

}  // namespace lagsim
