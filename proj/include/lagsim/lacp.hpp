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
#include <optional>
#include <variant>
#include <vector>

#include "lagsim/core.hpp"

namespace lagsim {

using AggregatorId = std::uint16_t;

// Protocol timer defaults. Fast/slow transmit periods and the derived
// timeout windows (3x the period of the requested rate).
struct LacpTiming {
    static constexpr SimTime fast_period() { return SimTime::from_whole_seconds(1); }
    static constexpr SimTime slow_period() { return SimTime::from_whole_seconds(30); }
    static constexpr SimTime short_timeout() { return fast_period() * 3; }
    static constexpr SimTime long_timeout() { return slow_period() * 3; }
};

// Link-scope group address all LACPDUs are sent to.
MacAddress lacp_group_address();

// The eight per-port protocol flags. Encodes to one octet,
// bit 0 = lacp_activity ... bit 7 = expired.
struct LacpPortState {
    bool lacp_activity = false;
    bool lacp_timeout = false;
    bool aggregation = false;
    bool synchronization = false;
    bool collecting = false;
    bool distributing = false;
    bool defaulted = false;
    bool expired = false;

    bool operator==(const LacpPortState&) const = default;

    std::uint8_t to_octet() const;
    static LacpPortState from_octet(std::uint8_t bits);
};

// One participant's view of itself as carried in a LACPDU.
struct LacpPeerInfo {
    SystemId system{};
    LagKey key{};
    PortIdentity port{};
    LacpPortState state{};

    bool operator==(const LacpPeerInfo&) const = default;
};

// The protocol data unit. Encodes to exactly 110 octets.
struct Lacpdu {
    LacpPeerInfo actor{};
    LacpPeerInfo partner{};
    std::uint16_t collector_max_delay = 0;  // tens of microseconds

    bool operator==(const Lacpdu&) const = default;
};

constexpr std::size_t kLacpduWireSize = 110;

// Advertised collector max delay, in tens of microseconds.
constexpr std::uint16_t kDefaultCollectorMaxDelay = 50;

std::vector<std::uint8_t> encode_lacpdu(const Lacpdu& pdu);

// Inverse of encode_lacpdu on its image. Throws FrameLengthError,
// NotLacpError or MalformedPduError.
Lacpdu decode_lacpdu(const std::vector<std::uint8_t>& wire);

// Administrative partner info used while no LACPDU has been heard. Requests
// short timeout so an unsynchronized port keeps probing at the fast rate.
LacpPeerInfo default_partner_info();

// Per-port protocol context. All step functions below are pure: they take a
// context plus the simulation clock and return a new context with actions;
// the caller owns all timers.
struct PortContext {
    LacpPeerInfo my_info{};
    LacpPeerInfo partner_view = default_partner_info();
    SimTime current_while{};   // deadline after which partner info expires
    SimTime periodic_due{};    // next transmit opportunity
    std::optional<AggregatorId> selected_aggregator{};
    bool link_up = true;
};

enum class PortActionKind {
    NotifySelection,     // selection inputs changed, rerun select_aggregators
    Attach,              // bind this port to its selected aggregator
    Detach,              // unbind; also stops collecting/distributing
    EnableDistributing,  // port may now carry conversations
};

struct PortAction {
    PortActionKind kind;

    bool operator==(const PortAction&) const = default;
};

struct PduEvent {
    Lacpdu pdu;
};
struct TimerExpiry {};
struct LinkDownEvent {};
struct LinkUpEvent {};

using PortEvent = std::variant<PduEvent, TimerExpiry, LinkDownEvent, LinkUpEvent>;

struct StepResult {
    PortContext ctx;
    std::vector<PortAction> actions;
};

// Receive machine. On a PDU: adopt the sender's actor info as partner_view
// (defaulted/expired cleared), restart current_while, and pull periodic_due
// forward when the partner's picture changed. On timer expiry with nothing
// heard: mark partner info expired and defaulted and drop synchronization.
// On link-down: reset to defaults and clear the aggregator selection.
StepResult receive_step(PortContext ctx, const PortEvent& event, SimTime now);

struct PeriodicResult {
    PortContext ctx;
    std::optional<Lacpdu> pdu;
};

// Periodic transmission machine. Emits when now >= periodic_due and at least
// one side is active. Interval is fast while the partner requests short
// timeout, slow otherwise.
PeriodicResult periodic_step(PortContext ctx, SimTime now);

// Mux machine, one transition per call. Enables collecting then distributing
// once the port is selected and both sides report synchronization; tears
// both down and detaches when selection or partner synchronization is lost.
// Run to quiescence by calling until no action and no change is produced.
StepResult mux_step(PortContext ctx);

struct SelectionResult {
    // Port number -> aggregator, for every bound port.
    std::vector<std::pair<PortIdentity, AggregatorId>> assignment;
    std::vector<PortIdentity> unbound;

    std::optional<AggregatorId> find(const PortIdentity& p) const;
};

// Groups ports by (actor key, partner system, partner key); each group binds
// to one aggregator. Ports with the link down are never bound. Deterministic
// and invariant under permutation of the input list: groups are ordered by
// their lowest PortIdentity and aggregator ids are handed out in order.
SelectionResult select_aggregators(const std::vector<PortContext>& ports,
                                   const std::vector<AggregatorId>& aggregators);

}  // namespace lagsim
