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
#include "lagsim/lacp.hpp"

#include <algorithm>
#include <map>

#include "lagsim/errors.hpp"

namespace lagsim {
namespace {

constexpr std::uint8_t kLacpSubtype = 0x01;
constexpr std::uint8_t kLacpVersion = 0x01;
constexpr std::uint8_t kTlvActor = 0x01;
constexpr std::uint8_t kTlvPartner = 0x02;
constexpr std::uint8_t kTlvCollector = 0x03;
constexpr std::uint8_t kTlvTerminator = 0x00;
constexpr std::uint8_t kActorInfoLen = 0x14;
constexpr std::uint8_t kPartnerInfoLen = 0x14;
constexpr std::uint8_t kCollectorInfoLen = 0x10;

void put_u16(std::vector<std::uint8_t>& out, std::size_t at, std::uint16_t v) {
    out[at] = static_cast<std::uint8_t>(v >> 8);
    out[at + 1] = static_cast<std::uint8_t>(v & 0xff);
}

std::uint16_t get_u16(const std::vector<std::uint8_t>& in, std::size_t at) {
    return static_cast<std::uint16_t>((in[at] << 8) | in[at + 1]);
}

// Writes the 18 info octets shared by the actor and partner TLVs:
// system priority, system MAC, key, port priority, port number, state.
void put_peer_info(std::vector<std::uint8_t>& out, std::size_t at, const LacpPeerInfo& info) {
    put_u16(out, at, info.system.priority);
    std::copy(info.system.address.octets.begin(), info.system.address.octets.end(),
              out.begin() + static_cast<std::ptrdiff_t>(at + 2));
    put_u16(out, at + 8, info.key.value);
    put_u16(out, at + 10, info.port.priority);
    put_u16(out, at + 12, info.port.number);
    out[at + 14] = info.state.to_octet();
}

LacpPeerInfo get_peer_info(const std::vector<std::uint8_t>& in, std::size_t at) {
    LacpPeerInfo info;
    info.system.priority = get_u16(in, at);
    std::copy(in.begin() + static_cast<std::ptrdiff_t>(at + 2),
              in.begin() + static_cast<std::ptrdiff_t>(at + 8),
              info.system.address.octets.begin());
    info.key.value = get_u16(in, at + 8);
    info.port.priority = get_u16(in, at + 10);
    info.port.number = get_u16(in, at + 12);
    info.state = LacpPortState::from_octet(in[at + 14]);
    return info;
}

void expect_octet(const std::vector<std::uint8_t>& wire, std::size_t at, std::uint8_t want,
                  const char* what) {
    if (wire[at] != want) {
        throw MalformedPduError(at, what);
    }
}

// True when the fields that feed selection and mux decisions differ. State
// churn that does not affect them (e.g. partner collecting toggles) should
// not force extra transmissions.
bool material_change(const LacpPeerInfo& a, const LacpPeerInfo& b) {
    return !(a.system == b.system) || a.key.value != b.key.value || !(a.port == b.port) ||
           !(a.state == b.state);
}

SimTime timeout_window(const LacpPortState& my_state) {
    return my_state.lacp_timeout ? LacpTiming::short_timeout() : LacpTiming::long_timeout();
}

}  // namespace

MacAddress lacp_group_address() {
    return MacAddress{{0x01, 0x80, 0xc2, 0x00, 0x00, 0x02}};
}

std::uint8_t LacpPortState::to_octet() const {
    std::uint8_t bits = 0;
    bits |= lacp_activity ? 0x01 : 0;
    bits |= lacp_timeout ? 0x02 : 0;
    bits |= aggregation ? 0x04 : 0;
    bits |= synchronization ? 0x08 : 0;
    bits |= collecting ? 0x10 : 0;
    bits |= distributing ? 0x20 : 0;
    bits |= defaulted ? 0x40 : 0;
    bits |= expired ? 0x80 : 0;
    return bits;
}

LacpPortState LacpPortState::from_octet(std::uint8_t bits) {
    LacpPortState s;
    s.lacp_activity = (bits & 0x01) != 0;
    s.lacp_timeout = (bits & 0x02) != 0;
    s.aggregation = (bits & 0x04) != 0;
    s.synchronization = (bits & 0x08) != 0;
    s.collecting = (bits & 0x10) != 0;
    s.distributing = (bits & 0x20) != 0;
    s.defaulted = (bits & 0x40) != 0;
    s.expired = (bits & 0x80) != 0;
    return s;
}

std::vector<std::uint8_t> encode_lacpdu(const Lacpdu& pdu) {
    std::vector<std::uint8_t> out(kLacpduWireSize, 0);
    out[0] = kLacpSubtype;
    out[1] = kLacpVersion;
    out[2] = kTlvActor;
    out[3] = kActorInfoLen;
    put_peer_info(out, 4, pdu.actor);
    // Octets 19..21 reserved, already zero.
    out[22] = kTlvPartner;
    out[23] = kPartnerInfoLen;
    put_peer_info(out, 24, pdu.partner);
    // Octet 41 reserved.
    out[42] = kTlvCollector;
    out[43] = kCollectorInfoLen;
    put_u16(out, 44, pdu.collector_max_delay);
    // Octets 46..57 reserved.
    out[58] = kTlvTerminator;
    out[59] = 0x00;
    // Octets 60..109 pad to the fixed frame size, already zero.
    return out;
}

Lacpdu decode_lacpdu(const std::vector<std::uint8_t>& wire) {
    if (wire.size() != kLacpduWireSize) {
        throw FrameLengthError(wire.size());
    }
    if (wire[0] != kLacpSubtype) {
        throw NotLacpError(wire[0]);
    }
    // Version is deliberately not checked: future versions stay decodable.
    expect_octet(wire, 2, kTlvActor, "expected actor TLV");
    expect_octet(wire, 3, kActorInfoLen, "bad actor TLV length");
    expect_octet(wire, 22, kTlvPartner, "expected partner TLV");
    expect_octet(wire, 23, kPartnerInfoLen, "bad partner TLV length");
    expect_octet(wire, 42, kTlvCollector, "expected collector TLV");
    expect_octet(wire, 43, kCollectorInfoLen, "bad collector TLV length");
    expect_octet(wire, 58, kTlvTerminator, "expected terminator TLV");
    expect_octet(wire, 59, 0x00, "bad terminator length");

    Lacpdu pdu;
    pdu.actor = get_peer_info(wire, 4);
    pdu.partner = get_peer_info(wire, 24);
    pdu.collector_max_delay = get_u16(wire, 44);
    return pdu;
}

LacpPeerInfo default_partner_info() {
    LacpPeerInfo info;
    info.system.priority = 0xFFFF;
    info.system.address = MacAddress{};  // all-zero
    info.key = LagKey{0};
    info.port.priority = 0xFFFF;
    info.port.number = 0;
    info.state.lacp_activity = false;
    info.state.lacp_timeout = true;  // keep probing fast until a partner is heard
    info.state.aggregation = false;
    info.state.synchronization = false;
    info.state.defaulted = true;
    return info;
}

StepResult receive_step(PortContext ctx, const PortEvent& event, SimTime now) {
    std::vector<PortAction> actions;

    if (std::holds_alternative<PduEvent>(event)) {
        const Lacpdu& pdu = std::get<PduEvent>(event).pdu;
        LacpPeerInfo incoming = pdu.actor;
        // We heard the partner directly, so its info is neither defaulted
        // nor expired regardless of what it claims about itself.
        incoming.state.defaulted = false;
        incoming.state.expired = false;

        bool changed = material_change(incoming, ctx.partner_view);
        ctx.partner_view = incoming;
        ctx.current_while = now + timeout_window(ctx.my_info.state);
        if (changed) {
            // Speak up promptly so the partner converges, and rerun
            // selection with the new partner picture.
            ctx.periodic_due = now;
            actions.push_back({PortActionKind::NotifySelection});
        }
        return {std::move(ctx), std::move(actions)};
    }

    if (std::holds_alternative<TimerExpiry>(event)) {
        if (!ctx.link_up) {
            return {std::move(ctx), std::move(actions)};
        }
        if (ctx.partner_view.state.expired && ctx.partner_view.state.defaulted) {
            return {std::move(ctx), std::move(actions)};  // already timed out
        }
        ctx.partner_view.state.expired = true;
        ctx.partner_view.state.defaulted = true;
        ctx.partner_view.state.synchronization = false;
        ctx.periodic_due = now;
        actions.push_back({PortActionKind::NotifySelection});
        return {std::move(ctx), std::move(actions)};
    }

    if (std::holds_alternative<LinkDownEvent>(event)) {
        ctx.link_up = false;
        ctx.partner_view = default_partner_info();
        ctx.selected_aggregator.reset();
        ctx.my_info.state.synchronization = false;
        ctx.my_info.state.collecting = false;
        ctx.my_info.state.distributing = false;
        actions.push_back({PortActionKind::Detach});
        actions.push_back({PortActionKind::NotifySelection});
        return {std::move(ctx), std::move(actions)};
    }

    // LinkUpEvent: resume transmitting immediately; partner info is still
    // the defaults installed at link-down.
    ctx.link_up = true;
    ctx.periodic_due = now;
    actions.push_back({PortActionKind::NotifySelection});
    return {std::move(ctx), std::move(actions)};
}

PeriodicResult periodic_step(PortContext ctx, SimTime now) {
    if (!ctx.link_up || now < ctx.periodic_due) {
        return {std::move(ctx), std::nullopt};
    }
    SimTime interval = ctx.partner_view.state.lacp_timeout ? LacpTiming::fast_period()
                                                           : LacpTiming::slow_period();
    if (!ctx.my_info.state.lacp_activity && !ctx.partner_view.state.lacp_activity) {
        // Both passive: stay silent but keep the schedule advancing so a
        // later activity change does not release a burst of stale sends.
        ctx.periodic_due = now + interval;
        return {std::move(ctx), std::nullopt};
    }
    Lacpdu pdu;
    pdu.actor = ctx.my_info;
    pdu.partner = ctx.partner_view;
    pdu.collector_max_delay = kDefaultCollectorMaxDelay;
    ctx.periodic_due = now + interval;
    return {std::move(ctx), pdu};
}

StepResult mux_step(PortContext ctx) {
    std::vector<PortAction> actions;
    LacpPortState& st = ctx.my_info.state;

    bool attached_ok = ctx.selected_aggregator.has_value() && ctx.link_up;

    if (!attached_ok) {
        if (st.synchronization || st.collecting || st.distributing) {
            st.synchronization = false;
            st.collecting = false;
            st.distributing = false;
            actions.push_back({PortActionKind::Detach});
        }
        return {std::move(ctx), std::move(actions)};
    }

    // Partner fell out of sync while we were passing traffic: stop at once
    // and reattach from scratch.
    if ((st.collecting || st.distributing) && !ctx.partner_view.state.synchronization) {
        st.synchronization = false;
        st.collecting = false;
        st.distributing = false;
        actions.push_back({PortActionKind::Detach});
        return {std::move(ctx), std::move(actions)};
    }

    if (!st.synchronization) {
        st.synchronization = true;
        actions.push_back({PortActionKind::Attach});
        return {std::move(ctx), std::move(actions)};
    }

    if (!ctx.partner_view.state.synchronization) {
        return {std::move(ctx), std::move(actions)};  // wait for the partner
    }

    if (!st.collecting) {
        st.collecting = true;
        return {std::move(ctx), std::move(actions)};
    }

    if (!st.distributing) {
        st.distributing = true;
        actions.push_back({PortActionKind::EnableDistributing});
        return {std::move(ctx), std::move(actions)};
    }

    return {std::move(ctx), std::move(actions)};  // quiescent
}

std::optional<AggregatorId> SelectionResult::find(const PortIdentity& p) const {
    for (const auto& [port, agg] : assignment) {
        if (port == p) {
            return agg;
        }
    }
    return std::nullopt;
}

SelectionResult select_aggregators(const std::vector<PortContext>& ports,
                                   const std::vector<AggregatorId>& aggregators) {
    SelectionResult result;

    struct GroupKey {
        // Groups whose partner info is defaulted sort after groups with a
        // live partner, so a converged group keeps its aggregator while
        // stragglers still sit on administrative defaults.
        bool partner_defaulted;
        std::uint16_t actor_key;
        SystemId partner_system;
        std::uint16_t partner_key;

        auto operator<=>(const GroupKey&) const = default;
    };

    // std::map keeps group traversal deterministic; groups come out ordered
    // by key, then get reordered by their lowest member below.
    std::map<GroupKey, std::vector<PortIdentity>> groups;
    for (const PortContext& ctx : ports) {
        if (!ctx.link_up) {
            result.unbound.push_back(ctx.my_info.port);
            continue;
        }
        GroupKey key{ctx.partner_view.state.defaulted, ctx.my_info.key.value,
                     ctx.partner_view.system, ctx.partner_view.key.value};
        groups[key].push_back(ctx.my_info.port);
    }

    std::vector<std::pair<bool, std::vector<PortIdentity>>> ordered;
    ordered.reserve(groups.size());
    for (auto& [key, members] : groups) {
        std::sort(members.begin(), members.end());
        ordered.emplace_back(key.partner_defaulted, std::move(members));
    }
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) {
            return !a.first;  // live-partner groups first
        }
        return a.second.front() < b.second.front();
    });

    std::size_t next_agg = 0;
    for (auto& [defaulted, members] : ordered) {
        if (next_agg >= aggregators.size()) {
            for (const PortIdentity& p : members) {
                result.unbound.push_back(p);
            }
            continue;
        }
        AggregatorId agg = aggregators[next_agg++];
        for (const PortIdentity& p : members) {
            result.assignment.emplace_back(p, agg);
        }
    }

    std::sort(result.unbound.begin(), result.unbound.end());
    std::sort(result.assignment.begin(), result.assignment.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return result;
}

}  // namespace lagsim
