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
#include "lagsim/controller.hpp"

#include <algorithm>
#include <sstream>

#include "lagsim/aggregator.hpp"
#include "lagsim/errors.hpp"

namespace lagsim {
namespace {

// Sort key for dumps and deterministic CSV: destination, then entries
// without a source before entries with one, then source.
bool entry_less(const FlowEntry& a, const FlowEntry& b) {
    if (a.match_dst != b.match_dst) {
        return a.match_dst < b.match_dst;
    }
    bool as = a.match_src.has_value();
    bool bs = b.match_src.has_value();
    if (as != bs) {
        return !as;
    }
    if (as && *a.match_src != *b.match_src) {
        return *a.match_src < *b.match_src;
    }
    return a.out_port < b.out_port;
}

}  // namespace

DetectionMode parse_detection_mode(const std::string& name) {
    if (name == "monitor") {
        return DetectionMode::Monitor;
    }
    if (name == "lacpdu") {
        return DetectionMode::Lacpdu;
    }
    if (name == "both") {
        return DetectionMode::Both;
    }
    throw ConfigError("detection", "expected monitor, lacpdu or both, got '" + name + "'");
}

InjectMode parse_inject_mode(const std::string& name) {
    if (name == "none") {
        return InjectMode::None;
    }
    if (name == "duplicate-on-reforward") {
        return InjectMode::DuplicateOnReforward;
    }
    throw ConfigError("inject", "expected none or duplicate-on-reforward, got '" + name + "'");
}

SystemId ControllerCore::switch_system() {
    return SystemId{0x8000, MacAddress{{0x00, 0x00, 0x00, 0x00, 0xaa, 0x00}}};
}

ControllerCore::ControllerCore(std::vector<std::uint16_t> member_ports,
                               std::vector<std::uint16_t> access_ports, DetectionMode detection,
                               InjectMode inject, SimTime lacpdu_timeout)
    : member_ports_(std::move(member_ports)),
      access_ports_(std::move(access_ports)),
      detection_(detection),
      inject_(inject),
      lacpdu_timeout_(lacpdu_timeout) {
    std::sort(member_ports_.begin(), member_ports_.end());
    std::sort(access_ports_.begin(), access_ports_.end());
    for (std::uint16_t p : member_ports_) {
        slaves_[p] = SlaveState{};
    }
}

bool ControllerCore::is_member(std::uint16_t port) const {
    return std::binary_search(member_ports_.begin(), member_ports_.end(), port);
}

std::vector<std::uint16_t> ControllerCore::enabled_members() const {
    std::vector<std::uint16_t> out;
    for (const auto& [port, st] : slaves_) {
        if (st.enabled) {
            out.push_back(port);
        }
    }
    return out;
}

void ControllerCore::note(SimTime now, std::string kind, std::string detail) {
    notes_.push_back({now, std::move(kind), std::move(detail)});
}

std::vector<ControllerNote> ControllerCore::take_notes() {
    std::vector<ControllerNote> out;
    out.swap(notes_);
    return out;
}

ControllerActions ControllerCore::on_packet_in(SimTime now, std::uint16_t in_port,
                                               const Frame& frame) {
    ControllerActions acts;

    if (frame.kind == FrameKind::Lacpdu) {
        Lacpdu pdu;
        try {
            pdu = decode_lacpdu(frame.lacpdu_wire);
        } catch (const DecodeError&) {
            ++malformed_dropped_;
            note(now, "lacpdu-malformed", "port=" + std::to_string(in_port));
            return acts;
        }
        if (!is_member(in_port)) {
            // LACP from a non-LAG port: consume silently, never forward.
            note(now, "lacpdu-ignored", "port=" + std::to_string(in_port));
            return acts;
        }
        ++lacpdus_consumed_;
        SlaveState& st = slaves_[in_port];
        st.heard = true;
        st.last_rx = now;
        if (!st.enabled) {
            // Hearing the protocol is proof of life on any detection path.
            st.enabled = true;
            note(now, "member-enabled", "port=" + std::to_string(in_port));
        }
        server_mac_ = pdu.actor.system.address;

        Lacpdu reply;
        reply.actor.system = switch_system();
        reply.actor.key = pdu.actor.key;  // mirror so the keys aggregate
        reply.actor.port = PortIdentity{0x0080, in_port};
        reply.actor.state.lacp_activity = false;  // passive responder
        reply.actor.state.lacp_timeout = true;    // keep the host on the fast cadence
        reply.actor.state.aggregation = true;
        reply.actor.state.synchronization = true;
        reply.actor.state.collecting = true;
        reply.actor.state.distributing = true;
        reply.partner = pdu.actor;  // echo our view of them
        reply.collector_max_delay = kDefaultCollectorMaxDelay;
        acts.lacp_replies.push_back({in_port, reply});
        return acts;
    }

    ++data_packet_ins_;
    note(now, "packet-in",
         "port=" + std::to_string(in_port) + " " + frame.conversation().to_string());

    // Learn the source location and give it a plain destination rule. The
    // bonded server is never learned as a single port; it is reached via
    // the member hash below.
    bool src_is_server = server_mac_ && frame.src == *server_mac_;
    if (!src_is_server) {
        auto it = mac_table_.find(frame.src);
        if (it == mac_table_.end() || it->second != in_port) {
            mac_table_[frame.src] = in_port;
            FlowEntry entry{frame.src, std::nullopt, in_port, now};
            std::erase_if(shadow_table_, [&](const FlowEntry& e) {
                return e.match_dst == frame.src && !e.match_src.has_value();
            });
            shadow_table_.push_back(entry);
            acts.adds.push_back({entry, false});
            note(now, "flow-installed",
                 "dst=" + frame.src.to_string() + " port=" + std::to_string(in_port));
        }
    }

    if (server_mac_ && frame.dst == *server_mac_) {
        std::vector<std::uint16_t> members = enabled_members();
        if (members.empty()) {
            note(now, "unroutable", "no enabled member for " + frame.conversation().to_string());
            acts.drops.push_back({frame.conversation()});
            return acts;
        }
        std::uint16_t member = hash_select_port(frame.conversation(), members);
        FlowEntry entry{frame.dst, frame.src, member, now};
        std::erase_if(shadow_table_, [&](const FlowEntry& e) {
            return e.match_dst == entry.match_dst && e.match_src == entry.match_src;
        });
        shadow_table_.push_back(entry);

        bool inject_here = inject_ == InjectMode::DuplicateOnReforward &&
                           purged_convs_.count(frame.conversation()) != 0;
        if (inject_here) {
            purged_convs_.erase(frame.conversation());
            injected_.emplace_back(now, frame.conversation());
            note(now, "duplicate-injected", frame.conversation().to_string());
        }
        acts.adds.push_back({entry, inject_here});
        note(now, "flow-installed",
             "dst=" + entry.match_dst.to_string() + " src=" + frame.src.to_string() +
                 " port=" + std::to_string(member));
        return acts;
    }

    auto dst_it = mac_table_.find(frame.dst);
    if (dst_it != mac_table_.end()) {
        FlowEntry entry{frame.dst, std::nullopt, dst_it->second, now};
        std::erase_if(shadow_table_, [&](const FlowEntry& e) {
            return e.match_dst == entry.match_dst && !e.match_src.has_value();
        });
        shadow_table_.push_back(entry);
        acts.adds.push_back({entry, false});
        note(now, "flow-installed",
             "dst=" + entry.match_dst.to_string() + " port=" + std::to_string(dst_it->second));
        return acts;
    }

    // Unknown unicast: flood the access side plus one hash-picked member,
    // never the ingress port. No rule is installed for an unknown address.
    PacketOutPorts out{frame, {}};
    for (std::uint16_t p : access_ports_) {
        if (p != in_port) {
            out.ports.push_back(p);
        }
    }
    std::vector<std::uint16_t> members = enabled_members();
    if (!members.empty()) {
        std::uint16_t member = hash_select_port(frame.conversation(), members);
        if (member != in_port) {
            out.ports.push_back(member);
        }
    }
    note(now, "flood", frame.conversation().to_string());
    acts.packet_outs.push_back(std::move(out));
    return acts;
}

ControllerActions ControllerCore::disable_member(SimTime now, std::uint16_t member_port,
                                                 const char* cause) {
    ControllerActions acts;
    SlaveState& st = slaves_[member_port];
    if (!st.enabled) {
        return acts;
    }
    st.enabled = false;
    note(now, "member-disabled", "port=" + std::to_string(member_port) + " cause=" +
                                     std::string(cause));

    std::size_t removed = 0;
    for (const FlowEntry& e : shadow_table_) {
        if (e.out_port == member_port) {
            ++removed;
            if (e.match_src.has_value()) {
                purged_convs_[ConversationId{*e.match_src, e.match_dst}] = true;
            }
        }
    }
    std::erase_if(shadow_table_,
                  [&](const FlowEntry& e) { return e.out_port == member_port; });
    if (removed > 0) {
        acts.deletes.push_back({member_port});
        note(now, "flows-purged",
             "port=" + std::to_string(member_port) + " removed=" + std::to_string(removed));
    }
    return acts;
}

ControllerActions ControllerCore::on_port_status(SimTime now, std::uint16_t member_port,
                                                 bool up) {
    ControllerActions acts;
    if (!is_member(member_port)) {
        return acts;
    }
    if (detection_ == DetectionMode::Lacpdu) {
        return acts;  // monitor path not authoritative in this mode
    }
    if (!up) {
        return disable_member(now, member_port, "monitor");
    }
    SlaveState& st = slaves_[member_port];
    if (!st.enabled && st.heard) {
        st.enabled = true;
        note(now, "member-enabled", "port=" + std::to_string(member_port));
    }
    return acts;
}

ControllerActions ControllerCore::on_timeout_check(SimTime now, std::uint16_t member_port) {
    ControllerActions acts;
    if (!is_member(member_port)) {
        return acts;
    }
    if (detection_ == DetectionMode::Monitor) {
        return acts;  // LACPDU silence not authoritative in this mode
    }
    const SlaveState& st = slaves_[member_port];
    if (!st.enabled || !st.heard) {
        return acts;
    }
    if (now - st.last_rx < lacpdu_timeout_) {
        return acts;  // refreshed since this probe was scheduled
    }
    return disable_member(now, member_port, "lacpdu-timeout");
}

std::vector<FlowEntry> ControllerCore::flow_table_dump() const {
    std::vector<FlowEntry> rows = shadow_table_;
    std::sort(rows.begin(), rows.end(), entry_less);
    return rows;
}

std::string flow_table_to_csv(const std::vector<FlowEntry>& table) {
    std::ostringstream out;
    out << "dst_mac,out_port,installed_at\n";
    for (const FlowEntry& e : table) {
        out << e.match_dst.to_string() << ',' << e.out_port << ',' << e.installed_at.to_string()
            << '\n';
    }
    return out.str();
}

}  // namespace lagsim
