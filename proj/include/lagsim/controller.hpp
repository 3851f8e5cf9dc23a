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
#include <optional>
#include <string>
#include <vector>

#include "lagsim/core.hpp"
#include "lagsim/lacp.hpp"

namespace lagsim {

// Which failure-detection path may disable a LAG member at the switch:
// the polled link monitor, the LACPDU receive timeout, or whichever of the
// two fires first.
enum class DetectionMode { Monitor, Lacpdu, Both };
DetectionMode parse_detection_mode(const std::string& name);

enum class InjectMode { None, DuplicateOnReforward };
InjectMode parse_inject_mode(const std::string& name);

// One switch forwarding rule as the controller tracks it. match_src narrows
// server-bound entries to a single conversation so each client keeps its
// own rule toward the bond and a member death purges precisely those.
struct FlowEntry {
    MacAddress match_dst{};
    std::optional<MacAddress> match_src{};
    std::uint16_t out_port = 0;
    SimTime installed_at{};
};

// Per-LAG-member state at the controller.
struct SlaveState {
    bool enabled = false;
    bool heard = false;
    SimTime last_rx{};
};

// Control-channel messages from controller to switch, applied in struct
// order: deletes, pending drops, installs, explicit sends, LACPDU replies.
struct FlowDeleteByOutPort {
    std::uint16_t out_port;
};

struct FlowAdd {
    FlowEntry entry;
    // Fault injection: the switch emits the first buffered frame this
    // install releases twice.
    bool duplicate_first_release = false;
};

struct DropPending {
    ConversationId conversation;
};

struct PacketOutPorts {
    Frame frame;
    std::vector<std::uint16_t> ports;
};

struct LacpReplyOut {
    std::uint16_t port;
    Lacpdu pdu;
};

struct ControllerActions {
    std::vector<FlowDeleteByOutPort> deletes;
    std::vector<DropPending> drops;
    std::vector<FlowAdd> adds;
    std::vector<PacketOutPorts> packet_outs;
    std::vector<LacpReplyOut> lacp_replies;

    bool empty() const {
        return deletes.empty() && drops.empty() && adds.empty() && packet_outs.empty() &&
               lacp_replies.empty();
    }
};

// Notable occurrences, drained by the simulator into its event log.
struct ControllerNote {
    SimTime time;
    std::string kind;
    std::string detail;
};

// The switch-side control application: terminates LACPDUs, learns MAC
// locations, installs per-destination flow entries, and purges flows when
// a LAG member dies. Pure logic: every input returns actions; the
// simulator owns timers and the control-channel delay.
class ControllerCore {
  public:
    ControllerCore(std::vector<std::uint16_t> member_ports,
                   std::vector<std::uint16_t> access_ports, DetectionMode detection,
                   InjectMode inject, SimTime lacpdu_timeout = LacpTiming::short_timeout());

    // A frame the switch had no rule for (or a LACPDU, which never has
    // one). LACPDUs refresh SlaveState and get a crafted reply on the same
    // member port; data frames install flows and pick LAG members by hash.
    ControllerActions on_packet_in(SimTime now, std::uint16_t in_port, const Frame& frame);

    // Link monitor verdict for a member port, forwarded by the switch.
    ControllerActions on_port_status(SimTime now, std::uint16_t member_port, bool up);

    // Scheduled LACPDU-silence probe for a member port. No-op unless the
    // silence window has really elapsed.
    ControllerActions on_timeout_check(SimTime now, std::uint16_t member_port);

    // Deterministic table listing, sorted by destination then source.
    std::vector<FlowEntry> flow_table_dump() const;

    const std::map<std::uint16_t, SlaveState>& slaves() const { return slaves_; }
    std::vector<std::uint16_t> enabled_members() const;
    std::optional<MacAddress> server_mac() const { return server_mac_; }

    const std::vector<std::pair<SimTime, ConversationId>>& injected() const { return injected_; }
    std::uint64_t lacpdus_consumed() const { return lacpdus_consumed_; }
    std::uint64_t malformed_dropped() const { return malformed_dropped_; }
    std::uint64_t data_packet_ins() const { return data_packet_ins_; }

    std::vector<ControllerNote> take_notes();

    static SystemId switch_system();

  private:
    bool is_member(std::uint16_t port) const;
    ControllerActions disable_member(SimTime now, std::uint16_t member_port, const char* cause);
    void note(SimTime now, std::string kind, std::string detail);

    std::vector<std::uint16_t> member_ports_;
    std::vector<std::uint16_t> access_ports_;
    DetectionMode detection_;
    InjectMode inject_;
    SimTime lacpdu_timeout_;

    std::map<std::uint16_t, SlaveState> slaves_;
    std::map<MacAddress, std::uint16_t> mac_table_;
    std::vector<FlowEntry> shadow_table_;
    std::optional<MacAddress> server_mac_;
    std::map<ConversationId, bool> purged_convs_;
    std::vector<std::pair<SimTime, ConversationId>> injected_;
    std::vector<ControllerNote> notes_;
    std::uint64_t lacpdus_consumed_ = 0;
    std::uint64_t malformed_dropped_ = 0;
    std::uint64_t data_packet_ins_ = 0;
};

// CSV rows for a flow table dump: dst_mac,out_port,installed_at.
// Conversation-scoped entries project onto their destination column.
std::string flow_table_to_csv(const std::vector<FlowEntry>& table);

}  // namespace lagsim
