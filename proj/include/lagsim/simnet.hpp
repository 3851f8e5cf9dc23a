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
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "lagsim/aggregator.hpp"
#include "lagsim/controller.hpp"
#include "lagsim/core.hpp"
#include "lagsim/lacp.hpp"
#include "lagsim/link_monitor.hpp"

namespace lagsim {

enum class BandwidthMode {
    PerLink,  // every aggregated link serializes independently at capacity
    Shared,   // all aggregated links draw from one pool of capacity total
};
BandwidthMode parse_bandwidth_mode(const std::string& name);

struct TopologySpec {
    int lag_width = 2;
    int client_count = 3;
    std::int64_t link_capacity_bps = 10'000'000;
    SimTime link_delay = SimTime::from_millis(1);
    BandwidthMode bandwidth_mode = BandwidthMode::PerLink;
    SimTime monitor_poll_interval = SimTime::from_millis(100);
    DetectionMode detection = DetectionMode::Both;
    InjectMode inject = InjectMode::None;
    DistributionPolicy policy = DistributionPolicy::XorHash;
    // Optional per-client MAC override (size must equal client_count);
    // empty means the canonical assignment.
    std::vector<MacAddress> client_mac_override;
};

// Throws ConfigError naming the offending field.
void validate_topology_spec(const TopologySpec& spec);

// Plain key=value lines; '#' starts a comment. Unknown keys are errors.
TopologySpec parse_topology_config(const std::string& text);

// Canonical scenario addresses: the bonded server h1 presents one virtual
// MAC; client hN gets its own address derived from its host number.
MacAddress bond_mac();
MacAddress canonical_client_mac(int host_number);
std::string host_label(int host_number);  // "h2", "h3", ...

inline constexpr std::uint32_t kPingPayloadOctets = 64;
inline constexpr std::uint32_t kBulkPayloadOctets = 1500;
inline constexpr std::uint32_t kLinkQueueLimit = 1000;
inline constexpr int kAccessCapacityFactor = 10;

// One-way latency of the switch-controller channel, each direction.
SimTime controller_link_delay();

enum class EventKind { FrameArrival, Timer, LinkTransition, TrafficTick, ScenarioAction };
const char* to_string(EventKind kind);

// Deterministic discrete-event core: events run in (time, seq) order with
// seq assigned at scheduling time, so identical inputs replay identically.
// Every executed event folds into a running FNV-1a digest; full trace
// recording is opt-in for tests.
class EventLoop {
  public:
    explicit EventLoop(std::uint64_t seed);

    SimTime now() const { return now_; }

    // Throws SimulationError if `at` is in the past.
    std::uint64_t schedule(SimTime at, EventKind kind, std::string detail,
                           std::function<void()> fn);

    // Executes all events with time <= until, then advances the clock to
    // `until`. Callable repeatedly with growing horizons.
    void run_until(SimTime until);

    bool pending() const { return !queue_.empty(); }
    std::uint64_t executed() const { return executed_; }
    std::uint64_t trace_digest() const { return digest_; }

    void set_recording(bool on) { recording_ = on; }
    const std::vector<std::string>& recorded_trace() const { return trace_; }

    std::mt19937_64& rng() { return rng_; }

  private:
    struct Entry {
        SimTime time;
        std::uint64_t seq;
        EventKind kind;
        std::string detail;
        std::function<void()> fn;
    };
    struct Later {
        bool operator()(const Entry& a, const Entry& b) const {
            if (a.time != b.time) {
                return b.time < a.time;
            }
            return b.seq < a.seq;
        }
    };

    std::priority_queue<Entry, std::vector<Entry>, Later> queue_;
    SimTime now_{};
    std::uint64_t next_seq_ = 0;
    std::uint64_t executed_ = 0;
    std::uint64_t digest_;
    bool recording_ = false;
    std::vector<std::string> trace_;
    std::mt19937_64 rng_;
};

struct LinkCounters {
    std::uint64_t sends = 0;
    std::uint64_t delivered = 0;
    std::uint64_t dropped_dead = 0;
    std::uint64_t dropped_queue = 0;
    std::uint64_t in_flight = 0;
};

// Scenario-level event row for reports (events.csv).
struct ReportEvent {
    SimTime time;
    std::string kind;
    std::string detail;
};

struct PingSample {
    std::uint64_t seq = 0;
    SimTime sent_at{};
    std::optional<SimTime> rtt{};
    bool lost = false;
    std::uint32_t duplicate_replies = 0;
};

class Simulation;

// Assembles the experiment world: server h1 bonded over lag_width links to
// one switch, client_count single-homed clients, and the controller on its
// own channel. LACP runs actively on the server bond from t=0.
std::unique_ptr<Simulation> build_topology(const TopologySpec& spec, std::uint64_t seed);

// Processes events up to `until` (simulated). Throws ConfigError when
// until is not positive.
void run(Simulation& sim, SimTime until);

// At time `at`, the link goes down and its in-flight frames are dropped.
// Killing an already-down link is a no-op. Unknown link or past time is a
// ConfigError. The first kill snapshots the flow table for reporting.
void schedule_link_kill(Simulation& sim, std::uint16_t link_id, SimTime at);
void schedule_link_restore(Simulation& sim, std::uint16_t link_id, SimTime at);

// Echo traffic from one client to the server every `interval`, first send
// phase-jittered within one interval after `start`. A request with no
// reply within 10 intervals is marked lost.
void ping_generator(Simulation& sim, int client_index, SimTime interval, SimTime start,
                    SimTime end);

// Fixed-rate bulk frames from one client to the server at `demand` bits
// per simulated second; delivery is recorded at the server per 1 s window.
void bulk_generator(Simulation& sim, int client_index, std::int64_t demand_bps, SimTime start,
                    SimTime end);

class Simulation {
  public:
    EventLoop& loop() { return loop_; }
    const EventLoop& loop() const { return loop_; }
    const TopologySpec& spec() const { return spec_; }

    const ControllerCore& controller() const { return controller_; }
    const CollectorState& server_collector() const { return collector_; }
    const Distributor& server_distributor() const { return distributor_; }

    // Member links are 1..lag_width; access link of client j (1-based) is
    // lag_width + j. Identical to the switch port numbering.
    const LinkCounters& link_counters(std::uint16_t link_id, int direction) const;
    SimTime link_last_send(std::uint16_t link_id, int direction) const;
    bool link_up(std::uint16_t link_id) const;

    const std::vector<PingSample>& ping_samples(int client_index) const;
    // client index -> window start (whole seconds) -> delivered payload bits.
    const std::map<int, std::map<std::int64_t, std::int64_t>>& throughput_bits() const {
        return rx_window_bits_;
    }

    const std::vector<ReportEvent>& report_events() const { return report_events_; }
    const std::vector<FlowEntry>& flows_before_kill() const { return flows_before_; }
    std::vector<FlowEntry> flow_table_now() const { return controller_.flow_table_dump(); }

    std::uint64_t collector_rejected() const { return collector_rejected_; }
    std::uint64_t reply_unroutable() const { return reply_unroutable_; }
    std::uint64_t pending_dropped() const { return pending_dropped_; }
    std::uint64_t pending_at_end() const;
    std::uint64_t late_replies() const { return late_replies_; }

    // Opt-in per-delivery log for capacity assertions in tests.
    void record_deliveries(bool on) { record_deliveries_ = on; }
    const std::vector<std::pair<SimTime, std::uint32_t>>& deliveries(std::uint16_t link_id,
                                                                     int direction) const;

    int switch_port_of_client(int client_index) const;
    MacAddress client_mac(int client_index) const;

  private:
    friend std::unique_ptr<Simulation> build_topology(const TopologySpec&, std::uint64_t);
    friend void run(Simulation&, SimTime);
    friend void schedule_link_kill(Simulation&, std::uint16_t, SimTime);
    friend void schedule_link_restore(Simulation&, std::uint16_t, SimTime);
    friend void ping_generator(Simulation&, int, SimTime, SimTime, SimTime);
    friend void bulk_generator(Simulation&, int, std::int64_t, SimTime, SimTime);

    explicit Simulation(const TopologySpec& spec, std::uint64_t seed);

    // ---- wiring helpers (definitions in simnet.cpp) ----
    // Shared-capacity arbitration: one round-robin server per direction
    // over per-member queues, so simultaneous flows get equal shares no
    // matter how their arrivals interleave.
    struct PoolItem {
        Frame frame;
        std::uint64_t epoch = 0;
    };
    struct PoolDir {
        bool busy = false;
        std::size_t rr = 0;  // next member queue the server considers
        std::vector<std::deque<PoolItem>> q;
    };
    struct SharedPool {
        PoolDir dir[2];
    };

    struct Endpoint {
        enum class Kind { Server, Switch, Client } kind;
        std::uint16_t index;  // NIC number, switch port, or client index
    };

    struct Link {
        std::uint16_t id = 0;
        std::int64_t capacity_bps = 0;
        SimTime delay{};
        bool up = true;
        std::uint64_t epoch = 0;
        bool pooled = false;
        Endpoint a{}, b{};
        SimTime busy_until[2]{};
        std::deque<SimTime> tx_queue[2];  // serialization completion times
        LinkCounters counters[2];
        SimTime last_send[2]{};
        std::vector<std::pair<SimTime, std::uint32_t>> delivery_log[2];
    };

    struct MemberPort {
        PortContext ctx;
        MacAddress port_mac{};
        MonitorConfig host_monitor{};
        std::uint64_t periodic_gen = 0;
        std::uint64_t expiry_gen = 0;
    };

    struct Client {
        MacAddress mac{};
        std::uint16_t link_id = 0;
        std::vector<PingSample> pings;
        std::map<std::uint64_t, std::size_t> ping_index;
        std::uint64_t next_ping_seq = 0;
        std::uint64_t next_bulk_seq = 0;
    };

    Link& link_ref(std::uint16_t link_id);
    const Link& link_cref(std::uint16_t link_id) const;
    void send_on_link(std::uint16_t link_id, int direction, const Frame& frame);
    void pool_service(int direction);
    void deliver(std::uint16_t link_id, int direction, Frame frame, std::uint64_t epoch);
    void apply_kill(std::uint16_t link_id);
    void apply_restore(std::uint16_t link_id);

    void switch_on_frame(std::uint16_t port, const Frame& frame);
    void switch_apply(const ControllerActions& actions);
    void switch_release_pending(const ConversationId& conv, std::uint16_t out_port,
                                bool duplicate_first);
    void switch_forward(const Frame& frame, std::uint16_t out_port);
    const FlowEntry* switch_lookup(const MacAddress& dst, const MacAddress& src) const;
    void schedule_packet_in(std::uint16_t port, const Frame& frame);
    void schedule_timeout_check(std::uint16_t member_port, SimTime at);
    void drain_controller_notes();

    void server_on_frame(std::uint16_t nic, const Frame& frame);
    void server_handle_event(std::uint16_t nic, const PortEvent& event);
    void server_run_selection();
    void server_mux_drain();
    void server_apply_actions(std::uint16_t nic, const std::vector<PortAction>& actions);
    void server_send_pdu(std::uint16_t nic, const Lacpdu& pdu);
    void server_send_reply(const Frame& request);
    void arm_periodic(std::uint16_t nic);
    void arm_expiry(std::uint16_t nic);
    void drain_remaps();
    PortIdentity member_identity(std::uint16_t nic) const;

    void client_on_frame(int client_index, const Frame& frame);
    void start_monitors();
    void push_event(std::string kind, std::string detail);

    TopologySpec spec_;
    EventLoop loop_;
    ControllerCore controller_;
    SharedPool pool_;
    std::vector<Link> links_;

    // switch state
    std::vector<FlowEntry> switch_table_;
    std::map<ConversationId, std::vector<Frame>> pending_;
    std::vector<MonitorConfig> switch_monitors_;  // per member, index nic-1
    std::uint64_t ctl_seq_ = 0;

    // server state
    std::vector<MemberPort> ports_;  // index nic-1
    Distributor distributor_;
    CollectorState collector_;
    std::uint64_t lacp_seq_ = 0;
    std::size_t remaps_drained_ = 0;

    std::vector<Client> clients_;

    std::vector<ReportEvent> report_events_;
    std::vector<FlowEntry> flows_before_;
    bool kill_seen_ = false;

    std::uint64_t collector_rejected_ = 0;
    std::uint64_t reply_unroutable_ = 0;
    std::uint64_t pending_dropped_ = 0;
    std::uint64_t late_replies_ = 0;
    bool record_deliveries_ = false;
    std::map<int, std::map<std::int64_t, std::int64_t>> rx_window_bits_;
};

}  // namespace lagsim
