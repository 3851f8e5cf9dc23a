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
#include "lagsim/simnet.hpp"

#include <algorithm>
#include <sstream>

#include "lagsim/errors.hpp"

namespace lagsim {
namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

std::uint64_t fnv1a_fold(std::uint64_t digest, const std::string& line) {
    for (unsigned char c : line) {
        digest ^= c;
        digest *= kFnvPrime;
    }
    digest ^= '\n';
    digest *= kFnvPrime;
    return digest;
}

SimTime serialization_time(std::uint32_t payload_octets, std::int64_t capacity_bps) {
    std::int64_t bits = static_cast<std::int64_t>(payload_octets) * 8;
    std::int64_t micros = (bits * 1'000'000 + capacity_bps - 1) / capacity_bps;
    return SimTime::from_micros(micros);
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return "";
    }
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::int64_t parse_int_field(const std::string& field, const std::string& value) {
    try {
        std::size_t used = 0;
        std::int64_t v = std::stoll(value, &used);
        if (used != value.size()) {
            throw ConfigError(field, "trailing characters in '" + value + "'");
        }
        return v;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError(field, "expected an integer, got '" + value + "'");
    }
}

double parse_double_field(const std::string& field, const std::string& value) {
    try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) {
            throw ConfigError(field, "trailing characters in '" + value + "'");
        }
        return v;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError(field, "expected a number, got '" + value + "'");
    }
}

}  // namespace

BandwidthMode parse_bandwidth_mode(const std::string& name) {
    if (name == "per-link") {
        return BandwidthMode::PerLink;
    }
    if (name == "shared") {
        return BandwidthMode::Shared;
    }
    throw ConfigError("mode", "expected per-link or shared, got '" + name + "'");
}

void validate_topology_spec(const TopologySpec& spec) {
    if (spec.lag_width < 1 || spec.lag_width > 64) {
        throw ConfigError("lag_width", "must be in [1, 64], got " + std::to_string(spec.lag_width));
    }
    if (spec.client_count < 1 || spec.client_count > 200) {
        throw ConfigError("client_count",
                          "must be in [1, 200], got " + std::to_string(spec.client_count));
    }
    if (spec.link_capacity_bps <= 0) {
        throw ConfigError("link_capacity",
                          "must be positive, got " + std::to_string(spec.link_capacity_bps));
    }
    if (spec.link_delay < SimTime{}) {
        throw ConfigError("link_delay", "must be non-negative, got " + spec.link_delay.to_string());
    }
    if (spec.monitor_poll_interval <= SimTime{}) {
        throw ConfigError("poll_interval",
                          "must be positive, got " + spec.monitor_poll_interval.to_string());
    }
    if (!spec.client_mac_override.empty()) {
        if (spec.client_mac_override.size() != static_cast<std::size_t>(spec.client_count)) {
            throw ConfigError("client_macs", "override size must equal client_count");
        }
        for (std::size_t i = 0; i < spec.client_mac_override.size(); ++i) {
            if (spec.client_mac_override[i] == bond_mac()) {
                throw ConfigError("client_macs", "client MAC collides with the server bond MAC");
            }
            for (std::size_t j = i + 1; j < spec.client_mac_override.size(); ++j) {
                if (spec.client_mac_override[i] == spec.client_mac_override[j]) {
                    throw ConfigError("client_macs", "duplicate client MAC " +
                                                         spec.client_mac_override[i].to_string());
                }
            }
        }
    }
}

TopologySpec parse_topology_config(const std::string& text) {
    TopologySpec spec;
    std::istringstream in(text);
    std::string raw;
    while (std::getline(in, raw)) {
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config", "expected key=value, got '" + line + "'");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key == "lag_width") {
            spec.lag_width = static_cast<int>(parse_int_field(key, value));
        } else if (key == "client_count") {
            spec.client_count = static_cast<int>(parse_int_field(key, value));
        } else if (key == "link_capacity") {
            spec.link_capacity_bps = parse_int_field(key, value);
        } else if (key == "link_delay") {
            spec.link_delay = SimTime::from_seconds(parse_double_field(key, value));
        } else if (key == "poll_interval") {
            spec.monitor_poll_interval = SimTime::from_seconds(parse_double_field(key, value));
        } else if (key == "bandwidth_mode") {
            spec.bandwidth_mode = parse_bandwidth_mode(value);
        } else if (key == "detection") {
            spec.detection = parse_detection_mode(value);
        } else if (key == "inject") {
            spec.inject = parse_inject_mode(value);
        } else if (key == "policy") {
            spec.policy = parse_distribution_policy(value);
        } else {
            throw ConfigError(key, "unknown topology field");
        }
    }
    validate_topology_spec(spec);
    return spec;
}

MacAddress bond_mac() { return MacAddress{{0x00, 0x00, 0x00, 0x00, 0x00, 0x11}}; }

MacAddress canonical_client_mac(int host_number) {
    if (host_number >= 2 && host_number <= 9) {
        return MacAddress{{0x00, 0x00, 0x00, 0x00, 0x00,
                           static_cast<std::uint8_t>(0x11 * host_number)}};
    }
    // Beyond the canonical range the pattern continues in the next octet.
    return MacAddress{{0x00, 0x00, 0x00, 0x00, 0x01, static_cast<std::uint8_t>(host_number)}};
}

std::string host_label(int host_number) { return "h" + std::to_string(host_number); }

SimTime controller_link_delay() { return SimTime::from_millis(1); }

const char* to_string(EventKind kind) {
    switch (kind) {
        case EventKind::FrameArrival:
            return "frame-arrival";
        case EventKind::Timer:
            return "timer";
        case EventKind::LinkTransition:
            return "link-transition";
        case EventKind::TrafficTick:
            return "traffic-tick";
        case EventKind::ScenarioAction:
            return "scenario-action";
    }
    return "unknown";
}

EventLoop::EventLoop(std::uint64_t seed) : digest_(kFnvOffset), rng_(seed) {}

std::uint64_t EventLoop::schedule(SimTime at, EventKind kind, std::string detail,
                                  std::function<void()> fn) {
    if (at < now_) {
        throw SimulationError("event scheduled in the past: " + at.to_string() + " < " +
                              now_.to_string());
    }
    std::uint64_t seq = next_seq_++;
    queue_.push(Entry{at, seq, kind, std::move(detail), std::move(fn)});
    return seq;
}

void EventLoop::run_until(SimTime until) {
    while (!queue_.empty() && queue_.top().time <= until) {
        // priority_queue exposes only a const top; moving out right before
        // pop is safe because nothing else can observe the entry.
        Entry e = std::move(const_cast<Entry&>(queue_.top()));
        queue_.pop();
        now_ = e.time;
        std::string line = e.time.to_string() + "|" + to_string(e.kind) + "|" + e.detail;
        digest_ = fnv1a_fold(digest_, line);
        if (recording_) {
            trace_.push_back(std::move(line));
        }
        ++executed_;
        e.fn();
    }
    if (now_ < until) {
        now_ = until;
    }
}

// ---------------------------------------------------------------------------
// Simulation wiring
// ---------------------------------------------------------------------------

namespace {

std::vector<std::uint16_t> member_port_list(const TopologySpec& spec) {
    std::vector<std::uint16_t> out;
    for (int i = 1; i <= spec.lag_width; ++i) {
        out.push_back(static_cast<std::uint16_t>(i));
    }
    return out;
}

std::vector<std::uint16_t> access_port_list(const TopologySpec& spec) {
    std::vector<std::uint16_t> out;
    for (int j = 1; j <= spec.client_count; ++j) {
        out.push_back(static_cast<std::uint16_t>(spec.lag_width + j));
    }
    return out;
}

MacAddress server_nic_mac(std::uint16_t nic) {
    return MacAddress{{0x00, 0x00, 0x00, 0x01, 0x00, static_cast<std::uint8_t>(nic)}};
}

MacAddress switch_port_mac(std::uint16_t port) {
    return MacAddress{{0x00, 0x00, 0x00, 0x00, 0x02, static_cast<std::uint8_t>(port)}};
}

}  // namespace

Simulation::Simulation(const TopologySpec& spec, std::uint64_t seed)
    : spec_(spec),
      loop_(seed),
      controller_(member_port_list(spec), access_port_list(spec), spec.detection, spec.inject),
      distributor_(spec.policy) {
    int L = spec_.lag_width;

    for (int i = 1; i <= L; ++i) {
        Link link;
        link.id = static_cast<std::uint16_t>(i);
        link.capacity_bps = spec_.link_capacity_bps;
        link.delay = spec_.link_delay;
        link.pooled = spec_.bandwidth_mode == BandwidthMode::Shared;
        link.a = {Endpoint::Kind::Server, static_cast<std::uint16_t>(i)};
        link.b = {Endpoint::Kind::Switch, static_cast<std::uint16_t>(i)};
        links_.push_back(std::move(link));
    }
    for (int j = 1; j <= spec_.client_count; ++j) {
        Link link;
        link.id = static_cast<std::uint16_t>(L + j);
        link.capacity_bps = spec_.link_capacity_bps * kAccessCapacityFactor;
        link.delay = spec_.link_delay;
        link.a = {Endpoint::Kind::Client, static_cast<std::uint16_t>(j)};
        link.b = {Endpoint::Kind::Switch, static_cast<std::uint16_t>(L + j)};
        links_.push_back(std::move(link));
    }

    for (int i = 1; i <= L; ++i) {
        MemberPort port;
        port.ctx.my_info.system = SystemId{100, bond_mac()};
        port.ctx.my_info.key = LagKey{1};
        port.ctx.my_info.port = PortIdentity{0x0080, static_cast<std::uint16_t>(i)};
        port.ctx.my_info.state.lacp_activity = true;
        port.ctx.my_info.state.lacp_timeout = true;
        port.ctx.my_info.state.aggregation = true;
        port.port_mac = server_nic_mac(static_cast<std::uint16_t>(i));
        port.host_monitor = make_monitor(spec_.monitor_poll_interval, LinkState::Up, SimTime{});
        ports_.push_back(std::move(port));
        switch_monitors_.push_back(
            make_monitor(spec_.monitor_poll_interval, LinkState::Up, SimTime{}));
    }
    distributor_.aggregator().id = 0;
    distributor_.aggregator().mac = bond_mac();
    pool_.dir[0].q.resize(static_cast<std::size_t>(L));
    pool_.dir[1].q.resize(static_cast<std::size_t>(L));

    for (int j = 1; j <= spec_.client_count; ++j) {
        Client c;
        c.mac = spec_.client_mac_override.empty() ? canonical_client_mac(j + 1)
                                                  : spec_.client_mac_override[j - 1];
        c.link_id = static_cast<std::uint16_t>(L + j);
        clients_.push_back(std::move(c));
    }
}

PortIdentity Simulation::member_identity(std::uint16_t nic) const {
    return ports_[nic - 1].ctx.my_info.port;
}

Simulation::Link& Simulation::link_ref(std::uint16_t link_id) {
    if (link_id < 1 || link_id > links_.size()) {
        throw ConfigError("link", "unknown link id " + std::to_string(link_id));
    }
    return links_[link_id - 1];
}

const Simulation::Link& Simulation::link_cref(std::uint16_t link_id) const {
    if (link_id < 1 || link_id > links_.size()) {
        throw ConfigError("link", "unknown link id " + std::to_string(link_id));
    }
    return links_[link_id - 1];
}

const LinkCounters& Simulation::link_counters(std::uint16_t link_id, int direction) const {
    return link_cref(link_id).counters[direction & 1];
}

SimTime Simulation::link_last_send(std::uint16_t link_id, int direction) const {
    return link_cref(link_id).last_send[direction & 1];
}

bool Simulation::link_up(std::uint16_t link_id) const { return link_cref(link_id).up; }

const std::vector<PingSample>& Simulation::ping_samples(int client_index) const {
    if (client_index < 1 || client_index > static_cast<int>(clients_.size())) {
        throw ConfigError("client", "unknown client index " + std::to_string(client_index));
    }
    return clients_[client_index - 1].pings;
}

const std::vector<std::pair<SimTime, std::uint32_t>>& Simulation::deliveries(
    std::uint16_t link_id, int direction) const {
    return link_cref(link_id).delivery_log[direction & 1];
}

int Simulation::switch_port_of_client(int client_index) const {
    return spec_.lag_width + client_index;
}

MacAddress Simulation::client_mac(int client_index) const {
    if (client_index < 1 || client_index > static_cast<int>(clients_.size())) {
        throw ConfigError("client", "unknown client index " + std::to_string(client_index));
    }
    return clients_[client_index - 1].mac;
}

std::uint64_t Simulation::pending_at_end() const {
    std::uint64_t n = 0;
    for (const auto& [conv, frames] : pending_) {
        n += frames.size();
    }
    return n;
}

void Simulation::push_event(std::string kind, std::string detail) {
    report_events_.push_back({loop_.now(), std::move(kind), std::move(detail)});
}

void Simulation::drain_controller_notes() {
    for (ControllerNote& n : controller_.take_notes()) {
        report_events_.push_back({n.time, std::move(n.kind), std::move(n.detail)});
    }
}

// ---- link data path ----

void Simulation::send_on_link(std::uint16_t link_id, int direction, const Frame& frame) {
    Link& link = link_ref(link_id);
    int dir = direction & 1;
    LinkCounters& c = link.counters[dir];
    ++c.sends;
    link.last_send[dir] = loop_.now();

    if (!link.up) {
        ++c.dropped_dead;
        return;
    }
    std::uint64_t epoch = link.epoch;
    std::string detail = "link " + std::to_string(link_id) + (dir == 0 ? " a>b " : " b>a ") +
                         frame.conversation().to_string() + " #" + std::to_string(frame.seq);

    // Control frames ride a strict-priority lane: they never queue behind
    // data and are never drop-tailed, the way real ports treat link-local
    // protocol frames. Their capacity share is negligible and ignored.
    if (frame.kind == FrameKind::Lacpdu) {
        SimTime done =
            loop_.now() + serialization_time(frame.payload_len, link.capacity_bps);
        ++c.in_flight;
        loop_.schedule(done + link.delay, EventKind::FrameArrival, std::move(detail),
                       [this, link_id, dir, frame, epoch] {
                           deliver(link_id, dir, frame, epoch);
                       });
        return;
    }

    if (link.pooled) {
        auto& q = pool_.dir[dir].q[link_id - 1];
        if (q.size() >= kLinkQueueLimit) {
            ++c.dropped_queue;
            return;
        }
        q.push_back(PoolItem{frame, epoch});
        ++c.in_flight;
        if (!pool_.dir[dir].busy) {
            pool_service(dir);
        }
        return;
    }

    auto& queue = link.tx_queue[dir];
    while (!queue.empty() && queue.front() <= loop_.now()) {
        queue.pop_front();
    }
    if (queue.size() >= kLinkQueueLimit) {
        ++c.dropped_queue;
        return;
    }
    SimTime start = std::max(loop_.now(), link.busy_until[dir]);
    SimTime done = start + serialization_time(frame.payload_len, link.capacity_bps);
    link.busy_until[dir] = done;
    queue.push_back(done);
    ++c.in_flight;
    loop_.schedule(done + link.delay, EventKind::FrameArrival, std::move(detail),
                   [this, link_id, dir, frame, epoch] { deliver(link_id, dir, frame, epoch); });
}

void Simulation::pool_service(int direction) {
    PoolDir& pd = pool_.dir[direction];
    for (std::size_t step = 0; step < pd.q.size(); ++step) {
        std::size_t i = (pd.rr + step) % pd.q.size();
        if (pd.q[i].empty()) {
            continue;
        }
        PoolItem item = std::move(pd.q[i].front());
        pd.q[i].pop_front();
        pd.rr = (i + 1) % pd.q.size();
        pd.busy = true;

        std::uint16_t link_id = static_cast<std::uint16_t>(i + 1);
        Link& link = links_[i];
        SimTime done =
            loop_.now() + serialization_time(item.frame.payload_len, link.capacity_bps);
        std::string detail = "pool link " + std::to_string(link_id) +
                             (direction == 0 ? " a>b " : " b>a ") +
                             item.frame.conversation().to_string() + " #" +
                             std::to_string(item.frame.seq);
        loop_.schedule(done, EventKind::FrameArrival, std::move(detail),
                       [this, direction, link_id, item] {
                           Link& l = links_[link_id - 1];
                           loop_.schedule(
                               loop_.now() + l.delay, EventKind::FrameArrival,
                               "pool deliver link " + std::to_string(link_id),
                               [this, link_id, direction, item] {
                                   deliver(link_id, direction, item.frame, item.epoch);
                               });
                           pool_.dir[direction].busy = false;
                           pool_service(direction);
                       });
        return;
    }
    pd.busy = false;
}

void Simulation::deliver(std::uint16_t link_id, int direction, Frame frame, std::uint64_t epoch) {
    Link& link = link_ref(link_id);
    LinkCounters& c = link.counters[direction];
    --c.in_flight;
    if (epoch != link.epoch || !link.up) {
        ++c.dropped_dead;
        return;
    }
    ++c.delivered;
    if (record_deliveries_) {
        link.delivery_log[direction].emplace_back(loop_.now(), frame.payload_len);
    }
    const Endpoint& ep = direction == 0 ? link.b : link.a;
    switch (ep.kind) {
        case Endpoint::Kind::Server:
            server_on_frame(ep.index, frame);
            break;
        case Endpoint::Kind::Switch:
            switch_on_frame(ep.index, frame);
            break;
        case Endpoint::Kind::Client:
            client_on_frame(ep.index, frame);
            break;
    }
}

void Simulation::apply_kill(std::uint16_t link_id) {
    Link& link = link_ref(link_id);
    if (!link.up) {
        return;
    }
    if (!kill_seen_) {
        kill_seen_ = true;
        flows_before_ = controller_.flow_table_dump();
    }
    link.up = false;
    ++link.epoch;
    for (int d = 0; d < 2; ++d) {
        link.tx_queue[d].clear();
        link.busy_until[d] = loop_.now();
        if (link.pooled) {
            auto& q = pool_.dir[d].q[link_id - 1];
            link.counters[d].dropped_dead += q.size();
            link.counters[d].in_flight -= q.size();
            q.clear();
        }
    }
    push_event("link-kill", "link " + std::to_string(link_id));
}

void Simulation::apply_restore(std::uint16_t link_id) {
    Link& link = link_ref(link_id);
    if (link.up) {
        return;
    }
    link.up = true;
    for (int d = 0; d < 2; ++d) {
        if (!link.pooled) {
            link.busy_until[d] = loop_.now();
        }
    }
    push_event("link-restore", "link " + std::to_string(link_id));
}

// ---- switch ----

const FlowEntry* Simulation::switch_lookup(const MacAddress& dst, const MacAddress& src) const {
    const FlowEntry* generic = nullptr;
    for (const FlowEntry& e : switch_table_) {
        if (e.match_dst != dst) {
            continue;
        }
        if (e.match_src.has_value()) {
            if (*e.match_src == src) {
                return &e;  // conversation-scoped rules win
            }
            continue;
        }
        generic = &e;
    }
    return generic;
}

void Simulation::switch_on_frame(std::uint16_t port, const Frame& frame) {
    if (frame.kind == FrameKind::Lacpdu) {
        schedule_packet_in(port, frame);  // control traffic never hits the table
        return;
    }
    const FlowEntry* entry = switch_lookup(frame.dst, frame.src);
    if (entry != nullptr) {
        switch_forward(frame, entry->out_port);
        return;
    }
    ConversationId conv = frame.conversation();
    auto it = pending_.find(conv);
    if (it != pending_.end()) {
        // Decision already in flight; buffer behind it to keep order.
        it->second.push_back(frame);
        return;
    }
    pending_[conv] = {frame};
    schedule_packet_in(port, frame);
}

void Simulation::switch_forward(const Frame& frame, std::uint16_t out_port) {
    send_on_link(out_port, 1, frame);  // direction 1 leaves the switch
}

void Simulation::schedule_packet_in(std::uint16_t port, const Frame& frame) {
    loop_.schedule(loop_.now() + controller_link_delay(), EventKind::FrameArrival,
                   "packet-in port " + std::to_string(port), [this, port, frame] {
                       ControllerActions acts =
                           controller_.on_packet_in(loop_.now(), port, frame);
                       drain_controller_notes();
                       if (frame.kind == FrameKind::Lacpdu &&
                           port <= static_cast<std::uint16_t>(spec_.lag_width)) {
                           schedule_timeout_check(port,
                                                  loop_.now() + LacpTiming::short_timeout());
                       }
                       if (!acts.empty()) {
                           loop_.schedule(loop_.now() + controller_link_delay(),
                                          EventKind::FrameArrival, "ctl-apply",
                                          [this, acts] { switch_apply(acts); });
                       }
                   });
}

void Simulation::schedule_timeout_check(std::uint16_t member_port, SimTime at) {
    loop_.schedule(at, EventKind::Timer, "lacpdu timeout check port " +
                                             std::to_string(member_port),
                   [this, member_port] {
                       ControllerActions acts =
                           controller_.on_timeout_check(loop_.now(), member_port);
                       drain_controller_notes();
                       if (!acts.empty()) {
                           loop_.schedule(loop_.now() + controller_link_delay(),
                                          EventKind::FrameArrival, "ctl-apply",
                                          [this, acts] { switch_apply(acts); });
                       }
                   });
}

void Simulation::switch_release_pending(const ConversationId& conv, std::uint16_t out_port,
                                        bool duplicate_first) {
    auto it = pending_.find(conv);
    if (it == pending_.end()) {
        return;
    }
    for (std::size_t i = 0; i < it->second.size(); ++i) {
        switch_forward(it->second[i], out_port);
        if (i == 0 && duplicate_first) {
            switch_forward(it->second[i], out_port);
        }
    }
    pending_.erase(it);
}

void Simulation::switch_apply(const ControllerActions& actions) {
    for (const FlowDeleteByOutPort& d : actions.deletes) {
        std::erase_if(switch_table_,
                      [&](const FlowEntry& e) { return e.out_port == d.out_port; });
    }
    for (const DropPending& d : actions.drops) {
        auto it = pending_.find(d.conversation);
        if (it != pending_.end()) {
            pending_dropped_ += it->second.size();
            pending_.erase(it);
        }
    }
    for (const FlowAdd& a : actions.adds) {
        std::erase_if(switch_table_, [&](const FlowEntry& e) {
            return e.match_dst == a.entry.match_dst && e.match_src == a.entry.match_src;
        });
        switch_table_.push_back(a.entry);
        if (a.entry.match_src.has_value()) {
            switch_release_pending(ConversationId{*a.entry.match_src, a.entry.match_dst},
                                   a.entry.out_port, a.duplicate_first_release);
        } else {
            std::vector<ConversationId> matching;
            for (const auto& [conv, frames] : pending_) {
                if (conv.dst == a.entry.match_dst) {
                    matching.push_back(conv);
                }
            }
            for (const ConversationId& conv : matching) {
                switch_release_pending(conv, a.entry.out_port, false);
            }
        }
    }
    for (const PacketOutPorts& po : actions.packet_outs) {
        ConversationId conv = po.frame.conversation();
        auto it = pending_.find(conv);
        if (it != pending_.end()) {
            for (const Frame& f : it->second) {
                for (std::uint16_t p : po.ports) {
                    switch_forward(f, p);
                }
            }
            pending_.erase(it);
        } else {
            for (std::uint16_t p : po.ports) {
                switch_forward(po.frame, p);
            }
        }
    }
    for (const LacpReplyOut& r : actions.lacp_replies) {
        Frame f;
        f.src = switch_port_mac(r.port);
        f.dst = lacp_group_address();
        f.seq = ctl_seq_++;
        f.payload_len = static_cast<std::uint32_t>(kLacpduWireSize);
        f.sent_at = loop_.now();
        f.kind = FrameKind::Lacpdu;
        f.lacpdu_wire = encode_lacpdu(r.pdu);
        send_on_link(r.port, 1, f);
    }
}

// ---- server bond ----

void Simulation::server_on_frame(std::uint16_t nic, const Frame& frame) {
    if (frame.kind == FrameKind::Lacpdu) {
        Lacpdu pdu;
        try {
            pdu = decode_lacpdu(frame.lacpdu_wire);
        } catch (const DecodeError&) {
            push_event("lacpdu-malformed", "server nic " + std::to_string(nic));
            return;  // drop and count, never reset state
        }
        server_handle_event(nic, PduEvent{pdu});
        return;
    }

    MemberPort& port = ports_[nic - 1];
    if (!port.ctx.my_info.state.collecting) {
        ++collector_rejected_;
        return;
    }
    CollectVerdict verdict = collector_.collect(frame, member_identity(nic));
    if (verdict.duplicate) {
        return;  // first copy already answered
    }
    if (frame.kind == FrameKind::EchoRequest) {
        server_send_reply(frame);
        return;
    }
    if (frame.kind == FrameKind::Bulk) {
        for (std::size_t j = 0; j < clients_.size(); ++j) {
            if (clients_[j].mac == frame.src) {
                std::int64_t window = loop_.now().micros() / 1'000'000;
                rx_window_bits_[static_cast<int>(j + 1)][window] +=
                    static_cast<std::int64_t>(frame.payload_len) * 8;
                break;
            }
        }
    }
}

void Simulation::server_send_reply(const Frame& request) {
    Frame reply;
    reply.src = bond_mac();
    reply.dst = request.src;
    reply.seq = request.seq;
    reply.payload_len = kPingPayloadOctets;
    reply.sent_at = loop_.now();
    reply.kind = FrameKind::EchoReply;
    try {
        PortIdentity out = distributor_.pick(reply);
        send_on_link(out.number, 0, reply);
    } catch (const NoDistributingPortError&) {
        ++reply_unroutable_;
    }
}

void Simulation::server_send_pdu(std::uint16_t nic, const Lacpdu& pdu) {
    Frame f;
    f.src = ports_[nic - 1].port_mac;
    f.dst = lacp_group_address();
    f.seq = lacp_seq_++;
    f.payload_len = static_cast<std::uint32_t>(kLacpduWireSize);
    f.sent_at = loop_.now();
    f.kind = FrameKind::Lacpdu;
    f.lacpdu_wire = encode_lacpdu(pdu);
    send_on_link(nic, 0, f);
}

void Simulation::drain_remaps() {
    const auto& log = distributor_.remap_log();
    for (; remaps_drained_ < log.size(); ++remaps_drained_) {
        const RemapEntry& r = log[remaps_drained_];
        push_event("remap", r.conversation.src.to_string() + ";" + r.conversation.dst.to_string() +
                                ";" + std::to_string(r.old_port.number) + ";" +
                                std::to_string(r.new_port.number));
    }
}

void Simulation::server_apply_actions(std::uint16_t nic, const std::vector<PortAction>& actions) {
    for (const PortAction& a : actions) {
        switch (a.kind) {
            case PortActionKind::Attach:
                if (ports_[nic - 1].ctx.selected_aggregator == AggregatorId{0}) {
                    distributor_.attach(member_identity(nic));
                }
                break;
            case PortActionKind::Detach:
                distributor_.detach(member_identity(nic), loop_.now());
                drain_remaps();
                break;
            case PortActionKind::EnableDistributing:
                if (ports_[nic - 1].ctx.selected_aggregator == AggregatorId{0}) {
                    distributor_.set_distributing(member_identity(nic), true, loop_.now());
                    drain_remaps();
                }
                break;
            case PortActionKind::NotifySelection:
                break;  // handled by the caller
        }
    }
}

void Simulation::server_handle_event(std::uint16_t nic, const PortEvent& event) {
    MemberPort& port = ports_[nic - 1];
    StepResult r = receive_step(std::move(port.ctx), event, loop_.now());
    port.ctx = std::move(r.ctx);

    bool need_selection = false;
    for (const PortAction& a : r.actions) {
        if (a.kind == PortActionKind::NotifySelection) {
            need_selection = true;
        }
    }
    server_apply_actions(nic, r.actions);

    if (std::holds_alternative<PduEvent>(event)) {
        arm_expiry(nic);
        arm_periodic(nic);
    } else if (std::holds_alternative<LinkUpEvent>(event)) {
        arm_periodic(nic);
    }
    if (need_selection) {
        server_run_selection();
    }
    server_mux_drain();
}

void Simulation::server_run_selection() {
    std::vector<PortContext> ctxs;
    ctxs.reserve(ports_.size());
    for (const MemberPort& p : ports_) {
        ctxs.push_back(p.ctx);
    }
    std::vector<AggregatorId> ids;
    for (std::size_t i = 0; i < ports_.size(); ++i) {
        ids.push_back(static_cast<AggregatorId>(i));
    }
    SelectionResult res = select_aggregators(ctxs, ids);

    for (std::uint16_t nic = 1; nic <= ports_.size(); ++nic) {
        MemberPort& p = ports_[nic - 1];
        std::optional<AggregatorId> fresh = res.find(member_identity(nic));
        if (fresh == p.ctx.selected_aggregator) {
            continue;
        }
        LacpPortState& st = p.ctx.my_info.state;
        if (st.synchronization || st.collecting || st.distributing) {
            // Moving aggregators tears the port down first.
            st.synchronization = false;
            st.collecting = false;
            st.distributing = false;
            distributor_.detach(member_identity(nic), loop_.now());
            drain_remaps();
        }
        p.ctx.selected_aggregator = fresh;
    }
}

void Simulation::server_mux_drain() {
    for (int pass = 0; pass < 100; ++pass) {
        bool changed = false;
        for (std::uint16_t nic = 1; nic <= ports_.size(); ++nic) {
            MemberPort& p = ports_[nic - 1];
            std::uint8_t before = p.ctx.my_info.state.to_octet();
            StepResult r = mux_step(std::move(p.ctx));
            p.ctx = std::move(r.ctx);
            server_apply_actions(nic, r.actions);
            if (!r.actions.empty() || p.ctx.my_info.state.to_octet() != before) {
                changed = true;
            }
        }
        if (!changed) {
            return;
        }
    }
    throw SimulationError("mux machine failed to quiesce");
}

void Simulation::arm_periodic(std::uint16_t nic) {
    MemberPort& p = ports_[nic - 1];
    std::uint64_t gen = ++p.periodic_gen;
    SimTime at = std::max(p.ctx.periodic_due, loop_.now());
    loop_.schedule(at, EventKind::Timer, "lacp periodic nic " + std::to_string(nic),
                   [this, nic, gen] {
                       MemberPort& port = ports_[nic - 1];
                       if (gen != port.periodic_gen) {
                           return;
                       }
                       PeriodicResult pr = periodic_step(std::move(port.ctx), loop_.now());
                       port.ctx = std::move(pr.ctx);
                       if (pr.pdu.has_value()) {
                           server_send_pdu(nic, *pr.pdu);
                       }
                       if (port.ctx.link_up) {
                           arm_periodic(nic);
                       }
                   });
}

void Simulation::arm_expiry(std::uint16_t nic) {
    MemberPort& p = ports_[nic - 1];
    std::uint64_t gen = ++p.expiry_gen;
    SimTime at = std::max(p.ctx.current_while, loop_.now());
    loop_.schedule(at, EventKind::Timer, "lacp expiry nic " + std::to_string(nic),
                   [this, nic, gen] {
                       MemberPort& port = ports_[nic - 1];
                       if (gen != port.expiry_gen || !port.ctx.link_up) {
                           return;
                       }
                       if (loop_.now() < port.ctx.current_while) {
                           return;
                       }
                       server_handle_event(nic, TimerExpiry{});
                   });
}

// ---- clients ----

void Simulation::client_on_frame(int client_index, const Frame& frame) {
    if (frame.kind != FrameKind::EchoReply) {
        return;  // floods and stray traffic are ignored by the NIC
    }
    Client& c = clients_[client_index - 1];
    auto it = c.ping_index.find(frame.seq);
    if (it == c.ping_index.end()) {
        return;
    }
    PingSample& s = c.pings[it->second];
    if (s.rtt.has_value()) {
        ++s.duplicate_replies;
        return;
    }
    if (s.lost) {
        ++late_replies_;  // already written off; keep the loss verdict
        return;
    }
    s.rtt = loop_.now() - s.sent_at;
}

// ---- monitors ----

void Simulation::start_monitors() {
    SimTime interval = spec_.monitor_poll_interval;
    for (std::uint16_t nic = 1; nic <= ports_.size(); ++nic) {
        // Staggered phases so detections do not all land on one tick.
        SimTime host_phase =
            SimTime::from_micros(interval.micros() * ((nic * 37) % 100) / 100);
        SimTime switch_phase =
            SimTime::from_micros(interval.micros() * ((nic * 37 + 50) % 100) / 100);

        // Self-rescheduling poll events, one chain per monitor.
        struct HostPoll {
            Simulation* sim;
            std::uint16_t nic;
            SimTime interval;
            void operator()() const {
                Simulation& s = *sim;
                Simulation::MemberPort& p = s.ports_[nic - 1];
                LinkState physical = s.links_[nic - 1].up ? LinkState::Up : LinkState::Down;
                PollResult r = poll(p.host_monitor, physical, s.loop_.now());
                p.host_monitor = r.cfg;
                if (r.transition.has_value()) {
                    bool down = *r.transition == LinkState::Down;
                    s.push_event(down ? "monitor-down" : "monitor-up",
                                 "host-side member " + std::to_string(nic));
                    if (s.spec_.detection != DetectionMode::Lacpdu) {
                        if (down) {
                            s.server_handle_event(nic, LinkDownEvent{});
                        } else {
                            s.server_handle_event(nic, LinkUpEvent{});
                        }
                    }
                }
                s.loop_.schedule(s.loop_.now() + interval, EventKind::Timer,
                                 "monitor host nic " + std::to_string(nic), HostPoll{sim, nic,
                                                                                     interval});
            }
        };
        struct SwitchPoll {
            Simulation* sim;
            std::uint16_t nic;
            SimTime interval;
            void operator()() const {
                Simulation& s = *sim;
                LinkState physical = s.links_[nic - 1].up ? LinkState::Up : LinkState::Down;
                PollResult r = poll(s.switch_monitors_[nic - 1], physical, s.loop_.now());
                s.switch_monitors_[nic - 1] = r.cfg;
                if (r.transition.has_value()) {
                    bool down = *r.transition == LinkState::Down;
                    s.push_event(down ? "monitor-down" : "monitor-up",
                                 "switch-side member " + std::to_string(nic));
                    bool up = !down;
                    s.loop_.schedule(
                        s.loop_.now() + controller_link_delay(), EventKind::FrameArrival,
                        "port-status port " + std::to_string(nic),
                        [sim = sim, nic = nic, up] {
                            Simulation& t = *sim;
                            ControllerActions acts =
                                t.controller_.on_port_status(t.loop_.now(), nic, up);
                            t.drain_controller_notes();
                            if (!acts.empty()) {
                                t.loop_.schedule(t.loop_.now() + controller_link_delay(),
                                                 EventKind::FrameArrival, "ctl-apply",
                                                 [sim, acts] { sim->switch_apply(acts); });
                            }
                        });
                }
                s.loop_.schedule(s.loop_.now() + interval, EventKind::Timer,
                                 "monitor switch port " + std::to_string(nic),
                                 SwitchPoll{sim, nic, interval});
            }
        };

        loop_.schedule(host_phase, EventKind::Timer, "monitor host nic " + std::to_string(nic),
                       HostPoll{this, nic, interval});
        loop_.schedule(switch_phase, EventKind::Timer,
                       "monitor switch port " + std::to_string(nic),
                       SwitchPoll{this, nic, interval});
    }
}

// ---- public assembly and scenario ops ----

std::unique_ptr<Simulation> build_topology(const TopologySpec& spec, std::uint64_t seed) {
    validate_topology_spec(spec);
    std::unique_ptr<Simulation> sim(new Simulation(spec, seed));
    sim->server_run_selection();
    sim->server_mux_drain();
    for (std::uint16_t nic = 1; nic <= sim->ports_.size(); ++nic) {
        sim->arm_periodic(nic);
    }
    sim->start_monitors();
    return sim;
}

void run(Simulation& sim, SimTime until) {
    if (until <= SimTime{}) {
        throw ConfigError("until", "must be positive, got " + until.to_string());
    }
    sim.loop_.run_until(until);
}

void schedule_link_kill(Simulation& sim, std::uint16_t link_id, SimTime at) {
    sim.link_ref(link_id);  // existence check up front
    if (at < sim.loop_.now()) {
        throw ConfigError("kill-at", "time " + at.to_string() + " is in the past");
    }
    sim.loop_.schedule(at, EventKind::ScenarioAction, "kill link " + std::to_string(link_id),
                       [&sim, link_id] { sim.apply_kill(link_id); });
}

void schedule_link_restore(Simulation& sim, std::uint16_t link_id, SimTime at) {
    sim.link_ref(link_id);
    if (at < sim.loop_.now()) {
        throw ConfigError("restore-at", "time " + at.to_string() + " is in the past");
    }
    sim.loop_.schedule(at, EventKind::ScenarioAction, "restore link " + std::to_string(link_id),
                       [&sim, link_id] { sim.apply_restore(link_id); });
}

void ping_generator(Simulation& sim, int client_index, SimTime interval, SimTime start,
                    SimTime end) {
    if (client_index < 1 || client_index > static_cast<int>(sim.clients_.size())) {
        throw ConfigError("client", "unknown client index " + std::to_string(client_index));
    }
    if (interval <= SimTime{}) {
        throw ConfigError("interval", "must be positive, got " + interval.to_string());
    }
    SimTime phase =
        start + SimTime::from_micros(static_cast<std::int64_t>(
                    sim.loop_.rng()() % static_cast<std::uint64_t>(interval.micros())));

    struct Tick {
        Simulation* sim;
        int client;
        SimTime interval;
        SimTime end;
        void operator()() const {
            Simulation& s = *sim;
            if (s.loop_.now() >= end) {
                return;
            }
            Simulation::Client& c = s.clients_[client - 1];
            std::uint64_t seq = c.next_ping_seq++;
            c.ping_index[seq] = c.pings.size();
            c.pings.push_back(PingSample{seq, s.loop_.now(), std::nullopt, false, 0});

            Frame f;
            f.src = c.mac;
            f.dst = bond_mac();
            f.seq = seq;
            f.payload_len = kPingPayloadOctets;
            f.sent_at = s.loop_.now();
            f.kind = FrameKind::EchoRequest;
            s.send_on_link(c.link_id, 0, f);

            s.loop_.schedule(s.loop_.now() + interval * 10, EventKind::Timer,
                             "ping timeout h" + std::to_string(client + 1) + " #" +
                                 std::to_string(seq),
                             [sim = this->sim, client = this->client, seq] {
                                 Simulation::Client& cc = sim->clients_[client - 1];
                                 PingSample& sample = cc.pings[cc.ping_index[seq]];
                                 if (!sample.rtt.has_value() && !sample.lost) {
                                     sample.lost = true;
                                 }
                             });
            s.loop_.schedule(s.loop_.now() + interval, EventKind::TrafficTick,
                             "ping h" + std::to_string(client + 1),
                             Tick{sim, client, interval, end});
        }
    };

    sim.loop_.schedule(phase, EventKind::TrafficTick, "ping h" + std::to_string(client_index + 1),
                       Tick{&sim, client_index, interval, end});
}

void bulk_generator(Simulation& sim, int client_index, std::int64_t demand_bps, SimTime start,
                    SimTime end) {
    if (client_index < 1 || client_index > static_cast<int>(sim.clients_.size())) {
        throw ConfigError("client", "unknown client index " + std::to_string(client_index));
    }
    if (demand_bps <= 0) {
        throw ConfigError("demand", "must be positive, got " + std::to_string(demand_bps));
    }
    SimTime phase = start + SimTime::from_micros(
                                static_cast<std::int64_t>(sim.loop_.rng()() % 1000ull));

    struct Tick {
        Simulation* sim;
        int client;
        std::int64_t demand;
        SimTime phase;
        SimTime end;
        std::uint64_t k;
        void operator()() const {
            Simulation& s = *sim;
            if (s.loop_.now() >= end) {
                return;
            }
            Simulation::Client& c = s.clients_[client - 1];
            Frame f;
            f.src = c.mac;
            f.dst = bond_mac();
            f.seq = c.next_bulk_seq++;
            f.payload_len = kBulkPayloadOctets;
            f.sent_at = s.loop_.now();
            f.kind = FrameKind::Bulk;
            s.send_on_link(c.link_id, 0, f);

            std::uint64_t next = k + 1;
            std::int64_t frame_bits = static_cast<std::int64_t>(kBulkPayloadOctets) * 8;
            SimTime at = phase + SimTime::from_micros(static_cast<std::int64_t>(
                                     (static_cast<std::uint64_t>(next) *
                                      static_cast<std::uint64_t>(frame_bits) * 1'000'000ull) /
                                     static_cast<std::uint64_t>(demand)));
            s.loop_.schedule(at, EventKind::TrafficTick, "bulk h" + std::to_string(client + 1),
                             Tick{sim, client, demand, phase, end, next});
        }
    };

    sim.loop_.schedule(phase, EventKind::TrafficTick, "bulk h" + std::to_string(client_index + 1),
                       Tick{&sim, client_index, demand_bps, phase, end, 0});
}

}  // namespace lagsim
