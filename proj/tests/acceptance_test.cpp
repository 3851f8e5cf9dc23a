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

// End-to-end acceptance gate. Each criterion prints exactly one PASS or
// FAIL line; the process exits nonzero if any criterion fails. Tolerances
// are part of the criterion text and are not adjustable here.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lagsim/aggregator.hpp"
#include "lagsim/errors.hpp"
#include "lagsim/lacp.hpp"
#include "lagsim/metrics.hpp"
#include "lagsim/simnet.hpp"

using namespace lagsim;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    std::string label;
    std::vector<std::string> problems;

    explicit Criterion(std::string l) : label(std::move(l)) {}

    void expect(bool ok, const std::string& what) {
        if (!ok) {
            problems.push_back(what);
        }
    }
    bool pass() const { return problems.empty(); }
};

// ---------------------------------------------------------------------------
// 1. Steady-state flow mapping equals the brute-force hash oracle, exactly.

Criterion flow_entry_pattern() {
    Criterion c("steady-state conversation-to-member mapping matches the hash oracle exactly");

    ScenarioParams p;
    p.topology.lag_width = 2;
    p.topology.client_count = 3;
    p.kill_enabled = false;
    p.duration = SimTime::from_whole_seconds(10);
    p.seed = 1;
    ScenarioReport report = run_scenario(ScenarioName::Custom, p);

    std::map<std::string, std::uint16_t> observed;  // client MAC -> member
    for (const FlowEntry& e : report.flows_after) {
        if (e.match_src.has_value() && e.match_dst == bond_mac()) {
            observed[e.match_src->to_string()] = e.out_port;
        }
    }

    std::map<std::uint16_t, int> member_load;
    for (int host = 2; host <= 4; ++host) {
        MacAddress mac = canonical_client_mac(host);
        std::uint16_t oracle =
            hash_select_port(ConversationId{mac, bond_mac()}, {1, 2});
        auto it = observed.find(mac.to_string());
        if (it == observed.end()) {
            c.expect(false, host_label(host) + " has no conversation entry");
            continue;
        }
        c.expect(it->second == oracle,
                 host_label(host) + " mapped to member " + std::to_string(it->second) +
                     ", oracle says " + std::to_string(oracle));
        ++member_load[it->second];
    }
    c.expect(observed.size() == 3, "expected 3 conversation entries, saw " +
                                       std::to_string(observed.size()));

    // The canonical assignment leaves two conversations on one member and
    // one alone on the other.
    bool two_on_one = member_load.size() == 2 &&
                      ((member_load.begin()->second == 1 && member_load.rbegin()->second == 2) ||
                       (member_load.begin()->second == 2 && member_load.rbegin()->second == 1));
    c.expect(two_on_one, "member loads are not the two-on-one/one-alone split");
    return c;
}

// ---------------------------------------------------------------------------
// 2. Kill one member at t=30: the dead link falls silent once detection
//    completes, its conversations resume on the survivor, and every series
//    recovers inside poll_interval + short LACP timeout + 2 controller
//    round trips (3.104 s).

Criterion failover_behavior() {
    Criterion c("member kill: silence after detection, remap to survivor, recovery <= 3.104 s");

    TopologySpec spec;  // topo2 defaults: 2 members, clients h2..h4
    auto sim = build_topology(spec, 1);
    SimTime until = SimTime::from_whole_seconds(60);
    SimTime kill_at = SimTime::from_whole_seconds(30);
    for (int j = 1; j <= 3; ++j) {
        ping_generator(*sim, j, SimTime::from_millis(100), SimTime::from_millis(500), until);
    }
    schedule_link_kill(*sim, 1, kill_at);
    run(*sim, until);

    // (a) Detection completes when the controller purges the dead member's
    // flows. Not one frame, data or protocol, may be offered to link 1
    // afterwards, in either direction.
    SimTime detection_done{};
    bool purged = false;
    for (const ReportEvent& e : sim->report_events()) {
        if (e.kind == "flows-purged" && e.time >= kill_at) {
            detection_done = e.time;
            purged = true;
            break;
        }
    }
    c.expect(purged, "no flows-purged event after the kill");
    if (purged) {
        for (int dir : {0, 1}) {
            SimTime last = sim->link_last_send(1, dir);
            c.expect(last <= detection_done,
                     "link 1 direction " + std::to_string(dir) + " saw a send at " +
                         last.to_string() + " after detection at " + detection_done.to_string());
        }
    }

    // (b) Every conversation that rode link 1 reappears on link 2.
    int moved = 0;
    std::vector<FlowEntry> now_table = sim->flow_table_now();
    for (const FlowEntry& e : sim->flows_before_kill()) {
        if (e.out_port != 1 || !e.match_src.has_value()) {
            continue;
        }
        bool resumed = false;
        for (const FlowEntry& n : now_table) {
            if (n.match_src.has_value() && *n.match_src == *e.match_src && n.out_port == 2) {
                resumed = true;
            }
        }
        c.expect(resumed, "conversation from " + e.match_src->to_string() +
                              " did not resume on member 2");
        ++moved;
    }
    c.expect(moved >= 1, "no conversation was on member 1 before the kill");
    for (const FlowEntry& e : now_table) {
        c.expect(e.out_port != 1, "flow entry still points at the dead member");
    }

    // (c) and (d): every host's series recovers, the disturbed ones inside
    // the detection-plus-reroute budget.
    const double bound_s = 0.100 + 3.0 + 2 * 0.002;
    for (int j = 1; j <= 3; ++j) {
        FailoverResult fr = failover_delay(sim->ping_samples(j), kill_at);
        std::string who = host_label(j + 1);
        c.expect(fr.recovered, who + " never returned to a healthy RTT");
        if (fr.recovered) {
            c.expect(fr.delay_s <= bound_s, who + " recovered in " +
                                                std::to_string(fr.delay_s) +
                                                " s, over the 3.104 s bound");
        }
    }
    return c;
}

// ---------------------------------------------------------------------------
// 3. Bandwidth division: per-link mode gives every non-colliding flow its
//    own link's capacity; shared mode divides one capacity equally. +-5%.

Criterion bandwidth_division() {
    Criterion c("bulk flows sit within 5% of their fair share in all four configurations");

    struct Config {
        int width;
        int clients;
        BandwidthMode mode;
        const char* tag;
    };
    const Config configs[] = {
        {2, 2, BandwidthMode::PerLink, "per-link x2"},
        {8, 8, BandwidthMode::PerLink, "per-link x8"},
        {2, 2, BandwidthMode::Shared, "shared x2"},
        {8, 8, BandwidthMode::Shared, "shared x8"},
    };
    for (const Config& cfg : configs) {
        ScenarioParams p;
        p.topology.lag_width = cfg.width;
        p.topology.client_count = cfg.clients;
        p.topology.bandwidth_mode = cfg.mode;
        p.traffic = TrafficKind::Bulk;
        p.kill_enabled = false;
        p.duration = SimTime::from_whole_seconds(12);
        p.seed = 5;
        ScenarioReport report = run_scenario(ScenarioName::Custom, p);
        FairnessVerdict v = fairness_check(report, cfg.mode);
        c.expect(v.pass, std::string(cfg.tag) + " failed fairness, max deviation " +
                             std::to_string(v.max_deviation));
        c.expect(v.collisions.empty(), std::string(cfg.tag) + " reported a hash collision");
    }
    return c;
}

// ---------------------------------------------------------------------------
// 4. Bare-engine convergence over a lossless pipe: collecting and
//    distributing within 3 s of start, defaulted within 3 s of a cut.

struct PipePeer {
    PortContext ctx;
    bool reached_distributing = false;
    SimTime distributing_at{};
    bool had_live_partner = false;
    bool reached_defaulted = false;
    SimTime defaulted_at{};

    explicit PipePeer(std::uint8_t tail, std::uint16_t key) {
        ctx.my_info.system.priority = 100;
        ctx.my_info.system.address = MacAddress{{0, 0, 0, 0, 0, tail}};
        ctx.my_info.key.value = key;
        ctx.my_info.port.priority = 0x0080;
        ctx.my_info.port.number = 1;
        ctx.my_info.state.lacp_activity = true;
        ctx.my_info.state.lacp_timeout = true;
        ctx.my_info.state.aggregation = true;
    }

    void note(SimTime now) {
        if (!reached_distributing && ctx.my_info.state.distributing) {
            reached_distributing = true;
            distributing_at = now;
        }
        if (!ctx.partner_view.state.defaulted) {
            had_live_partner = true;
        } else if (had_live_partner && !reached_defaulted) {
            reached_defaulted = true;
            defaulted_at = now;
        }
    }

    void settle(SimTime now) {
        SelectionResult sel = select_aggregators({ctx}, {AggregatorId{7}});
        ctx.selected_aggregator = sel.find(ctx.my_info.port);
        for (int pass = 0; pass < 10; ++pass) {
            std::uint8_t before = ctx.my_info.state.to_octet();
            StepResult r = mux_step(std::move(ctx));
            ctx = std::move(r.ctx);
            note(now);
            if (r.actions.empty() && ctx.my_info.state.to_octet() == before) {
                break;
            }
        }
    }

    void handle(const PortEvent& event, SimTime now) {
        StepResult r = receive_step(std::move(ctx), event, now);
        ctx = std::move(r.ctx);
        note(now);
        for (const PortAction& a : r.actions) {
            if (a.kind == PortActionKind::NotifySelection) {
                settle(now);
                break;
            }
        }
    }
};

Criterion lacp_convergence() {
    Criterion c("LACP peers converge within 3 s and fall back to defaults within 3 s of a cut");

    PipePeer a(0x11, 1);
    PipePeer b(0x22, 7);
    bool pipe_up = true;
    SimTime cut_at = SimTime::from_whole_seconds(5);
    SimTime step = SimTime::from_millis(100);
    std::deque<Lacpdu> to_a, to_b;

    for (SimTime now{}; now <= SimTime::from_whole_seconds(10); now += step) {
        if (now == cut_at) {
            pipe_up = false;
            to_a.clear();
            to_b.clear();
        }
        for (const Lacpdu& pdu : to_a) {
            a.handle(PduEvent{pdu}, now);
        }
        to_a.clear();
        for (const Lacpdu& pdu : to_b) {
            b.handle(PduEvent{pdu}, now);
        }
        to_b.clear();

        for (PipePeer* p : {&a, &b}) {
            if (p->ctx.current_while != SimTime{} && now >= p->ctx.current_while &&
                !p->ctx.partner_view.state.defaulted) {
                p->handle(TimerExpiry{}, now);
            }
            PeriodicResult r = periodic_step(std::move(p->ctx), now);
            p->ctx = std::move(r.ctx);
            p->note(now);
            if (r.pdu.has_value() && pipe_up) {
                (p == &a ? to_b : to_a).push_back(*r.pdu);
            }
        }
    }

    SimTime bound = LacpTiming::short_timeout();
    for (const PipePeer* p : {&a, &b}) {
        std::string who = p == &a ? "peer a" : "peer b";
        c.expect(p->reached_distributing, who + " never reached distributing");
        if (p->reached_distributing) {
            c.expect(p->distributing_at <= bound,
                     who + " took " + p->distributing_at.to_string() + " s to distribute");
        }
        c.expect(p->reached_defaulted, who + " never fell back to defaults after the cut");
        if (p->reached_defaulted) {
            c.expect(p->defaulted_at > cut_at && p->defaulted_at <= cut_at + bound,
                     who + " defaulted at " + p->defaulted_at.to_string());
        }
        c.expect(!p->ctx.my_info.state.collecting && !p->ctx.my_info.state.distributing,
                 who + " still collecting or distributing after the cut");
    }
    return c;
}

// ---------------------------------------------------------------------------
// 5. Codec: 10,000 random frames roundtrip bit-exactly, and each malformed
//    input class raises its own error.

Criterion codec_roundtrip() {
    Criterion c("10000 random protocol frames roundtrip bit-exactly and bad input is typed");

    std::mt19937_64 rng(0xacce97);
    auto random_state = [&] {
        std::uint8_t bits = static_cast<std::uint8_t>(rng());
        return LacpPortState::from_octet(bits);
    };
    auto random_info = [&] {
        LacpPeerInfo info;
        info.system.priority = static_cast<std::uint16_t>(rng());
        for (std::size_t i = 0; i < 6; ++i) {
            info.system.address.octets[i] = static_cast<std::uint8_t>(rng());
        }
        info.key.value = static_cast<std::uint16_t>(rng());
        info.port.priority = static_cast<std::uint16_t>(rng());
        info.port.number = static_cast<std::uint16_t>(rng());
        info.state = random_state();
        return info;
    };

    int bad = 0;
    for (int i = 0; i < 10000; ++i) {
        Lacpdu pdu;
        pdu.actor = random_info();
        pdu.partner = random_info();
        pdu.collector_max_delay = static_cast<std::uint16_t>(rng());
        std::vector<std::uint8_t> wire = encode_lacpdu(pdu);
        Lacpdu back = decode_lacpdu(wire);
        if (!(back == pdu) || encode_lacpdu(back) != wire) {
            ++bad;
        }
    }
    c.expect(bad == 0, std::to_string(bad) + " of 10000 roundtrips were not bit-exact");

    bool length_typed = false;
    try {
        decode_lacpdu(std::vector<std::uint8_t>(kLacpduWireSize - 1, 0));
    } catch (const FrameLengthError&) {
        length_typed = true;
    } catch (...) {
    }
    c.expect(length_typed, "truncated frame did not raise the length error");

    std::vector<std::uint8_t> wire = encode_lacpdu(Lacpdu{});
    std::vector<std::uint8_t> not_lacp = wire;
    not_lacp[0] = 0x02;
    bool subtype_typed = false;
    try {
        decode_lacpdu(not_lacp);
    } catch (const NotLacpError&) {
        subtype_typed = true;
    } catch (...) {
    }
    c.expect(subtype_typed, "foreign subtype did not raise the not-LACP error");

    std::vector<std::uint8_t> torn = wire;
    torn[2] = 0x07;  // actor TLV type
    bool malformed_typed = false;
    try {
        decode_lacpdu(torn);
    } catch (const MalformedPduError& e) {
        malformed_typed = e.offset() == 2;
    } catch (...) {
    }
    c.expect(malformed_typed, "corrupt TLV did not raise the malformed error at its offset");
    return c;
}

// ---------------------------------------------------------------------------
// 6. Ordering invariant: no-fault runs never duplicate or reorder a frame
//    within a conversation, across 120 random seeds and four shapes.

Criterion ordering_invariant() {
    Criterion c("120 seeded no-fault runs finish with zero duplicates and zero reorders");

    std::uint64_t total_frames = 0;
    for (std::uint64_t seed = 1; seed <= 120; ++seed) {
        ScenarioParams p;
        p.kill_enabled = false;
        p.duration = SimTime::from_whole_seconds(3);
        p.seed = seed;
        switch (seed % 4) {
            case 0:
                p.topology.lag_width = 2;
                p.topology.client_count = 3;
                break;
            case 1:
                p.topology.lag_width = 8;
                p.topology.client_count = 8;
                break;
            case 2:
                p.topology.lag_width = 2;
                p.topology.client_count = 2;
                p.traffic = TrafficKind::Bulk;
                break;
            default:
                p.topology.lag_width = 4;
                p.topology.client_count = 6;
                p.topology.bandwidth_mode = BandwidthMode::Shared;
                p.traffic = TrafficKind::Bulk;
                break;
        }
        ScenarioReport report = run_scenario(ScenarioName::Custom, p);
        if (report.duplicate_count != 0 || report.reorder_count != 0) {
            c.expect(false, "seed " + std::to_string(seed) + ": " +
                                std::to_string(report.duplicate_count) + " duplicates, " +
                                std::to_string(report.reorder_count) + " reorders");
        }
        for (const auto& [host, sent] : report.sent) {
            total_frames += sent;
        }
        if (c.problems.size() > 5) {
            break;  // enough evidence
        }
    }
    c.expect(total_frames > 0, "runs generated no traffic at all");
    return c;
}

// ---------------------------------------------------------------------------
// 7. Duplicate injection: the fault knob produces exactly the injected
//    count and names the conversations; without it the count is zero.

Criterion duplicate_injection() {
    Criterion c("injected re-forward duplicates are counted exactly; none appear otherwise");

    ScenarioParams p;
    p.seed = 1;
    p.topology.inject = InjectMode::DuplicateOnReforward;
    ScenarioReport faulty = run_scenario(ScenarioName::Topo8, p);
    AnomalyReport a = anomaly_scan(faulty);
    c.expect(faulty.injected_duplicates > 0, "the kill never triggered a re-forward injection");
    c.expect(a.duplicate_count == faulty.injected_duplicates,
             "observed " + std::to_string(a.duplicate_count) + " duplicates, injected " +
                 std::to_string(faulty.injected_duplicates));
    c.expect(!a.duplicate_conversations.empty(), "no conversation was flagged");

    ScenarioParams clean_p;
    clean_p.seed = 1;
    ScenarioReport clean = run_scenario(ScenarioName::Topo8, clean_p);
    c.expect(anomaly_scan(clean).duplicate_count == 0,
             "duplicates appeared without the injection knob");
    return c;
}

// ---------------------------------------------------------------------------
// 8. Determinism: identical scenario and seed serialize byte-identically.

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

Criterion determinism() {
    Criterion c("re-running a scenario with the same seed writes byte-identical reports");

    ScenarioParams p;
    p.seed = 1;
    ScenarioReport r1 = run_scenario(ScenarioName::Topo2, p);
    ScenarioReport r2 = run_scenario(ScenarioName::Topo2, p);
    c.expect(r1.trace_digest == r2.trace_digest, "event trace digests differ");

    fs::path dir_a = fs::temp_directory_path() / "lagsim_accept_a";
    fs::path dir_b = fs::temp_directory_path() / "lagsim_accept_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    write_report(r1, dir_a.string());
    write_report(r2, dir_b.string());
    for (const char* name : {"rtt.csv", "throughput.csv", "flows_before.csv",
                             "flows_after.csv", "events.csv", "summary.txt"}) {
        std::string a = slurp(dir_a / name);
        c.expect(!a.empty(), std::string(name) + " is empty");
        c.expect(a == slurp(dir_b / name), std::string(name) + " differs between reruns");
    }
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    return c;
}

}  // namespace

int main() {
    std::function<Criterion()> criteria[] = {
        flow_entry_pattern, failover_behavior,   bandwidth_division, lacp_convergence,
        codec_roundtrip,    ordering_invariant, duplicate_injection, determinism,
    };

    int failed = 0;
    int index = 0;
    for (const auto& fn : criteria) {
        ++index;
        Criterion c("criterion " + std::to_string(index) + " threw");
        try {
            c = fn();
        } catch (const std::exception& e) {
            c.problems.push_back(std::string("exception: ") + e.what());
        }
        if (c.pass()) {
            std::cout << "[PASS] " << index << ". " << c.label << "\n";
        } else {
            ++failed;
            std::cout << "[FAIL] " << index << ". " << c.label;
            for (const std::string& why : c.problems) {
                std::cout << "\n       - " << why;
            }
            std::cout << "\n";
        }
    }
    if (failed != 0) {
        std::cout << failed << " of 8 criteria failed\n";
    }
    return failed == 0 ? 0 : 1;
}
