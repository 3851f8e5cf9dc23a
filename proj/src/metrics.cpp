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
#include "lagsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lagsim/aggregator.hpp"
#include "lagsim/errors.hpp"

namespace lagsim {
namespace {

const char* mode_name(BandwidthMode m) {
    return m == BandwidthMode::PerLink ? "per-link" : "shared";
}
const char* policy_name(DistributionPolicy p) {
    return p == DistributionPolicy::XorHash ? "xor-hash" : "round-robin";
}
const char* detection_name(DetectionMode d) {
    switch (d) {
        case DetectionMode::Monitor:
            return "monitor";
        case DetectionMode::Lacpdu:
            return "lacpdu";
        case DetectionMode::Both:
            return "both";
    }
    return "?";
}
const char* inject_name(InjectMode i) {
    return i == InjectMode::None ? "none" : "duplicate-on-reforward";
}
const char* traffic_name(TrafficKind t) { return t == TrafficKind::Ping ? "ping" : "bulk"; }

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string percent1(double fraction) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f%%", fraction * 100.0);
    return buf;
}

// Median of replied RTTs in microseconds; nullopt when nothing replied.
std::optional<double> median_rtt_us(const std::vector<PingSample>& series,
                                    std::optional<SimTime> before) {
    std::vector<double> vals;
    for (const PingSample& s : series) {
        if (before.has_value() && s.sent_at >= *before) {
            continue;
        }
        if (s.rtt.has_value()) {
            vals.push_back(static_cast<double>(s.rtt->micros()));
        }
    }
    if (vals.empty()) {
        return std::nullopt;
    }
    std::sort(vals.begin(), vals.end());
    std::size_t n = vals.size();
    if (n % 2 == 1) {
        return vals[n / 2];
    }
    return (vals[n / 2 - 1] + vals[n / 2]) / 2.0;
}

std::string csv_field(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    return s;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out.is_open()) {
        throw SimulationError("cannot open for writing: " + path);
    }
    out << content;
    out.flush();
    if (!out.good()) {
        throw SimulationError("write failed: " + path);
    }
}

}  // namespace

ScenarioName parse_scenario_name(const std::string& name) {
    if (name == "topo2") {
        return ScenarioName::Topo2;
    }
    if (name == "topo8") {
        return ScenarioName::Topo8;
    }
    if (name == "custom") {
        return ScenarioName::Custom;
    }
    throw ConfigError("scenario", "expected topo2, topo8 or custom, got '" + name + "'");
}

const char* to_string(ScenarioName name) {
    switch (name) {
        case ScenarioName::Topo2:
            return "topo2";
        case ScenarioName::Topo8:
            return "topo8";
        case ScenarioName::Custom:
            return "custom";
    }
    return "?";
}

TrafficKind parse_traffic_kind(const std::string& name) {
    if (name == "ping") {
        return TrafficKind::Ping;
    }
    if (name == "bulk") {
        return TrafficKind::Bulk;
    }
    throw ConfigError("traffic", "expected ping or bulk, got '" + name + "'");
}

FailoverResult failover_delay(const std::vector<PingSample>& series, SimTime kill_time) {
    if (series.empty()) {
        throw ConfigError("series", "failover_delay needs a nonempty series");
    }
    if (kill_time > series.back().sent_at) {
        throw ConfigError("kill_time", "beyond the series span");
    }
    std::optional<double> med = median_rtt_us(series, kill_time);
    if (!med.has_value()) {
        med = median_rtt_us(series, std::nullopt);  // kill before first reply
    }
    if (!med.has_value()) {
        return {false, 0.0};  // nothing ever replied
    }
    double healthy_bound = 2.0 * *med;

    const PingSample* first_post = nullptr;
    for (const PingSample& s : series) {
        if (s.sent_at < kill_time) {
            continue;
        }
        if (first_post == nullptr) {
            first_post = &s;
        }
        if (s.rtt.has_value() && static_cast<double>(s.rtt->micros()) <= healthy_bound) {
            if (&s == first_post) {
                return {true, 0.0};  // never disturbed
            }
            return {true, (s.sent_at - kill_time).seconds()};
        }
    }
    return {false, 0.0};
}

ScenarioReport run_scenario(ScenarioName name, const ScenarioParams& params) {
    ScenarioParams p = params;
    switch (name) {
        case ScenarioName::Topo2:
            p.topology.lag_width = 2;
            p.topology.client_count = 3;
            p.traffic = TrafficKind::Ping;
            break;
        case ScenarioName::Topo8:
            p.topology.lag_width = 8;
            p.topology.client_count = 8;
            p.traffic = TrafficKind::Ping;
            break;
        case ScenarioName::Custom:
            break;
    }
    validate_topology_spec(p.topology);
    if (p.duration <= SimTime{}) {
        throw ConfigError("duration", "must be positive, got " + p.duration.to_string());
    }
    if (p.ping_interval <= SimTime{}) {
        throw ConfigError("ping-interval",
                          "must be positive, got " + p.ping_interval.to_string());
    }
    if (p.traffic_start < SimTime{}) {
        throw ConfigError("traffic-start",
                          "must be non-negative, got " + p.traffic_start.to_string());
    }
    if (p.demand_bps < 0) {
        throw ConfigError("demand", "must be non-negative, got " + std::to_string(p.demand_bps));
    }
    int total_links = p.topology.lag_width + p.topology.client_count;
    if (p.kill_enabled && (p.kill_link < 1 || p.kill_link > total_links)) {
        throw ConfigError("kill-link", "unknown link id " + std::to_string(p.kill_link));
    }
    if (p.kill_enabled && p.kill_at < SimTime{}) {
        throw ConfigError("kill-at", "must be non-negative, got " + p.kill_at.to_string());
    }

    auto sim = build_topology(p.topology, p.seed);
    std::int64_t demand =
        p.demand_bps > 0 ? p.demand_bps : p.topology.link_capacity_bps * 12 / 10;
    for (int j = 1; j <= p.topology.client_count; ++j) {
        if (p.traffic == TrafficKind::Ping) {
            ping_generator(*sim, j, p.ping_interval, p.traffic_start, p.duration);
        } else {
            bulk_generator(*sim, j, demand, p.traffic_start, p.duration);
        }
    }
    bool kill_fires = p.kill_enabled && p.kill_at <= p.duration;
    if (kill_fires) {
        schedule_link_kill(*sim, p.kill_link, p.kill_at);
    }
    run(*sim, p.duration);

    ScenarioReport report;
    report.params = p;
    report.kill_fired = kill_fires;
    report.kill_time = p.kill_at;

    for (int j = 1; j <= p.topology.client_count; ++j) {
        int host = j + 1;
        std::vector<PingSample> series = sim->ping_samples(j);
        for (PingSample& s : series) {
            if (!s.rtt.has_value() && !s.lost) {
                s.lost = true;  // unanswered at run end
            }
        }
        report.sent[host] = series.size();
        std::uint64_t replied = 0, lost = 0, dups = 0;
        for (const PingSample& s : series) {
            if (s.rtt.has_value()) {
                ++replied;
            }
            if (s.lost) {
                ++lost;
            }
            dups += s.duplicate_replies;
        }
        report.replied[host] = replied;
        report.lost[host] = lost;
        report.duplicate_replies[host] = dups;
        report.loss_count += lost;
        report.rtt[host] = std::move(series);
    }
    for (const auto& [client, windows] : sim->throughput_bits()) {
        report.throughput[client + 1] = windows;
    }

    report.duplicate_count = sim->server_collector().duplicates();
    report.reorder_count = sim->server_collector().reorderings();
    report.duplicate_conversations = sim->server_collector().duplicate_conversations();
    report.injected_duplicates = sim->controller().injected().size();
    report.events = sim->report_events();
    report.flows_after = sim->flow_table_now();
    report.flows_before = kill_fires ? sim->flows_before_kill() : report.flows_after;
    report.trace_digest = sim->loop().trace_digest();

    if (kill_fires) {
        for (int j = 1; j <= p.topology.client_count; ++j) {
            int host = j + 1;
            const std::vector<PingSample>& series = report.rtt[host];
            if (series.empty()) {
                continue;
            }
            MacAddress mac = sim->client_mac(j);

            bool remapped = false;
            std::string mac_str = mac.to_string();
            for (const ReportEvent& e : report.events) {
                // remap detail is "src;dst;old_port;new_port"
                if (e.kind == "remap" && e.detail.find(mac_str) != std::string::npos) {
                    remapped = true;
                    break;
                }
            }
            auto port_of = [&](const std::vector<FlowEntry>& table)
                -> std::optional<std::uint16_t> {
                for (const FlowEntry& e : table) {
                    if (e.match_src.has_value() && *e.match_src == mac) {
                        return e.out_port;
                    }
                }
                return std::nullopt;
            };
            std::optional<std::uint16_t> before = port_of(report.flows_before);
            std::optional<std::uint16_t> after = port_of(report.flows_after);
            if (before.has_value() && after.has_value() && *before != *after) {
                remapped = true;
            }

            bool disturbed = false;
            std::optional<double> med = median_rtt_us(series, p.kill_at);
            if (med.has_value()) {
                for (const PingSample& s : series) {
                    if (s.sent_at < p.kill_at) {
                        continue;
                    }
                    if (s.lost ||
                        (s.rtt.has_value() &&
                         static_cast<double>(s.rtt->micros()) > 1.25 * *med)) {
                        disturbed = true;
                        break;
                    }
                }
            }
            if (!remapped && !disturbed) {
                continue;
            }
            try {
                report.failover[host] = failover_delay(series, p.kill_at);
            } catch (const ConfigError&) {
                report.failover[host] = {false, 0.0};  // no post-kill traffic
            }
        }
    }
    return report;
}

FairnessVerdict fairness_check(const ScenarioReport& report, BandwidthMode mode) {
    FairnessVerdict v;
    const TopologySpec& t = report.params.topology;
    int n = t.client_count;
    v.expected_bps = mode == BandwidthMode::Shared
                         ? static_cast<double>(t.link_capacity_bps) / n
                         : static_cast<double>(t.link_capacity_bps);

    std::int64_t lo = report.params.traffic_start.micros() / 1'000'000 + 2;
    std::int64_t hi = report.params.duration.micros() / 1'000'000 - 2;
    for (int j = 1; j <= n; ++j) {
        int host = j + 1;
        double total = 0.0;
        std::int64_t windows = 0;
        auto it = report.throughput.find(host);
        if (hi >= lo) {
            for (std::int64_t w = lo; w <= hi; ++w) {
                if (it != report.throughput.end()) {
                    auto wit = it->second.find(w);
                    if (wit != it->second.end()) {
                        total += static_cast<double>(wit->second);
                    }
                }
                ++windows;
            }
        } else if (it != report.throughput.end()) {
            for (const auto& [w, bits] : it->second) {
                total += static_cast<double>(bits);
                ++windows;
            }
        }
        v.steady_bps[host] = windows > 0 ? total / static_cast<double>(windows) : 0.0;
    }

    v.pass = true;
    for (const auto& [host, bps] : v.steady_bps) {
        double dev = std::abs(bps - v.expected_bps) / v.expected_bps;
        v.max_deviation = std::max(v.max_deviation, dev);
        if (dev > 0.05) {
            v.pass = false;
        }
    }

    if (mode == BandwidthMode::PerLink) {
        std::vector<std::uint16_t> members;
        for (int i = 1; i <= t.lag_width; ++i) {
            members.push_back(static_cast<std::uint16_t>(i));
        }
        std::map<std::uint16_t, std::vector<int>> by_member;
        for (int j = 1; j <= n; ++j) {
            MacAddress mac = t.client_mac_override.empty() ? canonical_client_mac(j + 1)
                                                           : t.client_mac_override[j - 1];
            std::uint16_t port = hash_select_port(ConversationId{mac, bond_mac()}, members);
            by_member[port].push_back(j + 1);
        }
        for (const auto& [port, hosts] : by_member) {
            if (hosts.size() < 2) {
                continue;
            }
            std::string names;
            for (std::size_t i = 0; i < hosts.size(); ++i) {
                names += (i ? "," : "") + host_label(hosts[i]);
            }
            v.collisions.push_back(names + " share member " + std::to_string(port));
        }
    }
    return v;
}

AnomalyReport anomaly_scan(const ScenarioReport& report) {
    AnomalyReport a;
    a.duplicate_count = report.duplicate_count;
    a.reorder_count = report.reorder_count;
    a.duplicate_conversations = report.duplicate_conversations;

    for (const auto& [host, series] : report.rtt) {
        std::optional<double> med = median_rtt_us(series, std::nullopt);
        if (!med.has_value() || *med <= 0.0) {
            continue;
        }
        std::vector<SimTime> bursts;
        for (const PingSample& s : series) {
            if (!s.rtt.has_value() ||
                static_cast<double>(s.rtt->micros()) <= 5.0 * *med) {
                continue;
            }
            if (bursts.empty() ||
                s.sent_at - bursts.back() >= SimTime::from_whole_seconds(1)) {
                bursts.push_back(s.sent_at);
            }
        }
        if (bursts.size() < 3) {
            continue;
        }
        std::vector<double> gaps;
        for (std::size_t i = 1; i < bursts.size(); ++i) {
            gaps.push_back((bursts[i] - bursts[i - 1]).seconds());
        }
        double mean = 0.0;
        for (double g : gaps) {
            mean += g;
        }
        mean /= static_cast<double>(gaps.size());
        bool periodic = mean > 0.0;
        for (double g : gaps) {
            if (std::abs(g - mean) >= 0.2 * mean) {
                periodic = false;
            }
        }
        if (periodic) {
            a.periodic_burst_flag = true;
            a.burst_host = host;
            break;
        }
    }
    return a;
}

void write_report(const ScenarioReport& report, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw SimulationError("cannot create report directory " + dir + ": " + ec.message());
    }

    std::string rtt = "time,host,seq,rtt_s,flags\n";
    for (const auto& [host, series] : report.rtt) {
        for (const PingSample& s : series) {
            std::string flags;
            if (s.lost) {
                flags = "lost";
            }
            if (s.duplicate_replies > 0) {
                flags += flags.empty() ? "duplicate" : ";duplicate";
            }
            rtt += s.sent_at.to_string() + "," + host_label(host) + "," +
                   std::to_string(s.seq) + "," +
                   (s.rtt.has_value() ? s.rtt->to_string() : "") + "," + flags + "\n";
        }
    }
    write_file(dir + "/rtt.csv", rtt);

    std::string tput = "window_start,host,bits_per_s\n";
    for (const auto& [host, windows] : report.throughput) {
        for (const auto& [w, bits] : windows) {
            tput += std::to_string(w) + "," + host_label(host) + "," + std::to_string(bits) +
                    "\n";
        }
    }
    write_file(dir + "/throughput.csv", tput);

    write_file(dir + "/flows_before.csv", flow_table_to_csv(report.flows_before));
    write_file(dir + "/flows_after.csv", flow_table_to_csv(report.flows_after));

    std::string events = "time,kind,detail\n";
    for (const ReportEvent& e : report.events) {
        events += e.time.to_string() + "," + csv_field(e.kind) + "," + csv_field(e.detail) +
                  "\n";
    }
    write_file(dir + "/events.csv", events);

    // summary.txt: restate the headline conclusions with a per-run status.
    const ScenarioParams& p = report.params;
    std::ostringstream s;
    s << "links: " << p.topology.lag_width << "  clients: " << p.topology.client_count
      << "  mode: " << mode_name(p.topology.bandwidth_mode)
      << "  policy: " << policy_name(p.topology.policy)
      << "  detection: " << detection_name(p.topology.detection)
      << "  inject: " << inject_name(p.topology.inject) << "\n";
    s << "traffic: " << traffic_name(p.traffic) << "  seed: " << p.seed
      << "  duration_s: " << p.duration.to_string() << "\n";
    if (report.kill_fired) {
        s << "kill: link " << p.kill_link << " at " << report.kill_time.to_string() << "\n";
    } else {
        s << "kill: none\n";
    }
    s << "\n";

    if (p.traffic == TrafficKind::Bulk) {
        FairnessVerdict fv = fairness_check(report, p.topology.bandwidth_mode);
        s << "[fairness] equal data rate across simultaneous connections: "
          << (fv.pass ? "PASS" : "FAIL") << " (expected " << fixed6(fv.expected_bps)
          << " bps, max deviation " << percent1(fv.max_deviation) << ")\n";
        for (const std::string& c : fv.collisions) {
            s << "[fairness]   collision: " << c << "\n";
        }
    } else {
        s << "[fairness] equal data rate across simultaneous connections: N-A (no bulk "
             "traffic)\n";
    }

    if (report.kill_fired) {
        bool all = true;
        double worst = 0.0;
        std::string stragglers;
        for (const auto& [host, fr] : report.failover) {
            if (!fr.recovered) {
                all = false;
                stragglers += (stragglers.empty() ? "" : ",") + host_label(host);
            } else {
                worst = std::max(worst, fr.delay_s);
            }
        }
        if (report.failover.empty()) {
            s << "[failover] disturbed connections recover: PASS (no host disturbed)\n";
        } else if (all) {
            s << "[failover] disturbed connections recover: PASS ("
              << report.failover.size() << " affected, max delay " << fixed6(worst)
              << " s)\n";
        } else {
            s << "[failover] disturbed connections recover: FAIL (" << stragglers
              << " not recovered)\n";
        }
    } else {
        s << "[failover] disturbed connections recover: N-A (no link kill)\n";
    }

    if (p.topology.inject == InjectMode::None) {
        s << "[duplicates] duplicate-free delivery: "
          << (report.duplicate_count == 0 ? "PASS (0 duplicates)"
                                          : "FAIL (" + std::to_string(report.duplicate_count) +
                                                " duplicates)")
          << "\n";
    } else if (report.duplicate_count > 0) {
        s << "[duplicates] duplicate-free delivery: REPRODUCED-UNDER-INJECTION ("
          << report.duplicate_count << " duplicates, " << report.injected_duplicates
          << " injected)\n";
    } else {
        s << "[duplicates] duplicate-free delivery: ABSENT (injection armed, none "
             "observed)\n";
    }

    AnomalyReport an = anomaly_scan(report);
    if (an.periodic_burst_flag) {
        s << "[bursts] periodic delay bursts absent: FAIL (near-periodic bursts on "
          << host_label(an.burst_host) << ")\n";
    } else {
        s << "[bursts] periodic delay bursts absent: PASS (none detected)\n";
    }
    s << "\n";

    std::uint64_t sent = 0, replied = 0, lost = 0, dups = 0;
    for (const auto& [host, n] : report.sent) {
        sent += n;
    }
    for (const auto& [host, n] : report.replied) {
        replied += n;
    }
    for (const auto& [host, n] : report.lost) {
        lost += n;
    }
    for (const auto& [host, n] : report.duplicate_replies) {
        dups += n;
    }
    s << "pings: sent=" << sent << " replied=" << replied << " lost=" << lost
      << " duplicate_replies=" << dups << "\n";
    s << "collector: duplicates=" << report.duplicate_count
      << " reorders=" << report.reorder_count << "\n";
    s << "injected_duplicates: " << report.injected_duplicates << "\n";
    char digest[32];
    std::snprintf(digest, sizeof(digest), "%016llx",
                  static_cast<unsigned long long>(report.trace_digest));
    s << "trace_digest: " << digest << "\n";
    write_file(dir + "/summary.txt", s.str());
}

}  // namespace lagsim
