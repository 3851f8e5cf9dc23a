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

#include "lagsim/controller.hpp"
#include "lagsim/core.hpp"
#include "lagsim/simnet.hpp"

namespace lagsim {

enum class ScenarioName { Topo2, Topo8, Custom };
ScenarioName parse_scenario_name(const std::string& name);
const char* to_string(ScenarioName name);

enum class TrafficKind { Ping, Bulk };
TrafficKind parse_traffic_kind(const std::string& name);

// Knobs for one scenario run. The named scenarios force their shape
// (topo2: 2 members and clients h2..h4, topo8: 8 and h2..h9, both ping
// driven); everything else is taken from here as given.
struct ScenarioParams {
    TopologySpec topology{};
    TrafficKind traffic = TrafficKind::Ping;
    SimTime ping_interval = SimTime::from_millis(100);
    std::int64_t demand_bps = 0;  // bulk flows; 0 means 1.2x link capacity
    bool kill_enabled = true;
    std::uint16_t kill_link = 1;
    SimTime kill_at = SimTime::from_whole_seconds(30);
    SimTime duration = SimTime::from_whole_seconds(60);
    SimTime traffic_start = SimTime::from_millis(500);
    std::uint64_t seed = 1;
};

// Failover verdict for one host's echo series.
struct FailoverResult {
    bool recovered = false;
    double delay_s = 0.0;  // meaningful only when recovered
};

// Everything a run produces, enough to regenerate every report file.
struct ScenarioReport {
    ScenarioParams params{};  // effective values after scenario shaping

    std::map<int, std::vector<PingSample>> rtt;  // host number -> series
    // host number -> window start (whole s) -> delivered payload bits.
    std::map<int, std::map<std::int64_t, std::int64_t>> throughput;

    // Only hosts whose conversation was remapped or disturbed appear here.
    std::map<int, FailoverResult> failover;

    std::uint64_t duplicate_count = 0;  // collector-flagged duplicates
    std::uint64_t reorder_count = 0;
    std::uint64_t loss_count = 0;
    std::vector<ConversationId> duplicate_conversations;
    std::uint64_t injected_duplicates = 0;

    std::vector<FlowEntry> flows_before;  // at the kill (or run end if none)
    std::vector<FlowEntry> flows_after;   // at run end
    std::vector<ReportEvent> events;

    bool kill_fired = false;
    SimTime kill_time{};

    // per-host echo accounting: sent = replied + lost always holds
    std::map<int, std::uint64_t> sent, replied, lost, duplicate_replies;

    std::uint64_t trace_digest = 0;
};

// Runs one complete experiment: builds the topology, drives traffic and the
// optional link kill, and distills the report. Identical (name, params)
// pairs produce identical reports. Invalid parameters: ConfigError.
ScenarioReport run_scenario(ScenarioName name, const ScenarioParams& params);

// Time from the kill until the series looks healthy again. Healthy means a
// reply-bearing request with RTT within 2x the pre-kill median; if the very
// first post-kill request is already healthy the delay is 0. recovered =
// false when no such sample exists. Empty series or a kill time outside the
// series span: ConfigError.
FailoverResult failover_delay(const std::vector<PingSample>& series, SimTime kill_time);

struct FairnessVerdict {
    bool pass = false;
    // host number -> steady-state delivered bits per second
    std::map<int, double> steady_bps;
    double expected_bps = 0.0;
    double max_deviation = 0.0;  // fraction of expected
    // Hash collisions found in per-link mode, e.g. "h2,h5 share member 1".
    std::vector<std::string> collisions;
};

// Steady-state throughput equality at a 5% tolerance: per-link mode expects
// every flow near link capacity, shared mode near capacity / N.
FairnessVerdict fairness_check(const ScenarioReport& report, BandwidthMode mode);

struct AnomalyReport {
    std::uint64_t duplicate_count = 0;
    std::uint64_t reorder_count = 0;
    bool periodic_burst_flag = false;
    std::vector<ConversationId> duplicate_conversations;
    int burst_host = 0;  // host whose series tripped the flag, 0 if none
};

// Counts collector-flagged anomalies and looks for near-periodic RTT burst
// patterns: >= 3 spikes above 5x the host's median RTT whose spacing varies
// by less than 20% of the mean gap. Spikes closer than one second apart
// count as one burst.
AnomalyReport anomaly_scan(const ScenarioReport& report);

// Writes rtt.csv, throughput.csv, flows_before.csv, flows_after.csv,
// events.csv and summary.txt under `dir` (created if missing). Identical
// reports produce byte-identical files. I/O failure: SimulationError
// naming the path.
void write_report(const ScenarioReport& report, const std::string& dir);

}  // namespace lagsim
