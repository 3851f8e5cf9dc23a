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
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "lagsim/errors.hpp"
#include "lagsim/metrics.hpp"

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) {
        throw lagsim::ConfigError("config", "cannot read " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lagsim: link-aggregation failover and bandwidth experiments"};
    app.require_subcommand(1);

    CLI::App* cmd = app.add_subcommand("run", "run one scenario and write CSV reports");

    std::string scenario = "topo2";
    std::string out_dir = "report";
    std::string config_path;
    std::string mode, inject, policy, detection, traffic;
    int links = 0;
    int clients = 0;
    int kill_link = -1;  // -1 keeps the scenario default; 0 disables
    double kill_at = -1.0;
    double duration = -1.0;
    double ping_interval = -1.0;
    double poll_interval = -1.0;
    double delay = -1.0;
    std::int64_t capacity = 0;
    std::int64_t demand = 0;
    std::uint64_t seed = 1;

    cmd->add_option("--scenario", scenario, "topo2, topo8 or custom")
        ->default_str("topo2");
    cmd->add_option("--links", links, "LAG width (custom scenario only)");
    cmd->add_option("--clients", clients, "client host count (custom scenario only)");
    cmd->add_option("--kill-link", kill_link, "link id to kill; 0 disables the kill");
    cmd->add_option("--kill-at", kill_at, "kill time in simulated seconds");
    cmd->add_option("--duration", duration, "run length in simulated seconds");
    cmd->add_option("--mode", mode, "bandwidth mode: per-link or shared");
    cmd->add_option("--inject", inject, "fault injection: none or duplicate-on-reforward");
    cmd->add_option("--seed", seed, "deterministic RNG seed")->default_str("1");
    cmd->add_option("--out", out_dir, "report directory")->default_str("report");
    cmd->add_option("--traffic", traffic, "traffic kind: ping or bulk");
    cmd->add_option("--demand", demand, "per-flow bulk demand in bits per second");
    cmd->add_option("--ping-interval", ping_interval, "echo interval in seconds");
    cmd->add_option("--capacity", capacity, "member link capacity in bits per second");
    cmd->add_option("--delay", delay, "one-way link delay in seconds");
    cmd->add_option("--policy", policy, "distribution policy: xor-hash or round-robin");
    cmd->add_option("--detection", detection, "failure detection: monitor, lacpdu or both");
    cmd->add_option("--poll-interval", poll_interval, "link monitor poll interval in seconds");
    cmd->add_option("--config", config_path, "key=value topology file, flags override it");

    CLI11_PARSE(app, argc, argv);

    try {
        lagsim::ScenarioName name = lagsim::parse_scenario_name(scenario);

        lagsim::ScenarioParams params;
        if (!config_path.empty()) {
            params.topology = lagsim::parse_topology_config(slurp(config_path));
        }
        if (name != lagsim::ScenarioName::Custom && (links > 0 || clients > 0)) {
            throw lagsim::ConfigError(
                "links", "named scenarios fix their shape; use --scenario custom");
        }
        if (links > 0) {
            params.topology.lag_width = links;
        }
        if (clients > 0) {
            params.topology.client_count = clients;
        }
        if (capacity > 0) {
            params.topology.link_capacity_bps = capacity;
        }
        if (delay >= 0.0) {
            params.topology.link_delay = lagsim::SimTime::from_seconds(delay);
        }
        if (poll_interval > 0.0) {
            params.topology.monitor_poll_interval =
                lagsim::SimTime::from_seconds(poll_interval);
        }
        if (!mode.empty()) {
            params.topology.bandwidth_mode = lagsim::parse_bandwidth_mode(mode);
        }
        if (!inject.empty()) {
            params.topology.inject = lagsim::parse_inject_mode(inject);
        }
        if (!policy.empty()) {
            params.topology.policy = lagsim::parse_distribution_policy(policy);
        }
        if (!detection.empty()) {
            params.topology.detection = lagsim::parse_detection_mode(detection);
        }
        if (!traffic.empty()) {
            params.traffic = lagsim::parse_traffic_kind(traffic);
        }

        // Custom runs only kill a link when one is named; the canonical
        // scenarios kill member link 1 unless --kill-link 0 turns that off.
        if (name == lagsim::ScenarioName::Custom) {
            params.kill_enabled = kill_link > 0;
        } else {
            params.kill_enabled = kill_link != 0;
        }
        if (kill_link > 0) {
            params.kill_link = static_cast<std::uint16_t>(kill_link);
        }
        if (kill_at >= 0.0) {
            params.kill_at = lagsim::SimTime::from_seconds(kill_at);
        }
        if (duration > 0.0) {
            params.duration = lagsim::SimTime::from_seconds(duration);
        }
        if (ping_interval > 0.0) {
            params.ping_interval = lagsim::SimTime::from_seconds(ping_interval);
        }
        if (demand > 0) {
            params.demand_bps = demand;
        }
        params.seed = seed;

        lagsim::ScenarioReport report = lagsim::run_scenario(name, params);
        lagsim::write_report(report, out_dir);

        std::uint64_t sent = 0, lost = 0;
        for (const auto& [host, n] : report.sent) {
            sent += n;
        }
        for (const auto& [host, n] : report.lost) {
            lost += n;
        }
        std::cout << "scenario " << lagsim::to_string(name) << " seed " << seed
                  << ": pings sent=" << sent << " lost=" << lost
                  << " duplicates=" << report.duplicate_count
                  << " reorders=" << report.reorder_count << "\n";
        std::cout << "report written to " << out_dir << "\n";
        return 0;
    } catch (const lagsim::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
