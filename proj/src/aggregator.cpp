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
#include "lagsim/aggregator.hpp"

#include <algorithm>
#include <sstream>

#include "lagsim/errors.hpp"

namespace lagsim {
namespace {

bool by_port_number(const PortIdentity& a, const PortIdentity& b) {
    return a.number < b.number;
}

void sort_ports(std::vector<PortIdentity>& ports) {
    std::sort(ports.begin(), ports.end(), by_port_number);
}

}  // namespace

std::uint8_t fold_mac(const MacAddress& mac) {
    std::uint8_t acc = 0;
    for (std::uint8_t octet : mac.octets) {
        acc = static_cast<std::uint8_t>(acc ^ octet);
    }
    return acc;
}

std::uint8_t conversation_hash(const ConversationId& conv) {
    return static_cast<std::uint8_t>(fold_mac(conv.src) ^ fold_mac(conv.dst));
}

PortIdentity hash_select(const Frame& frame, std::vector<PortIdentity> ports) {
    if (ports.empty()) {
        throw NoDistributingPortError();
    }
    sort_ports(ports);
    return ports[conversation_hash(frame.conversation()) % ports.size()];
}

std::uint16_t hash_select_port(const ConversationId& conv, std::vector<std::uint16_t> ports) {
    if (ports.empty()) {
        throw NoDistributingPortError();
    }
    std::sort(ports.begin(), ports.end());
    return ports[conversation_hash(conv) % ports.size()];
}

bool Aggregator::is_attached(const PortIdentity& p) const {
    return std::find(attached_ports.begin(), attached_ports.end(), p) != attached_ports.end();
}

Aggregator attach_port(Aggregator agg, const PortIdentity& port) {
    if (!agg.is_attached(port)) {
        agg.attached_ports.push_back(port);
        sort_ports(agg.attached_ports);
    }
    return agg;
}

Aggregator detach_port(Aggregator agg, const PortIdentity& port) {
    std::erase(agg.attached_ports, port);
    std::erase(agg.distributing_ports, port);
    return agg;
}

DistributeResult distribute(const Frame& frame, const Aggregator& agg) {
    return {hash_select(frame, agg.distributing_ports), frame};
}

PortChangeResult on_port_state_change(Aggregator agg, const PortIdentity& port,
                                      bool distributing,
                                      const std::vector<ConversationId>& observed, SimTime now) {
    if (!agg.is_attached(port)) {
        throw SimulationError("port state change for a port not attached to the aggregator");
    }
    std::vector<PortIdentity> old_set = agg.distributing_ports;

    std::erase(agg.distributing_ports, port);
    if (distributing) {
        agg.distributing_ports.push_back(port);
    }
    sort_ports(agg.distributing_ports);

    PortChangeResult result{std::move(agg), {}};
    if (old_set == result.agg.distributing_ports) {
        return result;
    }
    if (old_set.empty() || result.agg.distributing_ports.empty()) {
        return result;  // nothing to compare against
    }
    for (const ConversationId& conv : observed) {
        Frame probe;
        probe.src = conv.src;
        probe.dst = conv.dst;
        PortIdentity before = hash_select(probe, old_set);
        PortIdentity after = hash_select(probe, result.agg.distributing_ports);
        if (!(before == after)) {
            result.remaps.push_back({now, conv, before, after});
        }
    }
    return result;
}

std::string remap_report_to_csv(const std::vector<RemapEntry>& remaps) {
    std::ostringstream out;
    out << "time,conversation_src,conversation_dst,old_port,new_port\n";
    for (const RemapEntry& r : remaps) {
        out << r.time.to_string() << ',' << r.conversation.src.to_string() << ','
            << r.conversation.dst.to_string() << ',' << r.old_port.number << ','
            << r.new_port.number << '\n';
    }
    return out.str();
}

CollectVerdict CollectorState::collect(const Frame& frame, const PortIdentity& from) {
    (void)from;  // arrival order is the call order; no per-port buffering needed
    CollectVerdict v;
    ConvLog& log = conv_[frame.conversation()];

    bool seen_before =
        (log.any && frame.seq < log.next_expected) || log.ahead.count(frame.seq) != 0;
    if (seen_before) {
        v.duplicate = true;
        ++duplicates_;
        ++log.dup_count;
        return v;
    }

    if (log.any && frame.seq < log.highest) {
        v.reordered = true;
        ++reorderings_;
    }

    if (frame.seq == log.next_expected) {
        ++log.next_expected;
        while (log.ahead.count(log.next_expected) != 0) {
            log.ahead.erase(log.next_expected);
            ++log.next_expected;
        }
    } else {
        log.ahead[frame.seq] = true;
    }
    log.highest = std::max(log.highest, frame.seq);
    log.any = true;
    ++delivered_;
    return v;
}

std::vector<ConversationId> CollectorState::duplicate_conversations() const {
    std::vector<ConversationId> out;
    for (const auto& [conv, log] : conv_) {
        if (log.dup_count > 0) {
            out.push_back(conv);
        }
    }
    return out;  // map iteration is already sorted
}

DistributionPolicy parse_distribution_policy(const std::string& name) {
    if (name == "xor") {
        return DistributionPolicy::XorHash;
    }
    if (name == "round-robin") {
        return DistributionPolicy::RoundRobin;
    }
    throw ConfigError("policy", "expected xor or round-robin, got '" + name + "'");
}

Distributor::Distributor(DistributionPolicy policy) : policy_(policy) {}

void Distributor::attach(const PortIdentity& port) { agg_ = attach_port(std::move(agg_), port); }

void Distributor::detach(const PortIdentity& port, SimTime now) {
    if (std::find(agg_.distributing_ports.begin(), agg_.distributing_ports.end(), port) !=
        agg_.distributing_ports.end()) {
        set_distributing(port, false, now);
    }
    agg_ = detach_port(std::move(agg_), port);
}

void Distributor::set_distributing(const PortIdentity& port, bool distributing, SimTime now) {
    PortChangeResult r = on_port_state_change(std::move(agg_), port, distributing, observed(), now);
    agg_ = std::move(r.agg);
    remaps_.insert(remaps_.end(), r.remaps.begin(), r.remaps.end());
    rr_next_ = 0;
}

PortIdentity Distributor::pick(const Frame& frame) {
    if (agg_.distributing_ports.empty()) {
        throw NoDistributingPortError();
    }
    if (policy_ == DistributionPolicy::RoundRobin) {
        PortIdentity port = agg_.distributing_ports[rr_next_ % agg_.distributing_ports.size()];
        rr_next_ = (rr_next_ + 1) % agg_.distributing_ports.size();
        return port;
    }
    observed_[frame.conversation()] = true;
    return distribute(frame, agg_).port;
}

std::vector<ConversationId> Distributor::observed() const {
    std::vector<ConversationId> out;
    out.reserve(observed_.size());
    for (const auto& [conv, seen] : observed_) {
        out.push_back(conv);
    }
    return out;
}

}  // namespace lagsim
