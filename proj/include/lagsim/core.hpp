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

#include <array>
#include <compare>
#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lagsim/errors.hpp"
#include "lagsim/sim_time.hpp"

namespace lagsim {

// 48-bit Ethernet address. Canonical text form is six lowercase hex pairs
// joined by ':'.
struct MacAddress {
    std::array<std::uint8_t, 6> octets{};

    auto operator<=>(const MacAddress&) const = default;

    std::string to_string() const;

    // Parses canonical text. Throws ParseError naming the offending pair.
    static MacAddress parse(std::string_view text);

    bool is_zero() const;
};

// Ordering compares priority first, then address octets; lower wins.
struct SystemId {
    std::uint16_t priority = 0;
    MacAddress address{};

    auto operator<=>(const SystemId&) const = default;
};

// Port number zero is reserved to mean "no port"; real ports are nonzero.
struct PortIdentity {
    std::uint16_t priority = 0;
    std::uint16_t number = 0;

    auto operator<=>(const PortIdentity&) const = default;
};

// Ports may aggregate together only if their keys are equal.
struct LagKey {
    std::uint16_t value = 0;

    auto operator<=>(const LagKey&) const = default;
};

// Directional: (src, dst) is distinct from (dst, src).
struct ConversationId {
    MacAddress src{};
    MacAddress dst{};

    auto operator<=>(const ConversationId&) const = default;

    std::string to_string() const { return src.to_string() + ">" + dst.to_string(); }
};

enum class FrameKind : std::uint8_t {
    EchoRequest,
    EchoReply,
    Bulk,
    Lacpdu,
};

const char* to_string(FrameKind k);

// A simulated data-plane frame. payload_len is the full frame size in octets
// and is what the link model serializes. seq is strictly increasing per
// ConversationId at the sender. lacpdu_wire carries the encoded PDU for
// FrameKind::Lacpdu frames and is empty otherwise.
struct Frame {
    MacAddress src{};
    MacAddress dst{};
    std::uint64_t seq = 0;
    std::uint32_t payload_len = 0;
    SimTime sent_at{};
    FrameKind kind = FrameKind::Bulk;
    std::vector<std::uint8_t> lacpdu_wire{};

    ConversationId conversation() const { return ConversationId{src, dst}; }
};

// Three-way comparison helper used where an explicit ordering result reads
// better than operator<=> call syntax.
std::strong_ordering compare_system(const SystemId& a, const SystemId& b);

}  // namespace lagsim
