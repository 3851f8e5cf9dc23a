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
#include "lagsim/core.hpp"

#include <cmath>
#include <cstdio>

namespace lagsim {

SimTime SimTime::from_seconds(double s) {
    return SimTime::from_micros(static_cast<std::int64_t>(std::llround(s * 1e6)));
}

std::string SimTime::to_string() const {
    std::int64_t us = us_;
    const char* sign = "";
    if (us < 0) {
        sign = "-";
        us = -us;
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%s%lld.%06lld", sign,
                  static_cast<long long>(us / 1'000'000),
                  static_cast<long long>(us % 1'000'000));
    return buf;
}

std::string MacAddress::to_string() const {
    char buf[18];
    std::snprintf(buf, sizeof(buf), "%02x:%02x:%02x:%02x:%02x:%02x", octets[0], octets[1],
                  octets[2], octets[3], octets[4], octets[5]);
    return buf;
}

namespace {

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

}  // namespace

MacAddress MacAddress::parse(std::string_view text) {
    if (text.size() != 17) {
        throw ParseError("mac address '" + std::string(text) +
                         "': expected 17 characters, got " + std::to_string(text.size()));
    }
    MacAddress mac;
    for (int pair = 0; pair < 6; ++pair) {
        const std::size_t base = static_cast<std::size_t>(pair) * 3;
        const int hi = hex_value(text[base]);
        const int lo = hex_value(text[base + 1]);
        if (hi < 0 || lo < 0) {
            throw ParseError("mac address '" + std::string(text) +
                             "': invalid hex digit at pair " + std::to_string(pair + 1));
        }
        mac.octets[static_cast<std::size_t>(pair)] =
            static_cast<std::uint8_t>(hi * 16 + lo);
        if (pair < 5 && text[base + 2] != ':') {
            throw ParseError("mac address '" + std::string(text) +
                             "': expected ':' after pair " + std::to_string(pair + 1));
        }
    }
    return mac;
}

bool MacAddress::is_zero() const {
    for (auto o : octets) {
        if (o != 0) return false;
    }
    return true;
}

const char* to_string(FrameKind k) {
    switch (k) {
        case FrameKind::EchoRequest: return "echo-request";
        case FrameKind::EchoReply: return "echo-reply";
        case FrameKind::Bulk: return "bulk";
        case FrameKind::Lacpdu: return "lacpdu";
    }
    return "?";
}

std::strong_ordering compare_system(const SystemId& a, const SystemId& b) {
    return a <=> b;
}

FrameLengthError::FrameLengthError(std::size_t got)
    : DecodeError("lacpdu frame length " + std::to_string(got) + ", expected 110"), got_(got) {}

NotLacpError::NotLacpError(unsigned subtype)
    : DecodeError("subtype 0x" + [] (unsigned v) {
          char b[8];
          std::snprintf(b, sizeof(b), "%02x", v);
          return std::string(b);
      }(subtype) + " is not lacp") {}

MalformedPduError::MalformedPduError(std::size_t offset, const std::string& why)
    : DecodeError("malformed lacpdu at offset " + std::to_string(offset) + ": " + why),
      offset_(offset) {}

}  // namespace lagsim
