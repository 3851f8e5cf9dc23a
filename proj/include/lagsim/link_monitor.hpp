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

#include <optional>
#include <utility>

#include "lagsim/core.hpp"

namespace lagsim {

enum class LinkState { Up, Down };

// Polled link-state supervision. The physical layer is sampled, not
// interrupt-driven, so a persistent transition is noticed at the first tick
// after it happens: detection latency is bounded by the poll interval, and
// flaps shorter than one interval can be missed entirely.
struct MonitorConfig {
    SimTime poll_interval = SimTime::from_millis(100);
    LinkState state = LinkState::Up;
    SimTime last_poll{};
};

// Monitor whose first poll call fires a tick immediately, whatever its
// phase. Throws ConfigError when poll_interval is not positive.
MonitorConfig make_monitor(SimTime poll_interval, LinkState initial, SimTime now);

struct PollResult {
    MonitorConfig cfg;
    std::optional<LinkState> transition;  // newly observed state, if changed
};

// Samples the physical state. A tick fires when at least poll_interval has
// elapsed since the last tick; only a fired tick can observe a change.
// Requires now >= cfg.last_poll (time does not run backwards).
PollResult poll(MonitorConfig cfg, LinkState physical, SimTime now);

}  // namespace lagsim
