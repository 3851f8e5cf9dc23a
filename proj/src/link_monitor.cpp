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
#include "lagsim/link_monitor.hpp"

#include "lagsim/errors.hpp"

namespace lagsim {

MonitorConfig make_monitor(SimTime poll_interval, LinkState initial, SimTime now) {
    if (poll_interval <= SimTime{}) {
        throw ConfigError("poll_interval", "must be positive, got " + poll_interval.to_string());
    }
    MonitorConfig cfg;
    cfg.poll_interval = poll_interval;
    cfg.state = initial;
    cfg.last_poll = now - poll_interval;  // backdate so the next poll ticks
    return cfg;
}

PollResult poll(MonitorConfig cfg, LinkState physical, SimTime now) {
    if (now < cfg.last_poll) {
        throw SimulationError("monitor polled with time running backwards");
    }
    if (now - cfg.last_poll < cfg.poll_interval) {
        return {cfg, std::nullopt};
    }
    cfg.last_poll = now;
    if (physical == cfg.state) {
        return {cfg, std::nullopt};
    }
    cfg.state = physical;
    return {cfg, physical};
}

}  // namespace lagsim
