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

#include <compare>
#include <cstdint>
#include <string>

namespace lagsim {

// Simulated time as a signed 64-bit count of microseconds. Event ordering
// must never depend on floating point, so all scheduling math stays integral;
// doubles appear only at the reporting boundary.
class SimTime {
public:
    constexpr SimTime() = default;

    static constexpr SimTime from_micros(std::int64_t us) { return SimTime(us); }
    static constexpr SimTime from_millis(std::int64_t ms) { return SimTime(ms * 1000); }
    static constexpr SimTime from_whole_seconds(std::int64_t s) { return SimTime(s * 1'000'000); }
    static SimTime from_seconds(double s);

    constexpr std::int64_t micros() const { return us_; }
    double seconds() const { return static_cast<double>(us_) / 1e6; }

    // Fixed six-decimal seconds, e.g. "30.000000". Stable for CSV output.
    std::string to_string() const;

    friend constexpr SimTime operator+(SimTime a, SimTime b) { return SimTime(a.us_ + b.us_); }
    friend constexpr SimTime operator-(SimTime a, SimTime b) { return SimTime(a.us_ - b.us_); }
    friend constexpr SimTime operator*(SimTime a, std::int64_t k) { return SimTime(a.us_ * k); }
    constexpr SimTime& operator+=(SimTime o) { us_ += o.us_; return *this; }
    constexpr SimTime& operator-=(SimTime o) { us_ -= o.us_; return *this; }
    auto operator<=>(const SimTime&) const = default;

private:
    constexpr explicit SimTime(std::int64_t us) : us_(us) {}
    std::int64_t us_ = 0;
};

}  // namespace lagsim
