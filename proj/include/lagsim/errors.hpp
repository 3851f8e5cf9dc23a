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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lagsim {

// Malformed textual input (MAC addresses, config files).
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid topology or scenario parameters; the message names the field.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& field, const std::string& why)
        : std::runtime_error("invalid " + field + ": " + why), field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

// Base for LACPDU decode failures.
class DecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FrameLengthError : public DecodeError {
public:
    explicit FrameLengthError(std::size_t got);
    std::size_t got() const { return got_; }

private:
    std::size_t got_;
};

class NotLacpError : public DecodeError {
public:
    explicit NotLacpError(unsigned subtype);
};

class MalformedPduError : public DecodeError {
public:
    MalformedPduError(std::size_t offset, const std::string& why);
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

// Asked to distribute a frame while no port is eligible to carry it.
class NoDistributingPortError : public std::runtime_error {
public:
    NoDistributingPortError() : std::runtime_error("no distributing port available") {}
};

// Internal bug trap: the event loop was asked to do something impossible,
// e.g. schedule an event in the past. Aborts the run.
class SimulationError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace lagsim
