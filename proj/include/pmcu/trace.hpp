// Copyright 2026 The PMCU Simulator Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pmcu/types.hpp"

namespace pmcu {

enum class EventKind : uint8_t {
    TaskStart,
    TaskSwitch,
    TickDelivered,
    TickDeferred,
    IrqDisable,
    IrqEnable,
    TaskBlock,
    TaskWake,
    TaskExit,
    Crash,
};

const char* event_kind_name(EventKind k);

// One scheduler event. `seq` increases by exactly one per event within a
// run; `virtual_time` is the machine's progress counter at emission time.
// `from`/`to` are kNoTask when the kind does not carry that field:
//   TaskStart     to
//   TaskSwitch    from, to
//   TaskBlock     from
//   TaskWake      to
//   TaskExit      from
// all other kinds carry neither.
struct TraceEvent {
    uint64_t seq = 0;
    uint64_t virtual_time = 0;
    EventKind kind = EventKind::TaskStart;
    TaskId from = kNoTask;
    TaskId to = kNoTask;

    bool operator==(const TraceEvent&) const = default;
};

// Stable one-line form: "seq=<n> t=<vt> kind=<KIND> [from=<id>] [to=<id>]".
std::string trace_line(const TraceEvent& ev);

// Inverse of trace_line. Returns nullopt for malformed lines.
std::optional<TraceEvent> parse_trace_line(const std::string& line);

std::string trace_to_text(const std::vector<TraceEvent>& events);

// FNV-1a 64 over the serialized text (one '\n' after every line).
uint64_t trace_hash(const std::vector<TraceEvent>& events);
uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 14695981039346656037ull);

struct TraceDiff {
    size_t line = 0;  // 0-based index of first difference
    std::string left;   // empty when the side is exhausted
    std::string right;
};

// First difference between two traces in text form, or nullopt if identical.
std::optional<TraceDiff> diff_trace_text(const std::string& a, const std::string& b);

}  // namespace pmcu
