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

#include "pmcu/trace.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <sstream>

namespace pmcu {

const char* event_kind_name(EventKind k) {
    switch (k) {
        case EventKind::TaskStart: return "TaskStart";
        case EventKind::TaskSwitch: return "TaskSwitch";
        case EventKind::TickDelivered: return "TickDelivered";
        case EventKind::TickDeferred: return "TickDeferred";
        case EventKind::IrqDisable: return "IrqDisable";
        case EventKind::IrqEnable: return "IrqEnable";
        case EventKind::TaskBlock: return "TaskBlock";
        case EventKind::TaskWake: return "TaskWake";
        case EventKind::TaskExit: return "TaskExit";
        case EventKind::Crash: return "Crash";
    }
    return "?";
}

static bool kind_has_from(EventKind k) {
    return k == EventKind::TaskSwitch || k == EventKind::TaskBlock ||
           k == EventKind::TaskExit;
}

static bool kind_has_to(EventKind k) {
    return k == EventKind::TaskSwitch || k == EventKind::TaskStart ||
           k == EventKind::TaskWake;
}

std::string trace_line(const TraceEvent& ev) {
    char buf[96];
    int n = std::snprintf(buf, sizeof buf, "seq=%" PRIu64 " t=%" PRIu64 " kind=%s",
                          ev.seq, ev.virtual_time, event_kind_name(ev.kind));
    std::string out(buf, static_cast<size_t>(n));
    if (kind_has_from(ev.kind)) {
        n = std::snprintf(buf, sizeof buf, " from=%u", ev.from);
        out.append(buf, static_cast<size_t>(n));
    }
    if (kind_has_to(ev.kind)) {
        n = std::snprintf(buf, sizeof buf, " to=%u", ev.to);
        out.append(buf, static_cast<size_t>(n));
    }
    return out;
}

std::optional<TraceEvent> parse_trace_line(const std::string& line) {
    TraceEvent ev;
    bool have_seq = false, have_t = false, have_kind = false;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos) return std::nullopt;
        std::string key = tok.substr(0, eq);
        std::string val = tok.substr(eq + 1);
        if (val.empty()) return std::nullopt;
        if (key == "kind") {
            bool found = false;
            for (int k = 0; k <= static_cast<int>(EventKind::Crash); ++k) {
                if (val == event_kind_name(static_cast<EventKind>(k))) {
                    ev.kind = static_cast<EventKind>(k);
                    found = true;
                    break;
                }
            }
            if (!found) return std::nullopt;
            have_kind = true;
            continue;
        }
        char* end = nullptr;
        unsigned long long num = std::strtoull(val.c_str(), &end, 10);
        if (end == nullptr || *end != '\0') return std::nullopt;
        if (key == "seq") {
            ev.seq = num;
            have_seq = true;
        } else if (key == "t") {
            ev.virtual_time = num;
            have_t = true;
        } else if (key == "from") {
            ev.from = static_cast<TaskId>(num);
        } else if (key == "to") {
            ev.to = static_cast<TaskId>(num);
        } else {
            return std::nullopt;
        }
    }
    if (!have_seq || !have_t || !have_kind) return std::nullopt;
    return ev;
}

std::string trace_to_text(const std::vector<TraceEvent>& events) {
    std::string out;
    out.reserve(events.size() * 32);
    for (const auto& ev : events) {
        out += trace_line(ev);
        out += '\n';
    }
    return out;
}

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed) {
    const auto* p = static_cast<const uint8_t*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t trace_hash(const std::vector<TraceEvent>& events) {
    uint64_t h = 14695981039346656037ull;
    for (const auto& ev : events) {
        std::string line = trace_line(ev);
        line += '\n';
        h = fnv1a64(line.data(), line.size(), h);
    }
    return h;
}

std::optional<TraceDiff> diff_trace_text(const std::string& a, const std::string& b) {
    std::istringstream ia(a), ib(b);
    std::string la, lb;
    size_t idx = 0;
    while (true) {
        bool ga = static_cast<bool>(std::getline(ia, la));
        bool gb = static_cast<bool>(std::getline(ib, lb));
        if (!ga && !gb) return std::nullopt;
        if (!ga || !gb || la != lb) {
            return TraceDiff{idx, ga ? la : std::string(), gb ? lb : std::string()};
        }
        ++idx;
    }
}

}  // namespace pmcu
