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

#include <optional>
#include <string>
#include <vector>

#include "pmcu/trace.hpp"
#include "pmcu/types.hpp"

namespace pmcu {

enum class BugClass : uint8_t {
    DivByZero,
    IntegerOverflow,
    StackOverflow,
    HeapOverflow,
    NullDeref,
    DoubleFree,
    UseAfterFree,
    WildAccess,
    KernelFault,
};

const char* bug_class_name(BugClass c);
std::optional<BugClass> bug_class_from_name(const std::string& name);

// A rejected memory access, produced by MachineMemory::check_access.
struct Violation {
    BugClass cls = BugClass::WildAccess;
    SimAddr addr = 0;
    uint32_t len = 0;
    AccessKind kind = AccessKind::Read;

    std::string describe() const;
};

struct CrashReport {
    BugClass cls = BugClass::KernelFault;
    TaskId task = kNoTask;      // kNoTask when no task was active
    std::string detail;         // human-readable, e.g. "store 1 @ 0x20020010"
    uint64_t virtual_time = 0;
    std::vector<TraceEvent> trace_suffix;  // up to the last 32 events

    bool operator==(const CrashReport&) const = default;
};

struct RunResult {
    enum class Kind : uint8_t { Halted, Crashed, Timeout };
    Kind kind = Kind::Halted;
    std::optional<CrashReport> crash;  // set iff kind == Crashed
};

const char* run_result_kind_name(RunResult::Kind k);

}  // namespace pmcu
