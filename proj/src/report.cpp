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

#include "pmcu/report.hpp"

#include <cstdio>

#include "pmcu/types.hpp"

namespace pmcu {

const char* task_state_name(TaskState s) {
    switch (s) {
        case TaskState::Ready: return "Ready";
        case TaskState::Running: return "Running";
        case TaskState::Blocked: return "Blocked";
        case TaskState::Exited: return "Exited";
    }
    return "?";
}

const char* block_reason_name(BlockReason r) {
    switch (r) {
        case BlockReason::None: return "None";
        case BlockReason::Queue: return "Queue";
        case BlockReason::Semaphore: return "Semaphore";
        case BlockReason::Delay: return "Delay";
        case BlockReason::NetworkReceive: return "NetworkReceive";
    }
    return "?";
}

const char* bug_class_name(BugClass c) {
    switch (c) {
        case BugClass::DivByZero: return "DivByZero";
        case BugClass::IntegerOverflow: return "IntegerOverflow";
        case BugClass::StackOverflow: return "StackOverflow";
        case BugClass::HeapOverflow: return "HeapOverflow";
        case BugClass::NullDeref: return "NullDeref";
        case BugClass::DoubleFree: return "DoubleFree";
        case BugClass::UseAfterFree: return "UseAfterFree";
        case BugClass::WildAccess: return "WildAccess";
        case BugClass::KernelFault: return "KernelFault";
    }
    return "?";
}

std::optional<BugClass> bug_class_from_name(const std::string& name) {
    for (int c = 0; c <= static_cast<int>(BugClass::KernelFault); ++c) {
        if (name == bug_class_name(static_cast<BugClass>(c))) {
            return static_cast<BugClass>(c);
        }
    }
    return std::nullopt;
}

const char* run_result_kind_name(RunResult::Kind k) {
    switch (k) {
        case RunResult::Kind::Halted: return "Halted";
        case RunResult::Kind::Crashed: return "Crashed";
        case RunResult::Kind::Timeout: return "Timeout";
    }
    return "?";
}

std::string Violation::describe() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s %u @ 0x%08x",
                  kind == AccessKind::Read ? "read" : "write", len, addr);
    return buf;
}

}  // namespace pmcu
