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

namespace pmcu {

// Dense task identifier, assigned from 0 in creation order.
using TaskId = uint32_t;
inline constexpr TaskId kNoTask = UINT32_MAX;

// Address in the simulated 32-bit MCU address space.
using SimAddr = uint32_t;

enum class AccessKind : uint8_t { Read, Write };

enum class TaskState : uint8_t { Ready, Running, Blocked, Exited };

enum class BlockReason : uint8_t {
    None,
    Queue,
    Semaphore,
    Delay,
    NetworkReceive,
};

const char* task_state_name(TaskState s);
const char* block_reason_name(BlockReason r);

}  // namespace pmcu
