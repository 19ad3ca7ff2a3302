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

// The entire port of the kernel onto the machine. Everything the kernel
// needs from its host lives behind these four callbacks; nothing else in
// the kernel touches context switching, interrupt masking or the tick
// source directly.

#include "pmcu/rtos.hpp"

namespace pmcu::rtos {

RunResult Kernel::start() {
    SchedulerHooks hooks;
    hooks.on_tick = [this] { return tick(); };
    hooks.on_reschedule = [this] { return schedule_next(); };
    hooks.on_task_exit = [this](TaskId id) { return task_exited(id); };
    hooks.on_wake = [this](TaskId id) { make_ready(id); };
    return m_.start(std::move(hooks));
}

}  // namespace pmcu::rtos
