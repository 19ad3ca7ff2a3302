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

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pmcu/machine.hpp"
#include "pmcu/types.hpp"

namespace pmcu::rtos {

inline constexpr unsigned kPriorityLevels = 8;  // 7 is the most urgent
inline constexpr uint32_t kForever = UINT32_MAX;

// A deliberately small preemptive kernel on top of the machine: fixed
// priorities with round-robin inside a level, tick-driven time slicing,
// counted delays, message queues and counting semaphores. It exists to have
// firmware-shaped workloads to simulate and to demonstrate how little glue a
// kernel port needs (see rtos_glue.cpp for the entire porting surface).
class Kernel {
public:
    explicit Kernel(Machine& m);

    // Wraps Machine::create_task and registers the task with the scheduler.
    TaskId spawn(std::function<void(Machine&)> entry, unsigned priority,
                 uint32_t stack_size = 16 * 1024, std::string name = "");

    // Installs the glue hooks and runs the machine to completion.
    RunResult start();

    // Blocks the caller for exactly `ticks` tick deliveries; delay(0) is a
    // pure yield to an equal-priority peer (round-robin), a no-op when the
    // caller is alone at its level.
    void delay(uint32_t ticks);

    uint64_t tick_count() const { return ticks_; }
    Machine& machine() { return m_; }

    // --- scheduler internals, public for the glue layer and the objects ---

    // Highest-priority Ready task, removed from its queue. nullopt = idle.
    std::optional<TaskId> schedule_next();
    // Tick bookkeeping: advance time, expire waits, rotate the current
    // task's level. Returns the task to dispatch next.
    std::optional<TaskId> tick();
    std::optional<TaskId> task_exited(TaskId id);
    void make_ready(TaskId id);

    // Arms per-task wait bookkeeping (optionally with a timeout in ticks)
    // and parks the caller. Returns true if the wait was granted, false on
    // timeout. Must be called with interrupts disabled; the machine drops
    // and re-acquires the mask around the switch.
    bool wait_here(BlockReason reason, uint32_t timeout_ticks);
    // Hands the wait to `task` (marks it granted) and wakes it.
    void grant(TaskId task);
    // Stashes a value with a grant; the waiter collects it on wake.
    void grant_with_item(TaskId task, std::vector<uint8_t> item);
    std::vector<uint8_t> take_granted_item(TaskId task);
    // Sender-side parking slot for a queue item that travels with the waiter.
    void stash_pending_item(TaskId task, std::vector<uint8_t> item);
    std::vector<uint8_t> take_pending_item(TaskId task);

    // If a Ready task outranks the caller, switch to it now. Called by the
    // sync objects after they wake someone from inside task context.
    void preempt_if_outranked();

    uint8_t priority_of(TaskId id) const;

private:
    struct TaskWait {
        uint64_t generation = 0;
        bool granted = false;
        bool timed_out = false;
        std::vector<uint8_t> granted_item;
        std::vector<uint8_t> pending_item;
    };
    struct Sleeper {
        TaskId task;
        uint64_t deadline;
        uint64_t generation;
    };

    TaskWait& wait_of(TaskId id);
    std::optional<TaskId> pop_ready();

    Machine& m_;
    std::array<std::deque<TaskId>, kPriorityLevels> ready_;
    std::vector<uint8_t> prios_;
    std::vector<TaskWait> waits_;
    std::vector<Sleeper> sleepers_;
    uint64_t ticks_ = 0;
    uint64_t wait_generation_ = 0;
};

// Fixed-capacity FIFO of equally sized items. Send and receive block (with
// optional tick timeouts) and hand items directly to a parked peer when one
// exists, so a wake is never lost to a racing tick.
class MessageQueue {
public:
    // capacity >= 1, item_size >= 1; ConfigError otherwise.
    MessageQueue(Kernel& k, uint32_t capacity, uint32_t item_size);

    enum class SendResult : uint8_t { Ok, TimedOut };
    SendResult send(std::span<const uint8_t> item, uint32_t timeout_ticks = kForever);

    // nullopt = timed out.
    std::optional<std::vector<uint8_t>> receive(uint32_t timeout_ticks = kForever);

    uint32_t size() const { return static_cast<uint32_t>(buf_.size()); }
    uint32_t capacity() const { return capacity_; }
    uint32_t item_size() const { return item_size_; }
    uint64_t total_sent() const { return sent_; }
    uint64_t total_received() const { return received_; }

private:
    Kernel& k_;
    uint32_t capacity_;
    uint32_t item_size_;
    std::deque<std::vector<uint8_t>> buf_;
    std::deque<TaskId> tx_waiters_;
    std::deque<TaskId> rx_waiters_;
    uint64_t sent_ = 0;
    uint64_t received_ = 0;
};

class Semaphore {
public:
    // max >= 1, initial <= max; ConfigError otherwise.
    Semaphore(Kernel& k, uint32_t initial, uint32_t max);

    enum class TakeResult : uint8_t { Ok, TimedOut };
    TakeResult take(uint32_t timeout_ticks = kForever);

    enum class GiveResult : uint8_t { Ok, AtMax };
    // With a parked taker the unit is handed over directly and the count
    // stays unchanged.
    GiveResult give();

    uint32_t count() const { return count_; }
    uint32_t max() const { return max_; }

private:
    Kernel& k_;
    uint32_t count_;
    uint32_t max_;
    std::deque<TaskId> waiters_;
};

}  // namespace pmcu::rtos
