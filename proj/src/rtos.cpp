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

#include "pmcu/rtos.hpp"

#include <algorithm>

#include "pmcu/errors.hpp"

namespace pmcu::rtos {

namespace {

void erase_value(std::deque<TaskId>& q, TaskId id) {
    auto it = std::find(q.begin(), q.end(), id);
    if (it != q.end()) q.erase(it);
}

}  // namespace

Kernel::Kernel(Machine& m) : m_(m) {}

TaskId Kernel::spawn(std::function<void(Machine&)> entry, unsigned priority,
                     uint32_t stack_size, std::string name) {
    if (priority >= kPriorityLevels) {
        throw ConfigError("priority out of range (0..7)");
    }
    TaskId id = m_.create_task(std::move(entry), priority, stack_size,
                               std::move(name));
    if (waits_.size() <= id) waits_.resize(id + 1);
    if (prios_.size() <= id) prios_.resize(id + 1);
    prios_[id] = static_cast<uint8_t>(priority);
    ready_[priority].push_back(id);
    return id;
}

uint8_t Kernel::priority_of(TaskId id) const {
    return id < prios_.size() ? prios_[id] : 0;
}

Kernel::TaskWait& Kernel::wait_of(TaskId id) {
    if (waits_.size() <= id) waits_.resize(id + 1);
    return waits_[id];
}

std::optional<TaskId> Kernel::pop_ready() {
    // The rotation paths (tick, delay(0), preemption checks) enqueue the
    // caller while it is still Running; its state flips to Ready only once
    // the switch actually happens. Such entries are live, not stale.
    TaskId cur = m_.current_task();
    for (unsigned p = kPriorityLevels; p-- > 0;) {
        auto& q = ready_[p];
        while (!q.empty()) {
            TaskId id = q.front();
            q.pop_front();
            TaskState st = m_.task_info(id).state;
            if (st == TaskState::Ready) return id;
            if (id == cur && st == TaskState::Running) return id;
            // Stale entry (task exited or blocked again before being
            // popped); drop it.
        }
    }
    return std::nullopt;
}

std::optional<TaskId> Kernel::schedule_next() { return pop_ready(); }

std::optional<TaskId> Kernel::tick() {
    ticks_++;

    // Expire sleepers and timed waits.
    for (auto it = sleepers_.begin(); it != sleepers_.end();) {
        if (it->deadline > ticks_) {
            ++it;
            continue;
        }
        TaskId id = it->task;
        auto& w = wait_of(id);
        if (w.generation == it->generation && !w.granted && !w.timed_out &&
            m_.task_info(id).state == TaskState::Blocked) {
            w.timed_out = true;
            m_.wake(id);  // on_wake glue queues the task
        }
        it = sleepers_.erase(it);
    }

    // Round-robin: the interrupted task goes to the back of its level.
    TaskId cur = m_.current_task();
    if (cur != kNoTask && m_.task_info(cur).state == TaskState::Running) {
        ready_[priority_of(cur)].push_back(cur);
    }
    return pop_ready();
}

std::optional<TaskId> Kernel::task_exited(TaskId id) {
    wait_of(id).generation = ++wait_generation_;  // invalidate stray sleepers
    return pop_ready();
}

void Kernel::make_ready(TaskId id) { ready_[priority_of(id)].push_back(id); }

bool Kernel::wait_here(BlockReason reason, uint32_t timeout_ticks) {
    TaskId me = m_.current_task();
    auto& w = wait_of(me);
    w.generation = ++wait_generation_;
    w.granted = false;
    w.timed_out = false;
    if (timeout_ticks != kForever) {
        sleepers_.push_back(Sleeper{me, ticks_ + timeout_ticks, w.generation});
    }
    m_.block_current(reason);
    return wait_of(me).granted;
}

void Kernel::grant(TaskId task) {
    auto& w = wait_of(task);
    w.granted = true;
    if (m_.task_info(task).state == TaskState::Blocked) m_.wake(task);
}

void Kernel::grant_with_item(TaskId task, std::vector<uint8_t> item) {
    wait_of(task).granted_item = std::move(item);
    grant(task);
}

std::vector<uint8_t> Kernel::take_granted_item(TaskId task) {
    return std::move(wait_of(task).granted_item);
}

void Kernel::stash_pending_item(TaskId task, std::vector<uint8_t> item) {
    wait_of(task).pending_item = std::move(item);
}

std::vector<uint8_t> Kernel::take_pending_item(TaskId task) {
    return std::move(wait_of(task).pending_item);
}

void Kernel::preempt_if_outranked() {
    if (!m_.running()) return;
    TaskId cur = m_.current_task();
    if (cur == kNoTask) return;
    uint8_t mine = priority_of(cur);
    for (unsigned p = kPriorityLevels; p-- > mine + 1u;) {
        if (ready_[p].empty()) continue;
        ready_[mine].push_back(cur);
        auto next = pop_ready();
        if (next && *next != cur) {
            m_.yield_to(*next);
        } else {
            erase_value(ready_[mine], cur);
        }
        return;
    }
}

void Kernel::delay(uint32_t ticks) {
    TaskId me = m_.current_task();
    if (me == kNoTask) throw Error("delay outside task context");
    if (ticks == 0) {
        ready_[priority_of(me)].push_back(me);
        auto next = pop_ready();
        if (next && *next != me) {
            m_.yield_to(*next);
        }
        return;
    }
    wait_here(BlockReason::Delay, ticks);
}

// ---- message queue -----------------------------------------------------------

MessageQueue::MessageQueue(Kernel& k, uint32_t capacity, uint32_t item_size)
    : k_(k), capacity_(capacity), item_size_(item_size) {
    if (capacity == 0) throw ConfigError("queue capacity must be >= 1");
    if (item_size == 0) throw ConfigError("queue item_size must be >= 1");
}

MessageQueue::SendResult MessageQueue::send(std::span<const uint8_t> item,
                                            uint32_t timeout_ticks) {
    if (item.size() != item_size_) {
        throw ConfigError("queue item size mismatch: got " +
                          std::to_string(item.size()) + ", queue holds " +
                          std::to_string(item_size_));
    }
    Machine& m = k_.machine();
    m.disable_irq();
    if (!rx_waiters_.empty()) {
        // Hand the item straight to the longest-parked receiver.
        TaskId r = rx_waiters_.front();
        rx_waiters_.pop_front();
        k_.grant_with_item(r, std::vector<uint8_t>(item.begin(), item.end()));
        sent_++;
        m.enable_irq();
        k_.preempt_if_outranked();
        return SendResult::Ok;
    }
    if (buf_.size() < capacity_) {
        buf_.emplace_back(item.begin(), item.end());
        sent_++;
        m.enable_irq();
        return SendResult::Ok;
    }
    if (timeout_ticks == 0) {
        m.enable_irq();
        return SendResult::TimedOut;
    }
    TaskId me = m.current_task();
    tx_waiters_.push_back(me);
    k_.stash_pending_item(me, std::vector<uint8_t>(item.begin(), item.end()));
    bool granted = k_.wait_here(BlockReason::Queue, timeout_ticks);
    if (granted) {
        sent_++;
        m.enable_irq();
        return SendResult::Ok;
    }
    erase_value(tx_waiters_, me);
    m.enable_irq();
    return SendResult::TimedOut;
}

std::optional<std::vector<uint8_t>> MessageQueue::receive(uint32_t timeout_ticks) {
    Machine& m = k_.machine();
    m.disable_irq();
    if (!buf_.empty()) {
        std::vector<uint8_t> item = std::move(buf_.front());
        buf_.pop_front();
        if (!tx_waiters_.empty()) {
            // A slot opened up: move the longest-parked sender's item in.
            TaskId s = tx_waiters_.front();
            tx_waiters_.pop_front();
            buf_.push_back(k_.take_pending_item(s));
            k_.grant(s);
        }
        received_++;
        m.enable_irq();
        k_.preempt_if_outranked();
        return item;
    }
    if (timeout_ticks == 0) {
        m.enable_irq();
        return std::nullopt;
    }
    TaskId me = m.current_task();
    rx_waiters_.push_back(me);
    bool granted = k_.wait_here(BlockReason::Queue, timeout_ticks);
    if (granted) {
        std::vector<uint8_t> item = k_.take_granted_item(me);
        received_++;
        m.enable_irq();
        return item;
    }
    erase_value(rx_waiters_, me);
    m.enable_irq();
    return std::nullopt;
}

// ---- semaphore ------------------------------------------------------------------

Semaphore::Semaphore(Kernel& k, uint32_t initial, uint32_t max)
    : k_(k), count_(initial), max_(max) {
    if (max == 0) throw ConfigError("semaphore max must be >= 1");
    if (initial > max) throw ConfigError("semaphore initial exceeds max");
}

Semaphore::TakeResult Semaphore::take(uint32_t timeout_ticks) {
    Machine& m = k_.machine();
    m.disable_irq();
    if (count_ > 0) {
        count_--;
        m.enable_irq();
        return TakeResult::Ok;
    }
    if (timeout_ticks == 0) {
        m.enable_irq();
        return TakeResult::TimedOut;
    }
    TaskId me = m.current_task();
    waiters_.push_back(me);
    bool granted = k_.wait_here(BlockReason::Semaphore, timeout_ticks);
    if (!granted) erase_value(waiters_, me);
    m.enable_irq();
    return granted ? TakeResult::Ok : TakeResult::TimedOut;
}

Semaphore::GiveResult Semaphore::give() {
    Machine& m = k_.machine();
    m.disable_irq();
    if (!waiters_.empty()) {
        // Hand the unit to the longest waiter; the count never moves.
        TaskId t = waiters_.front();
        waiters_.pop_front();
        k_.grant(t);
        m.enable_irq();
        k_.preempt_if_outranked();
        return GiveResult::Ok;
    }
    if (count_ == max_) {
        m.enable_irq();
        return GiveResult::AtMax;
    }
    count_++;
    m.enable_irq();
    return GiveResult::Ok;
}

}  // namespace pmcu::rtos
