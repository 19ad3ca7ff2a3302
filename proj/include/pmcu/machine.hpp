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

#include <ucontext.h>

#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pmcu/config.hpp"
#include "pmcu/memory.hpp"
#include "pmcu/report.hpp"
#include "pmcu/trace.hpp"
#include "pmcu/types.hpp"

namespace pmcu {

namespace hal {
class Registry;
}

struct TaskInfo {
    TaskId id = kNoTask;
    std::string name;
    uint8_t priority = 0;
    TaskState state = TaskState::Ready;
    BlockReason block_reason = BlockReason::None;
    Region stack;           // simulated stack region (watermarked)
    uint32_t stack_size = 0;
};

// Scheduling policy callbacks. The machine owns mechanism (contexts, the
// tick source, interrupt state, traces); a kernel supplies policy through
// these hooks. Hooks run with interrupts implicitly masked: a tick cannot
// be delivered while one is executing.
//
// Hooks that return a TaskId must name an existing Ready (or the current
// Running) task; anything else ends the run with a KernelFault crash.
struct SchedulerHooks {
    // Required while a run is active if ticks are enabled; a missing hook is
    // replaced by a round-robin default so bare machines stay usable.
    // Called once per delivered tick; the returned task is dispatched next
    // (nullopt keeps the current task, or idles if nobody is Running).
    std::function<std::optional<TaskId>()> on_tick;

    // Pick a successor when the machine needs one outside a tick: initial
    // dispatch and after the current task blocks. Default: lowest-id Ready.
    std::function<std::optional<TaskId>()> on_reschedule;

    // Successor after `exited` left. Default: on_reschedule.
    std::function<std::optional<TaskId>(TaskId exited)> on_task_exit;

    // Notification that `task` moved Blocked -> Ready. Bookkeeping only.
    std::function<void(TaskId task)> on_wake;

    // Notification that no task is runnable and the machine is spinning
    // waiting for a tick. Bookkeeping only.
    std::function<void()> on_idle;
};

struct InterruptState {
    bool enabled = true;
    bool pending = false;
    uint32_t nesting = 0;
};

enum class TickOutcome : uint8_t { Serviced, Deferred };

// One simulated MCU: memory, at most one runnable task, a deferrable system
// tick, and a peripheral registry. Everything runs on the caller's host
// thread; tasks are cooperative ucontext coroutines that the machine
// preempts only at checkpoints (every API entry is one).
class Machine {
public:
    explicit Machine(MachineConfig cfg, const ImageSections& image = {});
    ~Machine();
    Machine(const Machine&) = delete;
    Machine& operator=(const Machine&) = delete;

    // ---- lifecycle -------------------------------------------------------

    // Creates a task in Ready state. Priority is policy-only data (the
    // machine never reads it); stack_size bytes are carved from the stack
    // area and watermarked. Throws StackExhausted when the area is full,
    // ConfigError on a zero stack size or priority > 7.
    TaskId create_task(std::function<void(Machine&)> entry, unsigned priority,
                       uint32_t stack_size, std::string name = "");

    // Runs tasks until all exit (Halted), a fault is raised (Crashed) or the
    // step limit trips (Timeout). Throws NoTasks if none were created.
    // On any outcome every task has been unwound (destructors run) before
    // start() returns.
    RunResult start(SchedulerHooks hooks);

    bool running() const { return running_; }

    // ---- interrupts and ticks -------------------------------------------

    void disable_irq();
    void enable_irq();  // UnbalancedEnable when nesting is already zero
    InterruptState irq_state() const;

    // Progress marker. Advances virtual time, runs the stack probe, and
    // delivers a due tick (or any still-pending one) if interrupts allow.
    // No-op when no run is active.
    void checkpoint();

    // Force a tick now, regardless of the configured tick source. Deferred
    // (pending flag set) if interrupts are masked or a hook is running.
    TickOutcome systick_deliver();

    // ---- scheduling, called from task context ----------------------------

    // Cooperative switch. Target must be Ready; switching to yourself is a
    // no-op and emits nothing.
    void yield_to(TaskId target);

    // Ends the calling task; its stack unwinds and destructors run.
    [[noreturn]] void exit_task();

    // Parks the caller as Blocked(reason) and dispatches elsewhere. The
    // caller's interrupt-disable nesting is released first (balanced
    // IrqEnable events are emitted) and re-acquired on wake, so no switch
    // ever happens inside a critical section. Returns when woken.
    void block_current(BlockReason reason);

    // Marks a Blocked task Ready and emits TaskWake. No dispatch happens
    // here; the wake becomes visible to policy at the next scheduling point.
    void wake(TaskId task);

    // ---- task-facing services (checked; faults end the run) --------------

    uint8_t mem_read_u8(SimAddr a);
    uint32_t mem_read_u32(SimAddr a);
    void mem_write_u8(SimAddr a, uint8_t v);
    void mem_write_u32(SimAddr a, uint32_t v);
    void mem_read(SimAddr a, std::span<uint8_t> out);
    void mem_write(SimAddr a, std::span<const uint8_t> in);

    SimAddr heap_alloc(uint32_t size);  // throws OutOfMemory on exhaustion
    void heap_free(SimAddr payload);    // DoubleFree/WildAccess crash on misuse

    uint32_t checked_div(uint32_t a, uint32_t b);  // DivByZero crash
    uint32_t checked_add(uint32_t a, uint32_t b);  // IntegerOverflow crash
    uint32_t checked_mul(uint32_t a, uint32_t b);  // IntegerOverflow crash

    // Records a crash and ends the run. Callable from task context only.
    [[noreturn]] void raise_crash(BugClass cls, std::string detail);
    [[noreturn]] void raise_violation(const Violation& v);

    // ---- introspection ----------------------------------------------------

    TaskInfo task_info(TaskId id) const;
    size_t task_count() const { return tasks_.size(); }
    TaskId current_task() const;  // kNoTask outside a run / while idle
    MachineMemory::StackUsage stack_usage(TaskId id) const;

    uint64_t virtual_time() const { return progress_; }
    uint64_t scheduler_events() const { return events_; }

    const std::vector<TraceEvent>& trace() const;  // TraceDisabled if off
    std::string trace_text() const;
    uint64_t trace_hash() const;

    MachineMemory& memory() { return mem_; }
    const MachineMemory& memory() const { return mem_; }
    hal::Registry& peripherals() { return *hal_; }
    std::mt19937_64& rng() { return rng_; }
    const MachineConfig& config() const { return cfg_; }

    // Simulated address of a live host pointer into simulated SRAM (useful
    // for buffers on a task stack). Throws ConfigError if outside.
    SimAddr sim_addr_of(const void* host) const;

private:
    struct Task {
        Machine* owner = nullptr;
        TaskId id = 0;
        std::string name;
        uint8_t priority = 0;
        TaskState state = TaskState::Ready;
        BlockReason reason = BlockReason::None;
        Region stack_sim{};
        uint8_t* host_lo = nullptr;
        size_t host_len = 0;
        std::function<void(Machine&)> entry;
        ucontext_t ctx{};
        uint32_t saved_nesting = 0;  // critical-section depth parked by block
    };

    // Thrown through task frames to unwind them; deliberately not derived
    // from std::exception so firmware-style catch blocks cannot swallow it.
    struct TaskKilled {};
    struct TaskExitRequest {};

    enum class CtlReason : uint8_t { None, AllExited, Idle, Stop };

    static void trampoline(unsigned hi, unsigned lo);
    void task_main(Task& t);
    void finish_task(Task& t, bool killed);

    void emit(EventKind kind, TaskId from = kNoTask, TaskId to = kNoTask);
    void note_scheduler_event();
    void record_crash(BugClass cls, std::string detail);

    Task& current();
    bool in_task_context() const { return current_ != kNoTask && !in_controller_; }
    void set_running(TaskId id);
    void enter_controller(CtlReason reason);  // park current task, resume later
    void resume_check();  // throws TaskKilled when teardown/stop is in progress

    std::optional<TaskId> run_pick_hook(
        const std::function<std::optional<TaskId>()>& hook);
    bool validate_pick(TaskId id);  // false => crash recorded
    // Emits TickDelivered, consults on_tick, performs the switch (task
    // context) or stashes the pick (idle). Returns true iff the caller was
    // switched out and has since been resumed.
    bool service_tick_now();
    TickOutcome deliver_tick_inner();
    bool tick_due();
    std::optional<TaskId> idle_loop();  // controller: spin until a pick or stop
    void kill_all_tasks();              // controller-side teardown
    void stack_probe();

    MachineConfig cfg_;
    MachineMemory mem_;
    std::unique_ptr<hal::Registry> hal_;
    std::mt19937_64 rng_;

    std::vector<std::unique_ptr<Task>> tasks_;
    SchedulerHooks hooks_;
    bool running_ = false;
    bool ran_ = false;
    bool in_controller_ = true;
    bool kill_all_ = false;
    TaskId current_ = kNoTask;
    TaskId prev_running_ = kNoTask;  // who ran last, for idle-exit switches
    ucontext_t controller_ctx_{};
    CtlReason ctl_reason_ = CtlReason::None;
    std::optional<TaskId> idle_pick_;  // tick decision taken while idle

    uint32_t nesting_ = 0;
    bool pending_ = false;
    uint32_t hook_depth_ = 0;
    std::optional<TaskId> hook_designation_;  // yield_to target named by a hook

    uint64_t progress_ = 0;
    uint64_t events_ = 0;
    uint64_t next_tick_at_ = 0;
    int64_t tick_cpu_anchor_ns_ = 0;

    RunResult::Kind stop_kind_ = RunResult::Kind::Halted;
    bool stop_requested_ = false;
    std::optional<CrashReport> crash_;

    bool trace_on_ = true;
    std::vector<TraceEvent> trace_;
    uint64_t seq_ = 0;
    size_t exited_count_ = 0;
};

}  // namespace pmcu
