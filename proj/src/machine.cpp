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

#include "pmcu/machine.hpp"

#include <time.h>

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <cstring>

#include "pmcu/errors.hpp"
#include "pmcu/hal.hpp"

namespace pmcu {

// The stack probe fires while this many bytes of simulated budget remain, so
// the frames of the crash machinery itself land in the reserved slack below
// the simulated region rather than past it.
static constexpr uint32_t kProbeMargin = 1024;

static int64_t cpu_now_ns() {
    timespec ts{};
    clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
    return int64_t{ts.tv_sec} * 1'000'000'000 + ts.tv_nsec;
}

Machine::Machine(MachineConfig cfg, const ImageSections& image)
    : cfg_(std::move(cfg)), mem_(cfg_.memory_map) {
    cfg_.tick.validate();
    trace_on_ = cfg_.trace_enabled;
    rng_.seed(cfg_.rng_seed);
    if (!image.empty()) mem_.reset(image);
    hal_ = std::make_unique<hal::Registry>(*this);
}

Machine::~Machine() = default;

// ---- tasks --------------------------------------------------------------------

TaskId Machine::create_task(std::function<void(Machine&)> entry,
                            unsigned priority, uint32_t stack_size,
                            std::string name) {
    if (!entry) throw ConfigError("task entry must be callable");
    if (priority > 7) throw ConfigError("priority out of range (0..7)");
    if (stack_size == 0) throw ConfigError("zero stack size");
    if (kill_all_ || stop_requested_) throw Error("machine is tearing down");

    auto carve = mem_.carve_stack(stack_size);
    if (!carve) {
        throw StackExhausted("stack area cannot fit another " +
                             std::to_string(stack_size) + " byte stack");
    }
    mem_.stack_paint(carve->sim);

    auto t = std::make_unique<Task>();
    t->owner = this;
    t->id = static_cast<TaskId>(tasks_.size());
    t->name = name.empty() ? "task" + std::to_string(t->id) : std::move(name);
    t->priority = static_cast<uint8_t>(priority);
    t->stack_sim = carve->sim;
    t->host_lo = carve->host_lo;
    t->host_len = carve->host_len;
    t->entry = std::move(entry);

    if (getcontext(&t->ctx) != 0) throw Error("getcontext failed");
    t->ctx.uc_stack.ss_sp = t->host_lo;
    t->ctx.uc_stack.ss_size = t->host_len;
    t->ctx.uc_link = nullptr;
    auto p = reinterpret_cast<uintptr_t>(t.get());
    auto hi = static_cast<unsigned>(p >> 32);
    auto lo = static_cast<unsigned>(p & 0xffffffffu);
    makecontext(&t->ctx, reinterpret_cast<void (*)()>(&Machine::trampoline), 2,
                hi, lo);

    tasks_.push_back(std::move(t));
    return tasks_.back()->id;
}

void Machine::trampoline(unsigned hi, unsigned lo) {
    auto p = (static_cast<uintptr_t>(hi) << 32) | static_cast<uintptr_t>(lo);
    auto* t = reinterpret_cast<Task*>(p);
    t->owner->task_main(*t);
    std::abort();  // task_main never returns here
}

void Machine::task_main(Task& t) {
    if (!kill_all_ && !stop_requested_) {
        try {
            t.entry(*this);
        } catch (TaskExitRequest&) {
        } catch (TaskKilled&) {
        } catch (const std::exception& e) {
            if (!stop_requested_) {
                record_crash(BugClass::KernelFault,
                             std::string("uncaught exception: ") + e.what());
            }
        } catch (...) {
            if (!stop_requested_) {
                record_crash(BugClass::KernelFault, "uncaught foreign exception");
            }
        }
    }
    finish_task(t, kill_all_ || stop_requested_);
    std::abort();  // finish_task always leaves this context
}

void Machine::finish_task(Task& t, bool teardown) {
    t.state = TaskState::Exited;
    t.reason = BlockReason::None;
    exited_count_++;

    if (teardown) {
        // Silent exit back into kill_all_tasks (or the controller loop, which
        // checks stop_requested_ before dispatching anyone else).
        in_controller_ = true;
        current_ = kNoTask;
        setcontext(&controller_ctx_);
        std::abort();
    }

    // A task that exits inside a critical section can no longer unmask the
    // machine itself; restore balance on its behalf.
    while (nesting_ > 0) {
        nesting_--;
        emit(EventKind::IrqEnable);
    }
    emit(EventKind::TaskExit, t.id);
    note_scheduler_event();

    std::optional<TaskId> next;
    if (!stop_requested_) {
        next = run_pick_hook([&] { return hooks_.on_task_exit(t.id); });
    }
    if (stop_requested_) {
        in_controller_ = true;
        current_ = kNoTask;
        setcontext(&controller_ctx_);
        std::abort();
    }
    if (next) {
        emit(EventKind::TaskSwitch, t.id, *next);
        Task& to = *tasks_[*next];
        set_running(*next);
        in_controller_ = false;
        setcontext(&to.ctx);
        std::abort();
    }
    prev_running_ = t.id;
    ctl_reason_ = CtlReason::Idle;
    in_controller_ = true;
    current_ = kNoTask;
    setcontext(&controller_ctx_);
    std::abort();
}

// ---- run loop -------------------------------------------------------------------

RunResult Machine::start(SchedulerHooks hooks) {
    if (running_) throw Error("start while already running");
    if (ran_) throw Error("a machine runs once; build a fresh one");
    if (tasks_.empty()) throw NoTasks("no tasks to run");

    hooks_ = std::move(hooks);
    if (!hooks_.on_reschedule) {
        hooks_.on_reschedule = [this]() -> std::optional<TaskId> {
            for (const auto& t : tasks_) {
                if (t->state == TaskState::Ready) return t->id;
            }
            return std::nullopt;
        };
    }
    if (!hooks_.on_tick) {
        // Round-robin over Ready tasks in id order.
        hooks_.on_tick = [this]() -> std::optional<TaskId> {
            size_t n = tasks_.size();
            size_t from = (current_ == kNoTask) ? 0 : current_ + 1;
            for (size_t k = 0; k < n; ++k) {
                const auto& t = tasks_[(from + k) % n];
                if (t->state == TaskState::Ready) return t->id;
            }
            if (current_ != kNoTask &&
                tasks_[current_]->state == TaskState::Running) {
                return current_;
            }
            return std::nullopt;
        };
    }
    if (!hooks_.on_task_exit) {
        hooks_.on_task_exit = [this](TaskId) { return hooks_.on_reschedule(); };
    }

    running_ = true;
    in_controller_ = true;
    current_ = kNoTask;
    prev_running_ = kNoTask;
    next_tick_at_ = cfg_.tick.period_units;
    tick_cpu_anchor_ns_ = cpu_now_ns();

    std::optional<TaskId> next = run_pick_hook(hooks_.on_reschedule);
    bool first_dispatch = true;

    while (!stop_requested_ && exited_count_ < tasks_.size()) {
        if (!next) {
            next = idle_loop();
            if (!next) continue;  // stop or everyone exited; loop re-checks
        }
        TaskId id = *next;
        next.reset();
        if (first_dispatch) {
            emit(EventKind::TaskStart, kNoTask, id);
            first_dispatch = false;
        } else {
            emit(EventKind::TaskSwitch, prev_running_, id);
        }
        Task& t = *tasks_[id];
        set_running(id);
        in_controller_ = false;
        ctl_reason_ = CtlReason::None;
        swapcontext(&controller_ctx_, &t.ctx);
        // Back in the controller: either everyone exited, or the last task
        // blocked with nobody to run (Idle), or a stop was requested.
    }

    kill_all_tasks();
    running_ = false;
    ran_ = true;

    RunResult result;
    result.kind = stop_requested_ ? stop_kind_ : RunResult::Kind::Halted;
    if (result.kind == RunResult::Kind::Crashed) result.crash = crash_;
    return result;
}

std::optional<TaskId> Machine::idle_loop() {
    if (hooks_.on_idle) {
        hook_depth_++;
        hooks_.on_idle();
        hook_depth_--;
    }
    while (!stop_requested_ && exited_count_ < tasks_.size()) {
        bool tick_possible = cfg_.tick.enabled || pending_;
        if (!tick_possible || nesting_ > 0) {
            record_crash(BugClass::KernelFault,
                         "scheduler deadlock: all tasks blocked and no tick "
                         "can arrive");
            return std::nullopt;
        }
        progress_++;  // idling is progress; deterministic ticks must still fire
        if (pending_) {
            service_tick_now();
        } else if (tick_due()) {
            deliver_tick_inner();
        } else {
            continue;
        }
        if (idle_pick_) {
            TaskId id = *idle_pick_;
            idle_pick_.reset();
            return id;
        }
    }
    return std::nullopt;
}

void Machine::kill_all_tasks() {
    kill_all_ = true;
    for (auto& t : tasks_) {
        if (t->state == TaskState::Exited) continue;
        current_ = t->id;
        in_controller_ = false;
        swapcontext(&controller_ctx_, &t->ctx);
    }
    in_controller_ = true;
    current_ = kNoTask;
    kill_all_ = false;
}

// ---- scheduling primitives -------------------------------------------------------

Machine::Task& Machine::current() {
    if (current_ == kNoTask) throw Error("no active task");
    return *tasks_[current_];
}

void Machine::set_running(TaskId id) {
    current_ = id;
    tasks_[id]->state = TaskState::Running;
    tasks_[id]->reason = BlockReason::None;
}

void Machine::resume_check() {
    if (kill_all_ || stop_requested_) throw TaskKilled{};
}

void Machine::enter_controller(CtlReason reason) {
    Task& me = current();
    ctl_reason_ = reason;
    prev_running_ = me.id;
    current_ = kNoTask;
    in_controller_ = true;
    swapcontext(&me.ctx, &controller_ctx_);
    resume_check();
}

std::optional<TaskId> Machine::run_pick_hook(
    const std::function<std::optional<TaskId>()>& hook) {
    std::optional<TaskId> pick;
    hook_depth_++;
    try {
        pick = hook();
    } catch (...) {
        hook_depth_--;
        record_crash(BugClass::KernelFault, "scheduler hook threw");
        return std::nullopt;
    }
    hook_depth_--;
    if (hook_designation_) {
        pick = hook_designation_;
        hook_designation_.reset();
    }
    if (pick && !validate_pick(*pick)) return std::nullopt;
    return pick;
}

bool Machine::validate_pick(TaskId id) {
    if (id < tasks_.size()) {
        TaskState st = tasks_[id]->state;
        if (st == TaskState::Ready) return true;
        if (id == current_ && st == TaskState::Running) return true;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "hook picked non-runnable task %u", id);
    record_crash(BugClass::KernelFault, buf);
    return false;
}

// ---- interrupts and ticks ---------------------------------------------------------

void Machine::disable_irq() {
    checkpoint();
    nesting_++;
    emit(EventKind::IrqDisable);
}

void Machine::enable_irq() {
    checkpoint();
    if (nesting_ == 0) {
        throw UnbalancedEnable("enable_irq without matching disable_irq");
    }
    nesting_--;
    emit(EventKind::IrqEnable);
    if (nesting_ == 0 && pending_ && running_ && in_task_context()) {
        service_tick_now();
        resume_check();
    }
}

InterruptState Machine::irq_state() const {
    return InterruptState{nesting_ == 0, pending_, nesting_};
}

bool Machine::tick_due() {
    if (cfg_.tick.mode == TickConfig::Mode::Deterministic) {
        return progress_ >= next_tick_at_;
    }
    return cpu_now_ns() - tick_cpu_anchor_ns_ >=
           cfg_.tick.period_cpu.count() * 1000;
}

void Machine::checkpoint() {
    if (!running_ || !in_task_context()) return;
    progress_++;
    resume_check();
    stack_probe();
    if (pending_ && nesting_ == 0 && hook_depth_ == 0) {
        service_tick_now();
        resume_check();
        return;
    }
    if (cfg_.tick.enabled && tick_due()) {
        deliver_tick_inner();
        if (in_task_context()) resume_check();
    }
}

TickOutcome Machine::systick_deliver() {
    if (!running_) return TickOutcome::Deferred;
    return deliver_tick_inner();
}

TickOutcome Machine::deliver_tick_inner() {
    note_scheduler_event();
    if (cfg_.tick.mode == TickConfig::Mode::Deterministic) {
        next_tick_at_ = progress_ + cfg_.tick.period_units;
    } else {
        tick_cpu_anchor_ns_ = cpu_now_ns();
    }
    if (stop_requested_) {
        if (in_task_context()) throw TaskKilled{};
        return TickOutcome::Deferred;
    }
    if (nesting_ > 0 || hook_depth_ > 0) {
        pending_ = true;
        emit(EventKind::TickDeferred);
        return TickOutcome::Deferred;
    }
    service_tick_now();
    if (in_task_context()) resume_check();
    return TickOutcome::Serviced;
}

bool Machine::service_tick_now() {
    pending_ = false;
    emit(EventKind::TickDelivered);
    std::optional<TaskId> pick = run_pick_hook(hooks_.on_tick);
    if (stop_requested_) {
        if (in_task_context()) throw TaskKilled{};
        return false;
    }
    if (!pick) return false;

    if (!in_task_context()) {
        idle_pick_ = pick;
        return false;
    }
    if (*pick == current_) {
        // Keep running; re-assert Running in case a mid-sequence wake left
        // the current task marked Ready.
        tasks_[current_]->state = TaskState::Running;
        return false;
    }
    Task& me = current();
    if (me.state == TaskState::Running) me.state = TaskState::Ready;
    emit(EventKind::TaskSwitch, me.id, *pick);
    Task& to = *tasks_[*pick];
    set_running(*pick);
    swapcontext(&me.ctx, &to.ctx);
    resume_check();
    return true;
}

// ---- task-side scheduling ops -----------------------------------------------------

void Machine::yield_to(TaskId target) {
    if (hook_depth_ > 0) {
        if (target >= tasks_.size() ||
            tasks_[target]->state != TaskState::Ready) {
            throw NotRunnable("yield_to target is not Ready");
        }
        hook_designation_ = target;
        return;
    }
    if (!running_ || !in_task_context()) throw Error("yield_to outside a run");
    checkpoint();
    if (target == current_) return;
    if (target >= tasks_.size()) throw NotRunnable("yield_to: no such task");
    Task& to = *tasks_[target];
    if (to.state != TaskState::Ready) {
        throw NotRunnable(std::string("yield_to: task is ") +
                          task_state_name(to.state));
    }
    note_scheduler_event();
    resume_check();
    Task& me = current();
    me.state = TaskState::Ready;
    emit(EventKind::TaskSwitch, me.id, target);
    set_running(target);
    swapcontext(&me.ctx, &to.ctx);
    resume_check();
}

void Machine::exit_task() {
    if (!running_ || !in_task_context()) throw Error("exit_task outside a run");
    throw TaskExitRequest{};
}

void Machine::block_current(BlockReason reason) {
    if (!running_ || !in_task_context()) {
        throw Error("block_current outside a run");
    }
    checkpoint();
    Task& me = current();
    me.state = TaskState::Blocked;
    me.reason = reason;
    emit(EventKind::TaskBlock, me.id);

    // Release the caller's critical section for the duration of the wait.
    me.saved_nesting = nesting_;
    while (nesting_ > 0) {
        nesting_--;
        emit(EventKind::IrqEnable);
    }
    note_scheduler_event();
    resume_check();

    bool resumed = false;
    if (pending_) {
        resumed = service_tick_now();
    }
    if (!resumed && me.state == TaskState::Blocked) {
        std::optional<TaskId> next = run_pick_hook(hooks_.on_reschedule);
        resume_check();
        if (next) {
            emit(EventKind::TaskSwitch, me.id, *next);
            Task& to = *tasks_[*next];
            set_running(*next);
            swapcontext(&me.ctx, &to.ctx);
        } else {
            enter_controller(CtlReason::Idle);
        }
    }
    resume_check();
    // Re-acquire the parked critical section.
    while (nesting_ < me.saved_nesting) {
        nesting_++;
        emit(EventKind::IrqDisable);
    }
    me.saved_nesting = 0;
    me.state = TaskState::Running;
}

void Machine::wake(TaskId id) {
    if (!running_) throw Error("wake outside a run");
    if (id >= tasks_.size()) throw Error("wake: no such task");
    Task& t = *tasks_[id];
    if (t.state != TaskState::Blocked) {
        throw Error("wake of a task that is not Blocked");
    }
    t.state = TaskState::Ready;
    t.reason = BlockReason::None;
    emit(EventKind::TaskWake, kNoTask, id);
    if (hooks_.on_wake) {
        hook_depth_++;
        hooks_.on_wake(id);
        hook_depth_--;
    }
}

// ---- bookkeeping ------------------------------------------------------------------

void Machine::emit(EventKind kind, TaskId from, TaskId to) {
    if (!trace_on_) return;
    trace_.push_back(TraceEvent{seq_++, progress_, kind, from, to});
}

void Machine::note_scheduler_event() {
    events_++;
    if (cfg_.step_limit != 0 && events_ >= cfg_.step_limit && !stop_requested_) {
        stop_requested_ = true;
        stop_kind_ = RunResult::Kind::Timeout;
    }
}

void Machine::record_crash(BugClass cls, std::string detail) {
    if (stop_requested_) return;  // first fault wins
    emit(EventKind::Crash);
    CrashReport report;
    report.cls = cls;
    report.task = current_;
    report.detail = std::move(detail);
    report.virtual_time = progress_;
    size_t n = trace_.size();
    size_t take = n < 32 ? n : 32;
    report.trace_suffix.assign(trace_.end() - take, trace_.end());
    crash_ = std::move(report);
    stop_requested_ = true;
    stop_kind_ = RunResult::Kind::Crashed;
}

void Machine::raise_crash(BugClass cls, std::string detail) {
    record_crash(cls, std::move(detail));
    if (in_task_context()) throw TaskKilled{};
    throw Error("fault outside task context: " + crash_->detail);
}

void Machine::raise_violation(const Violation& v) {
    raise_crash(v.cls, v.describe());
}

void Machine::stack_probe() {
    Task& me = current();
    char probe = 0;
    auto sp = reinterpret_cast<uintptr_t>(&probe);
    auto lo = reinterpret_cast<uintptr_t>(me.host_lo);
    uintptr_t budget_bottom = lo + (me.host_len - me.stack_sim.size);
    if (sp < budget_bottom + kProbeMargin) {
        auto used = mem_.stack_check(me.stack_sim);
        char buf[96];
        std::snprintf(buf, sizeof buf, "stack overflow in %s: %u of %u bytes used",
                      me.name.c_str(), used.used, me.stack_sim.size);
        raise_crash(BugClass::StackOverflow, buf);
    }
}

// ---- checked task-facing services ---------------------------------------------------

void Machine::mem_read(SimAddr a, std::span<uint8_t> out) {
    checkpoint();
    auto v = mem_.check_access(a, static_cast<uint32_t>(out.size()),
                               AccessKind::Read);
    if (v) raise_violation(*v);
    mem_.raw_read(a, out);
}

void Machine::mem_write(SimAddr a, std::span<const uint8_t> in) {
    checkpoint();
    auto v = mem_.check_access(a, static_cast<uint32_t>(in.size()),
                               AccessKind::Write);
    if (v) raise_violation(*v);
    mem_.raw_write(a, in);
}

uint8_t Machine::mem_read_u8(SimAddr a) {
    uint8_t b = 0;
    mem_read(a, std::span<uint8_t>(&b, 1));
    return b;
}

uint32_t Machine::mem_read_u32(SimAddr a) {
    uint8_t b[4];
    mem_read(a, std::span<uint8_t>(b, 4));
    return uint32_t{b[0]} | uint32_t{b[1]} << 8 | uint32_t{b[2]} << 16 |
           uint32_t{b[3]} << 24;
}

void Machine::mem_write_u8(SimAddr a, uint8_t v) {
    mem_write(a, std::span<const uint8_t>(&v, 1));
}

void Machine::mem_write_u32(SimAddr a, uint32_t v) {
    uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                    static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    mem_write(a, std::span<const uint8_t>(b, 4));
}

SimAddr Machine::heap_alloc(uint32_t size) {
    checkpoint();
    auto r = mem_.allocator().alloc(size);
    if (!r) {
        throw OutOfMemory("heap_alloc(" + std::to_string(size) + ") failed");
    }
    return *r;
}

void Machine::heap_free(SimAddr payload) {
    checkpoint();
    char buf[48];
    switch (mem_.allocator().free(payload)) {
        case RegionAllocator::FreeOutcome::Ok:
            return;
        case RegionAllocator::FreeOutcome::DoubleFree:
            std::snprintf(buf, sizeof buf, "double free @ 0x%08x", payload);
            raise_crash(BugClass::DoubleFree, buf);
        case RegionAllocator::FreeOutcome::InvalidFree:
            std::snprintf(buf, sizeof buf, "free of non-heap 0x%08x", payload);
            raise_crash(BugClass::WildAccess, buf);
    }
}

uint32_t Machine::checked_div(uint32_t a, uint32_t b) {
    checkpoint();
    if (b == 0) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "divide %u by zero", a);
        raise_crash(BugClass::DivByZero, buf);
    }
    return a / b;
}

uint32_t Machine::checked_add(uint32_t a, uint32_t b) {
    checkpoint();
    uint32_t r = 0;
    if (__builtin_add_overflow(a, b, &r)) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "add overflow: %u + %u", a, b);
        raise_crash(BugClass::IntegerOverflow, buf);
    }
    return r;
}

uint32_t Machine::checked_mul(uint32_t a, uint32_t b) {
    checkpoint();
    uint32_t r = 0;
    if (__builtin_mul_overflow(a, b, &r)) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "mul overflow: %u * %u", a, b);
        raise_crash(BugClass::IntegerOverflow, buf);
    }
    return r;
}

// ---- introspection -------------------------------------------------------------------

TaskInfo Machine::task_info(TaskId id) const {
    if (id >= tasks_.size()) throw Error("task_info: no such task");
    const Task& t = *tasks_[id];
    TaskInfo info;
    info.id = t.id;
    info.name = t.name;
    info.priority = t.priority;
    info.state = t.state;
    info.block_reason = t.reason;
    info.stack = t.stack_sim;
    info.stack_size = t.stack_sim.size;
    return info;
}

TaskId Machine::current_task() const { return current_; }

MachineMemory::StackUsage Machine::stack_usage(TaskId id) const {
    if (id >= tasks_.size()) throw Error("stack_usage: no such task");
    return mem_.stack_check(tasks_[id]->stack_sim);
}

const std::vector<TraceEvent>& Machine::trace() const {
    if (!trace_on_) throw TraceDisabled("tracing is disabled for this machine");
    return trace_;
}

std::string Machine::trace_text() const { return trace_to_text(trace()); }

uint64_t Machine::trace_hash() const { return pmcu::trace_hash(trace()); }

SimAddr Machine::sim_addr_of(const void* host) const {
    auto a = mem_.sim_addr_of(host);
    if (!a) throw ConfigError("pointer is not inside simulated SRAM");
    return *a;
}

}  // namespace pmcu
