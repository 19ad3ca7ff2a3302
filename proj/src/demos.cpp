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

// Built-in firmware: a few well-behaved programs plus one intentionally
// broken program per detectable bug class. The broken ones are what the
// fuzz harness and the crash classifier are demonstrated against.

#include <cctype>
#include <memory>

#include "pmcu/hal.hpp"
#include "pmcu/harness.hpp"

namespace pmcu::harness {

namespace {

MachineConfig demo_config(uint64_t period, uint64_t step_limit) {
    MachineConfig cfg;
    cfg.tick.mode = TickConfig::Mode::Deterministic;
    cfg.tick.period_units = period;
    cfg.step_limit = step_limit;
    return cfg;
}

// Grows one stack frame per call until the watermark probe trips. The
// volatile pad defeats both frame merging and tail-call conversion.
uint32_t burn_stack(Machine& m, uint32_t depth) {
    volatile uint8_t pad[64];
    pad[0] = static_cast<uint8_t>(depth);
    m.checkpoint();
    uint32_t r = burn_stack(m, depth + 1);
    pad[1] = static_cast<uint8_t>(r);
    return r + pad[0];
}

std::vector<FirmwareSpec> build_registry() {
    std::vector<FirmwareSpec> v;

    {
        FirmwareSpec fw;
        fw.name = "echo";
        fw.blurb = "copies uart0 input back to uart0 in 64-byte chunks";
        fw.config = demo_config(64, 1'000'000);
        fw.setup = [](Machine&, rtos::Kernel& k) {
            k.spawn(
                [](Machine& m) {
                    for (;;) {
                        auto chunk = m.peripherals().io_read("uart0", 64);
                        if (!chunk) break;
                        m.peripherals().io_write("uart0", *chunk);
                    }
                },
                1, 16 * 1024, "echo");
        };
        v.push_back(std::move(fw));
    }

    {
        FirmwareSpec fw;
        fw.name = "empty";
        fw.blurb = "one task that exits immediately";
        fw.config = demo_config(100, 100'000);
        fw.setup = [](Machine&, rtos::Kernel& k) {
            k.spawn([](Machine&) {}, 1, 8 * 1024, "noop");
        };
        v.push_back(std::move(fw));
    }

    {
        FirmwareSpec fw;
        fw.name = "two-task";
        fw.blurb = "two equal-priority compute loops sliced by the tick";
        fw.config = demo_config(25, 1'000'000);
        fw.setup = [](Machine&, rtos::Kernel& k) {
            auto worker = [](Machine& m) {
                for (int i = 0; i < 600; i++) m.checkpoint();
            };
            k.spawn(worker, 1, 8 * 1024, "worker-a");
            k.spawn(worker, 1, 8 * 1024, "worker-b");
        };
        v.push_back(std::move(fw));
    }

    {
        FirmwareSpec fw;
        fw.name = "pipeline";
        fw.blurb = "producer/consumer pair over a message queue; upcases input";
        fw.config = demo_config(50, 1'000'000);
        fw.setup = [](Machine&, rtos::Kernel& k) {
            // Items are [flag, byte]; flag 1 marks end of input.
            auto q = std::make_shared<rtos::MessageQueue>(k, 8, 2);
            k.spawn(
                [q](Machine& m) {
                    for (;;) {
                        auto b = m.peripherals().io_read("uart0", 1);
                        if (!b || b->empty()) break;
                        uint8_t item[2] = {0, (*b)[0]};
                        q->send(item);
                    }
                    uint8_t fin[2] = {1, 0};
                    q->send(fin);
                },
                2, 16 * 1024, "producer");
            k.spawn(
                [q](Machine& m) {
                    for (;;) {
                        auto item = q->receive();
                        if (!item || (*item)[0] == 1) break;
                        uint8_t c = (*item)[1];
                        uint8_t u = static_cast<uint8_t>(
                            std::toupper(static_cast<unsigned char>(c)));
                        m.peripherals().io_write("uart0", {&u, 1});
                    }
                },
                1, 16 * 1024, "consumer");
        };
        v.push_back(std::move(fw));
    }

    {
        FirmwareSpec fw;
        fw.name = "div-by-zero";
        fw.blurb = "divides by the input length; crashes on empty input";
        fw.config = demo_config(50, 200'000);
        fw.expected_bug = BugClass::DivByZero;
        fw.setup = [](Machine&, rtos::Kernel& k) {
            k.spawn(
                [](Machine& m) {
                    uint32_t n = 0;
                    while (auto chunk = m.peripherals().io_read("uart0", 64)) {
                        n += static_cast<uint32_t>(chunk->size());
                    }
                    uint32_t per = m.checked_div(1000, n);
                    std::vector<uint8_t> msg = {
                        static_cast<uint8_t>('0' + per % 10), '\n'};
                    m.peripherals().io_write("uart0", msg);
                },
                1, 16 * 1024, "divider");
        };
        v.push_back(std::move(fw));
    }

    {
        FirmwareSpec fw;
        fw.name = "int-overflow";
        fw.blurb = "32-bit add that wraps past UINT32_MAX";
        fw.config = demo_config(50, 200'000);
        fw.expected_bug = BugClass::IntegerOverflow;
        fw.setup = [](Machine&, rtos::Kernel& k) {
            k.spawn(
                [](Machine& m) {
                    uint32_t total = 4294967290u;
                    total = m.checked_add(total, 100u);
                    (void)total;
                },
                1, 16 * 1024, "adder");
        };
        v.push_back(std::move(fw));
    }

    {
        FirmwareSpec fw;
        fw.name = "stack-overflow";
        fw.blurb = "unbounded recursion on an 8 KiB stack";
        fw.config = demo_config(50, 200'000);
        fw.expected_bug = BugClass::StackOverflow;
        fw.setup = [](Machine&, rtos::Kernel& k) {
            k.spawn([](Machine& m) { burn_stack(m, 0); }, 1, 8 * 1024,
                    "recursor");
        };
        v.push_back(std::move(fw));
    }

    {
        FirmwareSpec fw;
        fw.name = "heap-overflow";
        fw.blurb = "writes one byte past a 16-byte heap block";
        fw.config = demo_config(50, 200'000);
        fw.expected_bug = BugClass::HeapOverflow;
        fw.setup = [](Machine&, rtos::Kernel& k) {
            k.spawn(
                [](Machine& m) {
                    SimAddr p = m.heap_alloc(16);
                    for (uint32_t i = 0; i <= 16; i++) {
                        m.mem_write_u8(p + i, static_cast<uint8_t>(i));
                    }
                },
                1, 16 * 1024, "writer");
        };
        v.push_back(std::move(fw));
    }

    {
        FirmwareSpec fw;
        fw.name = "null-deref";
        fw.blurb = "reads a word from address zero";
        fw.config = demo_config(50, 200'000);
        fw.expected_bug = BugClass::NullDeref;
        fw.setup = [](Machine&, rtos::Kernel& k) {
            k.spawn(
                [](Machine& m) {
                    uint32_t v = m.mem_read_u32(0);
                    (void)v;
                },
                1, 16 * 1024, "reader");
        };
        v.push_back(std::move(fw));
    }

    {
        FirmwareSpec fw;
        fw.name = "double-free";
        fw.blurb = "frees the same heap block twice";
        fw.config = demo_config(50, 200'000);
        fw.expected_bug = BugClass::DoubleFree;
        fw.setup = [](Machine&, rtos::Kernel& k) {
            k.spawn(
                [](Machine& m) {
                    SimAddr p = m.heap_alloc(32);
                    m.heap_free(p);
                    m.heap_free(p);
                },
                1, 16 * 1024, "freer");
        };
        v.push_back(std::move(fw));
    }

    {
        FirmwareSpec fw;
        fw.name = "use-after-free";
        fw.blurb = "reads a heap block after freeing it";
        fw.config = demo_config(50, 200'000);
        fw.expected_bug = BugClass::UseAfterFree;
        fw.setup = [](Machine&, rtos::Kernel& k) {
            k.spawn(
                [](Machine& m) {
                    SimAddr p = m.heap_alloc(32);
                    m.mem_write_u8(p, 0x42);
                    m.heap_free(p);
                    uint8_t v = m.mem_read_u8(p);
                    (void)v;
                },
                1, 16 * 1024, "reuser");
        };
        v.push_back(std::move(fw));
    }

    {
        FirmwareSpec fw;
        fw.name = "wild-access";
        fw.blurb = "writes to an unmapped address";
        fw.config = demo_config(50, 200'000);
        fw.expected_bug = BugClass::WildAccess;
        fw.setup = [](Machine&, rtos::Kernel& k) {
            k.spawn([](Machine& m) { m.mem_write_u32(0x60000000, 0xDEADBEEF); },
                    1, 16 * 1024, "wanderer");
        };
        v.push_back(std::move(fw));
    }

    return v;
}

}  // namespace

const std::vector<FirmwareSpec>& firmware_registry() {
    static const std::vector<FirmwareSpec> registry = build_registry();
    return registry;
}

const FirmwareSpec* find_firmware(const std::string& name) {
    for (const FirmwareSpec& fw : firmware_registry()) {
        if (fw.name == name) return &fw;
    }
    return nullptr;
}

}  // namespace pmcu::harness
