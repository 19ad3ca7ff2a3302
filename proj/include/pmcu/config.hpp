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

#include <chrono>
#include <cstdint>

#include "pmcu/types.hpp"

namespace pmcu {

// Half-open address range [origin, origin + size) in the simulated map.
struct Region {
    SimAddr origin = 0;
    uint32_t size = 0;

    uint64_t end() const { return uint64_t{origin} + size; }
    bool contains(SimAddr a) const { return a >= origin && a < end(); }
    bool contains(SimAddr a, uint32_t len) const {
        return a >= origin && uint64_t{a} + len <= end();
    }
    bool overlaps(const Region& o) const {
        return origin < o.end() && o.origin < end();
    }
    bool operator==(const Region&) const = default;
};

enum class AllocatorMode : uint8_t {
    // Checked first-fit allocator with redzones, quarantine and shadow
    // bookkeeping. The default.
    Region,
    // Unchecked bump-style allocation inside the same heap region: no
    // redzones, no quarantine, frees recycle nothing. Useful as a baseline
    // when measuring what the checked allocator catches.
    Passthrough,
};

struct MemoryMap {
    Region flash{0x0000'0000, 1u << 20};
    Region sram{0x2000'0000, 256u << 10};
    // Heap occupies the top half of SRAM by default.
    Region heap{0x2002'0000, 128u << 10};
    // Task stacks are carved out of this window, below the heap.
    Region stack_area{0x2000'8000, 96u << 10};

    AllocatorMode allocator_mode = AllocatorMode::Region;
    uint32_t redzone_bytes = 16;
    uint32_t quarantine_bytes = 8192;  // eviction threshold, in block footprints
    uint32_t heap_align = 8;

    // Throws ConfigError unless: regions are non-empty and do not wrap the
    // 32-bit space, flash and sram are disjoint, heap and stack_area sit
    // inside sram and do not overlap each other, alignment is a power of two,
    // and the redzone is a multiple of the alignment.
    void validate() const;
};

struct TickConfig {
    enum class Mode : uint8_t {
        // A tick becomes due every `period_units` progress units.
        Deterministic,
        // A tick becomes due when `period_cpu` of host thread CPU time has
        // elapsed since the previous one. Delivery still happens only at
        // checkpoints, so runs stay cooperative; they are just not replayable.
        VirtualTime,
    };
    Mode mode = Mode::Deterministic;
    uint64_t period_units = 100;
    std::chrono::microseconds period_cpu{1000};
    bool enabled = true;

    void validate() const;
};

struct MachineConfig {
    MemoryMap memory_map;
    TickConfig tick;
    // Stop the run with Timeout after this many scheduler events; 0 = no limit.
    uint64_t step_limit = 0;
    bool trace_enabled = true;
    uint64_t rng_seed = 0;

    void validate() const;
};

}  // namespace pmcu
