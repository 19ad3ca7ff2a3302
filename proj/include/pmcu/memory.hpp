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
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pmcu/config.hpp"
#include "pmcu/report.hpp"
#include "pmcu/types.hpp"

namespace pmcu {

// Byte-granular classification of SRAM, kept alongside the data bytes.
enum class ShadowClass : uint8_t {
    Unallocated,       // inside the map but not backing anything live
    Addressable,       // statics, stacks, live heap payloads
    Redzone,           // guard bytes around heap payloads
    FreedQuarantined,  // freed payload still parked in quarantine
};

const char* shadow_class_name(ShadowClass c);

// Initialized-data and zero-fill sections of a firmware image, plus the
// container (de)serializer. The on-disk container is:
//   8-byte magic "PMCUIMG1"
//   record 1: u32 length, then that many payload bytes
//   record 2: u32 length (must be 4), u32 data run address
//   record 3: u32 length (must be 8), u32 bss run address, u32 bss size
// All integers little-endian. The payload's load address is not stored; it
// is always the flash origin of the map the image is loaded into.
struct ImageSections {
    std::vector<uint8_t> payload;  // initialized data, stored in flash
    SimAddr data_run_addr = 0;     // where reset copies the payload (SRAM)
    SimAddr bss_run_addr = 0;
    uint32_t bss_size = 0;

    bool empty() const { return payload.empty() && bss_size == 0; }

    void save(std::ostream& out) const;
    void save_file(const std::filesystem::path& p) const;
    static ImageSections load(std::istream& in);           // ImageFormatError
    static ImageSections load_file(const std::filesystem::path& p);
};

// First-fit heap allocator over a fixed region, with redzones on both sides
// of every payload, a FIFO quarantine for freed blocks, and (optionally)
// shadow updates so the access checker can tell live bytes from stale ones.
//
// Outcomes are plain values; the machine layer decides what escalates into
// a crash. Addresses handed out are simulated addresses.
class RegionAllocator {
public:
    struct Params {
        Region heap;
        AllocatorMode mode = AllocatorMode::Region;
        uint32_t redzone = 16;
        uint32_t quarantine_capacity = 8192;
        uint32_t align = 8;
    };

    // `shadow` may be null (stand-alone use in tests); when set it must cover
    // the SRAM region `shadow_base` .. `shadow_base + shadow_len`.
    RegionAllocator(const Params& p, uint8_t* shadow, SimAddr shadow_origin,
                    size_t shadow_len);

    // nullopt on exhaustion (or zero size).
    std::optional<SimAddr> alloc(uint32_t size);

    enum class FreeOutcome : uint8_t { Ok, DoubleFree, InvalidFree };
    FreeOutcome free(SimAddr payload);

    struct Stats {
        uint64_t free_bytes = 0;         // sum of free-list extents
        uint64_t live_payload_bytes = 0; // padded payload sizes of live blocks
        uint64_t redzone_overhead = 0;   // 2 * redzone per live block
        uint64_t quarantined_bytes = 0;  // footprints parked in quarantine
        uint32_t live_blocks = 0;
        uint32_t quarantined_blocks = 0;
    };
    Stats stats() const;

    uint32_t footprint(uint32_t size) const;  // redzones + padded payload
    const Params& params() const { return params_; }

    // Payload ranges as the shadow sees them (sizes rounded up to the
    // alignment), for tests that recompute shadow from first principles.
    struct BlockView {
        SimAddr payload;
        uint32_t padded;
        bool quarantined;
    };
    std::vector<BlockView> blocks() const;

private:
    struct Block {
        uint32_t size = 0;    // requested payload size
        uint32_t padded = 0;  // size rounded up to alignment
        bool quarantined = false;
    };

    void shadow_mark(SimAddr a, uint32_t len, ShadowClass c);
    void insert_free(SimAddr start, uint32_t len);
    void evict_to_budget();

    Params params_;
    uint8_t* shadow_;
    SimAddr shadow_origin_;
    size_t shadow_len_;

    std::map<SimAddr, uint32_t> free_list_;   // block start -> length
    std::map<SimAddr, Block> table_;          // payload addr -> block
    std::deque<SimAddr> quarantine_;          // payload addrs, FIFO
    uint64_t quarantine_used_ = 0;
    SimAddr bump_ = 0;                        // Passthrough cursor
};

// The simulated memory system: flash + SRAM backing stores, shadow bytes,
// reset handling, the heap allocator, access checking and stack carving.
class MachineMemory {
public:
    explicit MachineMemory(const MemoryMap& map);

    // Runs the reset handler: clears SRAM and shadow, stores the image
    // payload into flash, copies it to its run address, zero-fills bss, and
    // marks both ranges addressable. Idempotent. Throws ImageLayoutError if
    // the image does not fit the map (run ranges must lie in SRAM outside
    // the heap and stack areas; payload must fit in flash).
    void reset(const ImageSections& image);

    const MemoryMap& map() const { return map_; }

    // nullptr when [addr, addr+len) is not fully inside flash or SRAM.
    uint8_t* host_ptr(SimAddr addr, uint32_t len);
    const uint8_t* host_ptr(SimAddr addr, uint32_t len) const;

    // Policy check only; no data is moved. nullopt means the access is fine.
    std::optional<Violation> check_access(SimAddr addr, uint32_t len,
                                          AccessKind kind) const;

    // Unchecked accessors; callers must have validated or must be the
    // machine infrastructure itself (loader, stack carver).
    void raw_read(SimAddr addr, std::span<uint8_t> out) const;
    void raw_write(SimAddr addr, std::span<const uint8_t> in);

    RegionAllocator& allocator() { return *alloc_; }
    const RegionAllocator& allocator() const { return *alloc_; }

    ShadowClass shadow_at(SimAddr a) const;
    void set_shadow(SimAddr a, uint32_t len, ShadowClass c);

    // Stack carving. Stacks are dealt from the top of the stack area
    // downward. Each carve reserves, below the simulated stack, a hidden
    // host-side slack span plus a small guard gap, so that a runaway
    // simulated stack scribbles on reserved slack instead of a neighbour.
    struct StackCarve {
        Region sim;          // watermarked, accounted region
        uint8_t* host_lo;    // lowest host byte usable as machine stack
        size_t host_len;     // slack + sim.size
    };
    std::optional<StackCarve> carve_stack(uint32_t size);

    // Watermarking. paint fills the region with the fill pattern; check
    // scans from the low end for the first untouched byte.
    struct StackUsage {
        uint32_t used = 0;       // bytes ever written, measured from the top
        bool overflowed = false; // no untouched fill byte remains
    };
    static constexpr uint8_t kStackFill = 0xA5;
    void stack_paint(const Region& r);
    StackUsage stack_check(const Region& r) const;

    // Simulated address of a host pointer that lies inside the SRAM backing
    // store; nullopt otherwise.
    std::optional<SimAddr> sim_addr_of(const void* host) const;

    uint64_t sram_bytes() const { return sram_.size(); }

private:
    MemoryMap map_;
    std::vector<uint8_t> flash_;
    std::vector<uint8_t> sram_;
    std::vector<uint8_t> shadow_;  // parallel to sram_
    std::unique_ptr<RegionAllocator> alloc_;
    uint64_t stack_cursor_;        // next carve ends here (exclusive)
};

// Classification helper shared by the checker and the crash reporter:
// what hitting a byte of `c` means for a simulated access.
BugClass bug_class_for_shadow(ShadowClass c);

}  // namespace pmcu
