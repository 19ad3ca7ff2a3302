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

#include "pmcu/memory.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pmcu/errors.hpp"

namespace pmcu {

// Accesses below this boundary are treated as null-pointer dereferences even
// though flash typically starts at 0: real firmware keeps the vector table
// there and never dereferences it through a data pointer.
static constexpr SimAddr kNullGuard = 0x1000;

// Host-only padding kept below every simulated stack so that firmware which
// blows its stack budget scribbles into reserved slack instead of a
// neighbouring task while the overflow detector catches up.
static constexpr uint32_t kHostSlack = 8 * 1024;
static constexpr uint32_t kGuardGap = 64;

const char* shadow_class_name(ShadowClass c) {
    switch (c) {
        case ShadowClass::Unallocated: return "Unallocated";
        case ShadowClass::Addressable: return "Addressable";
        case ShadowClass::Redzone: return "Redzone";
        case ShadowClass::FreedQuarantined: return "FreedQuarantined";
    }
    return "?";
}

BugClass bug_class_for_shadow(ShadowClass c) {
    switch (c) {
        case ShadowClass::Redzone: return BugClass::HeapOverflow;
        case ShadowClass::FreedQuarantined: return BugClass::UseAfterFree;
        case ShadowClass::Unallocated: return BugClass::WildAccess;
        case ShadowClass::Addressable: break;
    }
    return BugClass::WildAccess;
}

// ---- configuration ------------------------------------------------------------

static void check_region(const char* name, const Region& r) {
    if (r.size == 0) {
        throw ConfigError(std::string(name) + ": empty region");
    }
    if (r.end() > (uint64_t{1} << 32)) {
        throw ConfigError(std::string(name) + ": wraps the 32-bit space");
    }
}

void MemoryMap::validate() const {
    check_region("flash", flash);
    check_region("sram", sram);
    check_region("heap", heap);
    check_region("stack_area", stack_area);
    if (flash.overlaps(sram)) throw ConfigError("flash overlaps sram");
    if (!sram.contains(heap.origin, heap.size)) {
        throw ConfigError("heap not inside sram");
    }
    if (!sram.contains(stack_area.origin, stack_area.size)) {
        throw ConfigError("stack_area not inside sram");
    }
    if (heap.overlaps(stack_area)) throw ConfigError("heap overlaps stack_area");
    if (heap_align == 0 || (heap_align & (heap_align - 1)) != 0) {
        throw ConfigError("heap_align must be a power of two");
    }
    if (redzone_bytes % heap_align != 0) {
        throw ConfigError("redzone_bytes must be a multiple of heap_align");
    }
}

void TickConfig::validate() const {
    if (!enabled) return;
    if (mode == Mode::Deterministic && period_units == 0) {
        throw ConfigError("tick period_units must be positive");
    }
    if (mode == Mode::VirtualTime && period_cpu.count() <= 0) {
        throw ConfigError("tick period_cpu must be positive");
    }
}

void MachineConfig::validate() const {
    memory_map.validate();
    tick.validate();
}

// ---- image container ------------------------------------------------------------

static void put_u32(std::ostream& out, uint32_t v) {
    uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                    static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

static uint32_t get_u32(std::istream& in) {
    uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw ImageFormatError("truncated image");
    return uint32_t{b[0]} | uint32_t{b[1]} << 8 | uint32_t{b[2]} << 16 |
           uint32_t{b[3]} << 24;
}

static constexpr char kImageMagic[8] = {'P', 'M', 'C', 'U', 'I', 'M', 'G', '1'};

void ImageSections::save(std::ostream& out) const {
    out.write(kImageMagic, sizeof kImageMagic);
    put_u32(out, static_cast<uint32_t>(payload.size()));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    put_u32(out, 4);
    put_u32(out, data_run_addr);
    put_u32(out, 8);
    put_u32(out, bss_run_addr);
    put_u32(out, bss_size);
    if (!out) throw Error("image write failed");
}

void ImageSections::save_file(const std::filesystem::path& p) const {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + p.string());
    save(out);
}

ImageSections ImageSections::load(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof magic);
    if (in.gcount() != 8 || std::memcmp(magic, kImageMagic, 8) != 0) {
        throw ImageFormatError("bad image magic");
    }
    ImageSections img;
    uint32_t len = get_u32(in);
    img.payload.resize(len);
    if (len != 0) {
        in.read(reinterpret_cast<char*>(img.payload.data()), len);
        if (in.gcount() != static_cast<std::streamsize>(len)) {
            throw ImageFormatError("truncated image payload");
        }
    }
    if (get_u32(in) != 4) throw ImageFormatError("bad run-address record");
    img.data_run_addr = get_u32(in);
    if (get_u32(in) != 8) throw ImageFormatError("bad bss record");
    img.bss_run_addr = get_u32(in);
    img.bss_size = get_u32(in);
    if (in.peek() != std::istream::traits_type::eof()) {
        throw ImageFormatError("trailing bytes after image");
    }
    return img;
}

ImageSections ImageSections::load_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot open " + p.string());
    return load(in);
}

// ---- allocator ------------------------------------------------------------------

RegionAllocator::RegionAllocator(const Params& p, uint8_t* shadow,
                                 SimAddr shadow_origin, size_t shadow_len)
    : params_(p),
      shadow_(shadow),
      shadow_origin_(shadow_origin),
      shadow_len_(shadow_len),
      bump_(p.heap.origin) {
    free_list_[params_.heap.origin] = params_.heap.size;
}

void RegionAllocator::shadow_mark(SimAddr a, uint32_t len, ShadowClass c) {
    if (shadow_ == nullptr || len == 0) return;
    size_t off = a - shadow_origin_;
    std::memset(shadow_ + off, static_cast<int>(c), len);
}

uint32_t RegionAllocator::footprint(uint32_t size) const {
    uint64_t padded =
        (uint64_t{size} + params_.align - 1) & ~uint64_t{params_.align - 1};
    uint64_t fp = padded + 2ull * params_.redzone;
    if (fp > params_.heap.size) return 0;  // can never fit; signals failure
    return static_cast<uint32_t>(fp);
}

std::optional<SimAddr> RegionAllocator::alloc(uint32_t size) {
    if (size == 0) return std::nullopt;

    if (params_.mode == AllocatorMode::Passthrough) {
        uint64_t padded =
            (uint64_t{size} + params_.align - 1) & ~uint64_t{params_.align - 1};
        if (uint64_t{bump_} + padded > params_.heap.end()) return std::nullopt;
        SimAddr payload = bump_;
        bump_ += static_cast<uint32_t>(padded);
        shadow_mark(payload, static_cast<uint32_t>(padded),
                    ShadowClass::Addressable);
        table_[payload] = Block{size, static_cast<uint32_t>(padded), false};
        return payload;
    }

    uint32_t fp = footprint(size);
    if (fp == 0) return std::nullopt;
    uint32_t padded = fp - 2 * params_.redzone;

    for (auto it = free_list_.begin(); it != free_list_.end(); ++it) {
        if (it->second < fp) continue;
        SimAddr start = it->first;
        uint32_t remain = it->second - fp;
        free_list_.erase(it);
        if (remain != 0) free_list_[start + fp] = remain;

        SimAddr payload = start + params_.redzone;
        shadow_mark(start, params_.redzone, ShadowClass::Redzone);
        shadow_mark(payload, padded, ShadowClass::Addressable);
        shadow_mark(payload + padded, params_.redzone, ShadowClass::Redzone);
        table_[payload] = Block{size, padded, false};
        return payload;
    }
    return std::nullopt;
}

void RegionAllocator::insert_free(SimAddr start, uint32_t len) {
    auto next = free_list_.upper_bound(start);
    if (next != free_list_.begin()) {
        auto prev = std::prev(next);
        if (prev->first + prev->second == start) {
            start = prev->first;
            len += prev->second;
            free_list_.erase(prev);
        }
    }
    if (next != free_list_.end() && start + len == next->first) {
        len += next->second;
        free_list_.erase(next);
    }
    free_list_[start] = len;
}

void RegionAllocator::evict_to_budget() {
    while (quarantine_used_ > params_.quarantine_capacity && !quarantine_.empty()) {
        SimAddr payload = quarantine_.front();
        quarantine_.pop_front();
        auto it = table_.find(payload);
        uint32_t fp = it->second.padded + 2 * params_.redzone;
        quarantine_used_ -= fp;
        SimAddr start = payload - params_.redzone;
        shadow_mark(start, fp, ShadowClass::Unallocated);
        insert_free(start, fp);
        table_.erase(it);
    }
}

RegionAllocator::FreeOutcome RegionAllocator::free(SimAddr payload) {
    if (params_.mode == AllocatorMode::Passthrough) {
        // Baseline mode: releases recycle nothing and misuse goes unnoticed,
        // exactly like a bump allocator on the real part.
        return FreeOutcome::Ok;
    }
    auto it = table_.find(payload);
    if (it == table_.end()) return FreeOutcome::InvalidFree;
    if (it->second.quarantined) return FreeOutcome::DoubleFree;

    it->second.quarantined = true;
    shadow_mark(payload, it->second.padded, ShadowClass::FreedQuarantined);
    quarantine_.push_back(payload);
    quarantine_used_ += it->second.padded + 2ull * params_.redzone;
    evict_to_budget();
    return FreeOutcome::Ok;
}

RegionAllocator::Stats RegionAllocator::stats() const {
    Stats s;
    for (const auto& [start, len] : free_list_) s.free_bytes += len;
    for (const auto& [payload, b] : table_) {
        if (b.quarantined) {
            s.quarantined_blocks++;
            s.quarantined_bytes += b.padded + 2ull * params_.redzone;
        } else {
            s.live_blocks++;
            s.live_payload_bytes += b.padded;
            s.redzone_overhead += 2ull * params_.redzone;
        }
    }
    return s;
}

std::vector<RegionAllocator::BlockView> RegionAllocator::blocks() const {
    std::vector<BlockView> out;
    out.reserve(table_.size());
    for (const auto& [payload, b] : table_) {
        out.push_back(BlockView{payload, b.padded, b.quarantined});
    }
    return out;
}

// ---- machine memory ----------------------------------------------------------

MachineMemory::MachineMemory(const MemoryMap& map) : map_(map) {
    map_.validate();
    flash_.resize(map_.flash.size);
    sram_.resize(map_.sram.size);
    shadow_.resize(map_.sram.size);
    reset(ImageSections{});
}

void MachineMemory::reset(const ImageSections& image) {
    if (image.payload.size() > map_.flash.size) {
        throw ImageLayoutError("payload larger than flash");
    }
    auto check_run_range = [&](const char* what, SimAddr addr, uint32_t size) {
        if (size == 0) return;
        if (!map_.sram.contains(addr, size)) {
            throw ImageLayoutError(std::string(what) + " outside sram");
        }
        Region r{addr, size};
        if (r.overlaps(map_.heap)) {
            throw ImageLayoutError(std::string(what) + " overlaps heap");
        }
        if (r.overlaps(map_.stack_area)) {
            throw ImageLayoutError(std::string(what) + " overlaps stack_area");
        }
    };
    auto data_len = static_cast<uint32_t>(image.payload.size());
    check_run_range("data", image.data_run_addr, data_len);
    check_run_range("bss", image.bss_run_addr, image.bss_size);
    if (data_len != 0 && image.bss_size != 0) {
        Region d{image.data_run_addr, data_len};
        Region b{image.bss_run_addr, image.bss_size};
        if (d.overlaps(b)) throw ImageLayoutError("data overlaps bss");
    }

    std::fill(flash_.begin(), flash_.end(), uint8_t{0});
    std::fill(sram_.begin(), sram_.end(), uint8_t{0});
    std::fill(shadow_.begin(), shadow_.end(),
              static_cast<uint8_t>(ShadowClass::Unallocated));

    if (data_len != 0) {
        std::memcpy(flash_.data(), image.payload.data(), data_len);
        std::memcpy(sram_.data() + (image.data_run_addr - map_.sram.origin),
                    image.payload.data(), data_len);
        set_shadow(image.data_run_addr, data_len, ShadowClass::Addressable);
    }
    if (image.bss_size != 0) {
        set_shadow(image.bss_run_addr, image.bss_size, ShadowClass::Addressable);
    }

    RegionAllocator::Params params{map_.heap, map_.allocator_mode,
                                   map_.redzone_bytes, map_.quarantine_bytes,
                                   map_.heap_align};
    alloc_ = std::make_unique<RegionAllocator>(params, shadow_.data(),
                                               map_.sram.origin, shadow_.size());
    stack_cursor_ = map_.stack_area.end();
}

uint8_t* MachineMemory::host_ptr(SimAddr addr, uint32_t len) {
    const auto* self = this;
    return const_cast<uint8_t*>(self->host_ptr(addr, len));
}

const uint8_t* MachineMemory::host_ptr(SimAddr addr, uint32_t len) const {
    if (map_.flash.contains(addr, len)) {
        return flash_.data() + (addr - map_.flash.origin);
    }
    if (map_.sram.contains(addr, len)) {
        return sram_.data() + (addr - map_.sram.origin);
    }
    return nullptr;
}

std::optional<Violation> MachineMemory::check_access(SimAddr addr, uint32_t len,
                                                     AccessKind kind) const {
    if (len == 0) return std::nullopt;
    auto reject = [&](BugClass cls, SimAddr at) {
        return Violation{cls, at, len, kind};
    };
    // The access is classified by its first offending byte.
    for (uint64_t i = 0; i < len; ++i) {
        auto a = static_cast<SimAddr>(addr + i);
        if (a < kNullGuard) return reject(BugClass::NullDeref, a);
        if (map_.flash.contains(a)) {
            if (kind == AccessKind::Write) return reject(BugClass::WildAccess, a);
            continue;
        }
        if (map_.sram.contains(a)) {
            ShadowClass c = shadow_at(a);
            if (c == ShadowClass::Addressable) continue;
            return reject(bug_class_for_shadow(c), a);
        }
        return reject(BugClass::WildAccess, a);
    }
    return std::nullopt;
}

void MachineMemory::raw_read(SimAddr addr, std::span<uint8_t> out) const {
    if (out.empty()) return;
    const uint8_t* p = host_ptr(addr, static_cast<uint32_t>(out.size()));
    if (p == nullptr) throw Error("raw_read outside the memory map");
    std::memcpy(out.data(), p, out.size());
}

void MachineMemory::raw_write(SimAddr addr, std::span<const uint8_t> in) {
    if (in.empty()) return;
    uint8_t* p = host_ptr(addr, static_cast<uint32_t>(in.size()));
    if (p == nullptr) throw Error("raw_write outside the memory map");
    std::memcpy(p, in.data(), in.size());
}

ShadowClass MachineMemory::shadow_at(SimAddr a) const {
    if (!map_.sram.contains(a)) throw Error("shadow_at outside sram");
    return static_cast<ShadowClass>(shadow_[a - map_.sram.origin]);
}

void MachineMemory::set_shadow(SimAddr a, uint32_t len, ShadowClass c) {
    if (len == 0) return;
    if (!map_.sram.contains(a, len)) throw Error("set_shadow outside sram");
    std::memset(shadow_.data() + (a - map_.sram.origin), static_cast<int>(c), len);
}

std::optional<MachineMemory::StackCarve> MachineMemory::carve_stack(uint32_t size) {
    if (size == 0) return std::nullopt;
    uint64_t need = uint64_t{size} + kHostSlack + kGuardGap;
    if (stack_cursor_ < map_.stack_area.origin + need) return std::nullopt;

    auto top = static_cast<SimAddr>(stack_cursor_);
    Region sim{top - size, size};
    stack_cursor_ = top - need;

    StackCarve carve;
    carve.sim = sim;
    carve.host_lo = sram_.data() + (sim.origin - kHostSlack - map_.sram.origin);
    carve.host_len = kHostSlack + size;
    set_shadow(sim.origin, sim.size, ShadowClass::Addressable);
    return carve;
}

void MachineMemory::stack_paint(const Region& r) {
    uint8_t* p = host_ptr(r.origin, r.size);
    if (p == nullptr) throw Error("stack_paint outside the memory map");
    std::memset(p, kStackFill, r.size);
}

MachineMemory::StackUsage MachineMemory::stack_check(const Region& r) const {
    const uint8_t* p = host_ptr(r.origin, r.size);
    if (p == nullptr) throw Error("stack_check outside the memory map");
    uint32_t untouched = 0;
    while (untouched < r.size && p[untouched] == kStackFill) untouched++;
    return StackUsage{r.size - untouched, untouched == 0};
}

std::optional<SimAddr> MachineMemory::sim_addr_of(const void* host) const {
    const auto* p = static_cast<const uint8_t*>(host);
    if (p >= sram_.data() && p < sram_.data() + sram_.size()) {
        return map_.sram.origin + static_cast<SimAddr>(p - sram_.data());
    }
    return std::nullopt;
}

}  // namespace pmcu
