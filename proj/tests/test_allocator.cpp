#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "pmcu/memory.hpp"

using namespace pmcu;

namespace {

// Brute-force reference allocator. Same contract, written as plainly as
// possible: linear scans, re-sorted extent list, full merge pass after every
// insert. The production allocator must agree with it exactly, address for
// address and outcome for outcome.
class ModelAllocator {
public:
    struct Live {
        uint32_t size;
        uint32_t padded;
        bool quarantined;
    };

    ModelAllocator(Region heap, uint32_t rz, uint32_t cap, uint32_t align)
        : heap_(heap), rz_(rz), cap_(cap), align_(align) {
        extents_.push_back({heap.origin, heap.size});
    }

    std::optional<SimAddr> alloc(uint32_t size) {
        if (size == 0) return std::nullopt;
        uint64_t padded = (uint64_t{size} + align_ - 1) / align_ * align_;
        uint64_t fp = padded + 2ull * rz_;
        if (fp > heap_.size) return std::nullopt;
        for (size_t i = 0; i < extents_.size(); i++) {
            if (extents_[i].second < fp) continue;
            SimAddr start = extents_[i].first;
            uint32_t remain = static_cast<uint32_t>(extents_[i].second - fp);
            extents_.erase(extents_.begin() + static_cast<long>(i));
            if (remain) insert_extent(start + static_cast<uint32_t>(fp), remain);
            SimAddr payload = start + rz_;
            table_[payload] = {size, static_cast<uint32_t>(padded), false};
            return payload;
        }
        return std::nullopt;
    }

    RegionAllocator::FreeOutcome free(SimAddr payload) {
        auto it = table_.find(payload);
        if (it == table_.end()) return RegionAllocator::FreeOutcome::InvalidFree;
        if (it->second.quarantined) {
            return RegionAllocator::FreeOutcome::DoubleFree;
        }
        it->second.quarantined = true;
        fifo_.push_back(payload);
        used_ += it->second.padded + 2ull * rz_;
        while (used_ > cap_ && !fifo_.empty()) {
            SimAddr victim = fifo_.front();
            fifo_.pop_front();
            auto v = table_.find(victim);
            uint32_t vfp = v->second.padded + 2 * rz_;
            used_ -= vfp;
            insert_extent(victim - rz_, vfp);
            table_.erase(v);
        }
        return RegionAllocator::FreeOutcome::Ok;
    }

    // Expected shadow classification of every heap byte, recomputed from
    // scratch on demand.
    std::vector<ShadowClass> shadow_image() const {
        std::vector<ShadowClass> img(heap_.size, ShadowClass::Unallocated);
        for (const auto& [payload, b] : table_) {
            uint32_t base = payload - rz_ - heap_.origin;
            for (uint32_t i = 0; i < rz_; i++) {
                img[base + i] = ShadowClass::Redzone;
                img[base + rz_ + b.padded + i] = ShadowClass::Redzone;
            }
            ShadowClass body = b.quarantined ? ShadowClass::FreedQuarantined
                                             : ShadowClass::Addressable;
            for (uint32_t i = 0; i < b.padded; i++) {
                img[base + rz_ + i] = body;
            }
        }
        return img;
    }

    const std::map<SimAddr, Live>& table() const { return table_; }
    uint64_t quarantine_used() const { return used_; }
    uint64_t free_bytes() const {
        uint64_t n = 0;
        for (auto& e : extents_) n += e.second;
        return n;
    }

private:
    void insert_extent(SimAddr start, uint32_t len) {
        extents_.push_back({start, len});
        std::sort(extents_.begin(), extents_.end());
        for (size_t i = 0; i + 1 < extents_.size();) {
            if (extents_[i].first + extents_[i].second == extents_[i + 1].first) {
                extents_[i].second += extents_[i + 1].second;
                extents_.erase(extents_.begin() + static_cast<long>(i) + 1);
            } else {
                i++;
            }
        }
    }

    Region heap_;
    uint32_t rz_, cap_, align_;
    std::vector<std::pair<SimAddr, uint32_t>> extents_;
    std::map<SimAddr, Live> table_;
    std::deque<SimAddr> fifo_;
    uint64_t used_ = 0;
};

constexpr Region kHeap{0x2002'0000, 8192};

RegionAllocator::Params region_params(uint32_t quarantine = 1024) {
    RegionAllocator::Params p;
    p.heap = kHeap;
    p.mode = AllocatorMode::Region;
    p.redzone = 16;
    p.quarantine_capacity = quarantine;
    p.align = 8;
    return p;
}

}  // namespace

TEST_CASE("allocation geometry: alignment, redzones, shadow") {
    std::vector<uint8_t> shadow(kHeap.size, 0);
    RegionAllocator a(region_params(), shadow.data(), kHeap.origin,
                      shadow.size());

    auto p = a.alloc(1);
    REQUIRE(p.has_value());
    CHECK(*p % 8 == 0);
    CHECK(*p == kHeap.origin + 16);  // first fit carves from the region start
    CHECK(a.footprint(1) == 16 + 8 + 16);

    // Shadow: redzone, 8 addressable bytes (1 rounded up), redzone.
    for (uint32_t i = 0; i < 16; i++) {
        CHECK(shadow[*p - 16 + i - kHeap.origin] ==
              static_cast<uint8_t>(ShadowClass::Redzone));
        CHECK(shadow[*p + 8 + i - kHeap.origin] ==
              static_cast<uint8_t>(ShadowClass::Redzone));
    }
    for (uint32_t i = 0; i < 8; i++) {
        CHECK(shadow[*p + i - kHeap.origin] ==
              static_cast<uint8_t>(ShadowClass::Addressable));
    }

    auto q = a.alloc(100);
    REQUIRE(q.has_value());
    CHECK(*q == *p + 8 + 16 + 16);  // packed right after the first footprint
    CHECK(a.footprint(100) == 16 + 104 + 16);

    auto s = a.stats();
    CHECK(s.live_blocks == 2);
    CHECK(s.live_payload_bytes == 8 + 104);
    CHECK(s.redzone_overhead == 4 * 16);
    CHECK(s.free_bytes == kHeap.size - a.footprint(1) - a.footprint(100));
}

TEST_CASE("free quarantines, then eviction recycles the footprint") {
    std::vector<uint8_t> shadow(kHeap.size, 0);
    // Capacity of one 24-byte-payload footprint: the second free evicts the
    // first block.
    RegionAllocator a(region_params(/*quarantine=*/64), shadow.data(),
                      kHeap.origin, shadow.size());

    auto p = a.alloc(24);
    auto q = a.alloc(24);
    REQUIRE(p.has_value());
    REQUIRE(q.has_value());

    CHECK(a.free(*p) == RegionAllocator::FreeOutcome::Ok);
    CHECK(a.stats().quarantined_blocks == 1);
    for (uint32_t i = 0; i < 24; i++) {
        CHECK(shadow[*p + i - kHeap.origin] ==
              static_cast<uint8_t>(ShadowClass::FreedQuarantined));
    }
    // Redzones survive quarantine: stale pointer arithmetic still classifies.
    CHECK(shadow[*p - 1 - kHeap.origin] ==
          static_cast<uint8_t>(ShadowClass::Redzone));

    // Still parked: freeing again is a double free.
    CHECK(a.free(*p) == RegionAllocator::FreeOutcome::DoubleFree);

    // This push exceeds the 64-byte budget and evicts p (FIFO order).
    CHECK(a.free(*q) == RegionAllocator::FreeOutcome::Ok);
    CHECK(a.stats().quarantined_blocks == 1);  // q remains
    for (uint32_t i = 0; i < a.footprint(24); i++) {
        CHECK(shadow[*p - 16 + i - kHeap.origin] ==
              static_cast<uint8_t>(ShadowClass::Unallocated));
    }

    // After eviction the block is unknown: freeing it is an invalid free,
    // and its address range is eligible for reuse.
    CHECK(a.free(*p) == RegionAllocator::FreeOutcome::InvalidFree);
    CHECK(a.free(*q) == RegionAllocator::FreeOutcome::DoubleFree);
    auto r = a.alloc(24);
    REQUIRE(r.has_value());
    CHECK(*r == *p);
}

TEST_CASE("exhaustion returns nullopt and recovers after eviction") {
    RegionAllocator a(region_params(/*quarantine=*/0), nullptr, 0, 0);
    std::vector<SimAddr> held;
    while (auto p = a.alloc(256)) held.push_back(*p);
    CHECK(held.size() == kHeap.size / a.footprint(256));
    CHECK_FALSE(a.alloc(256).has_value());

    // Zero quarantine budget: a free is evicted immediately, so the space
    // comes straight back.
    CHECK(a.free(held.back()) == RegionAllocator::FreeOutcome::Ok);
    auto again = a.alloc(256);
    REQUIRE(again.has_value());
    CHECK(*again == held.back());
}

TEST_CASE("oversized and zero requests fail cleanly") {
    RegionAllocator a(region_params(), nullptr, 0, 0);
    CHECK_FALSE(a.alloc(0).has_value());
    CHECK_FALSE(a.alloc(kHeap.size).has_value());
    CHECK(a.footprint(kHeap.size) == 0);
    CHECK_FALSE(a.alloc(0xFFFF'FFF0u).has_value());  // padded size would wrap
}

TEST_CASE("passthrough mode bumps, never recycles, never complains") {
    RegionAllocator::Params p = region_params();
    p.mode = AllocatorMode::Passthrough;
    std::vector<uint8_t> shadow(kHeap.size, 0);
    RegionAllocator a(p, shadow.data(), kHeap.origin, shadow.size());

    auto x = a.alloc(10);
    auto y = a.alloc(10);
    REQUIRE(x.has_value());
    REQUIRE(y.has_value());
    CHECK(*x == kHeap.origin);  // no redzones in baseline mode
    CHECK(*y == *x + 16);       // 10 rounded up to 16

    CHECK(a.free(*x) == RegionAllocator::FreeOutcome::Ok);
    CHECK(a.free(*x) == RegionAllocator::FreeOutcome::Ok);   // unnoticed
    CHECK(a.free(0xDEAD) == RegionAllocator::FreeOutcome::Ok);

    auto z = a.alloc(10);
    REQUIRE(z.has_value());
    CHECK(*z == *y + 16);  // the freed block was not reused

    for (uint32_t i = 0; i < 16; i++) {
        CHECK(shadow[*x + i - kHeap.origin] ==
              static_cast<uint8_t>(ShadowClass::Addressable));
    }
}

TEST_CASE("randomized op streams match the brute-force model exactly") {
    std::mt19937 rng(0xA110C);

    for (int round = 0; round < 30; round++) {
        uint32_t cap = (round % 3 == 0) ? 0 : 256u * (1u + round % 5);
        std::vector<uint8_t> shadow(kHeap.size, 0);
        RegionAllocator real(region_params(cap), shadow.data(), kHeap.origin,
                             shadow.size());
        ModelAllocator model(kHeap, 16, cap, 8);

        std::vector<SimAddr> pointers;  // every address ever returned
        std::uniform_int_distribution<uint32_t> size_dist(1, 256);
        std::uniform_int_distribution<int> op_dist(0, 99);

        for (int op = 0; op < 2000; op++) {
            if (op_dist(rng) < 55 || pointers.empty()) {
                uint32_t size = size_dist(rng);
                auto got = real.alloc(size);
                auto want = model.alloc(size);
                REQUIRE(got == want);
                if (got) pointers.push_back(*got);
            } else {
                SimAddr target;
                int pick = op_dist(rng);
                if (pick < 80) {
                    target = pointers[rng() % pointers.size()];
                } else {
                    // Wild address, usually invalid.
                    target = kHeap.origin + rng() % kHeap.size;
                }
                REQUIRE(real.free(target) == model.free(target));
            }

            // The shadow must match a from-scratch reclassification.
            auto want_img = model.shadow_image();
            bool shadow_ok = true;
            for (size_t i = 0; i < want_img.size(); i++) {
                if (shadow[i] != static_cast<uint8_t>(want_img[i])) {
                    shadow_ok = false;
                    break;
                }
            }
            REQUIRE(shadow_ok);

            // Conservation: every heap byte is free, live or quarantined.
            auto s = real.stats();
            REQUIRE(s.free_bytes + s.live_payload_bytes + s.redzone_overhead +
                        s.quarantined_bytes ==
                    kHeap.size);
            REQUIRE(s.free_bytes == model.free_bytes());
            REQUIRE(s.quarantined_bytes == model.quarantine_used());
            REQUIRE(s.quarantined_bytes <= cap);
        }

        // Final block views agree with the model table.
        auto blocks = real.blocks();
        REQUIRE(blocks.size() == model.table().size());
        for (const auto& b : blocks) {
            auto it = model.table().find(b.payload);
            REQUIRE(it != model.table().end());
            CHECK(b.padded == it->second.padded);
            CHECK(b.quarantined == it->second.quarantined);
        }
    }
}
