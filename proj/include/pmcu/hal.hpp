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
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pmcu/errors.hpp"
#include "pmcu/types.hpp"

namespace pmcu {
class Machine;
}

namespace pmcu::hal {

enum class Category : uint8_t { Io, Network, Storage, Dummy };

const char* category_name(Category c);

// ---- byte-stream endpoints (Io category) -----------------------------------

// Pull side of a character device. nullopt = end of input, for good.
class ByteSource {
public:
    virtual ~ByteSource() = default;
    virtual std::optional<std::vector<uint8_t>> read(size_t max) = 0;
};

class ByteSink {
public:
    virtual ~ByteSink() = default;
    virtual void write(std::span<const uint8_t> data) = 0;
};

std::unique_ptr<ByteSource> make_buffer_source(std::vector<uint8_t> bytes);
std::unique_ptr<ByteSource> make_file_source(const std::filesystem::path& p);
std::unique_ptr<ByteSource> make_stdin_source();
std::unique_ptr<ByteSource> make_null_source();  // immediate end of input

// A sink that appends into a caller-owned buffer. The buffer must outlive
// the machine.
std::unique_ptr<ByteSink> make_capture_sink(std::vector<uint8_t>& out);
std::unique_ptr<ByteSink> make_file_sink(const std::filesystem::path& p);
std::unique_ptr<ByteSink> make_stdout_sink();
std::unique_ptr<ByteSink> make_null_sink();

// ---- network ----------------------------------------------------------------

inline constexpr size_t kMaxFrameLen = 1514;

struct NetworkFrame {
    std::vector<uint8_t> payload;  // 1 ..= kMaxFrameLen bytes
    uint64_t timestamp_us = 0;     // capture timestamp, 0 for live frames
};

using ReceiveCallback = std::function<void(const NetworkFrame&)>;

// Which transport backs a network slot.
struct LoopbackConfig {
    std::string peer;  // slot name this interface is cross-wired to
};
struct ReplayConfig {
    std::filesystem::path capture;       // inbound frames, classic pcap
    std::filesystem::path outbound_log;  // sends appended here; empty = drop
};
// Bridges to a real host interface. Only available when the simulator is
// built with PMCU_ENABLE_HOSTTAP; otherwise init throws
// InterfaceUnavailable.
struct HostTapConfig {
    std::string interface;
};
using NetworkBackendConfig =
    std::variant<LoopbackConfig, ReplayConfig, HostTapConfig>;

// ---- classic pcap container (linktype Ethernet) -----------------------------

std::vector<NetworkFrame> read_capture(const std::filesystem::path& p);

class CaptureWriter {
public:
    explicit CaptureWriter(const std::filesystem::path& p);  // writes header
    ~CaptureWriter();
    void append(const NetworkFrame& frame);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// ---- storage -----------------------------------------------------------------

struct StorageMedium {
    std::filesystem::path backing;
    uint32_t block_size = 512;  // power of two
};

// ---- accelerators (pure, stateless) -----------------------------------------

uint32_t crc32(std::span<const uint8_t> data);
uint32_t crc32(const std::string& s);
std::array<uint8_t, 32> sha256(std::span<const uint8_t> data);
std::array<uint8_t, 32> sha256(const std::string& s);
std::string sha256_hex(std::span<const uint8_t> data);
std::string sha256_hex(const std::string& s);

// ---- registry -----------------------------------------------------------------

struct DummyCall {
    std::string name;
    std::string slot;
    uint64_t seq = 0;

    std::string to_line() const;  // "call=<name> slot=<slot> seq=<n>"
};

// Maps slot names ("uart0", "eth0", "flash0", ...) to backends. One registry
// per machine; binding is host-side configuration, the rest are simulated
// device operations (each one is a machine checkpoint, so ticks can land
// inside driver code just like a real interrupt would).
class Registry {
public:
    explicit Registry(Machine& m);
    ~Registry();

    // ---- binding (host side, typically before the run) ----
    void bind_io(const std::string& slot, std::unique_ptr<ByteSource> in,
                 std::unique_ptr<ByteSink> out);
    void network_init(const std::string& slot, NetworkBackendConfig config,
                      ReceiveCallback on_receive = nullptr);
    void storage_init(const std::string& slot, StorageMedium medium);
    void bind_dummy(const std::string& slot);

    bool bound(const std::string& slot) const;
    Category category_of(const std::string& slot) const;  // UnboundSlot

    // ---- Io ----
    // nullopt = end of input. Otherwise 1..max bytes.
    std::optional<std::vector<uint8_t>> io_read(const std::string& slot,
                                                size_t max);
    size_t io_write(const std::string& slot, std::span<const uint8_t> data);

    // ---- Network ----
    // Send: loopback enqueues on the peer, replay appends to the outbound
    // log, host tap writes to the real interface. FrameTooLarge for frames
    // outside 1..=kMaxFrameLen; PeerMissing on a loopback whose peer was
    // never bound.
    void network_send(const std::string& slot, const NetworkFrame& frame);

    // Pop the next inbound frame. With block=true and an empty queue the
    // calling task is parked Blocked(NetworkReceive) until a frame arrives.
    // With block=false an empty queue returns nullopt.
    std::optional<NetworkFrame> network_receive(const std::string& slot,
                                                bool block);

    // Deliver every currently queued inbound frame to the slot's receive
    // callback, in order. Returns the number delivered. For replay slots the
    // capture is (re)loaded into the queue at init time.
    size_t network_drain(const std::string& slot);

    size_t network_pending(const std::string& slot) const;

    // ---- Storage ----
    uint32_t storage_block_count(const std::string& slot) const;
    uint32_t storage_block_size(const std::string& slot) const;
    std::vector<uint8_t> storage_read(const std::string& slot,
                                      uint32_t block_index, uint32_t count);
    void storage_write(const std::string& slot, uint32_t block_index,
                       std::span<const uint8_t> data);

    // ---- Accelerator-style helpers bound to the machine ----
    std::vector<uint8_t> rng_bytes(size_t count);

    // ---- Dummy ----
    // Always succeeds; the call is appended to the audit log.
    void dummy_call(const std::string& slot, const std::string& name);
    const std::vector<DummyCall>& dummy_audit() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace pmcu::hal
