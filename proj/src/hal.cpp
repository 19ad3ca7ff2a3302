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

#include "pmcu/hal.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>

#include "pmcu/machine.hpp"

#ifdef PMCU_ENABLE_HOSTTAP
#include <net/if.h>
#include <netinet/in.h>
#include <sys/ioctl.h>
#include <sys/socket.h>
#include <unistd.h>
#ifdef __linux__
#include <linux/if_packet.h>
#endif
#endif

namespace pmcu::hal {

const char* category_name(Category c) {
    switch (c) {
        case Category::Io: return "Io";
        case Category::Network: return "Network";
        case Category::Storage: return "Storage";
        case Category::Dummy: return "Dummy";
    }
    return "?";
}

// ---- byte sources and sinks ----------------------------------------------------

namespace {

class BufferSource : public ByteSource {
public:
    explicit BufferSource(std::vector<uint8_t> bytes) : bytes_(std::move(bytes)) {}
    std::optional<std::vector<uint8_t>> read(size_t max) override {
        if (pos_ >= bytes_.size()) return std::nullopt;
        size_t n = std::min(max, bytes_.size() - pos_);
        std::vector<uint8_t> out(bytes_.begin() + static_cast<long>(pos_),
                                 bytes_.begin() + static_cast<long>(pos_ + n));
        pos_ += n;
        return out;
    }

private:
    std::vector<uint8_t> bytes_;
    size_t pos_ = 0;
};

class FileSource : public ByteSource {
public:
    explicit FileSource(const std::filesystem::path& p)
        : in_(p, std::ios::binary) {
        if (!in_) throw Error("cannot open " + p.string());
    }
    std::optional<std::vector<uint8_t>> read(size_t max) override {
        if (max == 0) return std::vector<uint8_t>{};
        std::vector<uint8_t> buf(max);
        in_.read(reinterpret_cast<char*>(buf.data()),
                 static_cast<std::streamsize>(max));
        auto got = static_cast<size_t>(in_.gcount());
        if (got == 0) return std::nullopt;
        buf.resize(got);
        return buf;
    }

private:
    std::ifstream in_;
};

class StdinSource : public ByteSource {
public:
    std::optional<std::vector<uint8_t>> read(size_t max) override {
        if (max == 0) return std::vector<uint8_t>{};
        std::vector<uint8_t> buf(max);
        size_t got = std::fread(buf.data(), 1, max, stdin);
        if (got == 0) return std::nullopt;
        buf.resize(got);
        return buf;
    }
};

class NullSource : public ByteSource {
public:
    std::optional<std::vector<uint8_t>> read(size_t) override {
        return std::nullopt;
    }
};

class CaptureSink : public ByteSink {
public:
    explicit CaptureSink(std::vector<uint8_t>& out) : out_(out) {}
    void write(std::span<const uint8_t> data) override {
        out_.insert(out_.end(), data.begin(), data.end());
    }

private:
    std::vector<uint8_t>& out_;
};

class FileSink : public ByteSink {
public:
    explicit FileSink(const std::filesystem::path& p)
        : out_(p, std::ios::binary | std::ios::trunc) {
        if (!out_) throw Error("cannot open " + p.string());
    }
    void write(std::span<const uint8_t> data) override {
        out_.write(reinterpret_cast<const char*>(data.data()),
                   static_cast<std::streamsize>(data.size()));
        out_.flush();
    }

private:
    std::ofstream out_;
};

class StdoutSink : public ByteSink {
public:
    void write(std::span<const uint8_t> data) override {
        std::fwrite(data.data(), 1, data.size(), stdout);
        std::fflush(stdout);
    }
};

class NullSink : public ByteSink {
public:
    void write(std::span<const uint8_t>) override {}
};

}  // namespace

std::unique_ptr<ByteSource> make_buffer_source(std::vector<uint8_t> bytes) {
    return std::make_unique<BufferSource>(std::move(bytes));
}
std::unique_ptr<ByteSource> make_file_source(const std::filesystem::path& p) {
    return std::make_unique<FileSource>(p);
}
std::unique_ptr<ByteSource> make_stdin_source() {
    return std::make_unique<StdinSource>();
}
std::unique_ptr<ByteSource> make_null_source() {
    return std::make_unique<NullSource>();
}
std::unique_ptr<ByteSink> make_capture_sink(std::vector<uint8_t>& out) {
    return std::make_unique<CaptureSink>(out);
}
std::unique_ptr<ByteSink> make_file_sink(const std::filesystem::path& p) {
    return std::make_unique<FileSink>(p);
}
std::unique_ptr<ByteSink> make_stdout_sink() {
    return std::make_unique<StdoutSink>();
}
std::unique_ptr<ByteSink> make_null_sink() { return std::make_unique<NullSink>(); }

// ---- pcap ------------------------------------------------------------------------

namespace {

constexpr uint32_t kPcapMagic = 0xA1B2C3D4;
constexpr uint32_t kLinktypeEthernet = 1;

void pcap_put_u32(std::ostream& out, uint32_t v) {
    uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                    static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void pcap_put_u16(std::ostream& out, uint16_t v) {
    uint8_t b[2] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

bool pcap_get_u32(std::istream& in, uint32_t& v) {
    uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) return false;
    v = uint32_t{b[0]} | uint32_t{b[1]} << 8 | uint32_t{b[2]} << 16 |
        uint32_t{b[3]} << 24;
    return true;
}

bool pcap_get_u16(std::istream& in, uint16_t& v) {
    uint8_t b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    if (in.gcount() != 2) return false;
    v = static_cast<uint16_t>(uint32_t{b[0]} | uint32_t{b[1]} << 8);
    return true;
}

void pcap_write_header(std::ostream& out) {
    pcap_put_u32(out, kPcapMagic);
    pcap_put_u16(out, 2);       // version major
    pcap_put_u16(out, 4);       // version minor
    pcap_put_u32(out, 0);       // thiszone
    pcap_put_u32(out, 0);       // sigfigs
    pcap_put_u32(out, 65535);   // snaplen
    pcap_put_u32(out, kLinktypeEthernet);
}

}  // namespace

std::vector<NetworkFrame> read_capture(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot open " + p.string());

    uint32_t magic = 0;
    if (!pcap_get_u32(in, magic)) throw CaptureParseError("truncated header");
    if (magic != kPcapMagic) {
        throw CaptureParseError("not a little-endian classic capture");
    }
    uint16_t vmaj = 0, vmin = 0;
    uint32_t zone = 0, sigfigs = 0, snaplen = 0, linktype = 0;
    if (!pcap_get_u16(in, vmaj) || !pcap_get_u16(in, vmin) ||
        !pcap_get_u32(in, zone) || !pcap_get_u32(in, sigfigs) ||
        !pcap_get_u32(in, snaplen) || !pcap_get_u32(in, linktype)) {
        throw CaptureParseError("truncated header");
    }
    if (linktype != kLinktypeEthernet) {
        throw CaptureParseError("unsupported linktype " + std::to_string(linktype));
    }

    std::vector<NetworkFrame> frames;
    while (true) {
        uint32_t ts_sec = 0;
        if (!pcap_get_u32(in, ts_sec)) {
            if (in.eof() && in.gcount() == 0) break;
            throw CaptureParseError("truncated record header");
        }
        uint32_t ts_usec = 0, incl = 0, orig = 0;
        if (!pcap_get_u32(in, ts_usec) || !pcap_get_u32(in, incl) ||
            !pcap_get_u32(in, orig)) {
            throw CaptureParseError("truncated record header");
        }
        if (incl == 0 || incl > kMaxFrameLen || incl > orig) {
            throw CaptureParseError("bad record length " + std::to_string(incl));
        }
        NetworkFrame f;
        f.payload.resize(incl);
        in.read(reinterpret_cast<char*>(f.payload.data()), incl);
        if (in.gcount() != static_cast<std::streamsize>(incl)) {
            throw CaptureParseError("truncated frame data");
        }
        f.timestamp_us = uint64_t{ts_sec} * 1'000'000 + ts_usec;
        frames.push_back(std::move(f));
    }
    return frames;
}

struct CaptureWriter::Impl {
    std::ofstream out;
};

CaptureWriter::CaptureWriter(const std::filesystem::path& p)
    : impl_(std::make_unique<Impl>()) {
    impl_->out.open(p, std::ios::binary | std::ios::trunc);
    if (!impl_->out) throw Error("cannot open " + p.string());
    pcap_write_header(impl_->out);
    impl_->out.flush();
}

CaptureWriter::~CaptureWriter() = default;

void CaptureWriter::append(const NetworkFrame& frame) {
    auto& out = impl_->out;
    pcap_put_u32(out, static_cast<uint32_t>(frame.timestamp_us / 1'000'000));
    pcap_put_u32(out, static_cast<uint32_t>(frame.timestamp_us % 1'000'000));
    pcap_put_u32(out, static_cast<uint32_t>(frame.payload.size()));
    pcap_put_u32(out, static_cast<uint32_t>(frame.payload.size()));
    out.write(reinterpret_cast<const char*>(frame.payload.data()),
              static_cast<std::streamsize>(frame.payload.size()));
    out.flush();
    if (!out) throw Error("capture write failed");
}

// ---- host tap (optional) ----------------------------------------------------------

#ifdef PMCU_ENABLE_HOSTTAP
namespace {

// Raw AF_PACKET bridge. Requires CAP_NET_RAW; strictly an opt-in build.
class HostTapSocket {
public:
    explicit HostTapSocket(const std::string& ifname) {
        fd_ = ::socket(AF_PACKET, SOCK_RAW, htons(0x0003 /* ETH_P_ALL */));
        if (fd_ < 0) throw InterfaceUnavailable("raw socket: " + ifname);
        ifreq ifr{};
        std::snprintf(ifr.ifr_name, sizeof ifr.ifr_name, "%s", ifname.c_str());
        if (::ioctl(fd_, SIOCGIFINDEX, &ifr) < 0) {
            ::close(fd_);
            throw InterfaceUnavailable("no such interface: " + ifname);
        }
        sockaddr_ll sll{};
        sll.sll_family = AF_PACKET;
        sll.sll_protocol = htons(0x0003);
        sll.sll_ifindex = ifr.ifr_ifindex;
        if (::bind(fd_, reinterpret_cast<sockaddr*>(&sll), sizeof sll) < 0) {
            ::close(fd_);
            throw InterfaceUnavailable("cannot bind to " + ifname);
        }
    }
    ~HostTapSocket() {
        if (fd_ >= 0) ::close(fd_);
    }
    void send(const NetworkFrame& f) {
        if (::send(fd_, f.payload.data(), f.payload.size(), 0) < 0) {
            throw Error("host tap send failed");
        }
    }
    std::optional<NetworkFrame> poll() {
        uint8_t buf[kMaxFrameLen];
        auto n = ::recv(fd_, buf, sizeof buf, MSG_DONTWAIT);
        if (n <= 0) return std::nullopt;
        NetworkFrame f;
        f.payload.assign(buf, buf + n);
        return f;
    }

private:
    int fd_ = -1;
};

}  // namespace
#endif

// ---- registry ----------------------------------------------------------------------

namespace {

struct IoSlot {
    std::unique_ptr<ByteSource> in;
    std::unique_ptr<ByteSink> out;
};

struct NetSlot {
    NetworkBackendConfig config;
    ReceiveCallback callback;
    std::deque<NetworkFrame> inbound;
    std::deque<TaskId> waiters;
    std::unique_ptr<CaptureWriter> outbound;
#ifdef PMCU_ENABLE_HOSTTAP
    std::unique_ptr<HostTapSocket> tap;
#endif
};

struct StorageSlot {
    StorageMedium medium;
    std::fstream file;
    uint32_t block_count = 0;
};

struct DummySlot {};

using Slot = std::variant<IoSlot, NetSlot, StorageSlot, DummySlot>;

Category slot_category(const Slot& s) {
    switch (s.index()) {
        case 0: return Category::Io;
        case 1: return Category::Network;
        case 2: return Category::Storage;
        default: return Category::Dummy;
    }
}

}  // namespace

struct Registry::Impl {
    Machine& m;
    std::map<std::string, Slot> slots;
    std::map<TaskId, NetworkFrame> grants;
    std::vector<DummyCall> audit;

    explicit Impl(Machine& machine) : m(machine) {}

    Slot& find(const std::string& slot, Category want) {
        auto it = slots.find(slot);
        if (it == slots.end()) {
            throw UnboundSlot("slot '" + slot + "' is not bound");
        }
        if (slot_category(it->second) != want) {
            throw UnboundSlot("slot '" + slot + "' is " +
                              category_name(slot_category(it->second)) +
                              ", expected " + category_name(want));
        }
        return it->second;
    }
};

Registry::Registry(Machine& m) : impl_(std::make_unique<Impl>(m)) {}
Registry::~Registry() = default;

void Registry::bind_io(const std::string& slot, std::unique_ptr<ByteSource> in,
                       std::unique_ptr<ByteSink> out) {
    IoSlot io;
    io.in = in ? std::move(in) : make_null_source();
    io.out = out ? std::move(out) : make_null_sink();
    impl_->slots[slot] = std::move(io);
}

void Registry::network_init(const std::string& slot, NetworkBackendConfig config,
                            ReceiveCallback on_receive) {
    NetSlot net;
    net.config = std::move(config);
    net.callback = std::move(on_receive);
    if (auto* replay = std::get_if<ReplayConfig>(&net.config)) {
        for (auto& f : read_capture(replay->capture)) {
            net.inbound.push_back(std::move(f));
        }
        if (!replay->outbound_log.empty()) {
            net.outbound = std::make_unique<CaptureWriter>(replay->outbound_log);
        }
    } else if (std::get_if<HostTapConfig>(&net.config) != nullptr) {
#ifdef PMCU_ENABLE_HOSTTAP
        net.tap = std::make_unique<HostTapSocket>(
            std::get<HostTapConfig>(net.config).interface);
#else
        throw InterfaceUnavailable(
            "host tap support is not built in (PMCU_ENABLE_HOSTTAP)");
#endif
    }
    impl_->slots[slot] = std::move(net);
}

void Registry::storage_init(const std::string& slot, StorageMedium medium) {
    if (medium.block_size == 0 ||
        (medium.block_size & (medium.block_size - 1)) != 0) {
        throw MediumGeometryError("block_size must be a power of two");
    }
    StorageSlot st;
    st.file.open(medium.backing,
                 std::ios::binary | std::ios::in | std::ios::out);
    if (!st.file) throw Error("cannot open " + medium.backing.string());
    st.file.seekg(0, std::ios::end);
    auto size = static_cast<uint64_t>(st.file.tellg());
    if (size == 0 || size % medium.block_size != 0) {
        throw MediumGeometryError("backing size " + std::to_string(size) +
                                  " is not a positive multiple of block_size");
    }
    st.block_count = static_cast<uint32_t>(size / medium.block_size);
    st.medium = std::move(medium);
    impl_->slots[slot] = std::move(st);
}

void Registry::bind_dummy(const std::string& slot) {
    impl_->slots[slot] = DummySlot{};
}

bool Registry::bound(const std::string& slot) const {
    return impl_->slots.count(slot) != 0;
}

Category Registry::category_of(const std::string& slot) const {
    auto it = impl_->slots.find(slot);
    if (it == impl_->slots.end()) {
        throw UnboundSlot("slot '" + slot + "' is not bound");
    }
    return slot_category(it->second);
}

// ---- Io ----

std::optional<std::vector<uint8_t>> Registry::io_read(const std::string& slot,
                                                      size_t max) {
    impl_->m.checkpoint();
    auto& io = std::get<IoSlot>(impl_->find(slot, Category::Io));
    return io.in->read(max);
}

size_t Registry::io_write(const std::string& slot,
                          std::span<const uint8_t> data) {
    impl_->m.checkpoint();
    auto& io = std::get<IoSlot>(impl_->find(slot, Category::Io));
    io.out->write(data);
    return data.size();
}

// ---- Network ----

void Registry::network_send(const std::string& slot, const NetworkFrame& frame) {
    impl_->m.checkpoint();
    auto& net = std::get<NetSlot>(impl_->find(slot, Category::Network));
    if (frame.payload.empty() || frame.payload.size() > kMaxFrameLen) {
        throw FrameTooLarge("frame of " + std::to_string(frame.payload.size()) +
                            " bytes (valid: 1.." + std::to_string(kMaxFrameLen) +
                            ")");
    }
    if (auto* loop = std::get_if<LoopbackConfig>(&net.config)) {
        auto peer_it = impl_->slots.find(loop->peer);
        if (peer_it == impl_->slots.end() ||
            slot_category(peer_it->second) != Category::Network) {
            throw PeerMissing("loopback peer '" + loop->peer + "' is not bound");
        }
        auto& peer = std::get<NetSlot>(peer_it->second);
        if (!peer.waiters.empty()) {
            TaskId waiter = peer.waiters.front();
            peer.waiters.pop_front();
            impl_->grants[waiter] = frame;
            impl_->m.wake(waiter);
        } else {
            peer.inbound.push_back(frame);
        }
        return;
    }
    if (std::get_if<ReplayConfig>(&net.config) != nullptr) {
        if (net.outbound) net.outbound->append(frame);
        return;
    }
#ifdef PMCU_ENABLE_HOSTTAP
    if (net.tap) {
        net.tap->send(frame);
        return;
    }
#endif
    throw InterfaceUnavailable("network slot has no usable transport");
}

std::optional<NetworkFrame> Registry::network_receive(const std::string& slot,
                                                      bool block) {
    impl_->m.checkpoint();
    auto& net = std::get<NetSlot>(impl_->find(slot, Category::Network));
#ifdef PMCU_ENABLE_HOSTTAP
    if (net.tap) {
        while (auto f = net.tap->poll()) net.inbound.push_back(std::move(*f));
    }
#endif
    if (!net.inbound.empty()) {
        NetworkFrame f = std::move(net.inbound.front());
        net.inbound.pop_front();
        return f;
    }
    if (!block) return std::nullopt;

    TaskId me = impl_->m.current_task();
    net.waiters.push_back(me);
    impl_->m.block_current(BlockReason::NetworkReceive);
    auto it = impl_->grants.find(me);
    if (it == impl_->grants.end()) {
        throw Error("network wait resumed without a frame");
    }
    NetworkFrame f = std::move(it->second);
    impl_->grants.erase(it);
    return f;
}

size_t Registry::network_drain(const std::string& slot) {
    impl_->m.checkpoint();
    auto& net = std::get<NetSlot>(impl_->find(slot, Category::Network));
    if (!net.callback) throw Error("slot '" + slot + "' has no receive callback");
#ifdef PMCU_ENABLE_HOSTTAP
    if (net.tap) {
        while (auto f = net.tap->poll()) net.inbound.push_back(std::move(*f));
    }
#endif
    size_t delivered = 0;
    while (!net.inbound.empty()) {
        NetworkFrame f = std::move(net.inbound.front());
        net.inbound.pop_front();
        net.callback(f);
        delivered++;
    }
    return delivered;
}

size_t Registry::network_pending(const std::string& slot) const {
    auto& net = std::get<NetSlot>(impl_->find(slot, Category::Network));
    return net.inbound.size();
}

// ---- Storage ----

uint32_t Registry::storage_block_count(const std::string& slot) const {
    return std::get<StorageSlot>(impl_->find(slot, Category::Storage)).block_count;
}

uint32_t Registry::storage_block_size(const std::string& slot) const {
    return std::get<StorageSlot>(impl_->find(slot, Category::Storage))
        .medium.block_size;
}

std::vector<uint8_t> Registry::storage_read(const std::string& slot,
                                            uint32_t block_index,
                                            uint32_t count) {
    impl_->m.checkpoint();
    auto& st = std::get<StorageSlot>(impl_->find(slot, Category::Storage));
    if (uint64_t{block_index} + count > st.block_count) {
        throw BlockOutOfRange("read of blocks [" + std::to_string(block_index) +
                              ", +" + std::to_string(count) + ") on a " +
                              std::to_string(st.block_count) + " block medium");
    }
    std::vector<uint8_t> out(uint64_t{count} * st.medium.block_size);
    if (out.empty()) return out;
    st.file.clear();
    st.file.seekg(int64_t{block_index} * st.medium.block_size);
    st.file.read(reinterpret_cast<char*>(out.data()),
                 static_cast<std::streamsize>(out.size()));
    if (st.file.gcount() != static_cast<std::streamsize>(out.size())) {
        throw Error("storage read failed");
    }
    return out;
}

void Registry::storage_write(const std::string& slot, uint32_t block_index,
                             std::span<const uint8_t> data) {
    impl_->m.checkpoint();
    auto& st = std::get<StorageSlot>(impl_->find(slot, Category::Storage));
    if (data.empty() || data.size() % st.medium.block_size != 0) {
        throw ShortWrite("write of " + std::to_string(data.size()) +
                         " bytes is not a positive multiple of block_size " +
                         std::to_string(st.medium.block_size));
    }
    uint64_t blocks = data.size() / st.medium.block_size;
    if (uint64_t{block_index} + blocks > st.block_count) {
        throw BlockOutOfRange("write of blocks [" + std::to_string(block_index) +
                              ", +" + std::to_string(blocks) + ") on a " +
                              std::to_string(st.block_count) + " block medium");
    }
    st.file.clear();
    st.file.seekp(int64_t{block_index} * st.medium.block_size);
    st.file.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size()));
    st.file.flush();
    if (!st.file) throw Error("storage write failed");
}

// ---- rng ----

std::vector<uint8_t> Registry::rng_bytes(size_t count) {
    impl_->m.checkpoint();
    std::vector<uint8_t> out(count);
    uint64_t word = 0;
    for (size_t i = 0; i < count; ++i) {
        if (i % 8 == 0) word = impl_->m.rng()();
        out[i] = static_cast<uint8_t>(word >> (8 * (i % 8)));
    }
    return out;
}

// ---- Dummy ----

std::string DummyCall::to_line() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, " seq=%llu",
                  static_cast<unsigned long long>(seq));
    return "call=" + name + " slot=" + slot + buf;
}

void Registry::dummy_call(const std::string& slot, const std::string& name) {
    impl_->m.checkpoint();
    impl_->find(slot, Category::Dummy);
    DummyCall call;
    call.name = name;
    call.slot = slot;
    call.seq = impl_->audit.size();
    impl_->audit.push_back(std::move(call));
}

const std::vector<DummyCall>& Registry::dummy_audit() const {
    return impl_->audit;
}

}  // namespace pmcu::hal
