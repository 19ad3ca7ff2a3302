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

// Fuzz-harness layer: single runs, testcase sources, the persistent driver,
// crash dedup and the demo corpus. Everything here goes through the public
// harness API only; no Machine is constructed by hand.

#include <doctest.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "pmcu/errors.hpp"
#include "pmcu/harness.hpp"
#include "pmcu/trace.hpp"

using namespace pmcu;
using namespace pmcu::harness;

namespace {

std::vector<uint8_t> bytes_of(const std::string& s) {
    return std::vector<uint8_t>(s.begin(), s.end());
}

// Scratch directory for source-backed tests, removed on scope exit.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("pmcu-harness-" + std::to_string(getpid()) + "-" +
                std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }

    std::filesystem::path file(const std::string& name,
                               const std::vector<uint8_t>& data) const {
        std::filesystem::path p = path / name;
        std::ofstream out(p, std::ios::binary);
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size()));
        return p;
    }

    static inline int counter = 0;
};

// Independent reconstruction of the dedup fingerprint: class name, first
// word of the detail, and a hash over the suffix shape with seq/t omitted.
std::string ref_dedup_key(const CrashReport& r) {
    std::string shape;
    for (const TraceEvent& ev : r.trace_suffix) {
        shape += event_kind_name(ev.kind);
        shape += ',';
        shape += std::to_string(ev.from);
        shape += ',';
        shape += std::to_string(ev.to);
        shape += ';';
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s|%s|%016llx", bug_class_name(r.cls),
                  r.detail.substr(0, r.detail.find(' ')).c_str(),
                  static_cast<unsigned long long>(
                      fnv1a64(shape.data(), shape.size())));
    return buf;
}

}  // namespace

TEST_CASE("run_once on the echo demo returns the input unchanged") {
    const FirmwareSpec* fw = find_firmware("echo");
    REQUIRE(fw != nullptr);
    CHECK(fw->input_slot == "uart0");

    std::vector<uint8_t> input = bytes_of("harness says hello");
    RunOutput out = run_once(*fw, input);

    CHECK(out.report.outcome == RunReport::Outcome::Halted);
    CHECK_FALSE(out.report.crash.has_value());
    CHECK(out.output == input);
    CHECK(out.report.scheduler_events > 0);
    CHECK(out.report.virtual_time > 0);

    // Demos run with tracing on, and the report hash must be the hash of
    // the text we got back.
    REQUIRE_FALSE(out.trace_text.empty());
    CHECK(out.report.trace_hash ==
          fnv1a64(out.trace_text.data(), out.trace_text.size()));

    // Every line of the serialized trace must parse back.
    size_t lines = 0;
    size_t start = 0;
    while (start < out.trace_text.size()) {
        size_t end = out.trace_text.find('\n', start);
        REQUIRE(end != std::string::npos);
        std::string line = out.trace_text.substr(start, end - start);
        auto ev = parse_trace_line(line);
        if (!ev) FAIL(("unparseable trace line: " + line).c_str());
        lines++;
        start = end + 1;
    }
    CHECK(lines > 0);
}

TEST_CASE("echo round-trips an input larger than its read chunk") {
    const FirmwareSpec* fw = find_firmware("echo");
    REQUIRE(fw != nullptr);

    // 200 bytes forces several 64-byte reads plus a short tail.
    std::vector<uint8_t> input(200);
    for (size_t i = 0; i < input.size(); i++) {
        input[i] = static_cast<uint8_t>(i * 37 + 11);
    }
    RunOutput out = run_once(*fw, input);
    CHECK(out.report.outcome == RunReport::Outcome::Halted);
    CHECK(out.output == input);
}

TEST_CASE("every registered demo replays to an identical report") {
    std::vector<uint8_t> input = bytes_of("abc");
    for (const FirmwareSpec& fw : firmware_registry()) {
        CAPTURE(fw.name);
        RunOutput a = run_once(fw, input);
        RunOutput b = run_once(fw, input);
        CHECK(a.report == b.report);
        CHECK(a.trace_text == b.trace_text);
        CHECK(a.output == b.output);
    }
}

TEST_CASE("demos flagged with an expected bug crash with that class") {
    for (const FirmwareSpec& fw : firmware_registry()) {
        if (!fw.expected_bug) continue;
        CAPTURE(fw.name);
        RunOutput out = run_once(fw, {});
        CHECK(out.report.outcome == RunReport::Outcome::Crashed);
        REQUIRE(out.report.crash.has_value());
        CHECK(out.report.crash->cls == *fw.expected_bug);
    }
}

TEST_CASE("firmware registry is stable and fully named") {
    const auto& reg = firmware_registry();
    REQUIRE(reg.size() == 12);

    const char* expected[] = {
        "echo",          "empty",      "two-task",      "pipeline",
        "div-by-zero",   "int-overflow", "stack-overflow", "heap-overflow",
        "null-deref",    "double-free", "use-after-free", "wild-access",
    };
    for (size_t i = 0; i < reg.size(); i++) {
        CAPTURE(i);
        CHECK(reg[i].name == expected[i]);
        CHECK_FALSE(reg[i].blurb.empty());
        CHECK(reg[i].setup != nullptr);
    }

    std::set<std::string> names;
    for (const FirmwareSpec& fw : reg) names.insert(fw.name);
    CHECK(names.size() == reg.size());

    CHECK(find_firmware("echo") == &reg[0]);
    CHECK(find_firmware("no-such-demo") == nullptr);
}

TEST_CASE("overrides reach the machine configuration") {
    const FirmwareSpec* fw = find_firmware("two-task");
    REQUIRE(fw != nullptr);

    RunOutput base = run_once(*fw, {});
    REQUIRE(base.report.outcome == RunReport::Outcome::Halted);

    SUBCASE("step_limit turns a halting run into a timeout") {
        RunOverrides o;
        o.step_limit = 5;
        RunOutput out = run_once(*fw, {}, o);
        CHECK(out.report.outcome == RunReport::Outcome::Timeout);
        CHECK(out.report.scheduler_events <= 5);
    }

    SUBCASE("a different tick period changes the schedule") {
        RunOverrides o;
        TickConfig tick = fw->config.tick;
        tick.period_units = fw->config.tick.period_units * 3;
        o.tick = tick;
        RunOutput out = run_once(*fw, {}, o);
        CHECK(out.report.outcome == RunReport::Outcome::Halted);
        CHECK(out.report.trace_hash != base.report.trace_hash);

        // Same override twice is still deterministic.
        RunOutput again = run_once(*fw, {}, o);
        CHECK(again.report == out.report);
    }

    SUBCASE("a seed override leaves rng-free firmware untouched") {
        RunOverrides o;
        o.seed = 0xfeedface;
        RunOutput out = run_once(*fw, {}, o);
        CHECK(out.report == base.report);
    }
}

TEST_CASE("report lines follow the documented shape") {
    SUBCASE("halted, no crash") {
        RunReport r;
        r.outcome = RunReport::Outcome::Halted;
        r.scheduler_events = 7;
        r.virtual_time = 9;
        r.trace_hash = 255;
        CHECK(r.to_line() == "outcome=halted events=7 vt=9 hash=00000000000000ff");
    }

    SUBCASE("crashed appends class and detail") {
        RunReport r;
        r.outcome = RunReport::Outcome::Crashed;
        r.scheduler_events = 12;
        r.virtual_time = 34;
        r.trace_hash = 0xdeadbeef01234567ull;
        CrashReport c;
        c.cls = BugClass::NullDeref;
        c.task = 2;
        c.detail = "read 4 @ 0x00000000";
        r.crash = c;
        CHECK(r.to_line() ==
              "outcome=crashed events=12 vt=34 hash=deadbeef01234567"
              " class=NullDeref detail=read 4 @ 0x00000000");
    }

    SUBCASE("outcome names") {
        CHECK(std::string(outcome_name(RunReport::Outcome::Halted)) == "halted");
        CHECK(std::string(outcome_name(RunReport::Outcome::Crashed)) == "crashed");
        CHECK(std::string(outcome_name(RunReport::Outcome::Timeout)) == "timeout");
    }

    SUBCASE("a real run's line starts with its outcome") {
        const FirmwareSpec* fw = find_firmware("empty");
        REQUIRE(fw != nullptr);
        RunOutput out = run_once(*fw, {});
        std::string line = out.report.to_line();
        CHECK(line.rfind("outcome=halted events=", 0) == 0);
        CHECK(line.find(" class=") == std::string::npos);
    }
}

TEST_CASE("file source yields the file once") {
    TempDir tmp;
    std::vector<uint8_t> payload = {0, 1, 2, 3, 250, 251, 252, 253, 254, 255};
    auto p = tmp.file("case.bin", payload);

    auto src = make_file_source(p);
    auto first = src->next();
    REQUIRE(first.has_value());
    CHECK(*first == payload);
    CHECK_FALSE(src->next().has_value());
    CHECK_FALSE(src->next().has_value());
}

TEST_CASE("file source reports an unreadable path") {
    auto src = make_file_source("/nonexistent/pmcu/case.bin");
    CHECK_THROWS_WITH_AS(src->next(),
                         doctest::Contains("cannot open testcase file"),
                         Error);
}

TEST_CASE("dir source walks regular files in name order") {
    TempDir tmp;
    tmp.file("b.bin", bytes_of("B"));
    tmp.file("a.bin", bytes_of("A"));
    tmp.file("c.bin", bytes_of("C"));
    std::filesystem::create_directory(tmp.path / "subdir");

    auto src = make_dir_source(tmp.path);
    std::string order;
    while (auto tc = src->next()) {
        REQUIRE(tc->size() == 1);
        order += static_cast<char>((*tc)[0]);
    }
    CHECK(order == "ABC");
    CHECK_FALSE(src->next().has_value());
}

TEST_CASE("dir source rejects paths that are not directories") {
    TempDir tmp;
    auto p = tmp.file("plain.bin", bytes_of("x"));
    CHECK_THROWS_WITH_AS(make_dir_source(p),
                         doctest::Contains("not a directory"), Error);
    CHECK_THROWS_AS(make_dir_source(tmp.path / "missing"), Error);
}

TEST_CASE("generator source is seed-deterministic and bounded") {
    auto a = make_generator_source(99, 4, 9);
    auto b = make_generator_source(99, 4, 9);
    for (int i = 0; i < 20; i++) {
        auto ta = a->next();
        auto tb = b->next();
        REQUIRE(ta.has_value());
        REQUIRE(tb.has_value());
        CHECK(*ta == *tb);
        CHECK(ta->size() >= 4);
        CHECK(ta->size() <= 9);
    }

    // A different seed should diverge somewhere in the first few draws.
    auto c = make_generator_source(100, 4, 9);
    bool diverged = false;
    auto d = make_generator_source(99, 4, 9);
    for (int i = 0; i < 20 && !diverged; i++) {
        diverged = *c->next() != *d->next();
    }
    CHECK(diverged);

    CHECK_THROWS_AS(make_generator_source(1, 10, 5), Error);
}

TEST_CASE("persistent mode stops when a directory source runs dry") {
    TempDir tmp;
    tmp.file("a", bytes_of("one"));
    tmp.file("b", bytes_of("two"));
    tmp.file("c", bytes_of("three"));

    const FirmwareSpec* fw = find_firmware("echo");
    REQUIRE(fw != nullptr);
    auto src = make_dir_source(tmp.path);
    FuzzStats stats = run_persistent(*fw, *src, 10);

    CHECK(stats.execs == 3);
    CHECK(stats.crashes.empty());
    CHECK(stats.unique_crashes == 0);
    CHECK(stats.distinct_traces >= 1);
    CHECK(stats.distinct_traces <= 3);
    CHECK(stats.execs_per_sec > 0.0);
}

TEST_CASE("persistent mode on an empty source throws before any exec") {
    TempDir tmp;
    const FirmwareSpec* fw = find_firmware("echo");
    REQUIRE(fw != nullptr);
    auto src = make_dir_source(tmp.path);
    CHECK_THROWS_WITH_AS(run_persistent(*fw, *src, 5),
                         "testcase source is empty", SourceExhausted);
}

TEST_CASE("repeated crashes fold into one dedup bucket") {
    TempDir tmp;
    tmp.file("a", {});
    tmp.file("b", {});

    const FirmwareSpec* fw = find_firmware("div-by-zero");
    REQUIRE(fw != nullptr);
    auto src = make_dir_source(tmp.path);
    FuzzStats stats = run_persistent(*fw, *src, 10);

    CHECK(stats.execs == 2);
    REQUIRE(stats.crashes.size() == 2);
    CHECK(stats.unique_crashes == 1);
    CHECK(stats.distinct_traces == 1);

    CHECK(stats.crashes[0].testcase_index == 0);
    CHECK(stats.crashes[1].testcase_index == 1);
    CHECK(stats.crashes[0].dedup_key == stats.crashes[1].dedup_key);
    CHECK(stats.crashes[0].dedup_key == ref_dedup_key(stats.crashes[0].report));
    CHECK(stats.crashes[0].report.cls == BugClass::DivByZero);

    std::string report = stats.to_report();
    CHECK(report.rfind("execs=2 crashes=2 unique=1 eps=", 0) == 0);
    CHECK(report.find(" traces=1\n") != std::string::npos);
    CHECK(report.find("\ncrash id=0 class=DivByZero") != std::string::npos);
    CHECK(report.find("\ncrash id=1 class=DivByZero") != std::string::npos);
}

TEST_CASE("persistent mode with a generator runs all iterations") {
    const FirmwareSpec* fw = find_firmware("echo");
    REQUIRE(fw != nullptr);
    auto src = make_generator_source(7, 0, 64);
    FuzzStats stats = run_persistent(*fw, *src, 50);

    CHECK(stats.execs == 50);
    CHECK(stats.crashes.empty());
    // Inputs that fit one read chunk all trace identically; only the empty
    // input takes a different path. Never more than two shapes here.
    CHECK(stats.distinct_traces >= 1);
    CHECK(stats.distinct_traces <= 2);
}

TEST_CASE("fuzz stats render in the documented shape") {
    FuzzStats stats;
    stats.execs = 3;
    stats.unique_crashes = 1;
    stats.distinct_traces = 2;
    stats.execs_per_sec = 12.5;
    CrashRecord rec;
    rec.testcase_index = 2;
    rec.report.cls = BugClass::HeapOverflow;
    rec.report.detail = "write 1 @ 0x20020010";
    rec.dedup_key = "ignored";
    stats.crashes.push_back(rec);

    CHECK(stats.to_report() ==
          "execs=3 crashes=1 unique=1 eps=12.50 traces=2\n"
          "crash id=2 class=HeapOverflow");
}

TEST_CASE("dedup keys fingerprint shape, not timing") {
    CrashReport r;
    r.cls = BugClass::NullDeref;
    r.task = 1;
    r.detail = "read 4 @ 0x00000000";
    r.virtual_time = 10;
    r.trace_suffix = {
        {5, 9, EventKind::TaskStart, kNoTask, 0},
        {6, 10, EventKind::Crash, kNoTask, kNoTask},
    };
    std::string key = crash_dedup_key(r);
    CHECK(key.rfind("NullDeref|read|", 0) == 0);
    CHECK(key == ref_dedup_key(r));

    // seq and t shifts must not change the key.
    CrashReport later = r;
    later.virtual_time = 9999;
    for (auto& ev : later.trace_suffix) {
        ev.seq += 100;
        ev.virtual_time += 5000;
    }
    CHECK(crash_dedup_key(later) == key);

    // A different participating task must.
    CrashReport other_task = r;
    other_task.trace_suffix[0].to = 3;
    CHECK(crash_dedup_key(other_task) != key);

    // A different leading detail word must.
    CrashReport other_word = r;
    other_word.detail = "write 4 @ 0x00000000";
    CHECK(crash_dedup_key(other_word) != key);

    // A different class must.
    CrashReport other_cls = r;
    other_cls.cls = BugClass::WildAccess;
    CHECK(crash_dedup_key(other_cls) != key);
}

TEST_CASE("distinct demo crashes get distinct dedup keys") {
    const FirmwareSpec* null_fw = find_firmware("null-deref");
    const FirmwareSpec* div_fw = find_firmware("div-by-zero");
    REQUIRE(null_fw != nullptr);
    REQUIRE(div_fw != nullptr);

    RunOutput a = run_once(*null_fw, {});
    RunOutput b = run_once(*div_fw, {});
    REQUIRE(a.report.crash.has_value());
    REQUIRE(b.report.crash.has_value());
    CHECK(crash_dedup_key(*a.report.crash) != crash_dedup_key(*b.report.crash));
}

TEST_CASE("the bug corpus detects every class it claims") {
    auto rows = corpus_matrix();
    REQUIRE(rows.size() == 7);

    const char* expected_names[] = {
        "div-by-zero",  "int-overflow", "stack-overflow", "heap-overflow",
        "null-deref",   "double-free",  "use-after-free",
    };
    for (size_t i = 0; i < rows.size(); i++) {
        CAPTURE(rows[i].demo);
        CHECK(rows[i].demo == expected_names[i]);
        CHECK(rows[i].detected);
        REQUIRE(rows[i].observed.has_value());
        CHECK(*rows[i].observed == rows[i].expected);
    }
}

TEST_CASE("pipeline demo upcases its input") {
    const FirmwareSpec* fw = find_firmware("pipeline");
    REQUIRE(fw != nullptr);
    RunOutput out = run_once(*fw, bytes_of("hello pipeline"));
    CHECK(out.report.outcome == RunReport::Outcome::Halted);
    CHECK(std::string(out.output.begin(), out.output.end()) ==
          "HELLO PIPELINE");
}
