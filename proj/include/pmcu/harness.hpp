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
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pmcu/config.hpp"
#include "pmcu/report.hpp"
#include "pmcu/rtos.hpp"

namespace pmcu::harness {

// A runnable piece of demo firmware. `setup` spawns tasks and binds any
// peripherals beyond the default testcase input channel.
struct FirmwareSpec {
    std::string name;
    std::string blurb;
    MachineConfig config;
    ImageSections image;  // optional statics, loaded at machine construction
    // Io slot the testcase bytes are bound to (source) and whose writes are
    // captured as the run's output.
    std::string input_slot = "uart0";
    std::function<void(Machine&, rtos::Kernel&)> setup;
    // For the bug corpus: the class this firmware is built to trigger.
    std::optional<BugClass> expected_bug;
};

// All built-in firmware, bug corpus included. Stable order.
const std::vector<FirmwareSpec>& firmware_registry();
const FirmwareSpec* find_firmware(const std::string& name);

struct RunOverrides {
    std::optional<TickConfig> tick;
    std::optional<uint64_t> seed;
    std::optional<uint64_t> step_limit;
};

// Everything observable from one execution.
struct RunReport {
    enum class Outcome : uint8_t { Halted, Crashed, Timeout };
    Outcome outcome = Outcome::Halted;
    std::optional<CrashReport> crash;
    uint64_t scheduler_events = 0;
    uint64_t virtual_time = 0;
    uint64_t trace_hash = 0;

    // One line, stable across runs with equal behaviour:
    // "outcome=<o> events=<n> vt=<n> hash=<hex>[ class=<c> detail=<d>]"
    std::string to_line() const;
    bool operator==(const RunReport&) const = default;
};

const char* outcome_name(RunReport::Outcome o);

struct RunOutput {
    RunReport report;
    std::vector<uint8_t> output;  // bytes the firmware wrote to input_slot
    std::string trace_text;       // empty when tracing is disabled
};

// One testcase on a freshly constructed machine. Nothing survives from any
// previous execution (the fork-server idea, minus the fork).
RunOutput run_once(const FirmwareSpec& fw, std::span<const uint8_t> testcase,
                   const RunOverrides& overrides = {});

// ---- testcase sources -------------------------------------------------------

class TestcaseSource {
public:
    virtual ~TestcaseSource() = default;
    // nullopt once exhausted (generators never are).
    virtual std::optional<std::vector<uint8_t>> next() = 0;
};

std::unique_ptr<TestcaseSource> make_file_source(const std::filesystem::path& p);
// Files of a directory in lexicographic name order.
std::unique_ptr<TestcaseSource> make_dir_source(const std::filesystem::path& dir);
// Seeded random bytes, uniform length in [min_len, max_len].
std::unique_ptr<TestcaseSource> make_generator_source(uint64_t seed,
                                                      size_t min_len = 0,
                                                      size_t max_len = 64);

// ---- persistent-mode driver ---------------------------------------------------

struct CrashRecord {
    uint64_t testcase_index = 0;
    CrashReport report;
    std::string dedup_key;  // class + faulting detail + trace-suffix hash
};

struct FuzzStats {
    uint64_t execs = 0;
    std::vector<CrashRecord> crashes;
    uint64_t unique_crashes = 0;   // distinct dedup keys
    uint64_t distinct_traces = 0;  // distinct trace hashes
    double execs_per_sec = 0.0;

    // "execs=<n> crashes=<n> unique=<n> eps=<f> traces=<n>" followed by one
    // "crash id=<i> class=<c>" line per crash.
    std::string to_report() const;
};

// Runs up to `iterations` testcases from `source` through fresh machines.
// Throws SourceExhausted if the source dries up before the first testcase;
// simply stops early if it dries up later.
FuzzStats run_persistent(const FirmwareSpec& fw, TestcaseSource& source,
                         uint64_t iterations,
                         const RunOverrides& overrides = {});

std::string crash_dedup_key(const CrashReport& report);

// ---- bug corpus ---------------------------------------------------------------

struct MatrixRow {
    std::string demo;
    BugClass expected;
    bool detected = false;
    std::optional<BugClass> observed;
};

// Runs every corpus demo and reports whether its bug class was observed.
std::vector<MatrixRow> corpus_matrix();

}  // namespace pmcu::harness
