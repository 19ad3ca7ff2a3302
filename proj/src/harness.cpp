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

#include "pmcu/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "pmcu/errors.hpp"
#include "pmcu/hal.hpp"

namespace pmcu::harness {

const char* outcome_name(RunReport::Outcome o) {
    switch (o) {
        case RunReport::Outcome::Halted: return "halted";
        case RunReport::Outcome::Crashed: return "crashed";
        case RunReport::Outcome::Timeout: return "timeout";
    }
    return "?";
}

std::string RunReport::to_line() const {
    char buf[160];
    std::snprintf(buf, sizeof buf, "outcome=%s events=%llu vt=%llu hash=%016llx",
                  outcome_name(outcome),
                  static_cast<unsigned long long>(scheduler_events),
                  static_cast<unsigned long long>(virtual_time),
                  static_cast<unsigned long long>(trace_hash));
    std::string line = buf;
    if (crash) {
        line += " class=";
        line += bug_class_name(crash->cls);
        line += " detail=";
        line += crash->detail;
    }
    return line;
}

RunOutput run_once(const FirmwareSpec& fw, std::span<const uint8_t> testcase,
                   const RunOverrides& overrides) {
    MachineConfig cfg = fw.config;
    if (overrides.tick) cfg.tick = *overrides.tick;
    if (overrides.seed) cfg.rng_seed = *overrides.seed;
    if (overrides.step_limit) cfg.step_limit = *overrides.step_limit;

    RunOutput out;
    Machine m(cfg, fw.image);
    m.peripherals().bind_io(
        fw.input_slot,
        hal::make_buffer_source(
            std::vector<uint8_t>(testcase.begin(), testcase.end())),
        hal::make_capture_sink(out.output));

    rtos::Kernel kernel(m);
    if (fw.setup) fw.setup(m, kernel);
    RunResult result = kernel.start();

    switch (result.kind) {
        case RunResult::Kind::Halted:
            out.report.outcome = RunReport::Outcome::Halted;
            break;
        case RunResult::Kind::Crashed:
            out.report.outcome = RunReport::Outcome::Crashed;
            break;
        case RunResult::Kind::Timeout:
            out.report.outcome = RunReport::Outcome::Timeout;
            break;
    }
    out.report.crash = result.crash;
    out.report.scheduler_events = m.scheduler_events();
    out.report.virtual_time = m.virtual_time();
    if (cfg.trace_enabled) {
        out.report.trace_hash = m.trace_hash();
        out.trace_text = m.trace_text();
    }
    return out;
}

// ---- testcase sources -----------------------------------------------------

namespace {

std::vector<uint8_t> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot open testcase file: " + p.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return bytes;
}

class FileSource final : public TestcaseSource {
public:
    explicit FileSource(std::filesystem::path p) : path_(std::move(p)) {}
    std::optional<std::vector<uint8_t>> next() override {
        if (done_) return std::nullopt;
        done_ = true;
        return slurp(path_);
    }

private:
    std::filesystem::path path_;
    bool done_ = false;
};

class DirSource final : public TestcaseSource {
public:
    explicit DirSource(const std::filesystem::path& dir) {
        if (!std::filesystem::is_directory(dir)) {
            throw Error("not a directory: " + dir.string());
        }
        for (const auto& e : std::filesystem::directory_iterator(dir)) {
            if (e.is_regular_file()) files_.push_back(e.path());
        }
        std::sort(files_.begin(), files_.end(),
                  [](const auto& a, const auto& b) {
                      return a.filename().string() < b.filename().string();
                  });
    }
    std::optional<std::vector<uint8_t>> next() override {
        if (index_ >= files_.size()) return std::nullopt;
        return slurp(files_[index_++]);
    }

private:
    std::vector<std::filesystem::path> files_;
    size_t index_ = 0;
};

class GeneratorSource final : public TestcaseSource {
public:
    GeneratorSource(uint64_t seed, size_t min_len, size_t max_len)
        : rng_(seed), len_(min_len, max_len) {
        if (min_len > max_len) throw Error("generator min_len > max_len");
    }
    std::optional<std::vector<uint8_t>> next() override {
        std::vector<uint8_t> bytes(len_(rng_));
        for (auto& b : bytes) b = static_cast<uint8_t>(byte_(rng_));
        return bytes;
    }

private:
    std::mt19937_64 rng_;
    std::uniform_int_distribution<size_t> len_;
    std::uniform_int_distribution<unsigned> byte_{0, 255};
};

}  // namespace

std::unique_ptr<TestcaseSource> make_file_source(const std::filesystem::path& p) {
    return std::make_unique<FileSource>(p);
}

std::unique_ptr<TestcaseSource> make_dir_source(const std::filesystem::path& dir) {
    return std::make_unique<DirSource>(dir);
}

std::unique_ptr<TestcaseSource> make_generator_source(uint64_t seed,
                                                      size_t min_len,
                                                      size_t max_len) {
    return std::make_unique<GeneratorSource>(seed, min_len, max_len);
}

// ---- persistent-mode driver -------------------------------------------------

std::string crash_dedup_key(const CrashReport& report) {
    // Time-free fingerprint: bug class, first word of the detail message and
    // the shape of the trace suffix (kinds and task ids, not seq/t), so the
    // same defect found at different points in a run folds together.
    std::string shape;
    for (const TraceEvent& ev : report.trace_suffix) {
        shape += event_kind_name(ev.kind);
        shape += ',';
        shape += std::to_string(ev.from);
        shape += ',';
        shape += std::to_string(ev.to);
        shape += ';';
    }
    std::string first_word = report.detail.substr(0, report.detail.find(' '));
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s|%s|%016llx", bug_class_name(report.cls),
                  first_word.c_str(),
                  static_cast<unsigned long long>(
                      fnv1a64(shape.data(), shape.size())));
    return buf;
}

std::string FuzzStats::to_report() const {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "execs=%llu crashes=%llu unique=%llu eps=%.2f traces=%llu",
                  static_cast<unsigned long long>(execs),
                  static_cast<unsigned long long>(crashes.size()),
                  static_cast<unsigned long long>(unique_crashes),
                  execs_per_sec,
                  static_cast<unsigned long long>(distinct_traces));
    os << buf;
    for (const CrashRecord& c : crashes) {
        os << "\ncrash id=" << c.testcase_index
           << " class=" << bug_class_name(c.report.cls);
    }
    return os.str();
}

FuzzStats run_persistent(const FirmwareSpec& fw, TestcaseSource& source,
                         uint64_t iterations, const RunOverrides& overrides) {
    FuzzStats stats;
    std::set<std::string> keys;
    std::set<uint64_t> hashes;
    auto t0 = std::chrono::steady_clock::now();

    for (uint64_t i = 0; i < iterations; i++) {
        auto testcase = source.next();
        if (!testcase) {
            if (i == 0) throw SourceExhausted("testcase source is empty");
            break;
        }
        RunOutput out = run_once(fw, *testcase, overrides);
        stats.execs++;
        hashes.insert(out.report.trace_hash);
        if (out.report.outcome == RunReport::Outcome::Crashed &&
            out.report.crash) {
            CrashRecord rec;
            rec.testcase_index = i;
            rec.report = *out.report.crash;
            rec.dedup_key = crash_dedup_key(rec.report);
            keys.insert(rec.dedup_key);
            stats.crashes.push_back(std::move(rec));
        }
    }

    auto t1 = std::chrono::steady_clock::now();
    double secs = std::chrono::duration<double>(t1 - t0).count();
    stats.unique_crashes = keys.size();
    stats.distinct_traces = hashes.size();
    stats.execs_per_sec = secs > 0.0 ? static_cast<double>(stats.execs) / secs
                                     : 0.0;
    return stats;
}

// ---- bug corpus -------------------------------------------------------------

std::vector<MatrixRow> corpus_matrix() {
    static const std::pair<const char*, BugClass> kCorpus[] = {
        {"div-by-zero", BugClass::DivByZero},
        {"int-overflow", BugClass::IntegerOverflow},
        {"stack-overflow", BugClass::StackOverflow},
        {"heap-overflow", BugClass::HeapOverflow},
        {"null-deref", BugClass::NullDeref},
        {"double-free", BugClass::DoubleFree},
        {"use-after-free", BugClass::UseAfterFree},
    };
    std::vector<MatrixRow> rows;
    for (const auto& [name, expected] : kCorpus) {
        MatrixRow row;
        row.demo = name;
        row.expected = expected;
        const FirmwareSpec* fw = find_firmware(name);
        if (fw) {
            RunOutput out = run_once(*fw, {});
            if (out.report.crash) row.observed = out.report.crash->cls;
            row.detected = row.observed && *row.observed == expected;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace pmcu::harness
