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

// pmcu-sim: command-line front end for the simulator.
//
//   run <firmware>         one execution, report on stdout
//   fuzz <firmware>        many executions from a testcase source
//   demo list|run|matrix   the built-in firmware corpus
//   trace-diff <a> <b>     first divergence between two trace files
//
// Exit codes: 0 success (for `run`: firmware halted), 2 firmware crashed,
// 3 step-limit timeout, 1 corpus demo mismatch / trace difference,
// 64 usage or I/O errors.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pmcu/errors.hpp"
#include "pmcu/harness.hpp"
#include "pmcu/trace.hpp"

namespace {

using pmcu::harness::FirmwareSpec;
using pmcu::harness::RunOverrides;
using pmcu::harness::RunReport;

std::vector<uint8_t> read_stream(std::istream& in) {
    return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
}

std::vector<uint8_t> read_input_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw pmcu::Error("cannot open input file: " + path);
    return read_stream(in);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw pmcu::Error("cannot open trace file: " + path);
    auto bytes = read_stream(in);
    return std::string(bytes.begin(), bytes.end());
}

void write_file(const std::string& path, const void* data, size_t len) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw pmcu::Error("cannot open output file: " + path);
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
    if (!out) throw pmcu::Error("short write to " + path);
}

const FirmwareSpec& firmware_or_throw(const std::string& name) {
    const FirmwareSpec* fw = pmcu::harness::find_firmware(name);
    if (!fw) {
        throw pmcu::UnknownFirmware("unknown firmware: " + name +
                                    " (see `pmcu-sim demo list`)");
    }
    return *fw;
}

struct TickFlags {
    std::string mode;  // "", "det", "virtual", "off"
    uint64_t period = 0;
    bool period_set = false;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--tick-mode", mode,
                        "tick source: det, virtual or off")
            ->check(CLI::IsMember({"det", "virtual", "off"}));
        cmd->add_option("--tick-period", period,
                        "tick period (progress units for det, microseconds "
                        "for virtual)")
            ->each([this](const std::string&) { period_set = true; });
    }

    // Layers the flags over the firmware's own tick configuration.
    void apply(const FirmwareSpec& fw, RunOverrides& ov) const {
        if (mode.empty() && !period_set) return;
        pmcu::TickConfig tick = fw.config.tick;
        if (mode == "det") tick.mode = pmcu::TickConfig::Mode::Deterministic;
        if (mode == "virtual") tick.mode = pmcu::TickConfig::Mode::VirtualTime;
        if (mode == "off") tick.enabled = false;
        if (period_set) {
            if (tick.mode == pmcu::TickConfig::Mode::Deterministic) {
                tick.period_units = period;
            } else {
                tick.period_cpu = std::chrono::microseconds(period);
            }
        }
        ov.tick = tick;
    }
};

int exit_code_for(RunReport::Outcome o) {
    switch (o) {
        case RunReport::Outcome::Halted: return 0;
        case RunReport::Outcome::Crashed: return 2;
        case RunReport::Outcome::Timeout: return 3;
    }
    return 64;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pmcu-sim: native simulator for portable MCU firmware"};
    app.require_subcommand(1);

    // --- run -----------------------------------------------------------------
    auto* run = app.add_subcommand("run", "run one firmware to completion");
    std::string run_fw;
    std::string run_input;
    std::string run_trace_out;
    std::string run_output_file;
    uint64_t run_seed = 0;
    bool run_seed_set = false;
    uint64_t run_steps = 0;
    bool run_steps_set = false;
    bool run_print_output = false;
    TickFlags run_tick;
    run->add_option("firmware", run_fw, "firmware name")->required();
    run->add_option("--input", run_input,
                    "testcase file (default: read stdin)");
    run->add_option("--trace-out", run_trace_out, "write the trace text here");
    run->add_option("--output", run_output_file,
                    "write bytes the firmware emitted here");
    run->add_flag("--print-output", run_print_output,
                  "dump emitted bytes to stdout after the report");
    run->add_option("--seed", run_seed, "machine RNG seed")
        ->each([&](const std::string&) { run_seed_set = true; });
    run->add_option("--step-limit", run_steps, "scheduler event budget")
        ->each([&](const std::string&) { run_steps_set = true; });
    run_tick.add_to(run);

    // --- fuzz ----------------------------------------------------------------
    auto* fuzz = app.add_subcommand("fuzz", "run many testcases through fresh machines");
    std::string fuzz_fw;
    std::string fuzz_source = "gen";
    uint64_t fuzz_iters = 1000;
    uint64_t fuzz_seed = 1;
    uint64_t fuzz_steps = 0;
    bool fuzz_steps_set = false;
    fuzz->add_option("firmware", fuzz_fw, "firmware name")->required();
    fuzz->add_option("--source", fuzz_source,
                     "'gen' for random bytes, or a testcase file/directory");
    fuzz->add_option("--iters", fuzz_iters, "testcase budget");
    fuzz->add_option("--seed", fuzz_seed, "generator and machine RNG seed");
    fuzz->add_option("--step-limit", fuzz_steps, "scheduler event budget")
        ->each([&](const std::string&) { fuzz_steps_set = true; });

    // --- demo ------------------------------------------------------------------
    auto* demo = app.add_subcommand("demo", "built-in firmware corpus");
    demo->require_subcommand(1);
    auto* demo_list = demo->add_subcommand("list", "name and blurb of every demo");
    auto* demo_run = demo->add_subcommand("run", "run one demo with empty input");
    std::string demo_name;
    demo_run->add_option("name", demo_name, "demo name")->required();
    auto* demo_matrix = demo->add_subcommand(
        "matrix", "run the bug corpus and check each expected class");

    // --- trace-diff ---------------------------------------------------------------
    auto* tdiff = app.add_subcommand("trace-diff",
                                     "compare two trace files line by line");
    std::string diff_a;
    std::string diff_b;
    tdiff->add_option("a", diff_a, "first trace file")->required();
    tdiff->add_option("b", diff_b, "second trace file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 64;
    }

    try {
        if (app.got_subcommand(run)) {
            const FirmwareSpec& fw = firmware_or_throw(run_fw);
            RunOverrides ov;
            if (run_seed_set) ov.seed = run_seed;
            if (run_steps_set) ov.step_limit = run_steps;
            run_tick.apply(fw, ov);
            std::vector<uint8_t> input = run_input.empty()
                                             ? read_stream(std::cin)
                                             : read_input_file(run_input);
            auto out = pmcu::harness::run_once(fw, input, ov);
            std::cout << out.report.to_line() << "\n";
            if (!run_trace_out.empty()) {
                write_file(run_trace_out, out.trace_text.data(),
                           out.trace_text.size());
            }
            if (!run_output_file.empty()) {
                write_file(run_output_file, out.output.data(),
                           out.output.size());
            }
            if (run_print_output) {
                std::cout.write(
                    reinterpret_cast<const char*>(out.output.data()),
                    static_cast<std::streamsize>(out.output.size()));
            }
            return exit_code_for(out.report.outcome);
        }

        if (app.got_subcommand(fuzz)) {
            const FirmwareSpec& fw = firmware_or_throw(fuzz_fw);
            RunOverrides ov;
            ov.seed = fuzz_seed;
            if (fuzz_steps_set) ov.step_limit = fuzz_steps;
            std::unique_ptr<pmcu::harness::TestcaseSource> source;
            if (fuzz_source == "gen") {
                source = pmcu::harness::make_generator_source(fuzz_seed);
            } else if (std::filesystem::is_directory(fuzz_source)) {
                source = pmcu::harness::make_dir_source(fuzz_source);
            } else if (std::filesystem::is_regular_file(fuzz_source)) {
                source = pmcu::harness::make_file_source(fuzz_source);
            } else {
                throw pmcu::Error("no such testcase source: " + fuzz_source);
            }
            auto stats =
                pmcu::harness::run_persistent(fw, *source, fuzz_iters, ov);
            std::cout << stats.to_report() << "\n";
            return 0;
        }

        if (app.got_subcommand(demo)) {
            if (demo->got_subcommand(demo_list)) {
                for (const FirmwareSpec& fw : pmcu::harness::firmware_registry()) {
                    std::printf("%-16s %s\n", fw.name.c_str(),
                                fw.blurb.c_str());
                }
                return 0;
            }
            if (demo->got_subcommand(demo_run)) {
                const FirmwareSpec& fw = firmware_or_throw(demo_name);
                auto out = pmcu::harness::run_once(fw, {});
                std::cout << out.report.to_line() << "\n";
                return exit_code_for(out.report.outcome);
            }
            if (demo->got_subcommand(demo_matrix)) {
                bool all = true;
                for (const auto& row : pmcu::harness::corpus_matrix()) {
                    std::printf(
                        "demo=%-16s expected=%-15s observed=%-15s %s\n",
                        row.demo.c_str(), pmcu::bug_class_name(row.expected),
                        row.observed ? pmcu::bug_class_name(*row.observed)
                                     : "-",
                        row.detected ? "ok" : "MISS");
                    all = all && row.detected;
                }
                return all ? 0 : 1;
            }
        }

        if (app.got_subcommand(tdiff)) {
            std::string a = read_text_file(diff_a);
            std::string b = read_text_file(diff_b);
            auto diff = pmcu::diff_trace_text(a, b);
            if (!diff) {
                std::cout << "identical\n";
                return 0;
            }
            std::cout << "first difference at line " << diff->line + 1 << ":\n"
                      << "  a: " << (diff->left.empty() ? "<end>" : diff->left)
                      << "\n"
                      << "  b: "
                      << (diff->right.empty() ? "<end>" : diff->right) << "\n";
            return 1;
        }
    } catch (const pmcu::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 64;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 64;
    }
    return 64;
}
