#include <doctest.h>

#include <string>
#include <vector>

#include "pmcu/trace.hpp"

using namespace pmcu;

namespace {

// Reference FNV-1a 64, written independently of src/trace.cpp.
uint64_t ref_fnv(const std::string& s) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

TEST_CASE("trace line format is stable") {
    CHECK(trace_line({0, 0, EventKind::TaskStart, kNoTask, 3}) ==
          "seq=0 t=0 kind=TaskStart to=3");
    CHECK(trace_line({7, 150, EventKind::TaskSwitch, 1, 0}) ==
          "seq=7 t=150 kind=TaskSwitch from=1 to=0");
    CHECK(trace_line({2, 25, EventKind::TickDelivered, kNoTask, kNoTask}) ==
          "seq=2 t=25 kind=TickDelivered");
    CHECK(trace_line({9, 40, EventKind::TickDeferred, kNoTask, kNoTask}) ==
          "seq=9 t=40 kind=TickDeferred");
    CHECK(trace_line({1, 5, EventKind::IrqDisable, kNoTask, kNoTask}) ==
          "seq=1 t=5 kind=IrqDisable");
    CHECK(trace_line({1, 5, EventKind::IrqEnable, kNoTask, kNoTask}) ==
          "seq=1 t=5 kind=IrqEnable");
    CHECK(trace_line({4, 60, EventKind::TaskBlock, 2, kNoTask}) ==
          "seq=4 t=60 kind=TaskBlock from=2");
    CHECK(trace_line({5, 61, EventKind::TaskWake, kNoTask, 2}) ==
          "seq=5 t=61 kind=TaskWake to=2");
    CHECK(trace_line({6, 70, EventKind::TaskExit, 2, kNoTask}) ==
          "seq=6 t=70 kind=TaskExit from=2");
    CHECK(trace_line({8, 80, EventKind::Crash, kNoTask, kNoTask}) ==
          "seq=8 t=80 kind=Crash");
}

TEST_CASE("parse is the inverse of format for every kind") {
    const EventKind kinds[] = {
        EventKind::TaskStart,  EventKind::TaskSwitch,   EventKind::TickDelivered,
        EventKind::TickDeferred, EventKind::IrqDisable, EventKind::IrqEnable,
        EventKind::TaskBlock,  EventKind::TaskWake,     EventKind::TaskExit,
        EventKind::Crash,
    };
    uint64_t seq = 0;
    for (EventKind k : kinds) {
        for (TaskId from : {0u, 5u, 4000000000u}) {
            for (TaskId to : {1u, 7u}) {
                TraceEvent ev{seq, seq * 13 + 1, k, from, to};
                // Fields a kind does not carry are normalized to kNoTask in
                // the text form, so mirror that before comparing.
                TraceEvent expect = ev;
                std::string line = trace_line(ev);
                if (line.find("from=") == std::string::npos) expect.from = kNoTask;
                if (line.find("to=") == std::string::npos) expect.to = kNoTask;
                auto back = parse_trace_line(line);
                REQUIRE(back.has_value());
                CHECK(*back == expect);
                seq++;
            }
        }
    }
}

TEST_CASE("malformed lines are rejected") {
    CHECK_FALSE(parse_trace_line("").has_value());
    CHECK_FALSE(parse_trace_line("garbage").has_value());
    CHECK_FALSE(parse_trace_line("seq=1 t=2").has_value());
    CHECK_FALSE(parse_trace_line("seq=1 t=2 kind=NotAKind").has_value());
    CHECK_FALSE(parse_trace_line("t=2 kind=TaskStart to=0").has_value());
    CHECK_FALSE(parse_trace_line("seq=1 kind=TaskStart to=0").has_value());
    CHECK_FALSE(parse_trace_line("seq=x t=2 kind=TaskStart to=0").has_value());
    CHECK_FALSE(
        parse_trace_line("seq=1 t=2 kind=TaskStart to=0 bogus=9").has_value());
}

TEST_CASE("trace text is one line per event, each newline-terminated") {
    std::vector<TraceEvent> evs = {
        {0, 0, EventKind::TaskStart, kNoTask, 0},
        {1, 25, EventKind::TickDelivered, kNoTask, kNoTask},
        {2, 25, EventKind::TaskSwitch, 0, 1},
    };
    CHECK(trace_to_text(evs) ==
          "seq=0 t=0 kind=TaskStart to=0\n"
          "seq=1 t=25 kind=TickDelivered\n"
          "seq=2 t=25 kind=TaskSwitch from=0 to=1\n");
    CHECK(trace_to_text({}) == "");
}

TEST_CASE("fnv1a64 matches the published constants") {
    // Offset basis: hash of the empty string.
    CHECK(fnv1a64(nullptr, 0) == 0xcbf29ce484222325ull);
    // Classic single-byte test vector.
    CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cull);
}

TEST_CASE("trace hash is fnv1a64 over the serialized text") {
    std::vector<TraceEvent> evs;
    for (uint64_t i = 0; i < 40; i++) {
        evs.push_back({i, i * 3,
                       static_cast<EventKind>(i % 10),
                       static_cast<TaskId>(i % 4), static_cast<TaskId>(i % 3)});
    }
    CHECK(trace_hash(evs) == ref_fnv(trace_to_text(evs)));
    CHECK(trace_hash({}) == ref_fnv(""));
}

TEST_CASE("diff reports the first divergent line") {
    std::string a =
        "seq=0 t=0 kind=TaskStart to=0\n"
        "seq=1 t=25 kind=TickDelivered\n";
    CHECK_FALSE(diff_trace_text(a, a).has_value());

    std::string b =
        "seq=0 t=0 kind=TaskStart to=0\n"
        "seq=1 t=30 kind=TickDelivered\n";
    auto d = diff_trace_text(a, b);
    REQUIRE(d.has_value());
    CHECK(d->line == 1);
    CHECK(d->left == "seq=1 t=25 kind=TickDelivered");
    CHECK(d->right == "seq=1 t=30 kind=TickDelivered");

    auto tail = diff_trace_text(a, a + "seq=2 t=25 kind=TaskSwitch from=0 to=1\n");
    REQUIRE(tail.has_value());
    CHECK(tail->line == 2);
    CHECK(tail->left == "");
    CHECK(tail->right == "seq=2 t=25 kind=TaskSwitch from=0 to=1");
}
