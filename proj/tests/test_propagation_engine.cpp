#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>
#include <random>
#include <sstream>

#include "streamseg/propagation_engine.hpp"

using namespace streamseg;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::io;
}

Box box_at(double x, double y) { return {x - 5, y - 5, x + 5, y + 5}; }

// Prompts object 1 on every detector call; other ids appear from a given frame.
struct ScriptedDetector : Detector {
    std::map<ObjectId, FrameIndex> appear = {{1, 0}};
    std::set<FrameIndex> blind;
    std::vector<FrameIndex> calls;
    std::vector<PromptBox> detect(const FrameRecord& frame) override {
        calls.push_back(frame.global_idx);
        std::vector<PromptBox> out;
        if (blind.count(frame.global_idx)) return out;
        for (auto [id, from] : appear) {
            if (frame.global_idx >= from) out.push_back({id, box_at(100.0 * static_cast<double>(id), 50), 1.0});
        }
        return out;
    }
};

// A mask for every prompted id, plus every registered id that has memory in
// one of the attention frames.
struct EchoSegmenter : Segmenter {
    std::vector<std::vector<FrameIndex>> attention_log;
    ObjectMasks segment(const FrameRecord&, const std::vector<PromptBox>& prompts, const MemoryBank& bank,
                        const std::vector<FrameIndex>& attention) override {
        attention_log.push_back(attention);
        ObjectMasks out;
        Mask m{0, 0, 1, 1, {1}};
        for (const auto& p : prompts) out[p.obj_id] = m;
        for (ObjectId id : bank.registry().obj_ids()) {
            for (FrameIndex f : attention) {
                if (bank.has_memory(f, id)) out[id] = m;
            }
        }
        return out;
    }
};

struct CountingSource : FrameSource {
    FrameIndex next_idx = 0;
    std::optional<FrameRecord> next() override {
        FrameRecord r;
        r.global_idx = next_idx++;
        return r;
    }
};

FrameRecord frame(FrameIndex i) {
    FrameRecord r;
    r.global_idx = i;
    return r;
}

PropagationConfig config(std::int64_t k, std::optional<std::int64_t> m, std::int64_t d,
                         std::optional<std::int64_t> retention = std::nullopt) {
    PropagationConfig c;
    c.buffer_size = k;
    c.max_frames_to_track = m;
    c.detection_interval = d;
    c.retention = retention;
    return c;
}

// Independent oracle: one span per flush head, each capped by M and by the
// number of frames seen so far.
std::int64_t cost_oracle(std::int64_t n, std::int64_t k, std::optional<std::int64_t> m) {
    std::int64_t total = 0;
    for (std::int64_t end = k; end < n + k; end += k) {
        const std::int64_t seen = std::min(end, n);
        total += m ? std::min(*m, seen) : seen;
    }
    return total;
}

PropagationStats run(std::int64_t n, const PropagationConfig& c) {
    ScriptedDetector det;
    EchoSegmenter seg;
    StreamEngine engine(c, det, seg);
    CountingSource src;
    return run_stream(engine, src, n);
}

}  // namespace

TEST_CASE("config validation") {
    CHECK_NOTHROW(config(10, 20, 5, 40).validate());
    CHECK(code_of([] { config(0, std::nullopt, 1).validate(); }) == ErrorCode::config);
    CHECK(code_of([] { config(10, 5, 1).validate(); }) == ErrorCode::config);
    CHECK(code_of([] { config(10, 20, 1, 20).validate(); }) == ErrorCode::config);
    CHECK(code_of([] { config(1, 20, 0).validate(); }) == ErrorCode::config);
    CHECK(code_of([] { config(1, 2, 8, 4).validate(); }) == ErrorCode::config);
    CHECK_NOTHROW(config(1, 2, 8, 8).validate());
    auto c = config(4, 8, 3);
    c.condition_phase = 3;
    CHECK(code_of([&] { c.validate(); }) == ErrorCode::config);
    c.condition_phase = 2;
    CHECK_NOTHROW(c.validate());
    CHECK(c.effective_update_window() == std::nullopt);
    CHECK(config(4, 8, 1, 12).effective_update_window() == 12);
}

TEST_CASE("condition frame designation") {
    std::vector<FrameIndex> ten = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    CHECK(designate_condition_frames(ten, 3) == std::vector<FrameIndex>{0, 3, 6, 9});
    CHECK(designate_condition_frames(ten, 1) == ten);
    CHECK(designate_condition_frames(ten, 20) == std::vector<FrameIndex>{0});
    CHECK(designate_condition_frames({10, 11, 12, 13}, 4, 2) == std::vector<FrameIndex>{10});
}

TEST_CASE("buffer fills before flushing") {
    ScriptedDetector det;
    EchoSegmenter seg;
    StreamEngine engine(config(4, std::nullopt, 1), det, seg);
    CHECK_FALSE(engine.ingest_frame(frame(0)));
    CHECK_FALSE(engine.ingest_frame(frame(1)));
    CHECK_FALSE(engine.ingest_frame(frame(2)));
    auto r = engine.ingest_frame(frame(3));
    REQUIRE(r);
    CHECK(r->head == 3);
    CHECK(r->frames.size() == 4);
    CHECK(engine.pending() == 0);
}

TEST_CASE("a buffer of one flushes every frame") {
    ScriptedDetector det;
    EchoSegmenter seg;
    StreamEngine engine(config(1, std::nullopt, 1), det, seg);
    for (FrameIndex i = 0; i < 5; ++i) CHECK(engine.ingest_frame(frame(i)));
    CHECK(engine.stats().propagation_calls == 5);
}

TEST_CASE("end of stream flushes the partial buffer") {
    ScriptedDetector det;
    EchoSegmenter seg;
    StreamEngine engine(config(4, std::nullopt, 1), det, seg);
    for (FrameIndex i = 0; i < 6; ++i) engine.ingest_frame(frame(i));
    CHECK(engine.pending() == 2);
    auto r = engine.finish();
    REQUIRE(r);
    CHECK(r->head == 5);
    CHECK_FALSE(engine.finish());
}

TEST_CASE("out-of-order frames are rejected") {
    ScriptedDetector det;
    EchoSegmenter seg;
    StreamEngine engine(config(4, std::nullopt, 1), det, seg);
    engine.ingest_frame(frame(0));
    CHECK(code_of([&] { engine.ingest_frame(frame(2)); }) == ErrorCode::ordering);
    CHECK(code_of([&] { engine.ingest_frame(frame(0)); }) == ErrorCode::ordering);
}

TEST_CASE("prompts with known ids leave the registry alone") {
    MemoryBank bank;
    for (ObjectId id : {1, 2, 3}) bank.register_object(id);
    apply_prompts(bank, 0, {{1, box_at(10, 10)}, {2, box_at(50, 10)}, {3, box_at(90, 10)}}, std::nullopt);
    CHECK(bank.registry().size() == 3);
    CHECK(bank.cond_frame_indices() == std::set<FrameIndex>{0});
}

TEST_CASE("a new id mid-stream grows the registry without a reset") {
    MemoryBank bank;
    apply_prompts(bank, 0, {{1, box_at(10, 10)}}, std::nullopt);
    for (FrameIndex f = 1; f < 30; ++f) bank.write_frame_output(f, false, {encode_prompt_row({1, box_at(10, 10)}, 4)});
    apply_prompts(bank, 30, {{1, box_at(10, 10)}, {7, box_at(300, 10)}}, 5);
    CHECK(bank.registry().obj_ids() == std::vector<ObjectId>{1, 7});
    CHECK(bank.entry_count() == 31);
    CHECK(bank.has_memory(0, 1));
    CHECK(bank.has_memory(30, 7));
    CHECK(bank.is_current_shaped(*bank.entry(26)));
    CHECK_FALSE(bank.is_current_shaped(*bank.entry(25)));
}

TEST_CASE("two prompts for one id are rejected") {
    MemoryBank bank;
    CHECK(code_of([&] { apply_prompts(bank, 0, {{9, box_at(10, 10)}, {9, box_at(90, 10)}}, std::nullopt); }) ==
          ErrorCode::duplicate_prompt);
}

TEST_CASE("a capped propagation visits the newest M frames newest first") {
    ScriptedDetector det;
    EchoSegmenter seg;
    StreamEngine engine(config(10, 20, 5), det, seg);
    engine.record_visits(true);
    for (FrameIndex i = 0; i < 40; ++i) engine.ingest_frame(frame(i));
    const auto& visits = engine.stats().visits.back();
    REQUIRE(visits.size() == 20);
    CHECK(visits.front() == 39);
    CHECK(visits.back() == 20);
    CHECK(engine.stats().trace.back().span == 20);
}

TEST_CASE("an unbounded propagation covers the whole history") {
    ScriptedDetector det;
    EchoSegmenter seg;
    StreamEngine engine(config(10, std::nullopt, 1), det, seg);
    for (FrameIndex i = 0; i < 10; ++i) engine.ingest_frame(frame(i));
    CHECK(engine.stats().trace.back().span == 10);
}

TEST_CASE("propagating without any prompt fails") {
    ScriptedDetector det;
    det.appear.clear();
    EchoSegmenter seg;
    StreamEngine engine(config(4, std::nullopt, 1), det, seg);
    for (FrameIndex i = 0; i < 3; ++i) engine.ingest_frame(frame(i));
    CHECK(code_of([&] { engine.ingest_frame(frame(3)); }) == ErrorCode::no_prompt);
}

TEST_CASE("the detector only runs on condition frames") {
    ScriptedDetector det;
    EchoSegmenter seg;
    StreamEngine engine(config(10, 20, 5), det, seg);
    for (FrameIndex i = 0; i < 30; ++i) engine.ingest_frame(frame(i));
    CHECK(det.calls == std::vector<FrameIndex>{0, 5, 10, 15, 20, 25});
    CHECK(engine.stats().detector_calls == 6);
}

TEST_CASE("quadratic regime: one frame per flush") {
    const auto s = run(100, config(1, std::nullopt, 1));
    CHECK(s.frames_propagated_total == 5050);
    CHECK(s.frames_propagated_total == cost_oracle(100, 1, std::nullopt));
}

TEST_CASE("buffered regime") {
    const auto s = run(100, config(10, std::nullopt, 1));
    CHECK(s.frames_propagated_total == 550);
    CHECK(std::abs(static_cast<double>(s.frames_propagated_total) - 500.0) <= 50.0);
}

TEST_CASE("capped regime grows linearly with slope M/K") {
    const auto a = run(1000, config(10, 20, 1));
    const auto b = run(2000, config(10, 20, 1));
    CHECK(a.frames_propagated_total == cost_oracle(1000, 10, 20));
    CHECK(b.frames_propagated_total == cost_oracle(2000, 10, 20));
    // The first flush only has K frames behind it, so the total is one K short of (M/K)N.
    CHECK(a.frames_propagated_total == 1990);
    CHECK(b.frames_propagated_total - a.frames_propagated_total == 2000);
}

TEST_CASE("an empty stream leaves zero counters") {
    const auto s = run(0, config(10, 20, 1));
    CHECK(s.frames_propagated_total == 0);
    CHECK(s.propagation_calls == 0);
    CHECK(s.detector_calls == 0);
    CHECK(s.trace.empty());
}

TEST_CASE("asymptotic shapes hold within ten percent for longer streams") {
    for (std::int64_t n : {200, 400}) {
        const double half_n2 = 0.5 * static_cast<double>(n) * static_cast<double>(n);
        CHECK(static_cast<double>(run(n, config(1, std::nullopt, 1)).frames_propagated_total) ==
              doctest::Approx(half_n2).epsilon(0.1));
        CHECK(static_cast<double>(run(n, config(10, std::nullopt, 1)).frames_propagated_total) ==
              doctest::Approx(half_n2 / 10.0).epsilon(0.1));
        CHECK(static_cast<double>(run(n, config(10, 20, 1)).frames_propagated_total) ==
              doctest::Approx(2.0 * static_cast<double>(n)).epsilon(0.1));
    }
}

TEST_CASE("randomized schedules obey the oracle and the trace properties") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        const std::int64_t k = 1 + static_cast<std::int64_t>(rng() % 12);
        const bool bounded = rng() % 3 != 0;
        const std::optional<std::int64_t> m =
            bounded ? std::optional<std::int64_t>(k + static_cast<std::int64_t>(rng() % 25)) : std::nullopt;
        const std::optional<std::int64_t> retention =
            bounded && rng() % 2 ? std::optional<std::int64_t>(*m + 1 + static_cast<std::int64_t>(rng() % 20))
                                 : std::nullopt;
        std::int64_t d = 1 + static_cast<std::int64_t>(rng() % 7);
        if (retention) d = std::min(d, *retention);
        const std::int64_t n = static_cast<std::int64_t>(rng() % 300);
        CAPTURE(k);
        CAPTURE(n);
        CAPTURE(d);

        ScriptedDetector det;
        EchoSegmenter seg;
        StreamEngine engine(config(k, m, d, retention), det, seg);
        engine.record_visits(true);
        CountingSource src;
        const auto s = run_stream(engine, src, n);

        CHECK(s.frames_propagated_total == cost_oracle(n, k, m));
        CHECK(s.eviction_violations == 0);
        std::int64_t prev_total = 0;
        for (std::size_t c = 0; c < s.visits.size(); ++c) {
            const auto& v = s.visits[c];
            for (std::size_t i = 1; i < v.size(); ++i) REQUIRE(v[i] == v[i - 1] - 1);
            const auto span = static_cast<std::int64_t>(v.size());
            if (m) CHECK(span <= *m);
            CHECK(span >= std::min<std::int64_t>(k, v.front() + 1));
            CHECK(s.trace[c].frames_propagated_total >= prev_total);
            prev_total = s.trace[c].frames_propagated_total;
            // Nothing visited later was released earlier.
            for (std::size_t later = c + 1; later < s.visits.size(); ++later) {
                for (FrameIndex f : s.releases[c]) {
                    REQUIRE(std::find(s.visits[later].begin(), s.visits[later].end(), f) == s.visits[later].end());
                }
            }
        }
    }
}

TEST_CASE("retention keeps the resident count bounded") {
    ScriptedDetector det;
    EchoSegmenter seg;
    StreamEngine engine(config(10, 20, 5, 40), det, seg);
    CountingSource src;
    const auto s = run_stream(engine, src, 1000);
    CHECK(s.peak_resident_frames <= 50);
    CHECK(s.floor_resident_frames >= 20);
    CHECK(engine.frames().resident_count() == 40);
    CHECK(engine.bank().video_entry_count() == 40);
}

TEST_CASE("skipping validation lets a short retention evict frames still in reach") {
    ScriptedDetector det;
    EchoSegmenter seg;
    StreamEngine engine(config(1, 20, 1, 19), det, seg, MemoryBank{}, FrameStore{}, StreamEngine::Validation::skip);
    CountingSource src;
    const auto s = run_stream(engine, src, 60);
    CHECK(s.eviction_violations > 0);
}

TEST_CASE("prompts are cached and reused during re-propagation") {
    ScriptedDetector det;
    EchoSegmenter seg;
    StreamEngine engine(config(5, 15, 5), det, seg);
    for (FrameIndex i = 0; i < 15; ++i) engine.ingest_frame(frame(i));
    CHECK(det.calls.size() == 3);
    CHECK(engine.prompt_cache().size() == 3);
    CHECK(engine.bank().cond_frame_indices() == std::set<FrameIndex>{0, 5, 10});
}

TEST_CASE("scene ids are routed to the observer, not the registry") {
    struct SceneDetector : Detector {
        std::vector<PromptBox> detect(const FrameRecord&) override {
            return {{1, box_at(100, 50)}, {kSceneIdBase + 2, box_at(500, 500)}};
        }
    } det;
    EchoSegmenter seg;
    StreamEngine engine(config(2, std::nullopt, 2), det, seg);
    std::vector<FrameIndex> seen;
    engine.set_scene_observer([&](FrameIndex f, const std::vector<PromptBox>& boxes) {
        seen.push_back(f);
        CHECK(boxes.size() == 1);
        CHECK(is_scene_id(boxes[0].obj_id));
    });
    for (FrameIndex i = 0; i < 6; ++i) engine.ingest_frame(frame(i));
    CHECK(seen == std::vector<FrameIndex>{0, 2, 4});
    CHECK(engine.bank().registry().obj_ids() == std::vector<ObjectId>{1});
}

TEST_CASE("stats and memory CSV layouts") {
    ScriptedDetector det;
    EchoSegmenter seg;
    StreamEngine engine(config(2, std::nullopt, 1), det, seg);
    CountingSource src;
    const auto s = run_stream(engine, src, 4);
    std::ostringstream a, b;
    write_stats_csv(a, s);
    write_memory_report_csv(b, s);
    CHECK(a.str().rfind("call_no,head_idx,span,frames_propagated_total,resident_frames,fast_bytes,slow_bytes\n", 0) ==
          0);
    CHECK(a.str().find("\n2,3,4,6,4,") != std::string::npos);
    CHECK(b.str().rfind("frame_count_resident,fast_bytes,slow_bytes,num_frames_total\n", 0) == 0);
    const std::string mem = b.str();
    CHECK(std::count(mem.begin(), mem.end(), '\n') == 3);
}
