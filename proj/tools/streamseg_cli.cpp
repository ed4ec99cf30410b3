#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "streamseg/pipeline.hpp"

using namespace streamseg;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::optional<std::int64_t> parse_bound(const std::string& text, const char* flag) {
    if (text == "inf" || text == "none") return std::nullopt;
    try {
        std::size_t used = 0;
        const auto v = std::stoll(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorCode::config, std::string(flag) + " expects an integer or 'inf', got '" + text + "'");
    }
}

struct SimulateFlags {
    std::string config, scenario, preload, out_events, out_memory, out_stats, out_truth, export_preload;
    std::vector<FrameIndex> export_frames;
    std::optional<std::int64_t> k, d, attention, update_window, frames, phase;
    std::string m, retention;
    std::optional<std::uint64_t> seed;
    std::optional<double> dropout, jitter;
    std::optional<int> erosion;
    std::vector<FrameIndex> dropout_frames;
    bool half = false, offload = false;
    std::optional<double> near_pocket, dv_threshold, proximity, perp_tol, par_tol, buffer_margin, approach;
};

PipelineConfig build_config(const SimulateFlags& f) {
    PipelineConfig c = f.config.empty() ? PipelineConfig{} : PipelineConfig::read_file(f.config);
    auto& p = c.propagation;
    if (f.k) p.buffer_size = *f.k;
    if (!f.m.empty()) p.max_frames_to_track = parse_bound(f.m, "--M");
    if (f.d) p.detection_interval = *f.d;
    if (f.phase) p.condition_phase = *f.phase;
    if (!f.retention.empty()) p.retention = parse_bound(f.retention, "--retention");
    if (f.attention) p.attention_limit = static_cast<std::size_t>(*f.attention);
    if (f.update_window) p.update_window = *f.update_window;
    if (f.frames) c.frames = *f.frames;
    if (f.seed) c.seed = *f.seed;
    if (f.dropout) c.noise.dropout_prob = *f.dropout;
    if (f.jitter) c.noise.box_jitter_px = *f.jitter;
    if (f.erosion) c.noise.mask_erosion_px = *f.erosion;
    if (!f.dropout_frames.empty()) c.noise.dropout_frames = f.dropout_frames;
    if (f.half) c.half_precision = true;
    if (f.offload) c.offload_video = true;
    auto& t = c.thresholds;
    if (f.near_pocket) t.near_pocket_radius = f.near_pocket;
    if (f.dv_threshold) t.velocity_change_threshold = f.dv_threshold;
    if (f.proximity) t.proximity_radius = f.proximity;
    if (f.perp_tol) t.perpendicular_reversal_tolerance = f.perp_tol;
    if (f.par_tol) t.parallel_consistency_tolerance = f.par_tol;
    if (f.buffer_margin) t.buffer_margin = f.buffer_margin;
    if (f.approach) t.approach_speed_min = f.approach;
    if (!f.scenario.empty()) c.scenario_path = f.scenario;
    if (!f.preload.empty()) c.preload_path = f.preload;
    if (!f.out_events.empty()) c.out_events = f.out_events;
    if (!f.out_memory.empty()) c.out_memory_report = f.out_memory;
    if (!f.out_stats.empty()) c.out_stats = f.out_stats;
    if (!f.out_truth.empty()) c.out_truth = f.out_truth;
    if (!f.export_preload.empty()) c.export_preload_path = f.export_preload;
    if (!f.export_frames.empty()) c.export_frames = f.export_frames;
    return c;
}

int run_simulate(const SimulateFlags& flags) {
    const PipelineConfig config = build_config(flags);
    const PipelineResult r = run_configured(config);
    const auto score = score_events(r.log.events(), r.truth);
    std::printf("frames_propagated_total=%lld propagation_calls=%lld peak_resident_frames=%zu peak_bytes=%llu\n",
                static_cast<long long>(r.stats.frames_propagated_total),
                static_cast<long long>(r.stats.propagation_calls), r.stats.peak_resident_frames,
                static_cast<unsigned long long>(r.stats.peak_bytes));
    std::printf("events=%zu truth=%zu f1_goal=%.4f f1_collision=%.4f f1_rebound=%.4f\n", r.log.events().size(),
                r.truth.size(), score.per_class.at(EventKind::goal).f1(),
                score.per_class.at(EventKind::collision).f1(), score.per_class.at(EventKind::rebound).f1());
    std::printf("queue_peak=%zu blocked_pushes=%lld video_segments_peak=%zu video_segments_waits=%lld\n",
                r.queue_peak_depth, static_cast<long long>(r.blocked_pushes), r.segments_peak,
                static_cast<long long>(r.segments_blocked_waits));
    if (r.partial) {
        std::fprintf(stderr, "error: run aborted, reports are partial: %s\n", r.failure.c_str());
        return kExitRuntime;
    }
    return 0;
}

int run_replay(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::config, "cannot read events " + path);
    std::map<std::string, Event> live;
    std::string line;
    std::size_t changes = 0, retractions = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::printf("%s\n", line.c_str());
            continue;
        }
        const JournalEntry e = journal_from_json_line(line);
        const std::string key = event_to_json_line(e.event);
        ++changes;
        std::string balls;
        for (ObjectId b : e.event.balls) balls += (balls.empty() ? "" : ",") + std::to_string(b);
        std::printf("rev %-3lld %s %-9s frame %-6lld balls [%s]%s%s\n", static_cast<long long>(e.revision_counter),
                    e.retracted ? "-" : "+", to_string(e.event.kind), static_cast<long long>(e.event.frame),
                    balls.c_str(), e.event.location.empty() ? "" : " at ", e.event.location.c_str());
        if (e.retracted) {
            ++retractions;
            live.erase(key);
        } else {
            live[key] = e.event;
        }
    }
    std::vector<Event> final_events;
    for (const auto& [k, e] : live) final_events.push_back(e);
    std::sort(final_events.begin(), final_events.end());
    std::printf("-- %zu changes, %zu corrections, %zu events in final log\n", changes, retractions,
                final_events.size());
    for (const auto& e : final_events) std::printf("%s\n", event_to_json_line(e).c_str());
    return 0;
}

int run_export_events(const std::string& scenario_path, const std::string& out, std::optional<std::int64_t> frames) {
    billiards::Scenario s = billiards::Scenario::read_file(scenario_path);
    if (frames) s.frames = *frames;
    const auto t = billiards::simulate(s);
    if (out.empty()) {
        write_events_jsonl(std::cout, t.events);
        return 0;
    }
    std::ofstream f(out, std::ios::binary);
    if (!f) throw Error(ErrorCode::io, "cannot write " + out);
    write_events_jsonl(f, t.events);
    return 0;
}

int run_bench_cmd(const std::string& grid_path, const std::string& out) {
    const BenchGrid grid = BenchGrid::read_file(grid_path);
    const auto rows = run_bench(grid);
    std::ofstream f(out, std::ios::binary);
    if (!f) throw Error(ErrorCode::io, "cannot write " + out);
    write_bench_csv(f, rows);
    std::size_t skipped = 0;
    for (const auto& r : rows) skipped += r.skipped ? 1 : 0;
    std::printf("%zu cells, %zu skipped -> %s\n", rows.size(), skipped, out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Streaming segmentation pipeline over synthetic billiards video"};
    app.require_subcommand(1);

    SimulateFlags sim;
    auto* simulate = app.add_subcommand("simulate", "run the two-worker pipeline on a scenario");
    simulate->add_option("--config", sim.config, "JSON pipeline config");
    simulate->add_option("--scenario", sim.scenario, "scenario JSON");
    simulate->add_option("--preload", sim.preload, "preload memory bank");
    simulate->add_option("--out-events", sim.out_events, "event journal (JSONL)");
    simulate->add_option("--out-memory-report", sim.out_memory, "per-propagation memory report (CSV)");
    simulate->add_option("--out-stats", sim.out_stats, "per-propagation counters (CSV)");
    simulate->add_option("--out-truth", sim.out_truth, "ground-truth events (JSONL)");
    simulate->add_option("--export-preload", sim.export_preload, "write a preload bank after the run");
    simulate->add_option("--export-frames", sim.export_frames, "frames to export")->delimiter(',');
    simulate->add_option("--K", sim.k, "frame buffer size");
    simulate->add_option("--M", sim.m, "max frames per propagation, or inf");
    simulate->add_option("--D", sim.d, "detection interval");
    simulate->add_option("--phase", sim.phase, "condition frame phase within D");
    simulate->add_option("--retention", sim.retention, "resident frame cap, or none");
    simulate->add_option("--attention-limit", sim.attention, "memory frames per attention call");
    simulate->add_option("--update-window", sim.update_window, "back-update window for new objects");
    simulate->add_option("--frames", sim.frames, "override scenario length");
    simulate->add_option("--seed", sim.seed, "override scenario and noise seed");
    simulate->add_option("--dropout-prob", sim.dropout, "detector dropout probability");
    simulate->add_option("--box-jitter", sim.jitter, "detector box jitter (px)");
    simulate->add_option("--mask-erosion", sim.erosion, "segmenter mask erosion (px)");
    simulate->add_option("--dropout-frames", sim.dropout_frames, "frames with no detections")->delimiter(',');
    simulate->add_flag("--half-precision", sim.half, "half-precision internal tensors");
    simulate->add_flag("--offload-video", sim.offload, "keep frames in the slow tier");
    simulate->add_option("--near-pocket-radius", sim.near_pocket);
    simulate->add_option("--velocity-change-threshold", sim.dv_threshold);
    simulate->add_option("--proximity-radius", sim.proximity);
    simulate->add_option("--perpendicular-tolerance", sim.perp_tol);
    simulate->add_option("--parallel-tolerance", sim.par_tol);
    simulate->add_option("--buffer-margin", sim.buffer_margin);
    simulate->add_option("--approach-speed-min", sim.approach);

    std::string grid, bench_out;
    auto* bench = app.add_subcommand("bench", "sweep (K, M, D, retention) and write a CSV row per cell");
    bench->add_option("--grid", grid, "grid JSON")->required();
    bench->add_option("--out", bench_out, "output CSV")->required();

    std::string replay_events;
    auto* replay = app.add_subcommand("replay", "pretty-print an event journal with its corrections");
    replay->add_option("--events", replay_events, "event journal (JSONL)")->required();

    std::string export_scenario, export_out;
    std::optional<std::int64_t> export_frames;
    auto* export_events = app.add_subcommand("export-events", "write ground-truth events of a scenario (JSONL)");
    export_events->add_option("--scenario", export_scenario, "scenario JSON")->required();
    export_events->add_option("--out", export_out, "output file (default stdout)");
    export_events->add_option("--frames", export_frames, "override scenario length");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*simulate) return run_simulate(sim);
        if (*bench) return run_bench_cmd(grid, bench_out);
        if (*replay) return run_replay(replay_events);
        if (*export_events) return run_export_events(export_scenario, export_out, export_frames);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        switch (e.code()) {
            case ErrorCode::config:
            case ErrorCode::format:
            case ErrorCode::io: return kExitConfig;
            default: return kExitRuntime;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return 0;
}
