#include "streamseg/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace streamseg {

using nlohmann::json;
using billiards::Scenario;

// ---------------------------------------------------------------------------
// Config

ThresholdConfig ThresholdOverrides::apply(ThresholdConfig t) const {
    if (near_pocket_radius) t.near_pocket_radius = *near_pocket_radius;
    if (velocity_change_threshold) t.velocity_change_threshold = *velocity_change_threshold;
    if (proximity_radius) t.proximity_radius = *proximity_radius;
    if (perpendicular_reversal_tolerance) t.perpendicular_reversal_tolerance = *perpendicular_reversal_tolerance;
    if (parallel_consistency_tolerance) t.parallel_consistency_tolerance = *parallel_consistency_tolerance;
    if (buffer_margin) t.buffer_margin = *buffer_margin;
    if (approach_speed_min) t.approach_speed_min = *approach_speed_min;
    return t;
}

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; })) {
            throw Error(ErrorCode::config, "unknown key '" + it.key() + "' in " + where);
        }
    }
}

std::optional<std::int64_t> optional_int(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<std::int64_t>();
}

template <typename T>
void read_opt(const json& j, const char* key, std::optional<T>& out) {
    if (j.contains(key) && !j[key].is_null()) out = j[key].get<T>();
}

}  // namespace

PipelineConfig PipelineConfig::parse(std::string_view text) {
    PipelineConfig c;
    try {
        const json j = json::parse(text);
        if (!j.is_object()) throw Error(ErrorCode::config, "config must be a JSON object");
        reject_unknown(j,
                       {"propagation", "thresholds", "noise", "seed", "frames", "half_precision", "offload_video",
                        "scenario", "preload", "reports", "export_preload", "export_frames"},
                       "config");
        if (j.contains("propagation")) {
            const json& p = j["propagation"];
            reject_unknown(p,
                           {"buffer_size", "max_frames_to_track", "detection_interval", "condition_phase",
                            "retention", "attention_limit", "update_window"},
                           "propagation");
            auto& pc = c.propagation;
            pc.buffer_size = p.value("buffer_size", pc.buffer_size);
            pc.max_frames_to_track = optional_int(p, "max_frames_to_track");
            pc.detection_interval = p.value("detection_interval", pc.detection_interval);
            pc.condition_phase = p.value("condition_phase", pc.condition_phase);
            pc.retention = optional_int(p, "retention");
            pc.attention_limit = p.value("attention_limit", pc.attention_limit);
            pc.update_window = optional_int(p, "update_window");
        }
        if (j.contains("thresholds")) {
            const json& t = j["thresholds"];
            reject_unknown(t,
                           {"near_pocket_radius", "velocity_change_threshold", "proximity_radius",
                            "perpendicular_reversal_tolerance", "parallel_consistency_tolerance", "buffer_margin",
                            "approach_speed_min"},
                           "thresholds");
            auto& o = c.thresholds;
            read_opt(t, "near_pocket_radius", o.near_pocket_radius);
            read_opt(t, "velocity_change_threshold", o.velocity_change_threshold);
            read_opt(t, "proximity_radius", o.proximity_radius);
            read_opt(t, "perpendicular_reversal_tolerance", o.perpendicular_reversal_tolerance);
            read_opt(t, "parallel_consistency_tolerance", o.parallel_consistency_tolerance);
            read_opt(t, "buffer_margin", o.buffer_margin);
            read_opt(t, "approach_speed_min", o.approach_speed_min);
        }
        if (j.contains("noise")) {
            const json& n = j["noise"];
            reject_unknown(n, {"box_jitter_px", "dropout_prob", "mask_erosion_px", "dropout_frames"}, "noise");
            read_opt(n, "box_jitter_px", c.noise.box_jitter_px);
            read_opt(n, "dropout_prob", c.noise.dropout_prob);
            read_opt(n, "mask_erosion_px", c.noise.mask_erosion_px);
            read_opt(n, "dropout_frames", c.noise.dropout_frames);
        }
        read_opt(j, "seed", c.seed);
        read_opt(j, "frames", c.frames);
        read_opt(j, "half_precision", c.half_precision);
        read_opt(j, "offload_video", c.offload_video);
        if (j.contains("scenario")) c.scenario_path = j["scenario"].get<std::string>();
        if (j.contains("preload") && !j["preload"].is_null()) c.preload_path = j["preload"].get<std::string>();
        if (j.contains("reports")) {
            const json& r = j["reports"];
            reject_unknown(r, {"events", "memory_report", "stats", "truth"}, "reports");
            if (r.contains("events")) c.out_events = r["events"].get<std::string>();
            if (r.contains("memory_report")) c.out_memory_report = r["memory_report"].get<std::string>();
            if (r.contains("stats")) c.out_stats = r["stats"].get<std::string>();
            if (r.contains("truth")) c.out_truth = r["truth"].get<std::string>();
        }
        if (j.contains("export_preload")) c.export_preload_path = j["export_preload"].get<std::string>();
        if (j.contains("export_frames")) c.export_frames = j["export_frames"].get<std::vector<FrameIndex>>();
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::config, std::string("malformed config: ") + ex.what());
    }
    return c;
}

PipelineConfig PipelineConfig::read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::config, "cannot read config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    PipelineConfig c = parse(ss.str());
    // Paths inside the file are relative to the file itself.
    const auto base = path.parent_path();
    auto fix = [&](std::filesystem::path& p) {
        if (!p.empty() && p.is_relative()) p = base / p;
    };
    auto fix_opt = [&](std::optional<std::filesystem::path>& p) {
        if (p) fix(*p);
    };
    fix(c.scenario_path);
    fix_opt(c.preload_path);
    fix_opt(c.out_events);
    fix_opt(c.out_memory_report);
    fix_opt(c.out_stats);
    fix_opt(c.out_truth);
    fix_opt(c.export_preload_path);
    return c;
}

void PipelineConfig::validate() const {
    propagation.validate();
    if (noise.dropout_prob && (*noise.dropout_prob < 0.0 || *noise.dropout_prob > 1.0)) {
        throw Error(ErrorCode::config, "dropout probability must lie in [0, 1]");
    }
    if (noise.box_jitter_px && *noise.box_jitter_px < 0.0) throw Error(ErrorCode::config, "jitter must be >= 0");
    if (noise.mask_erosion_px && *noise.mask_erosion_px < 0) throw Error(ErrorCode::config, "erosion must be >= 0");
    if (frames && *frames < 0) throw Error(ErrorCode::config, "frame count must be non-negative");
    thresholds.apply(ThresholdConfig{}).validate();
}

Scenario apply_overrides(Scenario s, const PipelineConfig& c) {
    if (c.seed) {
        s.seed = *c.seed;
        s.noise.seed = *c.seed;
    }
    if (c.frames) s.frames = *c.frames;
    if (c.noise.box_jitter_px) s.noise.box_jitter_px = *c.noise.box_jitter_px;
    if (c.noise.dropout_prob) s.noise.dropout_prob = *c.noise.dropout_prob;
    if (c.noise.mask_erosion_px) s.noise.mask_erosion_px = *c.noise.mask_erosion_px;
    if (c.noise.dropout_frames) s.noise.dropout_frames = {c.noise.dropout_frames->begin(), c.noise.dropout_frames->end()};
    if (c.half_precision) s.render.precision = *c.half_precision ? Precision::half : Precision::single;
    if (c.offload_video) s.render.tier = *c.offload_video ? StorageTier::slow : StorageTier::fast;
    return s;
}

ThresholdConfig thresholds_for(const Scenario& scenario, const ThresholdOverrides& overrides) {
    double radius = 15.0;
    if (!scenario.balls.empty()) {
        radius = 0.0;
        for (const auto& b : scenario.balls) radius += b.ball.radius;
        radius /= static_cast<double>(scenario.balls.size());
    }
    return overrides.apply(
        ThresholdConfig::defaults_for(scenario.table.pocket_radius, scenario.table.friction_decel, radius));
}

// ---------------------------------------------------------------------------
// Queue and staging map

FramesQueue::FramesQueue(std::size_t capacity) : capacity_(std::max<std::size_t>(capacity, 1)) {}

bool FramesQueue::push(QueueItem item) {
    std::unique_lock lock(mu_);
    if (items_.size() >= capacity_ && !aborted_) ++blocked_;
    not_full_.wait(lock, [&] { return aborted_ || items_.size() < capacity_; });
    if (aborted_) return false;
    items_.push_back(std::move(item));
    peak_ = std::max(peak_, items_.size());
    not_empty_.notify_one();
    return true;
}

QueueItem FramesQueue::pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return aborted_ || !items_.empty(); });
    if (items_.empty()) {
        QueueItem end;
        end.kind = QueueItem::Kind::end;
        return end;
    }
    QueueItem item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
}

void FramesQueue::abort() {
    std::lock_guard lock(mu_);
    aborted_ = true;
    items_.clear();
    not_full_.notify_all();
    not_empty_.notify_all();
}

std::size_t FramesQueue::size() const {
    std::lock_guard lock(mu_);
    return items_.size();
}

std::size_t FramesQueue::peak_depth() const {
    std::lock_guard lock(mu_);
    return peak_;
}

std::int64_t FramesQueue::blocked_pushes() const {
    std::lock_guard lock(mu_);
    return blocked_;
}

void VideoSegments::insert(FrameIndex frame, std::int64_t revision, std::shared_ptr<const ObjectMasks> masks) {
    std::lock_guard lock(mu_);
    slots_[frame] = {revision, std::move(masks)};
    peak_ = std::max(peak_, slots_.size());
}

bool VideoSegments::release_consumed(FrameIndex frame, std::int64_t revision) {
    std::lock_guard lock(mu_);
    auto it = slots_.find(frame);
    if (it == slots_.end() || it->second.revision != revision) return false;
    slots_.erase(it);
    released_.notify_all();
    return true;
}

bool VideoSegments::wait_for_room(const std::vector<FrameIndex>& span, std::size_t bound) {
    std::unique_lock lock(mu_);
    auto room = [&] {
        if (aborted_) return true;
        std::size_t fresh = 0;
        for (FrameIndex f : span) fresh += slots_.count(f) == 0 ? 1 : 0;
        return slots_.size() + fresh <= bound;
    };
    if (!room()) ++blocked_;
    released_.wait(lock, room);
    return !aborted_;
}

void VideoSegments::abort() {
    std::lock_guard lock(mu_);
    aborted_ = true;
    released_.notify_all();
}

std::size_t VideoSegments::size() const {
    std::lock_guard lock(mu_);
    return slots_.size();
}

std::size_t VideoSegments::peak() const {
    std::lock_guard lock(mu_);
    return peak_;
}

std::int64_t VideoSegments::blocked_waits() const {
    std::lock_guard lock(mu_);
    return blocked_;
}

bool VideoSegments::contains(FrameIndex frame) const {
    std::lock_guard lock(mu_);
    return slots_.count(frame) != 0;
}

// ---------------------------------------------------------------------------
// Two-worker run

namespace {

struct Aborted {};

QueueItem end_item() {
    QueueItem item;
    item.kind = QueueItem::Kind::end;
    return item;
}

}  // namespace

PipelineResult run_pipeline(const Scenario& scenario_in, const PipelineConfig& config, const PreloadPayload* preload) {
    config.validate();
    const Scenario scenario = apply_overrides(scenario_in, config);
    scenario.validate();
    const ThresholdConfig thresholds = thresholds_for(scenario, config.thresholds);
    thresholds.validate();

    const PropagationConfig& pc = config.propagation;
    const std::size_t capacity = pc.max_frames_to_track
                                     ? static_cast<std::size_t>(4 * *pc.max_frames_to_track)
                                     : static_cast<std::size_t>(4 * std::max<std::int64_t>(pc.buffer_size, 64));
    std::optional<std::size_t> segment_bound;
    if (pc.max_frames_to_track) segment_bound = static_cast<std::size_t>(*pc.max_frames_to_track + pc.buffer_size);

    FramesQueue queue(capacity);
    VideoSegments segments;
    PipelineResult result;
    result.queue_capacity = capacity;

    std::mutex fail_mu;
    auto fail = [&](const std::string& what, std::optional<ErrorCode> code) {
        {
            std::lock_guard lock(fail_mu);
            if (!result.partial) {
                result.partial = true;
                result.failure = what;
                result.failure_code = code;
            }
        }
        queue.abort();
        segments.abort();
    };

    std::thread producer([&] {
        try {
            billiards::BilliardsSource source(scenario);
            billiards::BilliardsBackend backend(scenario.table, scenario.noise, scenario.render);
            const std::size_t dim = preload ? preload->feature_dim : MemoryBank::kDefaultFeatureDim;
            MemoryBank bank = MemoryBank::init_state(dim, preload);
            FrameStore store;
            for (FrameIndex f : bank.preload_frame_inds()) {
                FrameRecord r;
                r.global_idx = f;
                r.native_width = scenario.render.native_width;
                r.native_height = scenario.render.native_height;
                r.internal_side = scenario.render.internal_side;
                r.precision = scenario.render.precision;
                r.tier = scenario.render.tier;
                store.attach_preload(std::move(r));
            }
            StreamEngine engine(pc, backend, backend, std::move(bank), std::move(store));
            engine.set_scene_observer([&](FrameIndex f, const std::vector<PromptBox>& scene) {
                QueueItem item;
                item.kind = QueueItem::Kind::settings;
                item.frame_idx = f;
                item.scene = scene;
                if (!queue.push(std::move(item))) throw Aborted{};
            });

            std::map<FrameIndex, std::int64_t> revisions;
            auto publish = [&](PropagationResult& r) {
                std::vector<FrameIndex> span;
                span.reserve(r.frames.size());
                for (const auto& fp : r.frames) span.push_back(fp.frame_idx);
                if (segment_bound && !segments.wait_for_room(span, *segment_bound)) throw Aborted{};
                for (auto& fp : r.frames) {
                    const std::int64_t rev = ++revisions[fp.frame_idx];
                    auto masks = std::make_shared<const ObjectMasks>(std::move(fp.masks));
                    segments.insert(fp.frame_idx, rev, masks);
                    QueueItem item;
                    item.frame_idx = fp.frame_idx;
                    item.revision = rev;
                    item.masks = std::move(masks);
                    if (!queue.push(std::move(item))) throw Aborted{};
                    ++result.items_pushed;
                    if (config.record_sequences) result.pushed_sequence.emplace_back(fp.frame_idx, rev);
                }
                if (pc.max_frames_to_track) {
                    revisions.erase(revisions.begin(), revisions.lower_bound(r.head - *pc.max_frames_to_track));
                }
            };

            if (scenario.balls.empty()) {
                // Nothing to segment: drain the source without propagating.
                while (source.next()) {
                }
            } else {
                while (auto frame = source.next()) {
                    if (auto r = engine.ingest_frame(std::move(*frame))) publish(*r);
                }
                if (auto r = engine.finish()) publish(*r);
            }

            if (config.export_preload_path) result.exported = engine.bank().export_preload(config.export_frames);
            result.stats = engine.stats();
            result.truth = source.truth_events();
            result.final_registry_size = engine.bank().registry().size();
            queue.push(end_item());
        } catch (const Aborted&) {
        } catch (const Error& e) {
            fail(e.what(), e.code());
        } catch (const std::exception& e) {
            fail(e.what(), std::nullopt);
        }
    });

    std::thread consumer([&] {
        try {
            EventProcessor proc(thresholds);
            std::map<ObjectId, Vec2> pockets;
            FrameIndex frontier = -1;
            std::map<FrameIndex, std::int64_t> last_revision;
            // Track history needed for re-evaluation; 0 keeps everything.
            const std::int64_t keep = pc.max_frames_to_track ? *pc.max_frames_to_track + pc.buffer_size + 4 : 0;
            for (;;) {
                QueueItem item = queue.pop();
                if (item.kind == QueueItem::Kind::end) break;
                if (item.kind == QueueItem::Kind::settings) {
                    for (const auto& b : item.scene) pockets[b.obj_id] = b.box.center();
                    if (!proc.ready() && pockets.size() == 6) {
                        std::vector<Vec2> centers;
                        for (const auto& [id, c] : pockets) centers.push_back(c);
                        try {
                            proc.set_geometry(derive_geometry(centers, thresholds));
                        } catch (const Error& e) {
                            if (e.code() != ErrorCode::geometry) throw;
                        }
                    }
                    continue;
                }

                const FrameIndex f = item.frame_idx;
                if (f > frontier + 1) {
                    result.ordering_violations.push_back("frame " + std::to_string(f) + " skipped ahead of " +
                                                         std::to_string(frontier));
                }
                auto& rev = last_revision[f];
                if (item.revision <= rev) {
                    result.ordering_violations.push_back("frame " + std::to_string(f) + " revision " +
                                                         std::to_string(item.revision) + " after " +
                                                         std::to_string(rev));
                }
                rev = item.revision;
                if (config.consumer_delay.count() > 0) std::this_thread::sleep_for(config.consumer_delay);

                proc.process_frame(f, *item.masks, item.revision);
                for (const auto& [id, m] : *item.masks) ++result.masks_per_object[id];
                segments.release_consumed(f, item.revision);
                frontier = std::max(frontier, f);
                ++result.items_consumed;
                if (config.record_sequences) result.consumed_sequence.emplace_back(f, item.revision);
                if (keep > 0) {
                    proc.prune_before(frontier - keep);
                    last_revision.erase(last_revision.begin(), last_revision.lower_bound(frontier - keep));
                }
                result.peak_track_length = std::max(result.peak_track_length, proc.tracks().max_track_length());
            }
            result.log = proc.log();
            result.geometry_ready = proc.ready();
        } catch (const Error& e) {
            fail(e.what(), e.code());
        } catch (const std::exception& e) {
            fail(e.what(), std::nullopt);
        }
    });

    producer.join();
    consumer.join();

    result.queue_peak_depth = queue.peak_depth();
    result.blocked_pushes = queue.blocked_pushes();
    result.queue_final_size = queue.size();
    result.segments_peak = segments.peak();
    result.segments_final_size = segments.size();
    result.segments_blocked_waits = segments.blocked_waits();
    return result;
}

PipelineResult run_configured(const PipelineConfig& config) {
    config.validate();
    if (config.scenario_path.empty()) throw Error(ErrorCode::config, "no scenario given");
    Scenario scenario = Scenario::read_file(config.scenario_path);
    std::optional<PreloadPayload> preload;
    if (config.preload_path) preload = PreloadPayload::read_file(*config.preload_path);
    PipelineResult r = run_pipeline(scenario, config, preload ? &*preload : nullptr);
    write_reports(r, config);
    return r;
}

namespace {

std::ofstream open_report(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    return out;
}

}  // namespace

void write_reports(const PipelineResult& r, const PipelineConfig& config) {
    const std::string marker = "# partial: " + r.failure + "\n";
    if (config.out_events) {
        auto out = open_report(*config.out_events);
        if (r.partial) out << marker;
        r.log.write_journal(out);
    }
    if (config.out_memory_report) {
        auto out = open_report(*config.out_memory_report);
        if (r.partial) out << marker;
        write_memory_report_csv(out, r.stats);
    }
    if (config.out_stats) {
        auto out = open_report(*config.out_stats);
        if (r.partial) out << marker;
        write_stats_csv(out, r.stats);
    }
    if (config.out_truth) {
        auto out = open_report(*config.out_truth);
        if (r.partial) out << marker;
        write_events_jsonl(out, r.truth);
    }
    if (config.export_preload_path && r.exported) r.exported->write_file(*config.export_preload_path);
}

// ---------------------------------------------------------------------------
// Bench

namespace {

template <typename T>
std::vector<std::optional<T>> optional_list(const json& j, const char* key, std::vector<std::optional<T>> fallback) {
    if (!j.contains(key)) return fallback;
    std::vector<std::optional<T>> out;
    for (const auto& v : j[key]) {
        if (v.is_null() || (v.is_string() && (v == "inf" || v == "none"))) {
            out.emplace_back();
        } else {
            out.emplace_back(v.get<T>());
        }
    }
    return out;
}

std::string fmt_opt(const std::optional<std::int64_t>& v, const char* none) {
    return v ? std::to_string(*v) : std::string(none);
}

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

BenchGrid BenchGrid::parse(std::string_view text) {
    BenchGrid g;
    try {
        const json j = json::parse(text);
        reject_unknown(j, {"K", "M", "D", "retention", "scenario", "seed", "frames"}, "grid");
        g.buffer_sizes = j.value("K", std::vector<std::int64_t>{10});
        g.max_frames = optional_list<std::int64_t>(j, "M", {std::nullopt});
        g.detection_intervals = j.value("D", std::vector<std::int64_t>{1});
        g.retentions = optional_list<std::int64_t>(j, "retention", {std::nullopt});
        if (j.contains("scenario")) g.scenario_path = j["scenario"].get<std::string>();
        g.seed = j.value("seed", g.seed);
        g.frames = j.value("frames", g.frames);
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::config, std::string("malformed grid: ") + ex.what());
    }
    return g;
}

BenchGrid BenchGrid::read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::config, "cannot read grid " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    BenchGrid g = parse(ss.str());
    if (g.scenario_path && g.scenario_path->is_relative()) g.scenario_path = path.parent_path() / *g.scenario_path;
    return g;
}

std::vector<BenchRow> run_bench(const BenchGrid& grid) {
    const Scenario scenario = grid.scenario_path ? Scenario::read_file(*grid.scenario_path)
                                                 : make_scenario_suite(grid.seed, 1, grid.frames).front();
    std::vector<BenchRow> rows;
    for (auto k : grid.buffer_sizes) {
        for (const auto& m : grid.max_frames) {
            for (auto d : grid.detection_intervals) {
                for (const auto& ret : grid.retentions) {
                    BenchRow row;
                    row.buffer_size = k;
                    row.max_frames = m;
                    row.detection_interval = d;
                    row.retention = ret;
                    PipelineConfig cfg;
                    cfg.propagation.buffer_size = k;
                    cfg.propagation.max_frames_to_track = m;
                    cfg.propagation.detection_interval = d;
                    cfg.propagation.retention = ret;
                    try {
                        cfg.validate();
                    } catch (const Error& e) {
                        row.skipped = true;
                        row.skip_reason = e.what();
                        rows.push_back(row);
                        continue;
                    }
                    const PipelineResult r = run_pipeline(scenario, cfg);
                    if (r.partial) {
                        row.skipped = true;
                        row.skip_reason = "run failed: " + r.failure;
                    }
                    row.frames_propagated_total = r.stats.frames_propagated_total;
                    row.peak_resident_frames = r.stats.peak_resident_frames;
                    row.peak_bytes = r.stats.peak_bytes;
                    const EventScore s = score_events(r.log.events(), r.truth);
                    row.f1_goal = s.per_class.at(EventKind::goal).f1();
                    row.f1_collision = s.per_class.at(EventKind::collision).f1();
                    row.f1_rebound = s.per_class.at(EventKind::rebound).f1();
                    rows.push_back(row);
                }
            }
        }
    }
    return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
    out << "K,M,D,retention,status,frames_propagated_total,peak_resident_frames,peak_bytes,"
           "f1_goal,f1_collision,f1_rebound,skip_reason\n";
    for (const auto& r : rows) {
        out << r.buffer_size << ',' << fmt_opt(r.max_frames, "inf") << ',' << r.detection_interval << ','
            << fmt_opt(r.retention, "none") << ',';
        if (r.skipped && r.frames_propagated_total == 0) {
            out << "skipped,,,,,,," << csv_quote(r.skip_reason) << '\n';
            continue;
        }
        std::ostringstream f1;
        f1 << std::fixed << std::setprecision(4) << r.f1_goal << ',' << r.f1_collision << ',' << r.f1_rebound;
        out << (r.skipped ? "failed" : "ok") << ',' << r.frames_propagated_total << ',' << r.peak_resident_frames
            << ',' << r.peak_bytes << ',' << f1.str() << ',' << csv_quote(r.skip_reason) << '\n';
    }
}

std::vector<Scenario> make_scenario_suite(std::uint64_t base_seed, std::size_t count, std::int64_t frames) {
    using billiards::ScenarioFocus;
    static constexpr ScenarioFocus kCycle[] = {ScenarioFocus::goal, ScenarioFocus::collision, ScenarioFocus::rebound,
                                               ScenarioFocus::jaw};
    std::vector<Scenario> out;
    std::uint64_t seed = base_seed;
    for (std::size_t i = 0; i < count; ++i) {
        billiards::GeneratorOptions opt;
        opt.frames = frames;
        opt.focus = kCycle[i % 4];
        for (;;) {
            Scenario s = billiards::make_random_scenario(seed++, opt);
            const auto traj = billiards::simulate(s);
            if (billiards::ill_posed_reason(s, traj, billiards::WellPosedness::for_scene(s.table, opt.ball_radius))) {
                continue;
            }
            const bool has_focus = std::any_of(traj.events.begin(), traj.events.end(), [&](const Event& e) {
                switch (opt.focus) {
                    case ScenarioFocus::goal: return e.kind == EventKind::goal;
                    case ScenarioFocus::collision: return e.kind == EventKind::collision;
                    case ScenarioFocus::rebound: return e.kind == EventKind::rebound && e.surface == Surface::cushion;
                    case ScenarioFocus::jaw: return e.kind == EventKind::rebound && e.surface == Surface::jaw;
                }
                return false;
            });
            if (!has_focus) continue;
            out.push_back(std::move(s));
            break;
        }
    }
    return out;
}

}  // namespace streamseg
