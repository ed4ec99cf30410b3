#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "streamseg/event_postprocess.hpp"
#include "streamseg/memory_bank.hpp"
#include "streamseg/propagation_engine.hpp"
#include "streamseg/synthetic_billiards.hpp"

namespace streamseg {

struct ThresholdOverrides {
    std::optional<double> near_pocket_radius;
    std::optional<double> velocity_change_threshold;
    std::optional<double> proximity_radius;
    std::optional<double> perpendicular_reversal_tolerance;
    std::optional<double> parallel_consistency_tolerance;
    std::optional<double> buffer_margin;
    std::optional<double> approach_speed_min;

    ThresholdConfig apply(ThresholdConfig base) const;
};

struct NoiseOverrides {
    std::optional<double> box_jitter_px;
    std::optional<double> dropout_prob;
    std::optional<int> mask_erosion_px;
    std::optional<std::vector<FrameIndex>> dropout_frames;
};

struct PipelineConfig {
    PropagationConfig propagation;
    ThresholdOverrides thresholds;
    NoiseOverrides noise;
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> frames;
    std::optional<bool> half_precision;
    std::optional<bool> offload_video;

    std::filesystem::path scenario_path;
    std::optional<std::filesystem::path> preload_path;
    std::optional<std::filesystem::path> out_events;
    std::optional<std::filesystem::path> out_memory_report;
    std::optional<std::filesystem::path> out_stats;
    std::optional<std::filesystem::path> out_truth;
    std::optional<std::filesystem::path> export_preload_path;
    std::vector<FrameIndex> export_frames;

    // Test hooks.
    std::chrono::microseconds consumer_delay{0};
    bool record_sequences = false;

    // Reads the JSON config; keys absent from the file keep their defaults.
    static PipelineConfig parse(std::string_view text);
    static PipelineConfig read_file(const std::filesystem::path& path);
    void validate() const;
};

// Applies config overrides to a scenario.
billiards::Scenario apply_overrides(billiards::Scenario scenario, const PipelineConfig& config);
ThresholdConfig thresholds_for(const billiards::Scenario& scenario, const ThresholdOverrides& overrides = {});

struct QueueItem {
    enum class Kind { frame, settings, end };
    Kind kind = Kind::frame;
    FrameIndex frame_idx = 0;
    std::int64_t revision = 0;
    std::shared_ptr<const ObjectMasks> masks;
    std::vector<PromptBox> scene;  // settings payload: pocket boxes
};

// Bounded single-producer single-consumer FIFO.
class FramesQueue {
public:
    explicit FramesQueue(std::size_t capacity);

    // Blocks while full. Returns false if the queue was aborted.
    bool push(QueueItem item);
    // Blocks while empty. Returns an end item once aborted.
    QueueItem pop();
    void abort();

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const;
    std::size_t peak_depth() const;
    std::int64_t blocked_pushes() const;

private:
    const std::size_t capacity_;
    mutable std::mutex mu_;
    std::condition_variable not_full_, not_empty_;
    std::deque<QueueItem> items_;
    std::size_t peak_ = 0;
    std::int64_t blocked_ = 0;
    bool aborted_ = false;
};

// Staging map of results awaiting consumption.
class VideoSegments {
public:
    void insert(FrameIndex frame, std::int64_t revision, std::shared_ptr<const ObjectMasks> masks);
    // Removes the entry when `revision` is still the stored one. Idempotent.
    bool release_consumed(FrameIndex frame, std::int64_t revision);
    // Blocks until the map plus the span holds at most `bound` frames.
    bool wait_for_room(const std::vector<FrameIndex>& span, std::size_t bound);
    void abort();

    std::size_t size() const;
    std::size_t peak() const;
    bool contains(FrameIndex frame) const;
    // Number of wait_for_room calls that had to block.
    std::int64_t blocked_waits() const;

private:
    struct Slot {
        std::int64_t revision;
        std::shared_ptr<const ObjectMasks> masks;
    };
    mutable std::mutex mu_;
    std::condition_variable released_;
    std::map<FrameIndex, Slot> slots_;
    std::size_t peak_ = 0;
    std::int64_t blocked_ = 0;
    bool aborted_ = false;
};

struct PipelineResult {
    EventLog log;
    std::vector<Event> truth;
    PropagationStats stats;
    bool partial = false;
    std::string failure;
    std::optional<ErrorCode> failure_code;

    std::size_t queue_capacity = 0;
    std::size_t queue_peak_depth = 0;
    std::int64_t blocked_pushes = 0;
    std::size_t queue_final_size = 0;
    std::size_t segments_peak = 0;
    std::size_t segments_final_size = 0;
    std::int64_t segments_blocked_waits = 0;
    std::int64_t items_pushed = 0;
    std::int64_t items_consumed = 0;
    bool geometry_ready = false;
    std::size_t peak_track_length = 0;
    std::map<ObjectId, std::int64_t> masks_per_object;
    std::optional<PreloadPayload> exported;
    std::size_t final_registry_size = 0;

    // Filled when record_sequences is on: (frame, revision) pairs.
    std::vector<std::pair<FrameIndex, std::int64_t>> pushed_sequence;
    std::vector<std::pair<FrameIndex, std::int64_t>> consumed_sequence;
    std::vector<std::string> ordering_violations;
};

// Runs producer and consumer on their own threads over an in-memory scenario.
PipelineResult run_pipeline(const billiards::Scenario& scenario, const PipelineConfig& config,
                            const PreloadPayload* preload = nullptr);
// Loads the scenario and preload named in the config, runs, writes reports.
PipelineResult run_configured(const PipelineConfig& config);
void write_reports(const PipelineResult& result, const PipelineConfig& config);

// ---------------------------------------------------------------------------
// Parameter sweep

struct BenchGrid {
    std::vector<std::int64_t> buffer_sizes;
    std::vector<std::optional<std::int64_t>> max_frames;
    std::vector<std::int64_t> detection_intervals;
    std::vector<std::optional<std::int64_t>> retentions;
    std::optional<std::filesystem::path> scenario_path;
    std::uint64_t seed = 7;
    std::int64_t frames = 200;

    static BenchGrid parse(std::string_view text);
    static BenchGrid read_file(const std::filesystem::path& path);
};

struct BenchRow {
    std::int64_t buffer_size = 0;
    std::optional<std::int64_t> max_frames;
    std::int64_t detection_interval = 0;
    std::optional<std::int64_t> retention;
    bool skipped = false;
    std::string skip_reason;
    std::int64_t frames_propagated_total = 0;
    std::size_t peak_resident_frames = 0;
    std::uint64_t peak_bytes = 0;
    double f1_goal = 0.0;
    double f1_collision = 0.0;
    double f1_rebound = 0.0;
};

std::vector<BenchRow> run_bench(const BenchGrid& grid);
void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

// Well-posed generated scenarios cycling through goal, collision, cushion
// rebound and jaw rebound focus, each containing an event of its focus kind.
std::vector<billiards::Scenario> make_scenario_suite(std::uint64_t base_seed, std::size_t count,
                                                     std::int64_t frames = 240);

}  // namespace streamseg
