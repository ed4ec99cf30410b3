#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "streamseg/frame_store.hpp"
#include "streamseg/memory_bank.hpp"
#include "streamseg/types.hpp"

namespace streamseg {

// Streaming schedule knobs. Unset optionals mean "unbounded".
struct PropagationConfig {
    std::int64_t buffer_size = 10;                     // K
    std::optional<std::int64_t> max_frames_to_track;  // M
    std::int64_t detection_interval = 1;               // D
    std::int64_t condition_phase = 0;
    std::optional<std::int64_t> retention;             // max_inference_state_frames
    std::size_t attention_limit = 7;
    std::optional<std::int64_t> update_window;         // defaults to retention

    void validate() const;
    std::optional<std::int64_t> effective_update_window() const {
        return update_window ? update_window : retention;
    }
};

// Ids at or above this value are scene landmarks (pockets), never tracked objects.
inline constexpr ObjectId kSceneIdBase = 1'000'000;
inline bool is_scene_id(ObjectId id) { return id >= kSceneIdBase; }

struct PromptBox {
    ObjectId obj_id = 0;
    Box box;
    double score = 1.0;
    bool operator==(const PromptBox&) const = default;
};

using ObjectMasks = std::map<ObjectId, Mask>;

class Detector {
public:
    virtual ~Detector() = default;
    virtual std::vector<PromptBox> detect(const FrameRecord& frame) = 0;
};

class Segmenter {
public:
    virtual ~Segmenter() = default;
    virtual ObjectMasks segment(const FrameRecord& frame, const std::vector<PromptBox>& prompts,
                                const MemoryBank& bank, const std::vector<FrameIndex>& attention_frames) = 0;
};

class FrameSource {
public:
    virtual ~FrameSource() = default;
    virtual std::optional<FrameRecord> next() = 0;
};

struct PropagationCall {
    std::int64_t call_no = 0;
    FrameIndex head = 0;
    std::int64_t span = 0;
    std::int64_t frames_propagated_total = 0;
    MemoryReportRow memory;
};

struct PropagationStats {
    std::int64_t frames_propagated_total = 0;
    std::int64_t propagation_calls = 0;
    std::int64_t detector_calls = 0;
    std::vector<PropagationCall> trace;
    // Visit order per call; filled only when visit recording is enabled.
    std::vector<std::vector<FrameIndex>> visits;
    // Per-call released indices; filled only when visit recording is enabled.
    std::vector<std::vector<FrameIndex>> releases;

    // Propagations that found a frame within M of the head already evicted.
    std::int64_t eviction_violations = 0;
    std::size_t peak_resident_frames = 0;
    std::size_t floor_resident_frames = std::numeric_limits<std::size_t>::max();
    std::uint64_t peak_bytes = 0;
};

struct FramePrediction {
    FrameIndex frame_idx = 0;
    bool is_condition = false;
    ObjectMasks masks;
};

struct PropagationResult {
    FrameIndex head = 0;
    std::vector<FramePrediction> frames;  // ascending frame order
};

// Memory rows are a compact summary of a mask or a prompt box; any row
// produced here is non-null.
MemoryRow encode_mask_row(const Mask& mask, std::size_t feature_dim);
MemoryRow encode_prompt_row(const PromptBox& prompt, std::size_t feature_dim);

std::vector<FrameIndex> designate_condition_frames(const std::vector<FrameIndex>& flushed, std::int64_t interval,
                                                   std::int64_t phase = 0);

// Registers unseen ids (with a windowed memory back-update) and records the
// frame as a condition frame when at least one box is given.
void apply_prompts(MemoryBank& bank, FrameIndex frame_idx, const std::vector<PromptBox>& boxes,
                   std::optional<std::int64_t> update_window);

class StreamEngine {
public:
    enum class Validation { enforce, skip };
    using SceneObserver = std::function<void(FrameIndex, const std::vector<PromptBox>&)>;

    StreamEngine(PropagationConfig config, Detector& detector, Segmenter& segmenter, MemoryBank bank = MemoryBank{},
                 FrameStore store = FrameStore{}, Validation validation = Validation::enforce);

    // Buffers a frame; returns the propagation result when the buffer fills.
    std::optional<PropagationResult> ingest_frame(FrameRecord frame);
    // Flushes a partially filled buffer at end of stream.
    std::optional<PropagationResult> finish();

    PropagationResult propagate(FrameIndex head);

    void set_scene_observer(SceneObserver observer) { scene_observer_ = std::move(observer); }
    void record_visits(bool on) { record_visits_ = on; }

    const PropagationConfig& config() const { return config_; }
    const PropagationStats& stats() const { return stats_; }
    const MemoryBank& bank() const { return bank_; }
    const FrameStore& frames() const { return store_; }
    std::size_t pending() const { return pending_.size(); }
    const std::map<FrameIndex, std::vector<PromptBox>>& prompt_cache() const { return prompt_cache_; }

private:
    PropagationResult flush();

    PropagationConfig config_;
    Detector& detector_;
    Segmenter& segmenter_;
    MemoryBank bank_;
    FrameStore store_;
    std::vector<FrameRecord> pending_;
    std::map<FrameIndex, std::vector<PromptBox>> prompt_cache_;
    PropagationStats stats_;
    SceneObserver scene_observer_;
    bool record_visits_ = false;
};

// Full ingest -> flush -> propagate loop over up to n frames of the source.
PropagationStats run_stream(StreamEngine& engine, FrameSource& source, std::int64_t n,
                            const std::function<void(const PropagationResult&)>& sink = {});

// call_no,head_idx,span,frames_propagated_total,resident_frames,fast_bytes,slow_bytes
void write_stats_csv(std::ostream& out, const PropagationStats& stats);
// frame_count_resident,fast_bytes,slow_bytes,num_frames_total
void write_memory_report_csv(std::ostream& out, const PropagationStats& stats);

}  // namespace streamseg
