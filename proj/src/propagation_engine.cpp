#include "streamseg/propagation_engine.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>
#include <string>

namespace streamseg {

void PropagationConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::config, msg); };
    if (buffer_size < 1) fail("buffer size must be at least 1");
    if (detection_interval < 1) fail("detection interval must be at least 1");
    if (condition_phase < 0 || condition_phase >= detection_interval) fail("condition phase must lie in [0, D)");
    if (attention_limit < 1) fail("attention limit must be at least 1");
    if (max_frames_to_track && *max_frames_to_track < buffer_size) {
        fail("max frames to track (" + std::to_string(*max_frames_to_track) + ") must cover the buffer size (" +
             std::to_string(buffer_size) + ")");
    }
    if (retention) {
        if (!max_frames_to_track) fail("a bounded retention requires a bounded max frames to track");
        if (*retention <= *max_frames_to_track) {
            fail("retention (" + std::to_string(*retention) + ") must exceed max frames to track (" +
                 std::to_string(*max_frames_to_track) + ")");
        }
        if (*retention < detection_interval) {
            fail("retention (" + std::to_string(*retention) + ") must cover the detection interval (" +
                 std::to_string(detection_interval) + ")");
        }
    }
    if (update_window && *update_window < 1) fail("update window must be at least 1");
}

MemoryRow encode_mask_row(const Mask& mask, std::size_t feature_dim) {
    double sx = 0.0, sy = 0.0;
    std::size_t n = 0;
    for (int j = 0; j < mask.height; ++j) {
        for (int i = 0; i < mask.width; ++i) {
            if (mask.bits[static_cast<std::size_t>(j) * mask.width + i] == 0) continue;
            sx += mask.x0 + i;
            sy += mask.y0 + j;
            ++n;
        }
    }
    const double cx = n ? sx / n : 0.0;
    const double cy = n ? sy / n : 0.0;
    const float values[4] = {1.0f, static_cast<float>(cx / 1000.0), static_cast<float>(cy / 1000.0),
                             static_cast<float>(std::sqrt(static_cast<double>(n)) / 100.0)};
    MemoryRow row(feature_dim, 0.0f);
    std::copy_n(values, std::min<std::size_t>(4, feature_dim), row.begin());
    return row;
}

MemoryRow encode_prompt_row(const PromptBox& prompt, std::size_t feature_dim) {
    const Vec2 c = prompt.box.center();
    const float values[4] = {1.0f, static_cast<float>(c.x / 1000.0), static_cast<float>(c.y / 1000.0),
                             static_cast<float>(std::sqrt(prompt.box.width() * prompt.box.height()) / 100.0)};
    MemoryRow row(feature_dim, 0.0f);
    std::copy_n(values, std::min<std::size_t>(4, feature_dim), row.begin());
    return row;
}

std::vector<FrameIndex> designate_condition_frames(const std::vector<FrameIndex>& flushed, std::int64_t interval,
                                                   std::int64_t phase) {
    std::vector<FrameIndex> out;
    for (FrameIndex i : flushed) {
        if (i % interval == phase) out.push_back(i);
    }
    return out;
}

void apply_prompts(MemoryBank& bank, FrameIndex frame_idx, const std::vector<PromptBox>& boxes,
                   std::optional<std::int64_t> update_window) {
    std::set<ObjectId> seen;
    for (const auto& b : boxes) {
        if (!seen.insert(b.obj_id).second) {
            throw Error(ErrorCode::duplicate_prompt, "frame " + std::to_string(frame_idx) +
                                                         " has more than one prompt for object " +
                                                         std::to_string(b.obj_id));
        }
        if (!b.box.valid()) {
            throw Error(ErrorCode::format, "degenerate prompt box for object " + std::to_string(b.obj_id));
        }
    }
    bool registered = false;
    for (const auto& b : boxes) {
        if (!bank.registry().contains(b.obj_id)) {
            bank.register_object(b.obj_id);
            registered = true;
        }
    }
    if (registered) bank.update_memory_for_new_ids(frame_idx, update_window);
    if (boxes.empty()) return;

    const auto& ids = bank.registry().obj_ids();
    const MemoryEntry* prior = bank.entry(frame_idx);
    std::vector<MemoryRow> rows;
    rows.reserve(ids.size());
    for (std::size_t slot = 0; slot < ids.size(); ++slot) {
        auto it = std::find_if(boxes.begin(), boxes.end(), [&](const PromptBox& b) { return b.obj_id == ids[slot]; });
        if (it != boxes.end()) {
            rows.push_back(encode_prompt_row(*it, bank.feature_dim()));
        } else if (prior != nullptr && slot < prior->rows.size()) {
            rows.push_back(prior->rows[slot]);
        } else {
            rows.push_back(bank.null_row());
        }
    }
    bank.write_frame_output(frame_idx, true, std::move(rows));
}

StreamEngine::StreamEngine(PropagationConfig config, Detector& detector, Segmenter& segmenter, MemoryBank bank,
                           FrameStore store, Validation validation)
    : config_(std::move(config)),
      detector_(detector),
      segmenter_(segmenter),
      bank_(std::move(bank)),
      store_(std::move(store)) {
    if (validation == Validation::enforce) config_.validate();
}

std::optional<PropagationResult> StreamEngine::ingest_frame(FrameRecord frame) {
    const FrameIndex expected = store_.num_frames_total() + static_cast<FrameIndex>(pending_.size());
    if (frame.global_idx != expected) {
        throw Error(ErrorCode::ordering, "frame " + std::to_string(frame.global_idx) + " arrived, expected " +
                                             std::to_string(expected));
    }
    pending_.push_back(std::move(frame));
    if (static_cast<std::int64_t>(pending_.size()) < config_.buffer_size) return std::nullopt;
    return flush();
}

std::optional<PropagationResult> StreamEngine::finish() {
    if (pending_.empty()) return std::nullopt;
    return flush();
}

PropagationResult StreamEngine::flush() {
    std::vector<FrameIndex> indices;
    indices.reserve(pending_.size());
    for (const auto& f : pending_) indices.push_back(f.global_idx);
    store_.append_frames(std::move(pending_));
    pending_.clear();

    for (FrameIndex c : designate_condition_frames(indices, config_.detection_interval, config_.condition_phase)) {
        auto boxes = detector_.detect(store_.get_frame(c));
        ++stats_.detector_calls;
        std::vector<PromptBox> scene, tracked;
        for (auto& b : boxes) (is_scene_id(b.obj_id) ? scene : tracked).push_back(std::move(b));
        if (!scene.empty() && scene_observer_) scene_observer_(c, scene);
        apply_prompts(bank_, c, tracked, config_.effective_update_window());
        if (!tracked.empty()) prompt_cache_[c] = std::move(tracked);
    }

    PropagationResult result = propagate(indices.back());

    if (config_.retention) {
        const FrameIndex head = indices.back();
        auto released = release_old_frames(bank_, store_, head, *config_.retention);
        const FrameIndex cutoff = head - *config_.retention + 1;
        prompt_cache_.erase(prompt_cache_.begin(), prompt_cache_.lower_bound(cutoff));
        if (record_visits_) stats_.releases.push_back(std::move(released));
    } else if (record_visits_) {
        stats_.releases.emplace_back();
    }
    // The floor is only meaningful once the stream has filled the retention window.
    if (!config_.retention || indices.back() + 1 >= *config_.retention) {
        stats_.floor_resident_frames = std::min(stats_.floor_resident_frames, store_.resident_count());
    }
    return result;
}

PropagationResult StreamEngine::propagate(FrameIndex head) {
    if (!bank_.has_condition_entry()) {
        throw Error(ErrorCode::no_prompt, "no condition frame anywhere in the memory bank; cannot propagate to frame " +
                                              std::to_string(head));
    }
    const auto& idx = store_.images_idx();
    if (idx.empty() || !store_.contains(head)) {
        throw Error(ErrorCode::missing_frame, "propagation head " + std::to_string(head) + " is not resident");
    }

    const FrameIndex lowest = config_.max_frames_to_track
                                  ? std::max<FrameIndex>(head - *config_.max_frames_to_track + 1, 0)
                                  : FrameIndex{0};
    // Every frame within M of the head must still be resident when attention runs.
    const FrameIndex required = config_.max_frames_to_track
                                    ? std::max<FrameIndex>(head - *config_.max_frames_to_track, 0)
                                    : FrameIndex{0};
    if (idx.front() > required) ++stats_.eviction_violations;

    const FrameIndex stop = std::max(lowest, idx.front());
    std::vector<FrameIndex> visits;
    PropagationResult result;
    result.head = head;
    result.frames.reserve(static_cast<std::size_t>(head - stop + 1));

    for (FrameIndex f = head; f >= stop; --f) {
        const FrameRecord& frame = store_.get_frame(f);
        auto cached = prompt_cache_.find(f);
        static const std::vector<PromptBox> kNoPrompts;
        const auto& prompts = cached != prompt_cache_.end() ? cached->second : kNoPrompts;
        const auto attention = bank_.select_attention_frames(f, config_.attention_limit, TrackDirection::reverse);

        ObjectMasks masks = segmenter_.segment(frame, prompts, bank_, attention);

        const auto& ids = bank_.registry().obj_ids();
        std::vector<MemoryRow> rows;
        rows.reserve(ids.size());
        for (ObjectId id : ids) {
            auto m = masks.find(id);
            rows.push_back(m != masks.end() && !m->second.empty() ? encode_mask_row(m->second, bank_.feature_dim())
                                                                   : bank_.null_row());
        }
        const bool is_condition = cached != prompt_cache_.end();
        bank_.write_frame_output(f, is_condition, std::move(rows));
        result.frames.push_back({f, is_condition, std::move(masks)});
        if (record_visits_) visits.push_back(f);
    }
    std::reverse(result.frames.begin(), result.frames.end());

    const std::int64_t span = head - stop + 1;
    stats_.frames_propagated_total += span;
    ++stats_.propagation_calls;
    const MemoryReportRow mem = store_.report_row();
    stats_.trace.push_back({stats_.propagation_calls, head, span, stats_.frames_propagated_total, mem});
    stats_.peak_resident_frames = std::max(stats_.peak_resident_frames, mem.frame_count_resident);
    stats_.peak_bytes = std::max(stats_.peak_bytes, mem.fast_bytes + mem.slow_bytes);
    if (record_visits_) stats_.visits.push_back(std::move(visits));
    return result;
}

PropagationStats run_stream(StreamEngine& engine, FrameSource& source, std::int64_t n,
                            const std::function<void(const PropagationResult&)>& sink) {
    for (std::int64_t i = 0; i < n; ++i) {
        auto frame = source.next();
        if (!frame) break;
        if (auto r = engine.ingest_frame(std::move(*frame)); r && sink) sink(*r);
    }
    if (auto r = engine.finish(); r && sink) sink(*r);
    return engine.stats();
}

void write_stats_csv(std::ostream& out, const PropagationStats& stats) {
    out << "call_no,head_idx,span,frames_propagated_total,resident_frames,fast_bytes,slow_bytes\n";
    for (const auto& c : stats.trace) {
        out << c.call_no << ',' << c.head << ',' << c.span << ',' << c.frames_propagated_total << ','
            << c.memory.frame_count_resident << ',' << c.memory.fast_bytes << ',' << c.memory.slow_bytes << '\n';
    }
}

void write_memory_report_csv(std::ostream& out, const PropagationStats& stats) {
    out << "frame_count_resident,fast_bytes,slow_bytes,num_frames_total\n";
    for (const auto& c : stats.trace) {
        out << c.memory.frame_count_resident << ',' << c.memory.fast_bytes << ',' << c.memory.slow_bytes << ','
            << c.memory.num_frames_total << '\n';
    }
}

}  // namespace streamseg
