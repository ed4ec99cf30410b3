#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "streamseg/frame_store.hpp"
#include "streamseg/types.hpp"

namespace streamseg {

using MemoryRow = std::vector<float>;

// Append-only id -> slot mapping. Slots of existing objects never move.
class ObjectRegistry {
public:
    std::size_t add(ObjectId id);
    bool contains(ObjectId id) const { return slot_of_.count(id) != 0; }
    std::size_t slot_of(ObjectId id) const;
    std::size_t size() const { return obj_ids_.size(); }
    const std::vector<ObjectId>& obj_ids() const { return obj_ids_; }
    bool operator==(const ObjectRegistry& o) const { return obj_ids_ == o.obj_ids_; }

private:
    std::vector<ObjectId> obj_ids_;
    std::unordered_map<ObjectId, std::size_t> slot_of_;
};

struct MemoryEntry {
    FrameIndex frame_idx = 0;
    bool is_condition = false;
    std::vector<MemoryRow> rows;  // one per registry slot at the last update
    std::size_t registry_size_at_update = 0;
};

struct PerObjectOutputs {
    std::map<FrameIndex, MemoryRow> cond_frame_outputs;
    std::map<FrameIndex, MemoryRow> non_cond_frame_outputs;
};

// Serialized bank used to seed inference on a new video.
struct PreloadPayload {
    static constexpr int kVersion = 1;

    struct Entry {
        FrameIndex frame_idx = 0;
        bool is_condition = true;
        std::vector<MemoryRow> rows;
        bool operator==(const Entry&) const = default;
    };

    int version = kVersion;
    std::size_t feature_dim = 0;
    std::vector<ObjectId> registry;
    std::vector<Entry> entries;

    bool operator==(const PreloadPayload&) const = default;

    std::string to_text() const;
    static PreloadPayload parse(std::string_view text);
    void write_file(const std::filesystem::path& path) const;
    static PreloadPayload read_file(const std::filesystem::path& path);
};

// Tracking direction of a propagation pass. Reverse passes walk from the
// newest frame backwards, so the already-refreshed side is above the frame.
enum class TrackDirection { forward, reverse };

class MemoryBank {
public:
    static constexpr std::size_t kDefaultFeatureDim = 4;

    explicit MemoryBank(std::size_t feature_dim = kDefaultFeatureDim);

    // Empty bank, or one seeded from a preload payload. Preload frames are
    // remapped onto -n..-1 (ascending source order) so they never collide with
    // the new video's indices.
    static MemoryBank init_state(std::size_t feature_dim, const PreloadPayload* preload = nullptr);

    void register_object(ObjectId id);

    // Reshapes entries within max_update_frames of current_idx, plus every
    // preload entry, to the current registry size. New rows are zero.
    // Returns the frames that were reshaped.
    std::vector<FrameIndex> update_memory_for_new_ids(FrameIndex current_idx,
                                                      std::optional<std::int64_t> max_update_frames);

    // Up to `limit` nearest current-shaped entries on the already-tracked side
    // of current_idx (below for forward, above for reverse), the nearest
    // `limit` current-shaped condition entries on the other side, and every
    // preload condition frame. Result is ascending.
    std::vector<FrameIndex> select_attention_frames(FrameIndex current_idx, std::size_t limit,
                                                    TrackDirection direction = TrackDirection::forward) const;

    // Stores a frame's memory. A condition entry stays a condition entry when
    // it is later refreshed as part of a propagation.
    void write_frame_output(FrameIndex frame_idx, bool is_condition, std::vector<MemoryRow> rows);

    // Drops every non-preload entry older than the retention window that ends
    // at current_idx (exactly `retention` frames are kept). Returns the
    // released indices in ascending order.
    std::vector<FrameIndex> release_old_frames(FrameIndex current_idx, std::int64_t retention);

    PreloadPayload export_preload(const std::vector<FrameIndex>& frame_indices) const;

    const MemoryEntry* entry(FrameIndex frame_idx) const;
    bool has_entry(FrameIndex frame_idx) const { return entries_.count(frame_idx) != 0; }
    bool is_current_shaped(const MemoryEntry& e) const { return e.registry_size_at_update == registry_.size(); }
    // True when frame_idx carries a non-null memory row for obj.
    bool has_memory(FrameIndex frame_idx, ObjectId obj) const;
    bool has_condition_entry() const { return !consolidated_frame_inds_.empty(); }

    std::set<FrameIndex> cond_frame_indices() const;
    std::set<FrameIndex> non_cond_frame_indices() const;
    const std::set<FrameIndex>& consolidated_frame_inds() const { return consolidated_frame_inds_; }
    const std::set<FrameIndex>& preload_frame_inds() const { return preload_frame_inds_; }
    const std::map<ObjectId, PerObjectOutputs>& per_obj_outputs() const { return per_obj_outputs_; }
    const ObjectRegistry& registry() const { return registry_; }
    std::size_t feature_dim() const { return feature_dim_; }
    std::size_t entry_count() const { return entries_.size(); }
    std::size_t video_entry_count() const { return entries_.size() - preload_frame_inds_.size(); }
    MemoryRow null_row() const { return MemoryRow(feature_dim_, 0.0f); }

    // Human-readable list of broken structural invariants; empty when sound.
    std::vector<std::string> invariant_violations() const;

private:
    void mirror_entry(const MemoryEntry& e);
    void unmirror(FrameIndex frame_idx);
    void erase_entry(FrameIndex frame_idx);

    std::size_t feature_dim_;
    std::map<FrameIndex, MemoryEntry> entries_;
    std::map<ObjectId, PerObjectOutputs> per_obj_outputs_;
    std::set<FrameIndex> consolidated_frame_inds_;
    std::set<FrameIndex> preload_frame_inds_;
    std::map<FrameIndex, FrameIndex> preload_source_idx_;
    ObjectRegistry registry_;
};

// Evicts the same old frames from the bank and the paired frame store.
std::vector<FrameIndex> release_old_frames(MemoryBank& bank, FrameStore& store, FrameIndex current_idx,
                                           std::int64_t retention);

}  // namespace streamseg
