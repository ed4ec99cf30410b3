#pragma once

#include <any>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "streamseg/types.hpp"

namespace streamseg {

enum class Precision { single, half };
enum class StorageTier { fast, slow };

struct FrameRecord {
    FrameIndex global_idx = 0;
    int native_width = 1920;
    int native_height = 1080;
    int internal_side = 1024;
    std::any payload;
    Precision precision = Precision::single;
    StorageTier tier = StorageTier::fast;

    // Bytes of the native-resolution RGB float buffer.
    std::uint64_t native_bytes() const;
    // Bytes of the square model-input tensor at the record's precision.
    std::uint64_t internal_bytes() const;
    std::uint64_t total_bytes() const { return native_bytes() + internal_bytes(); }
};

struct Footprint {
    std::uint64_t fast_bytes = 0;
    std::uint64_t slow_bytes = 0;
    std::uint64_t total() const { return fast_bytes + slow_bytes; }
};

// One row of the per-step memory report.
struct MemoryReportRow {
    std::size_t frame_count_resident = 0;
    std::uint64_t fast_bytes = 0;
    std::uint64_t slow_bytes = 0;
    std::int64_t num_frames_total = 0;
};

// Frame payloads held under a non-contiguous index mapping. Lookup always goes
// through images_idx, so evicting old frames never shifts the meaning of a
// global index. Preloaded frames (negative indices borrowed from another
// video) are kept apart from images_idx and are never released.
class FrameStore {
public:
    void append_frames(std::vector<FrameRecord> frames);
    const FrameRecord& get_frame(FrameIndex frame_idx) const;
    bool contains(FrameIndex frame_idx) const;

    // Removes every video frame older than cutoff that is not protected.
    void release_frames_before(FrameIndex cutoff, const std::set<FrameIndex>& protected_idx = {});

    void attach_preload(FrameRecord record);

    std::uint64_t footprint_bytes() const { return footprint().total(); }
    Footprint footprint() const;
    MemoryReportRow report_row() const;

    const std::vector<FrameIndex>& images_idx() const { return images_idx_; }
    std::int64_t num_frames_total() const { return num_frames_total_; }
    std::size_t video_frame_count() const { return records_.size(); }
    std::size_t preload_count() const { return preload_.size(); }
    std::size_t resident_count() const { return records_.size() + preload_.size(); }
    bool empty() const { return resident_count() == 0; }

private:
    std::vector<FrameRecord> records_;
    std::vector<FrameIndex> images_idx_;
    std::map<FrameIndex, FrameRecord> preload_;
    std::int64_t num_frames_total_ = 0;
};

}  // namespace streamseg
