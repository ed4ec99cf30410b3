#include "streamseg/frame_store.hpp"

#include <algorithm>
#include <string>

namespace streamseg {

std::uint64_t FrameRecord::native_bytes() const {
    return static_cast<std::uint64_t>(native_width) * static_cast<std::uint64_t>(native_height) * 3u * 4u;
}

std::uint64_t FrameRecord::internal_bytes() const {
    const std::uint64_t side = static_cast<std::uint64_t>(internal_side);
    return side * side * 3u * (precision == Precision::single ? 4u : 2u);
}

namespace {

void check_dimensions(const FrameRecord& r) {
    if (r.native_width <= 0 || r.native_height <= 0 || r.internal_side <= 0) {
        throw Error(ErrorCode::format, "frame " + std::to_string(r.global_idx) + " has non-positive dimensions");
    }
}

}  // namespace

void FrameStore::append_frames(std::vector<FrameRecord> frames) {
    FrameIndex expected = num_frames_total_;
    for (const auto& f : frames) {
        if (f.global_idx != expected) {
            throw Error(ErrorCode::index_gap, "expected frame " + std::to_string(expected) + ", got " +
                                                  std::to_string(f.global_idx));
        }
        check_dimensions(f);
        ++expected;
    }
    for (auto& f : frames) {
        images_idx_.push_back(f.global_idx);
        records_.push_back(std::move(f));
    }
    num_frames_total_ = expected;
}

const FrameRecord& FrameStore::get_frame(FrameIndex frame_idx) const {
    if (frame_idx < 0) {
        auto it = preload_.find(frame_idx);
        if (it == preload_.end()) {
            throw Error(ErrorCode::missing_frame, "preload frame " + std::to_string(frame_idx) + " not resident");
        }
        return it->second;
    }
    auto it = std::lower_bound(images_idx_.begin(), images_idx_.end(), frame_idx);
    if (it == images_idx_.end() || *it != frame_idx) {
        throw Error(ErrorCode::missing_frame, "frame " + std::to_string(frame_idx) + " not resident");
    }
    return records_[static_cast<std::size_t>(it - images_idx_.begin())];
}

bool FrameStore::contains(FrameIndex frame_idx) const {
    if (frame_idx < 0) return preload_.count(frame_idx) != 0;
    return std::binary_search(images_idx_.begin(), images_idx_.end(), frame_idx);
}

void FrameStore::release_frames_before(FrameIndex cutoff, const std::set<FrameIndex>& protected_idx) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const FrameIndex idx = images_idx_[i];
        if (idx < cutoff && protected_idx.count(idx) == 0) continue;
        if (out != i) {
            records_[out] = std::move(records_[i]);
            images_idx_[out] = idx;
        }
        ++out;
    }
    records_.resize(out);
    images_idx_.resize(out);
}

void FrameStore::attach_preload(FrameRecord record) {
    if (record.global_idx >= 0) {
        throw Error(ErrorCode::format, "preload frames must use the reserved negative index range");
    }
    check_dimensions(record);
    const FrameIndex idx = record.global_idx;
    if (!preload_.emplace(idx, std::move(record)).second) {
        throw Error(ErrorCode::format, "duplicate preload frame " + std::to_string(idx));
    }
}

Footprint FrameStore::footprint() const {
    Footprint fp;
    auto charge = [&fp](const FrameRecord& r) {
        (r.tier == StorageTier::fast ? fp.fast_bytes : fp.slow_bytes) += r.total_bytes();
    };
    for (const auto& r : records_) charge(r);
    for (const auto& [idx, r] : preload_) charge(r);
    return fp;
}

MemoryReportRow FrameStore::report_row() const {
    const Footprint fp = footprint();
    return {resident_count(), fp.fast_bytes, fp.slow_bytes, num_frames_total_};
}

}  // namespace streamseg
