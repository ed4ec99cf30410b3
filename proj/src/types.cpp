#include "streamseg/types.hpp"

#include <algorithm>

namespace streamseg {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::index_gap: return "index-gap";
        case ErrorCode::missing_frame: return "missing-frame";
        case ErrorCode::already_registered: return "already-registered";
        case ErrorCode::shape_mismatch: return "shape-mismatch";
        case ErrorCode::format: return "format";
        case ErrorCode::config: return "config";
        case ErrorCode::ordering: return "ordering";
        case ErrorCode::duplicate_prompt: return "duplicate-prompt";
        case ErrorCode::no_prompt: return "no-prompt";
        case ErrorCode::geometry: return "geometry";
        case ErrorCode::io: return "io";
    }
    return "unknown";
}

std::size_t Mask::area() const {
    return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

}  // namespace streamseg
