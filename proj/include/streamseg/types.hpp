#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace streamseg {

using FrameIndex = std::int64_t;
using ObjectId = std::int64_t;

enum class ErrorCode {
    index_gap,
    missing_frame,
    already_registered,
    shape_mismatch,
    format,
    config,
    ordering,
    duplicate_prompt,
    no_prompt,
    geometry,
    io,
};

const char* to_string(ErrorCode code);

// Every failure raised by the library carries a code so callers (and the CLI
// exit-code mapping) can branch without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
    Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
    bool operator==(const Vec2&) const = default;

    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
    Vec2 normalized() const {
        const double n = norm();
        return n > 0.0 ? Vec2{x / n, y / n} : Vec2{};
    }
};

// Axis-aligned box in native pixels.
struct Box {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    Vec2 center() const { return {(x_min + x_max) / 2.0, (y_min + y_max) / 2.0}; }
    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    bool valid() const { return x_min < x_max && y_min < y_max; }
    bool operator==(const Box&) const = default;
};

// Binary mask stored over its bounding window; pixel (x0 + i, y0 + j) is set
// when bits[j * width + i] != 0. Pixel coordinates are the integer lattice.
struct Mask {
    int x0 = 0;
    int y0 = 0;
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    bool at(int x, int y) const {
        const int i = x - x0;
        const int j = y - y0;
        if (i < 0 || j < 0 || i >= width || j >= height) return false;
        return bits[static_cast<std::size_t>(j) * width + i] != 0;
    }
    std::size_t area() const;
    bool empty() const { return area() == 0; }
    bool operator==(const Mask&) const = default;
};

}  // namespace streamseg
