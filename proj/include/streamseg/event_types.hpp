#pragma once

#include <array>
#include <compare>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "streamseg/types.hpp"

namespace streamseg {

enum class PocketName { TL, TM, TR, BL, BM, BR };
enum class Side { top, bottom, left, right };
enum class EventKind { goal, collision, rebound };
// What a rebound bounced off; only meaningful for rebounds.
enum class Surface { none, cushion, jaw };

inline constexpr std::array<PocketName, 6> kAllPockets = {PocketName::TL, PocketName::TM, PocketName::TR,
                                                           PocketName::BL, PocketName::BM, PocketName::BR};
inline constexpr std::array<Side, 4> kAllSides = {Side::top, Side::bottom, Side::left, Side::right};

const char* to_string(PocketName p);
const char* to_string(Side s);
const char* to_string(EventKind k);
const char* to_string(Surface s);
std::optional<PocketName> pocket_from_string(std::string_view s);
std::optional<Side> side_from_string(std::string_view s);
std::optional<EventKind> event_kind_from_string(std::string_view s);

// One event as exchanged in JSON-lines files. `balls` is sorted; `location`
// is a pocket name for goals, a boundary name for rebounds, empty otherwise.
struct Event {
    EventKind kind = EventKind::goal;
    FrameIndex frame = 0;
    std::vector<ObjectId> balls;
    std::string location;
    Surface surface = Surface::none;

    auto operator<=>(const Event& o) const {
        if (auto c = frame <=> o.frame; c != 0) return c;
        if (auto c = kind <=> o.kind; c != 0) return c;
        if (auto c = balls <=> o.balls; c != 0) return c;
        return location <=> o.location;
    }
    bool operator==(const Event& o) const {
        return kind == o.kind && frame == o.frame && balls == o.balls && location == o.location;
    }
};

std::string event_to_json_line(const Event& e);
Event event_from_json_line(std::string_view line);
std::vector<Event> read_events_jsonl(std::istream& in);
void write_events_jsonl(std::ostream& out, const std::vector<Event>& events);

}  // namespace streamseg
