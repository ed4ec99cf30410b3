#include "streamseg/event_types.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace streamseg {

using nlohmann::json;

const char* to_string(PocketName p) {
    switch (p) {
        case PocketName::TL: return "TL";
        case PocketName::TM: return "TM";
        case PocketName::TR: return "TR";
        case PocketName::BL: return "BL";
        case PocketName::BM: return "BM";
        case PocketName::BR: return "BR";
    }
    return "?";
}

const char* to_string(Side s) {
    switch (s) {
        case Side::top: return "top";
        case Side::bottom: return "bottom";
        case Side::left: return "left";
        case Side::right: return "right";
    }
    return "?";
}

const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::goal: return "goal";
        case EventKind::collision: return "collision";
        case EventKind::rebound: return "rebound";
    }
    return "?";
}

const char* to_string(Surface s) {
    switch (s) {
        case Surface::none: return "none";
        case Surface::cushion: return "cushion";
        case Surface::jaw: return "jaw";
    }
    return "?";
}

std::optional<PocketName> pocket_from_string(std::string_view s) {
    for (PocketName p : kAllPockets) {
        if (s == to_string(p)) return p;
    }
    return std::nullopt;
}

std::optional<Side> side_from_string(std::string_view s) {
    for (Side side : kAllSides) {
        if (s == to_string(side)) return side;
    }
    return std::nullopt;
}

std::optional<EventKind> event_kind_from_string(std::string_view s) {
    for (EventKind k : {EventKind::goal, EventKind::collision, EventKind::rebound}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

std::string event_to_json_line(const Event& e) {
    json j;
    j["kind"] = to_string(e.kind);
    j["frame"] = e.frame;
    j["balls"] = e.balls;
    j["location"] = e.location.empty() ? json(nullptr) : json(e.location);
    if (e.kind == EventKind::rebound && e.surface != Surface::none) j["surface"] = to_string(e.surface);
    return j.dump();
}

Event event_from_json_line(std::string_view line) {
    try {
        const json j = json::parse(line);
        Event e;
        auto kind = event_kind_from_string(j.at("kind").get<std::string>());
        if (!kind) throw Error(ErrorCode::format, "unknown event kind in: " + std::string(line));
        e.kind = *kind;
        e.frame = j.at("frame").get<FrameIndex>();
        e.balls = j.at("balls").get<std::vector<ObjectId>>();
        std::sort(e.balls.begin(), e.balls.end());
        if (j.contains("location") && !j["location"].is_null()) e.location = j["location"].get<std::string>();
        if (j.contains("surface")) {
            const auto s = j["surface"].get<std::string>();
            e.surface = s == "jaw" ? Surface::jaw : s == "cushion" ? Surface::cushion : Surface::none;
        }
        return e;
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::format, std::string("malformed event line: ") + ex.what());
    }
}

std::vector<Event> read_events_jsonl(std::istream& in) {
    std::vector<Event> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        out.push_back(event_from_json_line(line));
    }
    return out;
}

void write_events_jsonl(std::ostream& out, const std::vector<Event>& events) {
    for (const auto& e : events) out << event_to_json_line(e) << '\n';
}

}  // namespace streamseg
