#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "streamseg/event_types.hpp"
#include "streamseg/propagation_engine.hpp"
#include "streamseg/types.hpp"

namespace streamseg {

// Mean of set-pixel coordinates; nullopt for an empty mask.
std::optional<Vec2> compute_centroid(const Mask& mask);

class BallTrack {
public:
    void set(FrameIndex f, Vec2 centroid) { centroids_[f] = centroid; }
    void erase(FrameIndex f) { centroids_.erase(f); }
    bool present(FrameIndex f) const { return centroids_.count(f) != 0; }
    std::optional<Vec2> centroid(FrameIndex f) const;
    // c(f) - c(f-1); needs both frames.
    std::optional<Vec2> velocity(FrameIndex f) const;
    // v(f) - v(f-1); needs three consecutive centroids.
    std::optional<Vec2> acceleration(FrameIndex f) const;
    void prune_before(FrameIndex f);
    bool empty() const { return centroids_.empty(); }
    std::size_t size() const { return centroids_.size(); }

private:
    std::map<FrameIndex, Vec2> centroids_;
};

class TrackSet {
public:
    // Replaces everything known about frame f with the given masks.
    void set_frame(FrameIndex f, const ObjectMasks& masks);
    const BallTrack* track(ObjectId id) const;
    std::vector<ObjectId> ids() const;
    void prune_before(FrameIndex f);
    std::size_t max_track_length() const;

private:
    std::map<ObjectId, BallTrack> tracks_;
};

struct ThresholdConfig {
    double near_pocket_radius = 66.0;
    double velocity_change_threshold = 0.3;
    double proximity_radius = 66.0;
    double perpendicular_reversal_tolerance = 0.3;
    double parallel_consistency_tolerance = 0.25;
    double buffer_margin = 22.5;
    // Minimum incoming speed toward a boundary for it to count as approached.
    double approach_speed_min = 0.15;

    static ThresholdConfig defaults_for(double pocket_radius, double friction_decel, double ball_radius);
    void validate() const;
};

struct TableGeometry {
    double top = 0.0;
    double bottom = 0.0;
    double left = 0.0;
    double right = 0.0;
    double buffer_margin = 0.0;
    double near_pocket_radius = 0.0;
    std::map<PocketName, Vec2> pockets;

    // Distance from the boundary line, positive toward the table interior.
    double inside_distance(Side s, Vec2 p) const;
    bool in_buffer(Side s, Vec2 p) const { return inside_distance(s, p) <= buffer_margin; }
    static Vec2 inward_normal(Side s);
};

// Names the six pockets by position and fits the four boundaries.
TableGeometry derive_geometry(const std::vector<Vec2>& pocket_centers, const ThresholdConfig& thresholds);

struct GoalRecord {
    FrameIndex frame = 0;
    PocketName pocket = PocketName::TL;
    bool operator==(const GoalRecord&) const = default;
};

struct ReboundRecord {
    Side side = Side::top;
    Surface surface = Surface::cushion;
    bool operator==(const ReboundRecord&) const = default;
};

using BallPair = std::pair<ObjectId, ObjectId>;

std::optional<GoalRecord> detect_goal(const TrackSet& tracks, const TableGeometry& geometry, ObjectId ball,
                                      FrameIndex frame);
std::set<BallPair> detect_collision(const TrackSet& tracks, FrameIndex frame, const ThresholdConfig& thresholds);
std::optional<ReboundRecord> detect_rebound(const TrackSet& tracks, const TableGeometry& geometry, ObjectId ball,
                                            FrameIndex frame, const ThresholdConfig& thresholds,
                                            const std::set<BallPair>& collisions);

// One change to the log. `revision_counter` is the revision of the frame
// data that produced the change; `retracted` marks removals.
struct JournalEntry {
    Event event;
    std::int64_t revision_counter = 1;
    bool retracted = false;
};

std::string journal_to_json_line(const JournalEntry& e);
JournalEntry journal_from_json_line(std::string_view line);

class EventLog {
public:
    void set_goal(ObjectId ball, GoalRecord record, std::int64_t revision);
    void erase_goal(ObjectId ball, std::int64_t revision);
    void set_collisions(FrameIndex frame, const std::set<BallPair>& pairs, std::int64_t revision);
    void set_rebound(FrameIndex frame, ObjectId ball, std::optional<ReboundRecord> record, std::int64_t revision);

    const std::map<ObjectId, GoalRecord>& goals() const { return goals_; }
    const std::map<FrameIndex, std::set<BallPair>>& collisions() const { return collisions_; }
    const std::map<std::pair<FrameIndex, ObjectId>, ReboundRecord>& rebounds() const { return rebounds_; }
    const std::vector<JournalEntry>& journal() const { return journal_; }

    // Current state, sorted.
    std::vector<Event> events() const;
    // Highest revision_counter among journal entries for this frame.
    std::int64_t frame_revision(FrameIndex frame) const;

    bool operator==(const EventLog& o) const {
        return goals_ == o.goals_ && collisions_ == o.collisions_ && rebounds_ == o.rebounds_;
    }

    void write_journal(std::ostream& out) const;

private:
    void note(Event e, std::int64_t revision, bool retracted);

    std::map<ObjectId, GoalRecord> goals_;
    std::map<FrameIndex, std::set<BallPair>> collisions_;
    std::map<std::pair<FrameIndex, ObjectId>, ReboundRecord> rebounds_;
    std::vector<JournalEntry> journal_;
};

// Consumer-side state: tracks plus the log. Events are only evaluated once
// table geometry is known; tracks are maintained regardless.
class EventProcessor {
public:
    explicit EventProcessor(ThresholdConfig thresholds) : thresholds_(thresholds) { thresholds_.validate(); }

    void set_geometry(TableGeometry g) { geometry_ = std::move(g); }
    bool ready() const { return geometry_.has_value(); }
    const std::optional<TableGeometry>& geometry() const { return geometry_; }

    void process_frame(FrameIndex frame, const ObjectMasks& masks, std::int64_t revision = 1);
    void prune_before(FrameIndex frame) { tracks_.prune_before(frame); }

    const EventLog& log() const { return log_; }
    const TrackSet& tracks() const { return tracks_; }
    const ThresholdConfig& thresholds() const { return thresholds_; }

private:
    ThresholdConfig thresholds_;
    std::optional<TableGeometry> geometry_;
    TrackSet tracks_;
    EventLog log_;
};

struct ClassScore {
    std::int64_t true_positives = 0;
    std::int64_t false_positives = 0;
    std::int64_t false_negatives = 0;
    double precision() const;
    double recall() const;
    double f1() const;
};

struct EventScore {
    std::map<EventKind, ClassScore> per_class;
    ClassScore overall;
};

// Matches same kind, balls and location within +-tolerance frames.
EventScore score_events(const std::vector<Event>& detected, const std::vector<Event>& truth,
                        FrameIndex tolerance = 1);

}  // namespace streamseg
