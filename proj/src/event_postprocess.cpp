#include "streamseg/event_postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <json.hpp>

namespace streamseg {

using nlohmann::json;

std::optional<Vec2> compute_centroid(const Mask& mask) {
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
    if (n == 0) return std::nullopt;
    return Vec2{sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

// ---------------------------------------------------------------------------
// Tracks

std::optional<Vec2> BallTrack::centroid(FrameIndex f) const {
    auto it = centroids_.find(f);
    if (it == centroids_.end()) return std::nullopt;
    return it->second;
}

std::optional<Vec2> BallTrack::velocity(FrameIndex f) const {
    auto a = centroid(f), b = centroid(f - 1);
    if (!a || !b) return std::nullopt;
    return *a - *b;
}

std::optional<Vec2> BallTrack::acceleration(FrameIndex f) const {
    auto a = velocity(f), b = velocity(f - 1);
    if (!a || !b) return std::nullopt;
    return *a - *b;
}

void BallTrack::prune_before(FrameIndex f) { centroids_.erase(centroids_.begin(), centroids_.lower_bound(f)); }

void TrackSet::set_frame(FrameIndex f, const ObjectMasks& masks) {
    for (auto& [id, t] : tracks_) {
        if (masks.count(id) == 0) t.erase(f);
    }
    for (const auto& [id, m] : masks) {
        if (auto c = compute_centroid(m)) {
            tracks_[id].set(f, *c);
        } else if (auto it = tracks_.find(id); it != tracks_.end()) {
            it->second.erase(f);
        }
    }
}

const BallTrack* TrackSet::track(ObjectId id) const {
    auto it = tracks_.find(id);
    return it == tracks_.end() ? nullptr : &it->second;
}

std::vector<ObjectId> TrackSet::ids() const {
    std::vector<ObjectId> out;
    out.reserve(tracks_.size());
    for (const auto& [id, t] : tracks_) out.push_back(id);
    return out;
}

void TrackSet::prune_before(FrameIndex f) {
    for (auto it = tracks_.begin(); it != tracks_.end();) {
        it->second.prune_before(f);
        it = it->second.empty() ? tracks_.erase(it) : std::next(it);
    }
}

std::size_t TrackSet::max_track_length() const {
    std::size_t n = 0;
    for (const auto& [id, t] : tracks_) n = std::max(n, t.size());
    return n;
}

// ---------------------------------------------------------------------------
// Thresholds and geometry

ThresholdConfig ThresholdConfig::defaults_for(double pocket_radius, double friction_decel, double ball_radius) {
    ThresholdConfig t;
    t.near_pocket_radius = 2.0 * pocket_radius;
    t.velocity_change_threshold = 3.0 * friction_decel;
    t.proximity_radius = 2.2 * 2.0 * ball_radius;
    t.buffer_margin = 1.5 * ball_radius;
    t.approach_speed_min = 0.5 * t.velocity_change_threshold;
    return t;
}

void ThresholdConfig::validate() const {
    const std::pair<const char*, double> fields[] = {
        {"near_pocket_radius", near_pocket_radius},
        {"velocity_change_threshold", velocity_change_threshold},
        {"proximity_radius", proximity_radius},
        {"perpendicular_reversal_tolerance", perpendicular_reversal_tolerance},
        {"parallel_consistency_tolerance", parallel_consistency_tolerance},
        {"buffer_margin", buffer_margin},
        {"approach_speed_min", approach_speed_min},
    };
    for (const auto& [name, v] : fields) {
        if (!(v > 0.0)) throw Error(ErrorCode::config, std::string("threshold ") + name + " must be positive");
    }
}

double TableGeometry::inside_distance(Side s, Vec2 p) const {
    switch (s) {
        case Side::top: return p.y - top;
        case Side::bottom: return bottom - p.y;
        case Side::left: return p.x - left;
        case Side::right: return right - p.x;
    }
    return 0.0;
}

Vec2 TableGeometry::inward_normal(Side s) {
    switch (s) {
        case Side::top: return {0.0, 1.0};
        case Side::bottom: return {0.0, -1.0};
        case Side::left: return {1.0, 0.0};
        case Side::right: return {-1.0, 0.0};
    }
    return {};
}

TableGeometry derive_geometry(const std::vector<Vec2>& pocket_centers, const ThresholdConfig& thresholds) {
    if (pocket_centers.size() != 6) {
        throw Error(ErrorCode::geometry, "expected 6 pocket detections, got " + std::to_string(pocket_centers.size()));
    }
    std::vector<Vec2> pts = pocket_centers;
    std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return a.y < b.y || (a.y == b.y && a.x < b.x); });
    std::vector<Vec2> upper(pts.begin(), pts.begin() + 3), lower(pts.begin() + 3, pts.end());
    auto spread = [](const std::vector<Vec2>& g) {
        auto [lo, hi] = std::minmax_element(g.begin(), g.end(), [](Vec2 a, Vec2 b) { return a.y < b.y; });
        return hi->y - lo->y;
    };
    const double gap = lower.front().y - upper.back().y;
    if (gap <= 2.0 * std::max(spread(upper), spread(lower))) {
        throw Error(ErrorCode::geometry, "pocket rows are not separable into top and bottom");
    }
    auto by_x = [](Vec2 a, Vec2 b) { return a.x < b.x; };
    std::sort(upper.begin(), upper.end(), by_x);
    std::sort(lower.begin(), lower.end(), by_x);
    for (const auto* row : {&upper, &lower}) {
        const double span = (*row)[2].x - (*row)[0].x;
        const double rel = span > 0.0 ? ((*row)[1].x - (*row)[0].x) / span : 0.0;
        if (span <= 0.0 || rel < 0.25 || rel > 0.75) {
            throw Error(ErrorCode::geometry, "cannot tell the middle pocket from the corners");
        }
    }

    TableGeometry g;
    g.pockets = {{PocketName::TL, upper[0]}, {PocketName::TM, upper[1]}, {PocketName::TR, upper[2]},
                 {PocketName::BL, lower[0]}, {PocketName::BM, lower[1]}, {PocketName::BR, lower[2]}};
    g.top = (upper[0].y + upper[1].y + upper[2].y) / 3.0;
    g.bottom = (lower[0].y + lower[1].y + lower[2].y) / 3.0;
    g.left = (upper[0].x + lower[0].x) / 2.0;
    g.right = (upper[2].x + lower[2].x) / 2.0;
    g.buffer_margin = thresholds.buffer_margin;
    g.near_pocket_radius = thresholds.near_pocket_radius;
    if (2.0 * g.buffer_margin >= g.right - g.left || 2.0 * g.buffer_margin >= g.bottom - g.top) {
        throw Error(ErrorCode::geometry, "buffer zones do not fit inside the derived table");
    }
    return g;
}

// ---------------------------------------------------------------------------
// Detectors

std::optional<GoalRecord> detect_goal(const TrackSet& tracks, const TableGeometry& geometry, ObjectId ball,
                                      FrameIndex frame) {
    if (frame < 2) return std::nullopt;
    const BallTrack* t = tracks.track(ball);
    if (t == nullptr || t->present(frame)) return std::nullopt;
    auto prev = t->centroid(frame - 1);
    auto v = t->velocity(frame - 1);
    if (!prev || !v) return std::nullopt;

    std::optional<GoalRecord> best;
    double best_dist = geometry.near_pocket_radius;
    for (const auto& [name, p] : geometry.pockets) {
        const Vec2 to = p - *prev;
        const double d = to.norm();
        if (d <= best_dist && v->dot(to) > 0.0) {
            best_dist = d;
            best = GoalRecord{frame, name};
        }
    }
    return best;
}

std::set<BallPair> detect_collision(const TrackSet& tracks, FrameIndex frame, const ThresholdConfig& thresholds) {
    std::set<BallPair> out;
    if (frame < 3) return out;
    struct Kin {
        ObjectId id;
        Vec2 prev, before;
        Vec2 dv;
        std::optional<Vec2> now;
    };
    std::vector<Kin> moving;
    for (ObjectId id : tracks.ids()) {
        const BallTrack* t = tracks.track(id);
        auto a = t->acceleration(frame);
        if (!a || a->norm() <= thresholds.velocity_change_threshold) continue;
        moving.push_back({id, *t->centroid(frame - 1), *t->centroid(frame - 2), *a, t->centroid(frame)});
    }
    for (std::size_t i = 0; i < moving.size(); ++i) {
        for (std::size_t j = i + 1; j < moving.size(); ++j) {
            const Kin& a = moving[i];
            const Kin& b = moving[j];
            const double d_prev = (b.prev - a.prev).norm();
            const double d_now = (*b.now - *a.now).norm();
            if (std::min(d_prev, d_now) > thresholds.proximity_radius) continue;
            const double d_before = (b.before - a.before).norm();
            if (d_prev - d_before >= 0.0) continue;
            const Vec2 n = (b.prev - a.prev).normalized();
            if (a.dv.dot(n) >= 0.0 || b.dv.dot(n) <= 0.0) continue;
            out.insert({std::min(a.id, b.id), std::max(a.id, b.id)});
        }
    }
    return out;
}

std::optional<ReboundRecord> detect_rebound(const TrackSet& tracks, const TableGeometry& geometry, ObjectId ball,
                                            FrameIndex frame, const ThresholdConfig& thresholds,
                                            const std::set<BallPair>& collisions) {
    if (frame < 3) return std::nullopt;
    const BallTrack* t = tracks.track(ball);
    if (t == nullptr) return std::nullopt;
    auto c_now = t->centroid(frame);
    auto c_prev = t->centroid(frame - 1);
    auto v_in = t->velocity(frame - 1);
    auto v_out = t->velocity(frame);
    if (!c_now || !c_prev || !v_in || !v_out) return std::nullopt;

    struct Armed {
        Side side;
        double p_in;
    };
    std::vector<Armed> approached;
    for (Side s : kAllSides) {
        if (!geometry.in_buffer(s, *c_now) && !geometry.in_buffer(s, *c_prev)) continue;
        const Vec2 n = TableGeometry::inward_normal(s);
        const double p_in = v_in->dot(n);
        if (-p_in >= thresholds.approach_speed_min) approached.push_back({s, p_in});
    }
    if (approached.empty()) return std::nullopt;

    std::optional<Armed> standard;
    for (const auto& a : approached) {
        const Vec2 n = TableGeometry::inward_normal(a.side);
        const double p_out = v_out->dot(n);
        if (p_out <= 0.0) continue;
        const Vec2 tangent{-n.y, n.x};
        const bool reversed = std::abs(p_out + a.p_in) <= thresholds.perpendicular_reversal_tolerance * std::abs(a.p_in);
        const bool parallel_kept = std::abs(v_out->dot(tangent) - v_in->dot(tangent)) <=
                                   thresholds.parallel_consistency_tolerance * v_in->norm();
        if (!reversed && !parallel_kept) continue;
        if (!standard || std::abs(a.p_in) > std::abs(standard->p_in)) standard = a;
    }
    if (standard) return ReboundRecord{standard->side, Surface::cushion};

    // Curved pocket jaw: irregular deflection close to a pocket.
    bool near_pocket = false;
    for (const auto& [name, p] : geometry.pockets) {
        if ((p - *c_now).norm() <= geometry.near_pocket_radius) near_pocket = true;
    }
    if (!near_pocket) return std::nullopt;
    if ((*v_out - *v_in).norm() <= thresholds.velocity_change_threshold) return std::nullopt;
    const double cos_cone = std::cos(std::numbers::pi / 6.0);
    for (ObjectId other : tracks.ids()) {
        if (other == ball) continue;
        auto oc = tracks.track(other)->centroid(frame - 1);
        if (!oc) continue;
        const Vec2 to = *oc - *c_prev;
        const double d = to.norm();
        if (d > thresholds.proximity_radius || d == 0.0 || v_in->norm() == 0.0) continue;
        if (v_in->dot(to) / (d * v_in->norm()) > cos_cone) return std::nullopt;
    }
    for (const auto& [a, b] : collisions) {
        if (a == ball || b == ball) return std::nullopt;
    }
    const Armed* nearest = &approached.front();
    for (const auto& a : approached) {
        if (geometry.inside_distance(a.side, *c_now) < geometry.inside_distance(nearest->side, *c_now)) nearest = &a;
    }
    return ReboundRecord{nearest->side, Surface::jaw};
}

// ---------------------------------------------------------------------------
// Log

std::string journal_to_json_line(const JournalEntry& e) {
    json j = json::parse(event_to_json_line(e.event));
    j["revision_counter"] = e.revision_counter;
    j["retracted"] = e.retracted;
    return j.dump();
}

JournalEntry journal_from_json_line(std::string_view line) {
    JournalEntry e;
    e.event = event_from_json_line(line);
    try {
        const json j = json::parse(line);
        e.revision_counter = j.value("revision_counter", std::int64_t{1});
        e.retracted = j.value("retracted", false);
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::format, std::string("malformed journal line: ") + ex.what());
    }
    return e;
}

namespace {

Event goal_event(ObjectId ball, const GoalRecord& g) {
    return {EventKind::goal, g.frame, {ball}, to_string(g.pocket), Surface::none};
}
Event collision_event(FrameIndex f, const BallPair& p) {
    return {EventKind::collision, f, {p.first, p.second}, "", Surface::none};
}
Event rebound_event(FrameIndex f, ObjectId ball, const ReboundRecord& r) {
    return {EventKind::rebound, f, {ball}, to_string(r.side), r.surface};
}

}  // namespace

void EventLog::note(Event e, std::int64_t revision, bool retracted) {
    journal_.push_back({std::move(e), revision, retracted});
}

void EventLog::set_goal(ObjectId ball, GoalRecord record, std::int64_t revision) {
    auto it = goals_.find(ball);
    if (it != goals_.end()) {
        if (it->second == record) return;
        note(goal_event(ball, it->second), revision, true);
        it->second = record;
    } else {
        goals_.emplace(ball, record);
    }
    note(goal_event(ball, record), revision, false);
}

void EventLog::erase_goal(ObjectId ball, std::int64_t revision) {
    auto it = goals_.find(ball);
    if (it == goals_.end()) return;
    note(goal_event(ball, it->second), revision, true);
    goals_.erase(it);
}

void EventLog::set_collisions(FrameIndex frame, const std::set<BallPair>& pairs, std::int64_t revision) {
    auto it = collisions_.find(frame);
    static const std::set<BallPair> kNone;
    const std::set<BallPair>& old = it != collisions_.end() ? it->second : kNone;
    if (old == pairs) return;
    for (const auto& p : old) {
        if (pairs.count(p) == 0) note(collision_event(frame, p), revision, true);
    }
    for (const auto& p : pairs) {
        if (old.count(p) == 0) note(collision_event(frame, p), revision, false);
    }
    if (pairs.empty()) {
        collisions_.erase(frame);
    } else {
        collisions_[frame] = pairs;
    }
}

void EventLog::set_rebound(FrameIndex frame, ObjectId ball, std::optional<ReboundRecord> record,
                           std::int64_t revision) {
    const auto key = std::make_pair(frame, ball);
    auto it = rebounds_.find(key);
    if (it == rebounds_.end()) {
        if (!record) return;
        rebounds_.emplace(key, *record);
        note(rebound_event(frame, ball, *record), revision, false);
        return;
    }
    if (record && *record == it->second) return;
    note(rebound_event(frame, ball, it->second), revision, true);
    if (record) {
        it->second = *record;
        note(rebound_event(frame, ball, *record), revision, false);
    } else {
        rebounds_.erase(it);
    }
}

std::vector<Event> EventLog::events() const {
    std::vector<Event> out;
    for (const auto& [ball, g] : goals_) out.push_back(goal_event(ball, g));
    for (const auto& [f, pairs] : collisions_) {
        for (const auto& p : pairs) out.push_back(collision_event(f, p));
    }
    for (const auto& [key, r] : rebounds_) out.push_back(rebound_event(key.first, key.second, r));
    std::sort(out.begin(), out.end());
    return out;
}

std::int64_t EventLog::frame_revision(FrameIndex frame) const {
    std::int64_t r = 0;
    for (const auto& e : journal_) {
        if (e.event.frame == frame) r = std::max(r, e.revision_counter);
    }
    return r;
}

void EventLog::write_journal(std::ostream& out) const {
    for (const auto& e : journal_) out << journal_to_json_line(e) << '\n';
}

// ---------------------------------------------------------------------------
// Processor

void EventProcessor::process_frame(FrameIndex frame, const ObjectMasks& masks, std::int64_t revision) {
    tracks_.set_frame(frame, masks);
    if (!geometry_) return;

    for (const auto& [id, m] : masks) {
        auto g = log_.goals().find(id);
        if (g != log_.goals().end() && g->second.frame <= frame && tracks_.track(id) &&
            tracks_.track(id)->present(frame)) {
            log_.erase_goal(id, revision);
        }
    }
    const auto ids = tracks_.ids();
    if (frame >= 2) {
        for (ObjectId id : ids) {
            if (auto g = detect_goal(tracks_, *geometry_, id, frame)) {
                log_.set_goal(id, *g, revision);
            } else if (auto cur = log_.goals().find(id); cur != log_.goals().end() && cur->second.frame == frame) {
                log_.erase_goal(id, revision);
            }
        }
    }
    if (frame < 3) return;

    const auto pairs = detect_collision(tracks_, frame, thresholds_);
    log_.set_collisions(frame, pairs, revision);

    std::set<ObjectId> candidates(ids.begin(), ids.end());
    for (auto it = log_.rebounds().lower_bound({frame, std::numeric_limits<ObjectId>::min()});
         it != log_.rebounds().end() && it->first.first == frame; ++it) {
        candidates.insert(it->first.second);
    }
    for (ObjectId id : candidates) {
        log_.set_rebound(frame, id, detect_rebound(tracks_, *geometry_, id, frame, thresholds_, pairs), revision);
    }
}

// ---------------------------------------------------------------------------
// Scoring

double ClassScore::precision() const {
    const auto d = true_positives + false_positives;
    return d == 0 ? 1.0 : static_cast<double>(true_positives) / static_cast<double>(d);
}

double ClassScore::recall() const {
    const auto d = true_positives + false_negatives;
    return d == 0 ? 1.0 : static_cast<double>(true_positives) / static_cast<double>(d);
}

double ClassScore::f1() const {
    const auto d = 2 * true_positives + false_positives + false_negatives;
    return d == 0 ? 1.0 : 2.0 * static_cast<double>(true_positives) / static_cast<double>(d);
}

EventScore score_events(const std::vector<Event>& detected, const std::vector<Event>& truth, FrameIndex tolerance) {
    EventScore s;
    for (EventKind k : {EventKind::goal, EventKind::collision, EventKind::rebound}) s.per_class[k] = {};
    std::vector<bool> used(detected.size(), false);
    for (const auto& t : truth) {
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < detected.size(); ++i) {
            const Event& d = detected[i];
            if (used[i] || d.kind != t.kind || d.balls != t.balls || d.location != t.location) continue;
            const auto gap = std::llabs(d.frame - t.frame);
            if (gap > tolerance) continue;
            if (!best || gap < std::llabs(detected[*best].frame - t.frame)) best = i;
        }
        if (best) {
            used[*best] = true;
            ++s.per_class[t.kind].true_positives;
        } else {
            ++s.per_class[t.kind].false_negatives;
        }
    }
    for (std::size_t i = 0; i < detected.size(); ++i) {
        if (!used[i]) ++s.per_class[detected[i].kind].false_positives;
    }
    for (const auto& [k, c] : s.per_class) {
        s.overall.true_positives += c.true_positives;
        s.overall.false_positives += c.false_positives;
        s.overall.false_negatives += c.false_negatives;
    }
    return s;
}

}  // namespace streamseg
