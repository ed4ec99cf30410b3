#include "streamseg/synthetic_billiards.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

namespace streamseg::billiards {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Table

Vec2 TableSpec::pocket(PocketName p) const {
    const double cx = left + width / 2.0;
    switch (p) {
        case PocketName::TL: return {left, top};
        case PocketName::TM: return {cx, top};
        case PocketName::TR: return {right(), top};
        case PocketName::BL: return {left, bottom()};
        case PocketName::BM: return {cx, bottom()};
        case PocketName::BR: return {right(), bottom()};
    }
    return {};
}

std::array<Vec2, 6> TableSpec::pockets() const {
    std::array<Vec2, 6> out;
    for (std::size_t k = 0; k < kAllPockets.size(); ++k) out[k] = pocket(kAllPockets[k]);
    return out;
}

std::vector<Knuckle> TableSpec::knuckles() const {
    const double d = pocket_radius + knuckle_radius;
    const double cx = left + width / 2.0;
    return {
        {{left + d, top}, Side::top, PocketName::TL},       {{left, top + d}, Side::left, PocketName::TL},
        {{cx - d, top}, Side::top, PocketName::TM},         {{cx + d, top}, Side::top, PocketName::TM},
        {{right() - d, top}, Side::top, PocketName::TR},    {{right(), top + d}, Side::right, PocketName::TR},
        {{left + d, bottom()}, Side::bottom, PocketName::BL}, {{left, bottom() - d}, Side::left, PocketName::BL},
        {{cx - d, bottom()}, Side::bottom, PocketName::BM}, {{cx + d, bottom()}, Side::bottom, PocketName::BM},
        {{right() - d, bottom()}, Side::bottom, PocketName::BR}, {{right(), bottom() - d}, Side::right, PocketName::BR},
    };
}

Vec2 TableSpec::inward_normal(Side s) const {
    switch (s) {
        case Side::top: return {0.0, 1.0};
        case Side::bottom: return {0.0, -1.0};
        case Side::left: return {1.0, 0.0};
        case Side::right: return {-1.0, 0.0};
    }
    return {};
}

double TableSpec::distance_to_side(Side s, Vec2 p) const {
    switch (s) {
        case Side::top: return p.y - top;
        case Side::bottom: return bottom() - p.y;
        case Side::left: return p.x - left;
        case Side::right: return right() - p.x;
    }
    return 0.0;
}

void TableSpec::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::config, "table: " + m); };
    if (width <= 0.0 || height <= 0.0) fail("width and height must be positive");
    if (pocket_radius <= 0.0 || pocket_radius >= std::min(width, height) / 4.0) {
        fail("pocket radius must be positive and below a quarter of the short side");
    }
    if (cushion_restitution < 0.0 || cushion_restitution > 1.0) fail("restitution must lie in [0, 1]");
    if (friction_decel < 0.0) fail("friction must be non-negative");
    if (knuckle_radius < 0.0) fail("knuckle radius must be non-negative");
}

// ---------------------------------------------------------------------------
// World and physics

const BallState* World::find(ObjectId id) const {
    auto it = std::find_if(balls.begin(), balls.end(), [id](const BallState& b) { return b.id == id; });
    return it == balls.end() ? nullptr : &*it;
}

double World::kinetic_energy() const {
    double e = 0.0;
    for (const auto& b : balls) e += 0.5 * b.velocity.dot(b.velocity);
    return e;
}

StepResult step(const World& world, const TableSpec& table, const std::vector<BallState>& spawns,
                const std::vector<Shot>& shots) {
    StepResult out;
    World& w = out.world;
    w = world;
    w.frame = world.frame + 1;
    const FrameIndex f = w.frame;
    const double e = table.cushion_restitution;

    for (const auto& s : shots) {
        auto it = std::find_if(w.balls.begin(), w.balls.end(), [&](const BallState& b) { return b.id == s.ball; });
        if (it != w.balls.end()) it->velocity += s.impulse;
    }
    for (auto& b : w.balls) {
        const double speed = b.velocity.norm();
        if (speed > 0.0) {
            const double reduced = std::max(0.0, speed - table.friction_decel);
            b.velocity = b.velocity * (reduced / speed);
        }
        b.position += b.velocity;
    }

    // Pocket capture needs the centre inside the pocket and inward motion.
    for (auto& b : w.balls) {
        double best = table.pocket_radius;
        std::optional<PocketName> hit;
        for (PocketName p : kAllPockets) {
            const Vec2 to_pocket = table.pocket(p) - b.position;
            const double dist = to_pocket.norm();
            if (dist < best && b.velocity.dot(to_pocket) > 0.0) {
                best = dist;
                hit = p;
            }
        }
        if (hit) {
            b.pocketed = true;
            out.events.push_back({EventKind::goal, f, {b.id}, to_string(*hit), Surface::none});
        }
    }
    std::erase_if(w.balls, [](const BallState& b) { return b.pocketed; });

    for (std::size_t i = 0; i < w.balls.size(); ++i) {
        for (std::size_t j = i + 1; j < w.balls.size(); ++j) {
            BallState& a = w.balls[i];
            BallState& c = w.balls[j];
            const Vec2 d = c.position - a.position;
            const double dist = d.norm();
            if (dist <= 0.0 || dist >= a.radius + c.radius) continue;
            const Vec2 n = d * (1.0 / dist);
            const double closing = (a.velocity - c.velocity).dot(n);
            if (closing <= 0.0) continue;
            // Equal masses: exchange the normal components.
            a.velocity -= n * closing;
            c.velocity += n * closing;
            out.events.push_back({EventKind::collision, f, {std::min(a.id, c.id), std::max(a.id, c.id)}, "",
                                  Surface::none});
        }
    }

    const auto knuckles = table.knuckles();
    for (auto& b : w.balls) {
        for (const auto& k : knuckles) {
            const Vec2 d = b.position - k.center;
            const double dist = d.norm();
            if (dist <= 0.0 || dist >= b.radius + table.knuckle_radius) continue;
            const Vec2 n = d * (1.0 / dist);
            const double vn = b.velocity.dot(n);
            if (vn >= 0.0) continue;
            b.velocity -= n * ((1.0 + e) * vn);
            out.events.push_back({EventKind::rebound, f, {b.id}, to_string(k.side), Surface::jaw});
            break;
        }
    }

    for (auto& b : w.balls) {
        auto hit = [&](Side s) { out.events.push_back({EventKind::rebound, f, {b.id}, to_string(s), Surface::cushion}); };
        if (b.position.x - b.radius < table.left && b.velocity.x < 0.0) {
            b.velocity.x = -e * b.velocity.x;
            hit(Side::left);
        } else if (b.position.x + b.radius > table.right() && b.velocity.x > 0.0) {
            b.velocity.x = -e * b.velocity.x;
            hit(Side::right);
        }
        if (b.position.y - b.radius < table.top && b.velocity.y < 0.0) {
            b.velocity.y = -e * b.velocity.y;
            hit(Side::top);
        } else if (b.position.y + b.radius > table.bottom() && b.velocity.y > 0.0) {
            b.velocity.y = -e * b.velocity.y;
            hit(Side::bottom);
        }
    }

    for (const auto& s : spawns) w.balls.push_back(s);
    std::sort(w.balls.begin(), w.balls.end(), [](const BallState& a, const BallState& b) { return a.id < b.id; });
    return out;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

struct EllipseAxes {
    Vec2 major_dir;
    double major = 0.0;
    double minor = 0.0;
};

EllipseAxes axes_of(const BallState& ball, double stretch) {
    const double speed = ball.velocity.norm();
    EllipseAxes a;
    a.major_dir = speed > 1e-12 ? ball.velocity * (1.0 / speed) : Vec2{1.0, 0.0};
    a.major = ball.radius * (1.0 + stretch * speed);
    a.minor = ball.radius;
    return a;
}

Vec2 half_extent(const EllipseAxes& a) {
    const double ux = a.major_dir.x, uy = a.major_dir.y;
    return {std::sqrt(a.major * a.major * ux * ux + a.minor * a.minor * uy * uy),
            std::sqrt(a.major * a.major * uy * uy + a.minor * a.minor * ux * ux)};
}

}  // namespace

Box ellipse_box(const BallState& ball, double stretch) {
    const Vec2 h = half_extent(axes_of(ball, stretch));
    const Vec2 c = ball.position;
    return {c.x - h.x, c.y - h.y, c.x + h.x, c.y + h.y};
}

Mask render_ball(const BallState& ball, double stretch, int frame_width, int frame_height) {
    const EllipseAxes ax = axes_of(ball, stretch);
    const Vec2 h = half_extent(ax);
    const Vec2 c = ball.position;
    const int x_lo = std::max(0, static_cast<int>(std::ceil(c.x - h.x)));
    const int x_hi = std::min(frame_width - 1, static_cast<int>(std::floor(c.x + h.x)));
    const int y_lo = std::max(0, static_cast<int>(std::ceil(c.y - h.y)));
    const int y_hi = std::min(frame_height - 1, static_cast<int>(std::floor(c.y + h.y)));
    Mask m;
    if (x_hi < x_lo || y_hi < y_lo) return m;
    m.x0 = x_lo;
    m.y0 = y_lo;
    m.width = x_hi - x_lo + 1;
    m.height = y_hi - y_lo + 1;
    m.bits.assign(static_cast<std::size_t>(m.width) * m.height, 0);
    const double inv_a2 = 1.0 / (ax.major * ax.major);
    const double inv_b2 = 1.0 / (ax.minor * ax.minor);
    for (int y = y_lo; y <= y_hi; ++y) {
        for (int x = x_lo; x <= x_hi; ++x) {
            const double dx = x - c.x, dy = y - c.y;
            const double s = dx * ax.major_dir.x + dy * ax.major_dir.y;
            const double t = -dx * ax.major_dir.y + dy * ax.major_dir.x;
            if (s * s * inv_a2 + t * t * inv_b2 <= 1.0) {
                m.bits[static_cast<std::size_t>(y - y_lo) * m.width + (x - x_lo)] = 1;
            }
        }
    }
    return m;
}

ObjectMasks render_masks(const World& world, double stretch, int frame_width, int frame_height) {
    ObjectMasks out;
    for (const auto& b : world.balls) {
        if (b.pocketed) continue;
        Mask m = render_ball(b, stretch, frame_width, frame_height);
        if (!m.empty()) out.emplace(b.id, std::move(m));
    }
    return out;
}

Mask erode(const Mask& mask, int radius) {
    if (radius <= 0) return mask;
    Mask out = mask;
    for (int j = 0; j < mask.height; ++j) {
        for (int i = 0; i < mask.width; ++i) {
            const int x = mask.x0 + i, y = mask.y0 + j;
            bool keep = mask.at(x, y);
            for (int dy = -radius; keep && dy <= radius; ++dy) {
                for (int dx = -radius; keep && dx <= radius; ++dx) keep = mask.at(x + dx, y + dy);
            }
            out.bits[static_cast<std::size_t>(j) * mask.width + i] = keep ? 1 : 0;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Detector and segmenter models

namespace {

std::uint64_t mix_seed(std::uint64_t seed, FrameIndex frame) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(frame) + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Box jittered(Box b, double sigma, std::mt19937_64& rng) {
    if (sigma <= 0.0) return b;
    std::normal_distribution<double> n(0.0, sigma);
    b.x_min += n(rng);
    b.y_min += n(rng);
    b.x_max += n(rng);
    b.y_max += n(rng);
    if (b.x_min > b.x_max) std::swap(b.x_min, b.x_max);
    if (b.y_min > b.y_max) std::swap(b.y_min, b.y_max);
    if (b.x_max - b.x_min < 1.0) b.x_max = b.x_min + 1.0;
    if (b.y_max - b.y_min < 1.0) b.y_max = b.y_min + 1.0;
    return b;
}

}  // namespace

std::vector<PromptBox> detect(const World& world, const TableSpec& table, const NoiseConfig& noise, double stretch) {
    std::vector<PromptBox> out;
    if (noise.dropout_frames.count(world.frame) != 0) return out;
    std::mt19937_64 rng(mix_seed(noise.seed, world.frame));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto emit = [&](ObjectId id, Box box) {
        const bool dropped = u(rng) < noise.dropout_prob;
        const Box b = jittered(box, noise.box_jitter_px, rng);
        if (!dropped) out.push_back({id, b, 1.0});
    };
    for (const auto& b : world.balls) emit(b.id, ellipse_box(b, stretch));
    for (std::size_t k = 0; k < kAllPockets.size(); ++k) {
        const Vec2 p = table.pocket(kAllPockets[k]);
        const double r = table.pocket_radius;
        emit(kSceneIdBase + static_cast<ObjectId>(k), {p.x - r, p.y - r, p.x + r, p.y + r});
    }
    return out;
}

ObjectMasks segment(const World& world, const std::vector<PromptBox>& prompts, const MemoryBank& bank,
                    const std::vector<FrameIndex>& attention_frames, const NoiseConfig& noise,
                    const RenderConfig& render) {
    ObjectMasks out;
    for (const auto& b : world.balls) {
        const bool prompted =
            std::any_of(prompts.begin(), prompts.end(), [&](const PromptBox& p) { return p.obj_id == b.id; });
        const bool remembered = std::any_of(attention_frames.begin(), attention_frames.end(),
                                            [&](FrameIndex f) { return bank.has_memory(f, b.id); });
        if (!prompted && !remembered) continue;
        Mask m = erode(render_ball(b, render.stretch, render.native_width, render.native_height),
                       noise.mask_erosion_px);
        if (!m.empty()) out.emplace(b.id, std::move(m));
    }
    return out;
}

const World& world_of(const FrameRecord& frame) {
    const auto* p = std::any_cast<std::shared_ptr<const World>>(&frame.payload);
    if (p == nullptr || !*p) {
        throw Error(ErrorCode::format, "frame " + std::to_string(frame.global_idx) + " carries no billiards scene");
    }
    return **p;
}

std::vector<PromptBox> BilliardsBackend::detect(const FrameRecord& frame) {
    return billiards::detect(world_of(frame), table_, noise_, render_.stretch);
}

ObjectMasks BilliardsBackend::segment(const FrameRecord& frame, const std::vector<PromptBox>& prompts,
                                      const MemoryBank& bank, const std::vector<FrameIndex>& attention_frames) {
    return billiards::segment(world_of(frame), prompts, bank, attention_frames, noise_, render_);
}

// ---------------------------------------------------------------------------
// Simulation

Simulation::Simulation(const Scenario& scenario) : scenario_(scenario) {
    world_.frame = 0;
    for (const auto& s : scenario.balls) {
        if (s.appear_frame <= 0) {
            world_.balls.push_back(s.ball);
        } else {
            spawns_[s.appear_frame].push_back(s.ball);
        }
    }
    for (const auto& s : scenario.shots) {
        if (s.frame <= 0) {
            for (auto& b : world_.balls) {
                if (b.id == s.ball) b.velocity += s.impulse;
            }
        } else {
            shots_[s.frame].push_back(s);
        }
    }
    std::sort(world_.balls.begin(), world_.balls.end(),
              [](const BallState& a, const BallState& b) { return a.id < b.id; });
}

const std::vector<Event>& Simulation::advance() {
    static const std::vector<BallState> kNoSpawns;
    static const std::vector<Shot> kNoShots;
    const FrameIndex next = world_.frame + 1;
    auto sp = spawns_.find(next);
    auto sh = shots_.find(next);
    StepResult r = step(world_, scenario_.table, sp != spawns_.end() ? sp->second : kNoSpawns,
                        sh != shots_.end() ? sh->second : kNoShots);
    world_ = std::move(r.world);
    last_ = std::move(r.events);
    events_.insert(events_.end(), last_.begin(), last_.end());
    return last_;
}

Trajectory simulate(const Scenario& scenario) {
    Trajectory t;
    Simulation sim(scenario);
    t.worlds.push_back(sim.world());
    for (std::int64_t f = 1; f < scenario.frames; ++f) {
        sim.advance();
        t.worlds.push_back(sim.world());
    }
    t.events = sim.events();
    return t;
}

std::optional<FrameRecord> BilliardsSource::next() {
    if (produced_ >= scenario_.frames) return std::nullopt;
    if (produced_ > 0) sim_.advance();
    FrameRecord rec;
    rec.global_idx = produced_;
    rec.native_width = scenario_.render.native_width;
    rec.native_height = scenario_.render.native_height;
    rec.internal_side = scenario_.render.internal_side;
    rec.precision = scenario_.render.precision;
    rec.tier = scenario_.render.tier;
    rec.payload = std::make_shared<const World>(sim_.world());
    ++produced_;
    return rec;
}

// ---------------------------------------------------------------------------
// Scenario files

namespace {

json vec_json(Vec2 v) { return json::array({v.x, v.y}); }

Vec2 vec_from(const json& j) {
    if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::format, "expected a two-element coordinate array");
    return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

void Scenario::validate() const {
    table.validate();
    if (frames < 0) throw Error(ErrorCode::config, "scenario frame count must be non-negative");
    if (noise.dropout_prob < 0.0 || noise.dropout_prob > 1.0) {
        throw Error(ErrorCode::config, "dropout probability must lie in [0, 1]");
    }
    if (noise.box_jitter_px < 0.0 || noise.mask_erosion_px < 0) {
        throw Error(ErrorCode::config, "noise magnitudes must be non-negative");
    }
    std::set<ObjectId> ids;
    for (const auto& s : balls) {
        if (s.ball.id < 0 || is_scene_id(s.ball.id)) {
            throw Error(ErrorCode::config, "ball id " + std::to_string(s.ball.id) + " is outside the object id range");
        }
        if (!ids.insert(s.ball.id).second) {
            throw Error(ErrorCode::config, "duplicate ball id " + std::to_string(s.ball.id));
        }
        if (s.ball.radius <= 0.0) throw Error(ErrorCode::config, "ball radius must be positive");
    }
    if (render.native_width <= 0 || render.native_height <= 0 || render.internal_side <= 0) {
        throw Error(ErrorCode::config, "render dimensions must be positive");
    }
}

std::string Scenario::to_text() const {
    json j;
    j["table"] = {{"left", table.left},
                  {"top", table.top},
                  {"width", table.width},
                  {"height", table.height},
                  {"pocket_radius", table.pocket_radius},
                  {"cushion_restitution", table.cushion_restitution},
                  {"friction_decel", table.friction_decel},
                  {"knuckle_radius", table.knuckle_radius}};
    json bj = json::array();
    for (const auto& s : balls) {
        bj.push_back({{"id", s.ball.id},
                      {"pos", vec_json(s.ball.position)},
                      {"vel", vec_json(s.ball.velocity)},
                      {"radius", s.ball.radius},
                      {"appear_frame", s.appear_frame}});
    }
    j["balls"] = std::move(bj);
    json sj = json::array();
    for (const auto& s : shots) sj.push_back({{"frame", s.frame}, {"ball", s.ball}, {"impulse", vec_json(s.impulse)}});
    j["shots"] = std::move(sj);
    j["noise"] = {{"box_jitter_px", noise.box_jitter_px},
                  {"dropout_prob", noise.dropout_prob},
                  {"mask_erosion_px", noise.mask_erosion_px},
                  {"seed", noise.seed},
                  {"dropout_frames", std::vector<FrameIndex>(noise.dropout_frames.begin(), noise.dropout_frames.end())}};
    j["seed"] = seed;
    j["frames"] = frames;
    j["render"] = {{"native_width", render.native_width},
                   {"native_height", render.native_height},
                   {"internal_side", render.internal_side},
                   {"stretch", render.stretch},
                   {"half_precision", render.precision == Precision::half},
                   {"offload_video", render.tier == StorageTier::slow}};
    return j.dump(2) + "\n";
}

Scenario Scenario::parse(std::string_view text) {
    Scenario s;
    try {
        const json j = json::parse(text);
        if (j.contains("table")) {
            const json& t = j["table"];
            s.table.left = t.value("left", s.table.left);
            s.table.top = t.value("top", s.table.top);
            s.table.width = t.value("width", s.table.width);
            s.table.height = t.value("height", s.table.height);
            s.table.pocket_radius = t.value("pocket_radius", s.table.pocket_radius);
            s.table.cushion_restitution = t.value("cushion_restitution", s.table.cushion_restitution);
            s.table.friction_decel = t.value("friction_decel", s.table.friction_decel);
            s.table.knuckle_radius = t.value("knuckle_radius", s.table.knuckle_radius);
        }
        for (const auto& b : j.value("balls", json::array())) {
            BallSpawn sp;
            sp.ball.id = b.at("id").get<ObjectId>();
            sp.ball.position = vec_from(b.at("pos"));
            if (b.contains("vel")) sp.ball.velocity = vec_from(b["vel"]);
            sp.ball.radius = b.value("radius", sp.ball.radius);
            sp.appear_frame = b.value("appear_frame", FrameIndex{0});
            s.balls.push_back(sp);
        }
        for (const auto& sh : j.value("shots", json::array())) {
            s.shots.push_back({sh.at("frame").get<FrameIndex>(), sh.at("ball").get<ObjectId>(), vec_from(sh.at("impulse"))});
        }
        if (j.contains("noise")) {
            const json& n = j["noise"];
            s.noise.box_jitter_px = n.value("box_jitter_px", 0.0);
            s.noise.dropout_prob = n.value("dropout_prob", 0.0);
            s.noise.mask_erosion_px = n.value("mask_erosion_px", 0);
            s.noise.seed = n.value("seed", std::uint64_t{0});
            for (FrameIndex f : n.value("dropout_frames", std::vector<FrameIndex>{})) s.noise.dropout_frames.insert(f);
        }
        s.seed = j.value("seed", std::uint64_t{0});
        s.frames = j.value("frames", s.frames);
        if (j.contains("render")) {
            const json& r = j["render"];
            s.render.native_width = r.value("native_width", s.render.native_width);
            s.render.native_height = r.value("native_height", s.render.native_height);
            s.render.internal_side = r.value("internal_side", s.render.internal_side);
            s.render.stretch = r.value("stretch", s.render.stretch);
            s.render.precision = r.value("half_precision", false) ? Precision::half : Precision::single;
            s.render.tier = r.value("offload_video", false) ? StorageTier::slow : StorageTier::fast;
        }
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::format, std::string("malformed scenario: ") + ex.what());
    }
    s.validate();
    return s;
}

Scenario Scenario::read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot read scenario " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void Scenario::write_file(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write scenario " + path.string());
    out << to_text();
}

// ---------------------------------------------------------------------------
// Scenario generation

WellPosedness WellPosedness::for_scene(const TableSpec& table, double ball_radius) {
    WellPosedness w;
    w.proximity_radius = 2.2 * 2.0 * ball_radius;
    w.buffer_margin = 1.5 * ball_radius;
    w.min_normal_speed = std::max(1.0, 5.0 * table.friction_decel);
    return w;
}

namespace {

Vec2 rotate(Vec2 v, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

constexpr double kMaxSpeed = 16.0;

Vec2 clamp_speed(Vec2 v) {
    const double s = v.norm();
    return s > kMaxSpeed ? v * (kMaxSpeed / s) : v;
}

Vec2 pocket_bisector(PocketName p) {
    const double k = std::numbers::sqrt2 / 2.0;
    switch (p) {
        case PocketName::TL: return {k, k};
        case PocketName::TM: return {0.0, 1.0};
        case PocketName::TR: return {-k, k};
        case PocketName::BL: return {k, -k};
        case PocketName::BM: return {0.0, -1.0};
        case PocketName::BR: return {-k, -k};
    }
    return {};
}

class Placer {
public:
    Placer(const TableSpec& t, double r, std::mt19937_64& rng) : t_(t), r_(r), rng_(rng) {}

    double uni(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
    int pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng_); }

    bool ok(Vec2 p, const std::vector<BallState>& placed) const {
        const double m = 3.0 * r_;
        if (p.x < t_.left + m || p.x > t_.right() - m || p.y < t_.top + m || p.y > t_.bottom() - m) return false;
        for (PocketName pk : kAllPockets) {
            if ((t_.pocket(pk) - p).norm() < 4.0 * t_.pocket_radius) return false;
        }
        for (const auto& b : placed) {
            if ((b.position - p).norm() < 6.0 * r_) return false;
        }
        return true;
    }

    double speed_for(double distance, double arrival) const {
        return std::sqrt(2.0 * t_.friction_decel * distance + arrival * arrival);
    }

    std::optional<BallState> still(const std::vector<BallState>& placed) {
        for (int attempt = 0; attempt < 60; ++attempt) {
            Vec2 p{uni(t_.left + 3 * r_, t_.right() - 3 * r_), uni(t_.top + 3 * r_, t_.bottom() - 3 * r_)};
            if (ok(p, placed)) return BallState{0, p, {}, r_, false};
        }
        return std::nullopt;
    }

    std::optional<BallState> roll(const std::vector<BallState>& placed) {
        auto b = still(placed);
        if (b) b->velocity = rotate({1.0, 0.0}, uni(0.0, 2 * std::numbers::pi)) * uni(2.0, 8.0);
        return b;
    }

    std::optional<BallState> to_pocket(const std::vector<BallState>& placed) {
        for (int attempt = 0; attempt < 60; ++attempt) {
            const PocketName pk = kAllPockets[static_cast<std::size_t>(pick(6))];
            const bool corner = pk != PocketName::TM && pk != PocketName::BM;
            const double spread = corner ? 0.55 : 0.75;
            const Vec2 dir = rotate(pocket_bisector(pk), uni(-spread, spread));
            const double d = uni(120.0, 240.0);
            const Vec2 p = t_.pocket(pk) + dir * d;
            if (!ok(p, placed)) continue;
            return BallState{0, p, clamp_speed(dir * -speed_for(d, uni(2.0, 4.0))), r_, false};
        }
        return std::nullopt;
    }

    std::optional<BallState> to_ball(const std::vector<BallState>& placed) {
        std::vector<const BallState*> targets;
        for (const auto& b : placed) {
            if (b.velocity.norm() == 0.0) targets.push_back(&b);
        }
        if (targets.empty()) return std::nullopt;
        for (int attempt = 0; attempt < 60; ++attempt) {
            const BallState& target = *targets[static_cast<std::size_t>(pick(static_cast<int>(targets.size())))];
            const Vec2 dir = rotate({1.0, 0.0}, uni(0.0, 2 * std::numbers::pi));
            const double d = uni(90.0, 200.0);
            const Vec2 p = target.position + dir * d;
            if (!ok(p, placed)) {
                // The target itself is in `placed`; only its own exclusion radius is expected to trip.
                bool only_target = true;
                const double m = 3.0 * r_;
                if (p.x < t_.left + m || p.x > t_.right() - m || p.y < t_.top + m || p.y > t_.bottom() - m) continue;
                for (PocketName pk : kAllPockets) {
                    if ((t_.pocket(pk) - p).norm() < 4.0 * t_.pocket_radius) only_target = false;
                }
                for (const auto& b : placed) {
                    if (&b != &target && (b.position - p).norm() < 6.0 * r_) only_target = false;
                }
                if (!only_target) continue;
            }
            const double impact = uni(-0.5, 0.5) * 2.0 * r_;
            const Vec2 aim = rotate(dir * -1.0, std::asin(impact / d));
            return BallState{0, p, clamp_speed(aim * speed_for(d, uni(2.5, 5.0))), r_, false};
        }
        return std::nullopt;
    }

    std::optional<BallState> to_cushion(const std::vector<BallState>& placed) {
        for (int attempt = 0; attempt < 60; ++attempt) {
            const Side side = kAllSides[static_cast<std::size_t>(pick(4))];
            const Vec2 n = t_.inward_normal(side);
            const bool horizontal = side == Side::top || side == Side::bottom;
            const double along = horizontal ? uni(t_.left, t_.right()) : uni(t_.top, t_.bottom());
            Vec2 on_line = horizontal ? Vec2{along, side == Side::top ? t_.top : t_.bottom()}
                                      : Vec2{side == Side::left ? t_.left : t_.right(), along};
            bool near_pocket = false;
            for (PocketName pk : kAllPockets) {
                if ((t_.pocket(pk) - on_line).norm() < 5.0 * t_.pocket_radius) near_pocket = true;
            }
            if (near_pocket) continue;
            const double d = uni(80.0, 180.0);
            const Vec2 incoming = rotate(n * -1.0, uni(-0.7, 0.7));
            const double travel = d / std::max(0.3, -incoming.dot(n));
            const Vec2 p = on_line + n * r_ - incoming * travel;
            if (!ok(p, placed)) continue;
            return BallState{0, p, clamp_speed(incoming * speed_for(travel, uni(2.0, 5.0))), r_, false};
        }
        return std::nullopt;
    }

    std::optional<BallState> to_jaw(const std::vector<BallState>& placed) {
        const auto knuckles = t_.knuckles();
        for (int attempt = 0; attempt < 60; ++attempt) {
            const Knuckle& k = knuckles[static_cast<std::size_t>(pick(static_cast<int>(knuckles.size())))];
            const Vec2 n = t_.inward_normal(k.side);
            const Vec2 approach = rotate(n, uni(-0.9, 0.9));
            const double d = uni(90.0, 180.0);
            const double lateral = uni(-0.6, 0.6) * (r_ + t_.knuckle_radius);
            const Vec2 aim_point = k.center + Vec2{-approach.y, approach.x} * lateral;
            const Vec2 p = aim_point + approach * d;
            if (!ok(p, placed)) continue;
            return BallState{0, p, clamp_speed(approach * -speed_for(d, uni(2.0, 4.0))), r_, false};
        }
        return std::nullopt;
    }

private:
    const TableSpec& t_;
    double r_;
    std::mt19937_64& rng_;
};

}  // namespace

Scenario make_random_scenario(std::uint64_t seed, const GeneratorOptions& options) {
    std::mt19937_64 rng(seed);
    Scenario s;
    s.seed = seed;
    s.noise.seed = seed;
    s.frames = options.frames;
    Placer placer(s.table, options.ball_radius, rng);

    const int n = std::uniform_int_distribution<int>(options.min_balls, options.max_balls)(rng);
    std::vector<ObjectId> ids;
    for (ObjectId id = 1; id <= 20; ++id) ids.push_back(id);
    std::shuffle(ids.begin(), ids.end(), rng);

    std::vector<BallState> placed;
    auto add = [&](std::optional<BallState> b) {
        if (!b) return;
        b->id = ids[placed.size()];
        placed.push_back(*b);
    };

    add(placer.still(placed));
    if (options.focus == ScenarioFocus::collision) add(placer.still(placed));
    switch (options.focus) {
        case ScenarioFocus::goal: add(placer.to_pocket(placed)); break;
        case ScenarioFocus::collision: add(placer.to_ball(placed)); break;
        case ScenarioFocus::rebound: add(placer.to_cushion(placed)); break;
        case ScenarioFocus::jaw: add(placer.to_jaw(placed)); break;
    }
    while (static_cast<int>(placed.size()) < n) {
        std::optional<BallState> b;
        switch (placer.pick(6)) {
            case 0: b = placer.still(placed); break;
            case 1: b = placer.to_ball(placed); break;
            case 2: b = placer.to_pocket(placed); break;
            case 3: b = placer.to_cushion(placed); break;
            case 4: b = placer.to_jaw(placed); break;
            default: b = placer.roll(placed); break;
        }
        if (!b) b = placer.still(placed);
        if (!b) break;
        add(b);
    }
    for (const auto& b : placed) s.balls.push_back({b, 0});
    std::sort(s.balls.begin(), s.balls.end(), [](const BallSpawn& a, const BallSpawn& b) { return a.ball.id < b.ball.id; });

    // Occasionally re-strike a ball once the table has settled a little.
    if (placer.uni(0.0, 1.0) < 0.3 && !s.balls.empty()) {
        const FrameIndex at = static_cast<FrameIndex>(placer.uni(60.0, 120.0));
        Scenario probe = s;
        probe.frames = at;
        const Trajectory t = simulate(probe);
        const World& w = t.worlds.back();
        if (!w.balls.empty()) {
            const BallState& b = w.balls[static_cast<std::size_t>(placer.pick(static_cast<int>(w.balls.size())))];
            const PocketName pk = kAllPockets[static_cast<std::size_t>(placer.pick(6))];
            const Vec2 to = s.table.pocket(pk) - b.position;
            const Vec2 want = clamp_speed(to.normalized() * placer.speed_for(to.norm(), placer.uni(1.0, 3.0)));
            s.shots.push_back({at, b.id, want - b.velocity});
        }
    }
    return s;
}

std::optional<std::string> ill_posed_reason(const Scenario& scenario, const Trajectory& trajectory,
                                            const WellPosedness& rules) {
    const auto& worlds = trajectory.worlds;
    const auto& events = trajectory.events;
    const TableSpec& table = scenario.table;
    if (events.empty()) return "no events";

    auto pos = [&](ObjectId id, FrameIndex f) -> std::optional<Vec2> {
        if (f < 0 || f >= static_cast<FrameIndex>(worlds.size())) return std::nullopt;
        const BallState* b = worlds[static_cast<std::size_t>(f)].find(id);
        return b ? std::optional<Vec2>(b->position) : std::nullopt;
    };
    auto vel = [&](ObjectId id, FrameIndex f) -> std::optional<Vec2> {
        auto a = pos(id, f), b = pos(id, f - 1);
        if (!a || !b) return std::nullopt;
        return *a - *b;
    };

    std::map<ObjectId, std::vector<FrameIndex>> per_ball;
    const FrameIndex last = static_cast<FrameIndex>(worlds.size()) - 1;
    for (const auto& e : events) {
        if (e.frame < rules.edge_frames || e.frame > last - rules.edge_frames) return "event too close to the stream edge";
        for (ObjectId b : e.balls) per_ball[b].push_back(e.frame);
    }
    for (auto& [id, frames] : per_ball) {
        std::sort(frames.begin(), frames.end());
        for (std::size_t k = 1; k < frames.size(); ++k) {
            if (frames[k] - frames[k - 1] < rules.min_event_gap) {
                return "ball " + std::to_string(id) + " has events too close in time";
            }
        }
    }

    for (const auto& e : events) {
        const FrameIndex f = e.frame;
        if (e.kind == EventKind::collision) {
            for (ObjectId b : e.balls) {
                auto vin = vel(b, f), vout = vel(b, f + 1);
                if (!vin || !vout || (*vout - *vin).norm() < rules.min_normal_speed) return "glancing collision";
            }
        } else if (e.kind == EventKind::rebound) {
            const ObjectId b = e.balls.front();
            const Side side = *side_from_string(e.location);
            const Vec2 n = table.inward_normal(side);
            auto vin = vel(b, f), vout = vel(b, f + 1);
            if (!vin || !vout) return "rebound without surrounding frames";
            if (-vin->dot(n) < rules.min_normal_speed) return "rebound with a shallow approach";
            if ((*vout - *vin).norm() < rules.min_normal_speed) return "rebound with a small velocity change";
            auto p = pos(b, f);
            int zones = 0;
            for (Side s : kAllSides) {
                if (table.distance_to_side(s, *p) <= rules.buffer_margin) ++zones;
            }
            if (zones > 1) return "rebound inside two cushion bands";
        } else {
            const ObjectId b = e.balls.front();
            auto v = vel(b, f - 1);
            auto p = pos(b, f - 1);
            if (!v || !p) return "goal without approach frames";
            const Vec2 to = table.pocket(*pocket_from_string(e.location)) - *p;
            if (v->norm() < 0.5 || v->dot(to) < 0.3 * v->norm() * to.norm()) return "grazing pocket capture";
        }

        // No bystander near the participants around the event.
        for (FrameIndex g = f - rules.isolation_frames; g <= f + rules.isolation_frames; ++g) {
            if (g < 0 || g > last) continue;
            for (ObjectId b : e.balls) {
                auto pb = pos(b, g);
                if (!pb) continue;
                for (const auto& other : worlds[static_cast<std::size_t>(g)].balls) {
                    if (std::find(e.balls.begin(), e.balls.end(), other.id) != e.balls.end()) continue;
                    if ((other.position - *pb).norm() < 1.5 * rules.proximity_radius) return "bystander near an event";
                }
            }
        }
    }

    auto has_event_near = [&](ObjectId id, FrameIndex g, FrameIndex window, bool rebound_or_goal_only) {
        for (const auto& e : events) {
            if (std::llabs(e.frame - g) > window) continue;
            if (rebound_or_goal_only && e.kind == EventKind::collision) continue;
            if (std::find(e.balls.begin(), e.balls.end(), id) != e.balls.end()) return true;
        }
        return false;
    };
    auto pair_collides_near = [&](ObjectId a, ObjectId b, FrameIndex g, FrameIndex window) {
        for (const auto& e : events) {
            if (e.kind != EventKind::collision || std::llabs(e.frame - g) > window) continue;
            if (e.balls == std::vector<ObjectId>{std::min(a, b), std::max(a, b)}) return true;
        }
        return false;
    };

    for (FrameIndex g = 0; g <= last; ++g) {
        const World& w = worlds[static_cast<std::size_t>(g)];
        for (const auto& b : w.balls) {
            if (b.velocity.norm() > 2.0 * b.radius * 0.8) return "ball too fast for frame-level contact";
            for (Side s : kAllSides) {
                if (table.distance_to_side(s, b.position) <= rules.buffer_margin + 1.0 &&
                    !has_event_near(b.id, g, 6, true)) {
                    return "ball loiters in a cushion band";
                }
            }
        }
        for (std::size_t i = 0; i < w.balls.size(); ++i) {
            for (std::size_t j = i + 1; j < w.balls.size(); ++j) {
                const double d = (w.balls[i].position - w.balls[j].position).norm();
                const double touch = w.balls[i].radius + w.balls[j].radius + 1.0;
                if (d < touch && !pair_collides_near(w.balls[i].id, w.balls[j].id, g, 2)) {
                    return "balls touching without a collision";
                }
            }
        }
    }
    return std::nullopt;
}

}  // namespace streamseg::billiards
