#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "streamseg/event_types.hpp"
#include "streamseg/frame_store.hpp"
#include "streamseg/propagation_engine.hpp"
#include "streamseg/types.hpp"

namespace streamseg::billiards {

struct Knuckle {
    Vec2 center;
    Side side;
    PocketName pocket;
};

// Table rectangle in world units (1 unit == 1 native pixel). Pockets sit on
// the cushion lines: four corners plus the middle of the long edges.
struct TableSpec {
    double left = 160.0;
    double top = 140.0;
    double width = 1600.0;
    double height = 800.0;
    double pocket_radius = 33.0;
    double cushion_restitution = 0.9;
    double friction_decel = 0.3;
    double knuckle_radius = 6.0;

    double right() const { return left + width; }
    double bottom() const { return top + height; }
    Vec2 pocket(PocketName p) const;
    std::array<Vec2, 6> pockets() const;
    std::vector<Knuckle> knuckles() const;
    // Inward normal and a point on the cushion line of each side.
    Vec2 inward_normal(Side s) const;
    double distance_to_side(Side s, Vec2 p) const;
    void validate() const;
};

struct BallState {
    ObjectId id = 0;
    Vec2 position;
    Vec2 velocity;
    double radius = 15.0;
    bool pocketed = false;
};

struct BallSpawn {
    BallState ball;
    FrameIndex appear_frame = 0;
};

struct Shot {
    FrameIndex frame = 0;
    ObjectId ball = 0;
    Vec2 impulse;
};

struct NoiseConfig {
    double box_jitter_px = 0.0;
    double dropout_prob = 0.0;
    int mask_erosion_px = 0;
    std::uint64_t seed = 0;
    // Condition frames whose detections are dropped entirely.
    std::set<FrameIndex> dropout_frames;
};

struct RenderConfig {
    int native_width = 1920;
    int native_height = 1080;
    int internal_side = 1024;
    double stretch = 0.02;
    Precision precision = Precision::single;
    StorageTier tier = StorageTier::fast;
};

struct Scenario {
    TableSpec table;
    std::vector<BallSpawn> balls;
    std::vector<Shot> shots;
    NoiseConfig noise;
    std::uint64_t seed = 0;
    std::int64_t frames = 300;
    RenderConfig render;

    void validate() const;
    std::string to_text() const;
    static Scenario parse(std::string_view text);
    static Scenario read_file(const std::filesystem::path& path);
    void write_file(const std::filesystem::path& path) const;
};

// Active (appeared, not pocketed) balls at one frame, sorted by id.
struct World {
    FrameIndex frame = 0;
    std::vector<BallState> balls;

    const BallState* find(ObjectId id) const;
    double kinetic_energy() const;
};

struct StepResult {
    World world;
    std::vector<Event> events;
};

// Advances one frame: shots, friction, motion, pocket capture, ball-ball,
// jaw and cushion contacts. Contacts are resolved at the frame boundary.
StepResult step(const World& world, const TableSpec& table, const std::vector<BallState>& spawns = {},
                const std::vector<Shot>& shots = {});

Mask render_ball(const BallState& ball, double stretch, int frame_width, int frame_height);
ObjectMasks render_masks(const World& world, double stretch, int frame_width = 1920, int frame_height = 1080);
Box ellipse_box(const BallState& ball, double stretch);

std::vector<PromptBox> detect(const World& world, const TableSpec& table, const NoiseConfig& noise, double stretch);

// Behavioural stand-in for the memory-conditioned segmenter: an object is
// segmented iff it is visible and it has a prompt here or non-null memory in
// one of the attention frames.
ObjectMasks segment(const World& world, const std::vector<PromptBox>& prompts, const MemoryBank& bank,
                    const std::vector<FrameIndex>& attention_frames, const NoiseConfig& noise,
                    const RenderConfig& render);

Mask erode(const Mask& mask, int radius);

// Steps a scenario frame by frame, collecting ground-truth events.
class Simulation {
public:
    explicit Simulation(const Scenario& scenario);

    const World& world() const { return world_; }
    // Advances to the next frame and returns its events.
    const std::vector<Event>& advance();
    const std::vector<Event>& events() const { return events_; }

private:
    const Scenario& scenario_;
    World world_;
    std::map<FrameIndex, std::vector<BallState>> spawns_;
    std::map<FrameIndex, std::vector<Shot>> shots_;
    std::vector<Event> events_;
    std::vector<Event> last_;
};

// Full ground-truth run over scenario.frames frames.
struct Trajectory {
    std::vector<World> worlds;
    std::vector<Event> events;
};
Trajectory simulate(const Scenario& scenario);

class BilliardsSource : public FrameSource {
public:
    explicit BilliardsSource(const Scenario& scenario) : scenario_(scenario), sim_(scenario_) {}

    std::optional<FrameRecord> next() override;
    const std::vector<Event>& truth_events() const { return sim_.events(); }

private:
    Scenario scenario_;
    Simulation sim_;
    std::int64_t produced_ = 0;
};

class BilliardsBackend : public Detector, public Segmenter {
public:
    BilliardsBackend(TableSpec table, NoiseConfig noise, RenderConfig render)
        : table_(table), noise_(std::move(noise)), render_(render) {}

    std::vector<PromptBox> detect(const FrameRecord& frame) override;
    ObjectMasks segment(const FrameRecord& frame, const std::vector<PromptBox>& prompts, const MemoryBank& bank,
                        const std::vector<FrameIndex>& attention_frames) override;

private:
    TableSpec table_;
    NoiseConfig noise_;
    RenderConfig render_;
};

const World& world_of(const FrameRecord& frame);

// ---------------------------------------------------------------------------
// Seeded scenario generation

enum class ScenarioFocus { goal, collision, rebound, jaw };

struct GeneratorOptions {
    std::int64_t frames = 240;
    int min_balls = 3;
    int max_balls = 5;
    double ball_radius = 15.0;
    ScenarioFocus focus = ScenarioFocus::collision;
};

// Separation rules that keep every ground-truth event individually
// observable from masks: isolated in time and space, with clear approach
// speeds, and no loitering inside cushion bands or next to other balls.
struct WellPosedness {
    double proximity_radius = 66.0;
    double buffer_margin = 22.5;
    double min_normal_speed = 1.0;
    std::int64_t min_event_gap = 6;
    std::int64_t isolation_frames = 3;
    std::int64_t edge_frames = 5;

    static WellPosedness for_scene(const TableSpec& table, double ball_radius);
};

Scenario make_random_scenario(std::uint64_t seed, const GeneratorOptions& options = {});
// Reason the trajectory is ambiguous for frame-level event detection, or
// nullopt when every event is cleanly separated.
std::optional<std::string> ill_posed_reason(const Scenario& scenario, const Trajectory& trajectory,
                                            const WellPosedness& rules);

}  // namespace streamseg::billiards
