#pragma once

#include "rtsim/articulation.hpp"
#include "rtsim/collision.hpp"
#include "rtsim/events.hpp"
#include "rtsim/fem.hpp"
#include "rtsim/haptics.hpp"
#include "rtsim/scheduler.hpp"
#include "rtsim/topology.hpp"
#include "rtsim/visual.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

namespace rtsim {

// ---------------------------------------------------------------------------
// Configuration. Every entity remembers where it came from in the source
// document (a JSON pointer) so that build errors can name it.

// Nodes picked by index and/or by an axis-aligned box around rest positions.
struct NodeSelector {
    std::vector<Index> nodes;
    std::optional<Aabb> box;

    bool empty() const { return nodes.empty() && !box; }
    std::vector<Index> resolve(const std::vector<Vec3>& rest) const;  // sorted, unique
};

struct VisualConfig {
    std::filesystem::path mesh;  // empty: boundary of the volume mesh
    int subdivision = 0;
};

struct ShapeConfig {
    enum class Kind { none, box, sphere, mesh } kind = Kind::none;
    Vec3 half_extents = Vec3::Constant(0.01);
    double radius = 0.01;
    std::filesystem::path mesh;
};

struct SoftBodyConfig {
    std::filesystem::path mesh;
    RigidTransform placement;
    MechanicalParams mechanics;
    SolverConfig solver;
    NodeSelector pinned;
};

struct RigidBodyConfig {
    RigidTransform pose;
    double mass = 0.1;
    Vec3 inertia = Vec3::Constant(1e-4);  // principal moments, body frame
    bool dynamic = true;
    bool gravity = true;
    double damping = 1.0;  // 1/s, on the velocity
    ShapeConfig shape;
    std::optional<InstrumentConfig> instrument;
    double opening = 0.0;  // instrument jaw value, rad
};

struct BodyConfig {
    std::string name;
    bool rigid = false;
    SoftBodyConfig soft;
    RigidBodyConfig rigid_body;
    std::optional<VisualConfig> visual;
    std::optional<CollisionParams> collision;
    std::string location;
};

struct AttachmentSpec {
    std::string body;    // side a, soft
    std::string target;  // "world" or a body name
    Index frame = 0;     // rigid targets
    NodeSelector nodes;
    bool barycentric = false;
    double stiffness = kPinStiffness;
    std::string location;
};

struct ArticulationSpec {
    std::string body;  // rigid
    std::size_t frames = 1;
    std::vector<JointConfig> joints;
    std::vector<double> values;
    std::string location;
};

struct HapticSpec {
    std::string name;
    std::string body;  // rigid
    Index frame = 0;
    HapticDeviceConfig device;
    std::string location;
};

struct SceneConfig {
    Vec3 gravity = Vec3(0.0, -9.81, 0.0);
    SchedulerConfig scheduler;
    double visual_rate = 60.0;          // syncs per second
    double contact_stiffness = 500.0;   // N/m
    std::vector<BodyConfig> bodies;
    std::vector<AttachmentSpec> attachments;
    std::vector<ArticulationSpec> articulations;
    std::vector<HapticSpec> haptics;

    // Cross references and parameter ranges; ConfigError names the location.
    void validate() const;
    const BodyConfig* find(const std::string& name) const;
};

// Relative mesh paths are resolved against `base_dir`. Throws ConfigError
// (with a JSON pointer) on malformed or unknown entries.
SceneConfig parse_scene_config(std::istream& in, const std::filesystem::path& base_dir = {});
SceneConfig load_scene_config(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Runtime scene.

struct SoftBody {
    TetMesh rest;
    SoftBodyState state;
    MechanicalParams mechanics;
    SolverConfig solver;
    std::unique_ptr<CorotationalFem> fem;
    std::unique_ptr<SpringNetwork> springs;
    AnchorSprings anchors;  // attachment springs on this body (side a)
    ProxySprings proxies;   // attachment reactions on this body (side b)
    std::optional<DynamicTopology> topology;
    std::optional<std::size_t> collision;

    const std::vector<Tet>& tets() const { return topology ? topology->mesh().tets : rest.tets; }
    std::uint64_t version() const { return topology ? topology->version() : 0; }
};

struct RigidBody {
    RigidBodyState state;
    bool gravity = true;
    double damping = 1.0;
    std::optional<Articulation> articulation;  // drives frames 1.. from frame 0
    std::vector<double> joint_values;
    std::optional<ArticulatedInstrument> instrument;
    std::optional<std::size_t> collision;
};

struct Body {
    std::string name;
    bool rigid = false;
    SoftBody soft;
    RigidBody rigid_body;
};

struct SceneAttachment {
    Attachment attachment;
    bool rigid_target = false;
};

struct HapticDevice {
    std::string name;
    Index body = 0;
    Index frame = 0;
    HapticDeviceConfig config;
    RigidTransform pose;   // last evaluated
    Wrench feedback;       // reaction sent back to the device
};

struct VisualEntry {
    Index body = 0;
    MappingScheme scheme = MappingScheme::identity;
    std::unique_ptr<VisualBody> visual;
    BarycentricMap map;                  // barycentric
    std::optional<DynamicVisual> dynamic;  // dynamic_barycentric
    std::vector<Vec3> local;             // rigid_frame: vertices in frame 0 coordinates
    Index transform = -1;                // node in the scene's transform tree
    std::uint64_t synced_step = 0;
    bool synced = false;
};

// Consistent copy of all physical states after a completed step.
struct Snapshot {
    std::uint64_t step = 0;  // completed steps
    double time = 0.0;
    std::vector<VecX> positions;                       // soft bodies (empty for rigid)
    std::vector<std::vector<RigidTransform>> frames;   // rigid bodies (empty for soft)
    std::vector<std::shared_ptr<const DynamicTopology>> topologies;
    std::vector<double> net_force;                     // magnitude per body
    std::uint64_t checksum = 0;
};

struct StepReport {
    std::uint64_t step = 0;
    double time = 0.0;  // after the step
    double dt = 0.0;
    std::size_t contacts = 0;
    std::size_t separated_faces = 0;
    std::size_t duplicated_nodes = 0;
    int solver_iterations = 0;
    int failures = 0;  // bodies rolled back
    double applied_force = 0.0;  // sum of net force magnitudes
    std::array<double, 5> phase_seconds{};  // detect, respond, assemble, solve, haptics
    double wall_seconds = 0.0;
    std::uint64_t checksum = 0;
    std::shared_ptr<const Snapshot> snapshot;
};

class Scene {
public:
    Scene() = default;
    Scene(const Scene&) = delete;
    Scene& operator=(const Scene&) = delete;

    std::vector<Body> bodies;
    std::vector<SceneAttachment> attachments;
    std::vector<HapticDevice> devices;
    std::vector<VisualEntry> visuals;
    CollisionWorld collision;
    TransformTree transforms;
    EventDispatcher events;
    SceneConfig config;
    Vec3 gravity = Vec3(0.0, -9.81, 0.0);
    double contact_stiffness = 500.0;

    std::uint64_t step_count() const { return steps_; }
    double time() const { return time_; }
    Index body_index(const std::string& name) const;  // -1 when absent

    // Latest published snapshot (never a state mid-step).
    std::shared_ptr<const Snapshot> snapshot() const;
    void publish_snapshot();

    // Sets the subdivision level of every visual body.
    void set_subdivision(int level);

private:
    friend StepReport physics_tick(Scene& scene, double dt);
    std::uint64_t steps_ = 0;
    double time_ = 0.0;
    std::vector<double> net_force_;
    std::vector<std::shared_ptr<const DynamicTopology>> topology_cache_;
    mutable std::mutex snapshot_mutex_;
    std::shared_ptr<const Snapshot> snapshot_;
};

// Throws ConfigError for bad references or ranges, AssetError for missing
// files; both messages carry the entity's config location.
std::unique_ptr<Scene> build_scene(const SceneConfig& config);

// Collision detection, collision response, force assembly, integration
// (linear solves) and haptic feedback, in that order; then tearing,
// articulation and snapshot publication. Posts physics_update (payload
// StepReport) and, for each failed body, error (payload std::string).
StepReport physics_tick(Scene& scene, double dt);

// Applies every mapping to the latest snapshot, refreshes subdivision and
// posts visual_update (payload: the snapshot's step). Returns the step of
// the snapshot used.
std::uint64_t mapping_sync(Scene& scene);

// FNV-1a over all positions, velocities, frames and twists.
std::uint64_t state_checksum(const Scene& scene);

// Records one body on every physics_update and flushes on simulation_stop.
// A sink failure posts an error event and disables the tracker.
EventDispatcher::ObserverId attach_tracker(Scene& scene, const std::string& body, MetricTracker& tracker);

struct RunResult {
    LoopStats loop;
    std::vector<std::uint64_t> checksums;  // per step
    std::vector<std::uint64_t> synced_steps;
};

// Fixed dt = T, one thread: physics, mapping at the visual cadence and
// event dispatch interleaved deterministically.
RunResult run_deterministic(Scene& scene, std::uint64_t steps);

// Physics loop, mapping task and event dispatcher on their own threads.
RunResult run_realtime(Scene& scene, const SchedulerConfig& scheduler);

}  // namespace rtsim
