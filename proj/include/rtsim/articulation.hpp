#pragma once

#include "rtsim/types.hpp"

#include <iosfwd>
#include <limits>

namespace rtsim {

enum class JointType { prismatic, revolute };

struct JointConfig {
    JointType type = JointType::revolute;
    RigidTransform parent_offset;
    RigidTransform child_offset;
    Vec3 axis = Vec3::UnitZ();
    Index parent = 0;  // rigid frame indices
    Index child = 1;
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
};

// Translation along, or rotation about, the joint axis.
RigidTransform joint_motion(JointType type, const Vec3& axis, double value);

/// Tree of 1-DOF joints over the frames of one rigid body. Frames that are
/// never a child are roots; their poses are inputs (the reference body).
/// Every other frame is parent * parent_offset * motion(value) * child_offset.
class Articulation {
public:
    // Throws ConfigError for a non-unit axis, an out-of-range frame, a frame
    // driven by two joints, or a cycle.
    Articulation(std::size_t frame_count, std::vector<JointConfig> joints);

    std::size_t joint_count() const { return joints_.size(); }
    std::size_t frame_count() const { return frame_count_; }
    const std::vector<JointConfig>& joints() const { return joints_; }
    bool is_root(Index frame) const { return driver_[frame] < 0; }

    // Writes child frames into `frames` (size frame_count, roots untouched).
    // Throws ConfigError on a value count mismatch or a value outside limits.
    void forward_kinematics(const std::vector<double>& values, std::vector<RigidTransform>& frames) const;

private:
    std::size_t frame_count_;
    std::vector<JointConfig> joints_;
    std::vector<Index> driver_;  // joint driving each frame, -1 for roots
    std::vector<Index> order_;   // joints, parents before children
};

struct InstrumentConfig {
    int jaw_count = 2;
    double shaft_length = 0.3;  // m, hinge at the end of the shaft along +z
    double jaw_length = 0.02;   // m, hinge to jaw tip
    Vec3 hinge_axis = Vec3::UnitX();
};

/// Rigid instrument with a hinged tip. Frame 0 is the shaft; frames 1 (and
/// 2) sit at the jaw tips. One opening value drives the jaws symmetrically:
/// +value and -value about the hinge axis.
class ArticulatedInstrument {
public:
    explicit ArticulatedInstrument(const InstrumentConfig& cfg);

    const InstrumentConfig& config() const { return cfg_; }
    const Articulation& articulation() const { return articulation_; }
    int jaw_count() const { return cfg_.jaw_count; }
    std::vector<double> joint_values(double opening) const;

    // All frames for a shaft pose and opening angle.
    std::vector<RigidTransform> frames(const RigidTransform& shaft, double opening) const;

private:
    InstrumentConfig cfg_;
    Articulation articulation_;
};

ArticulatedInstrument make_articulated_instrument(const InstrumentConfig& cfg);

// Camera at the scope tip (the frame origin). The scope axis is the frame's
// +z. The view axis leans by `inclination` about the frame's +x, and that
// leaning plane turns by `roll` about the scope axis (right-handed). The
// camera looks along its own +z.
RigidTransform endoscope_view_pose(const RigidTransform& scope_tip, double inclination, double roll);

/// Records the state of one body per physics update and writes them as
/// comma-separated lines with a header. Soft bodies report their centroid
/// and an identity orientation.
class MetricTracker {
public:
    struct Record {
        double time = 0.0;
        Vec3 position = Vec3::Zero();
        Quat orientation = Quat::Identity();
        double force = 0.0;  // magnitude of the net applied force
    };

    explicit MetricTracker(std::ostream* sink) : sink_(sink) {}

    void record(double time, const RigidTransform& pose, double force);
    void record(double time, const VecX& positions, double force);

    // Writes pending records. Returns false (and disables the tracker) when
    // the sink fails.
    bool flush();

    bool enabled() const { return enabled_; }
    const std::vector<Record>& records() const { return records_; }

    static const char* header();

private:
    std::ostream* sink_;
    std::vector<Record> records_;
    std::size_t written_ = 0;
    bool header_written_ = false;
    bool enabled_ = true;
};

// Sum of distances between consecutive recorded positions.
double path_length(const std::vector<MetricTracker::Record>& records);

}  // namespace rtsim
