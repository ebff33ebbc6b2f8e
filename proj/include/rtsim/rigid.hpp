#pragma once

#include "rtsim/types.hpp"

#include <span>

namespace rtsim {

struct Twist {
    Vec3 linear = Vec3::Zero();
    Vec3 angular = Vec3::Zero();
};

struct Wrench {
    Vec3 force = Vec3::Zero();
    Vec3 torque = Vec3::Zero();

    Wrench& operator+=(const Wrench& w) {
        force += w.force;
        torque += w.torque;
        return *this;
    }
};

// Stiffness of springs acting on a frame, integrated implicitly.
struct FrameStiffness {
    double linear = 0.0;   // N/m
    double angular = 0.0;  // N m/rad
};

// 6-DOF elements. Frames flagged non-dynamic are kinematic: their poses are
// written by articulations (or never change for fixed bodies).
struct RigidBodyState {
    std::vector<RigidTransform> frames;
    std::vector<Twist> twists;
    std::vector<double> masses;
    std::vector<Mat3> inertia;  // body-frame inertia tensors
    std::vector<std::uint8_t> dynamic;

    std::size_t frame_count() const { return frames.size(); }
    void add_frame(const RigidTransform& pose, double mass, const Mat3& body_inertia, bool is_dynamic);
    void renormalize();
    void validate() const;
};

// Semi-implicit Euler on dynamic frames; spring stiffness listed per frame
// enters the velocity update implicitly. Orientations are renormalized.
void step_rigid(RigidBodyState& state, std::span<const Wrench> wrenches, std::span<const FrameStiffness> stiffness,
                double dt, double damping_mass);

}  // namespace rtsim
