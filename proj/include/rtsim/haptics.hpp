#pragma once

#include "rtsim/rigid.hpp"

namespace rtsim {

struct Waypoint {
    double time = 0.0;  // s
    RigidTransform pose;
};

/// Scripted stand-in for a 6-DOF haptic interface. The trajectory is
/// interpolated linearly in position and by slerp in orientation, then
/// scaled and placed by the origin transform.
struct HapticDeviceConfig {
    std::vector<Waypoint> waypoints;  // strictly increasing times
    RigidTransform origin;
    double scale = 1.0;
    double linear_stiffness = 100.0;  // N/m
    double angular_stiffness = 1.0;   // N m/rad

    void validate() const;
};

// Before the first waypoint holds the first pose, after the last holds the last.
RigidTransform virtual_haptic_pose(const HapticDeviceConfig& device, double t);

// Spring wrench pulling the body frame towards the device pose:
// force = k_lin (p_dev - p_body), torque = k_ang rotvec(q_dev q_body^-1).
Wrench coupling_wrench(const RigidTransform& device, const RigidTransform& body, double linear_stiffness,
                       double angular_stiffness);

}  // namespace rtsim
