#include "rtsim/haptics.hpp"

#include <algorithm>
#include <cmath>

namespace rtsim {

void HapticDeviceConfig::validate() const {
    if (waypoints.empty()) throw ConfigError("haptic device needs at least one waypoint");
    for (std::size_t i = 1; i < waypoints.size(); ++i)
        if (!(waypoints[i].time > waypoints[i - 1].time))
            throw ConfigError("haptic waypoint times must increase (waypoint " + std::to_string(i) + ")");
    if (!(scale > 0.0)) throw ConfigError("haptic scale must be > 0");
    if (!(linear_stiffness >= 0.0) || !(angular_stiffness >= 0.0))
        throw ConfigError("haptic stiffness must be >= 0");
}

RigidTransform virtual_haptic_pose(const HapticDeviceConfig& device, double t) {
    const auto& w = device.waypoints;
    RigidTransform local;
    if (t <= w.front().time) {
        local = w.front().pose;
    } else if (t >= w.back().time) {
        local = w.back().pose;
    } else {
        const auto it = std::upper_bound(w.begin(), w.end(), t, [](double x, const Waypoint& p) { return x < p.time; });
        const auto& b = *it;
        const auto& a = *(it - 1);
        const double s = (t - a.time) / (b.time - a.time);
        local.translation = (1.0 - s) * a.pose.translation + s * b.pose.translation;
        local.orientation = a.pose.orientation.slerp(s, b.pose.orientation);
    }
    local.translation *= device.scale;
    RigidTransform out = device.origin * local;
    out.orientation.normalize();
    return out;
}

Wrench coupling_wrench(const RigidTransform& device, const RigidTransform& body, double linear_stiffness,
                       double angular_stiffness) {
    Wrench w;
    w.force = linear_stiffness * (device.translation - body.translation);
    w.torque = angular_stiffness * rotation_vector((device.orientation * body.orientation.inverse()).normalized());
    return w;
}

}  // namespace rtsim
