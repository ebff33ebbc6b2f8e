#include "rtsim/rigid.hpp"

namespace rtsim {

void RigidBodyState::add_frame(const RigidTransform& pose, double mass, const Mat3& body_inertia, bool is_dynamic) {
    frames.push_back(pose);
    twists.emplace_back();
    masses.push_back(mass);
    inertia.push_back(body_inertia);
    dynamic.push_back(is_dynamic ? 1 : 0);
}

void RigidBodyState::renormalize() {
    for (auto& f : frames) f.orientation.normalize();
}

void RigidBodyState::validate() const {
    const auto n = frames.size();
    if (twists.size() != n || masses.size() != n || inertia.size() != n || dynamic.size() != n)
        throw Error("rigid body state: inconsistent frame counts");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(masses[i] > 0.0)) throw Error("rigid body state: frame " + std::to_string(i) + " has non-positive mass");
        if (std::abs(frames[i].orientation.norm() - 1.0) > 1e-9)
            throw Error("rigid body state: frame " + std::to_string(i) + " orientation is not unit");
    }
}

void step_rigid(RigidBodyState& state, std::span<const Wrench> wrenches, std::span<const FrameStiffness> stiffness,
                double dt, double damping_mass) {
    if (!(dt > 0.0)) throw Error("rigid step: dt must be > 0");
    for (std::size_t i = 0; i < state.frames.size(); ++i) {
        if (!state.dynamic[i]) continue;
        const Wrench& w = wrenches[i];
        if (!w.force.allFinite() || !w.torque.allFinite()) throw SolverError("rigid step: non-finite wrench");
        const FrameStiffness k = i < stiffness.size() ? stiffness[i] : FrameStiffness{};
        auto& frame = state.frames[i];
        auto& twist = state.twists[i];
        const double m = state.masses[i];

        twist.linear = (m * twist.linear + dt * w.force) / (m * (1.0 + dt * damping_mass) + dt * dt * k.linear);

        const Mat3 rot = frame.orientation.toRotationMatrix();
        const Mat3 inertia_world = rot * state.inertia[i] * rot.transpose();
        const Vec3 gyroscopic = twist.angular.cross(inertia_world * twist.angular);
        Mat3 lhs = (1.0 + dt * damping_mass) * inertia_world;
        lhs.diagonal().array() += dt * dt * k.angular;
        twist.angular = lhs.ldlt().solve(inertia_world * twist.angular + dt * (w.torque - gyroscopic));

        frame.translation += dt * twist.linear;
        frame.orientation = (quat_from_rotation_vector(dt * twist.angular) * frame.orientation).normalized();
    }
}

}  // namespace rtsim
