#include "rtsim/articulation.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

namespace rtsim {

RigidTransform joint_motion(JointType type, const Vec3& axis, double value) {
    RigidTransform t;
    if (type == JointType::prismatic)
        t.translation = value * axis;
    else
        t.orientation = Quat(Eigen::AngleAxisd(value, axis));
    return t;
}

Articulation::Articulation(std::size_t frame_count, std::vector<JointConfig> joints)
    : frame_count_(frame_count), joints_(std::move(joints)), driver_(frame_count, -1) {
    const auto n = static_cast<Index>(frame_count);
    for (std::size_t j = 0; j < joints_.size(); ++j) {
        const auto& jc = joints_[j];
        const std::string where = "joint " + std::to_string(j);
        if (std::abs(jc.axis.norm() - 1.0) > 1e-12) throw ConfigError(where + ": axis must have unit length");
        if (jc.parent < 0 || jc.parent >= n || jc.child < 0 || jc.child >= n)
            throw ConfigError(where + ": frame index out of range");
        if (jc.parent == jc.child) throw ConfigError(where + ": parent and child are the same frame");
        if (!(jc.lower <= jc.upper)) throw ConfigError(where + ": lower limit above upper limit");
        if (driver_[jc.child] >= 0)
            throw ConfigError(where + ": frame " + std::to_string(jc.child) + " is already driven by joint " +
                              std::to_string(driver_[jc.child]));
        driver_[jc.child] = static_cast<Index>(j);
    }
    // Depth of every driven frame; a walk longer than the joint count is a cycle.
    std::vector<int> depth(joints_.size(), -1);
    for (std::size_t j = 0; j < joints_.size(); ++j) {
        int d = 0;
        for (Index f = joints_[j].parent; driver_[f] >= 0; f = joints_[driver_[f]].parent)
            if (++d > static_cast<int>(joints_.size()))
                throw ConfigError("articulation contains a cycle through joint " + std::to_string(j));
        depth[j] = d;
    }
    order_.resize(joints_.size());
    for (std::size_t j = 0; j < joints_.size(); ++j) order_[j] = static_cast<Index>(j);
    std::stable_sort(order_.begin(), order_.end(), [&](Index a, Index b) { return depth[a] < depth[b]; });
}

void Articulation::forward_kinematics(const std::vector<double>& values, std::vector<RigidTransform>& frames) const {
    if (values.size() != joints_.size())
        throw ConfigError("articulation expects " + std::to_string(joints_.size()) + " joint values, got " +
                          std::to_string(values.size()));
    if (frames.size() != frame_count_) frames.resize(frame_count_);
    for (const Index j : order_) {
        const auto& jc = joints_[j];
        const double v = values[j];
        if (v < jc.lower || v > jc.upper)
            throw ConfigError("joint " + std::to_string(j) + ": value " + std::to_string(v) + " outside limits");
        frames[jc.child] = frames[jc.parent] * jc.parent_offset * joint_motion(jc.type, jc.axis, v) * jc.child_offset;
        frames[jc.child].orientation.normalize();
    }
}

// ---------------------------------------------------------------------------

namespace {

Articulation instrument_articulation(const InstrumentConfig& cfg) {
    if (cfg.jaw_count != 1 && cfg.jaw_count != 2)
        throw ConfigError("instrument jaw_count must be 1 or 2, got " + std::to_string(cfg.jaw_count));
    if (!(cfg.shaft_length > 0.0) || !(cfg.jaw_length > 0.0))
        throw ConfigError("instrument shaft_length and jaw_length must be > 0");
    std::vector<JointConfig> joints;
    for (int k = 0; k < cfg.jaw_count; ++k) {
        JointConfig j;
        j.type = JointType::revolute;
        j.axis = cfg.hinge_axis.normalized();
        j.parent = 0;
        j.child = k + 1;
        j.parent_offset.translation = Vec3(0, 0, cfg.shaft_length);
        j.child_offset.translation = Vec3(0, 0, cfg.jaw_length);
        joints.push_back(j);
    }
    return Articulation(static_cast<std::size_t>(cfg.jaw_count) + 1, std::move(joints));
}

}  // namespace

ArticulatedInstrument::ArticulatedInstrument(const InstrumentConfig& cfg)
    : cfg_(cfg), articulation_(instrument_articulation(cfg)) {}

std::vector<double> ArticulatedInstrument::joint_values(double opening) const {
    if (cfg_.jaw_count == 1) return {opening};
    return {opening, -opening};
}

std::vector<RigidTransform> ArticulatedInstrument::frames(const RigidTransform& shaft, double opening) const {
    std::vector<RigidTransform> out(articulation_.frame_count());
    out[0] = shaft;
    articulation_.forward_kinematics(joint_values(opening), out);
    return out;
}

ArticulatedInstrument make_articulated_instrument(const InstrumentConfig& cfg) { return ArticulatedInstrument(cfg); }

RigidTransform endoscope_view_pose(const RigidTransform& scope_tip, double inclination, double roll) {
    RigidTransform local;
    local.orientation =
        Quat(Eigen::AngleAxisd(roll, Vec3::UnitZ())) * Quat(Eigen::AngleAxisd(inclination, Vec3::UnitX()));
    RigidTransform out = scope_tip * local;
    out.orientation.normalize();
    return out;
}

// ---------------------------------------------------------------------------

void MetricTracker::record(double time, const RigidTransform& pose, double force) {
    if (!enabled_) return;
    records_.push_back({time, pose.translation, pose.orientation, force});
}

void MetricTracker::record(double time, const VecX& positions, double force) {
    if (!enabled_) return;
    Vec3 c = Vec3::Zero();
    const auto n = positions.size() / 3;
    for (Eigen::Index i = 0; i < n; ++i) c += positions.segment<3>(3 * i);
    if (n > 0) c /= static_cast<double>(n);
    records_.push_back({time, c, Quat::Identity(), force});
}

const char* MetricTracker::header() { return "time,x,y,z,qw,qx,qy,qz,force"; }

bool MetricTracker::flush() {
    if (!enabled_) return false;
    if (sink_ == nullptr) return true;
    auto& out = *sink_;
    if (!header_written_) {
        out << header() << '\n';
        header_written_ = true;
    }
    out << std::setprecision(17);
    for (; written_ < records_.size(); ++written_) {
        const auto& r = records_[written_];
        out << r.time << ',' << r.position.x() << ',' << r.position.y() << ',' << r.position.z() << ','
            << r.orientation.w() << ',' << r.orientation.x() << ',' << r.orientation.y() << ',' << r.orientation.z()
            << ',' << r.force << '\n';
    }
    out.flush();
    if (!out) {
        enabled_ = false;
        return false;
    }
    return true;
}

double path_length(const std::vector<MetricTracker::Record>& records) {
    double sum = 0.0;
    for (std::size_t i = 1; i < records.size(); ++i) sum += (records[i].position - records[i - 1].position).norm();
    return sum;
}

}  // namespace rtsim
