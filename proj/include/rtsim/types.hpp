#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rtsim {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

using Index = std::int32_t;
using Tri = std::array<Index, 3>;
using Tet = std::array<Index, 4>;

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& reason, int line)
        : Error(reason + " (line " + std::to_string(line) + ")"), reason_(reason), line_(line) {}
    int line() const { return line_; }
    const std::string& reason() const { return reason_; }

private:
    std::string reason_;
    int line_;
};

class MeshError : public Error {
public:
    using Error::Error;
};

class SolverError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class StaleMapError : public Error {
public:
    using Error::Error;
};

// A referenced file is missing or unreadable.
class AssetError : public Error {
public:
    using Error::Error;
};

// Rigid transform: x_world = orientation * x_local + translation.
struct RigidTransform {
    Vec3 translation = Vec3::Zero();
    Quat orientation = Quat::Identity();

    static RigidTransform identity() { return {}; }

    Vec3 apply(const Vec3& p) const { return orientation * p + translation; }
    Vec3 rotate(const Vec3& d) const { return orientation * d; }

    RigidTransform operator*(const RigidTransform& rhs) const {
        RigidTransform out;
        out.orientation = orientation * rhs.orientation;
        out.translation = orientation * rhs.translation + translation;
        return out;
    }

    RigidTransform inverse() const {
        RigidTransform out;
        out.orientation = orientation.conjugate();
        out.translation = -(out.orientation * translation);
        return out;
    }

    Eigen::Matrix4d matrix() const {
        Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
        m.topLeftCorner<3, 3>() = orientation.toRotationMatrix();
        m.topRightCorner<3, 1>() = translation;
        return m;
    }
};

// Rotation vector (axis * angle) of a unit quaternion, angle in [0, pi].
inline Vec3 rotation_vector(Quat q) {
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    const double s = q.vec().norm();
    if (s < 1e-12) return 2.0 * q.vec();
    const double angle = 2.0 * std::atan2(s, q.w());
    return q.vec() * (angle / s);
}

inline Quat quat_from_rotation_vector(const Vec3& w) {
    const double angle = w.norm();
    if (angle < 1e-300) return Quat::Identity();
    return Quat(Eigen::AngleAxisd(angle, w / angle));
}

inline Vec3 node(const VecX& v, Index i) { return v.segment<3>(3 * i); }

}  // namespace rtsim
