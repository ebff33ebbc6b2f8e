#include "rtsim/dynamics.hpp"

#include <algorithm>
#include <cmath>

namespace rtsim {

void MechanicalParams::validate() const {
    if (!(poisson_ratio >= 0.0 && poisson_ratio < 0.5)) throw ConfigError("poisson_ratio must lie in [0, 0.5)");
    if (!(young_modulus > 0.0)) throw ConfigError("young_modulus must be > 0");
    if (!(stiffness > 0.0)) throw ConfigError("stiffness must be > 0");
    if (!(density > 0.0)) throw ConfigError("density must be > 0");
    if (!(total_mass > 0.0)) throw ConfigError("total_mass must be > 0");
    if (!(rayleigh_mass >= 0.0) || !(rayleigh_stiffness >= 0.0))
        throw ConfigError("rayleigh coefficients must be >= 0");
    if (tearing_threshold && !(*tearing_threshold > 0.0)) throw ConfigError("tearing_threshold must be > 0");
}

SoftBodyState::SoftBodyState(const std::vector<Vec3>& positions, std::vector<double> node_masses)
    : masses(std::move(node_masses)) {
    const auto n = static_cast<Eigen::Index>(positions.size());
    x.resize(3 * n);
    for (Eigen::Index i = 0; i < n; ++i) x.segment<3>(3 * i) = positions[i];
    v = VecX::Zero(3 * n);
    pinned.assign(positions.size(), 0);
    kinematic.assign(positions.size(), 0);
    validate();
}

void SoftBodyState::pin(Index i) {
    pinned.at(i) = 1;
    v.segment<3>(3 * i).setZero();
}

std::vector<Index> SoftBodyState::pinned_nodes() const {
    std::vector<Index> out;
    for (Index i = 0; i < node_count(); ++i)
        if (pinned[i]) out.push_back(i);
    return out;
}

void SoftBodyState::append_node(const Vec3& position, const Vec3& velocity, double mass) {
    const auto n = x.size();
    x.conservativeResize(n + 3);
    v.conservativeResize(n + 3);
    x.segment<3>(n) = position;
    v.segment<3>(n) = velocity;
    masses.push_back(mass);
    pinned.push_back(0);
    kinematic.push_back(0);
}

void SoftBodyState::validate() const {
    const auto n = masses.size();
    if (static_cast<std::size_t>(x.size()) != 3 * n || static_cast<std::size_t>(v.size()) != 3 * n ||
        pinned.size() != n || kinematic.size() != n)
        throw Error("soft body state: inconsistent node counts");
    for (std::size_t i = 0; i < n; ++i)
        if (!(masses[i] > 0.0)) throw Error("soft body state: node " + std::to_string(i) + " has non-positive mass");
}

// ---------------------------------------------------------------------------

SpringNetwork::SpringNetwork(std::vector<SpringEdge> edges, double stiffness) : edges_(std::move(edges)), k_(stiffness) {
    for (const auto& e : edges_)
        if (!(e.rest_length > 0.0)) throw ConfigError("spring rest length must be > 0");
    blocks_.assign(edges_.size(), Mat3::Zero());
}

SpringNetwork SpringNetwork::from_mesh(const TetMesh& mesh, double stiffness) {
    std::vector<SpringEdge> edges;
    for (const auto& [a, b] : unique_edges(mesh.tets))
        edges.push_back({a, b, (mesh.vertices[b] - mesh.vertices[a]).norm()});
    return SpringNetwork(std::move(edges), stiffness);
}

void SpringNetwork::add_forces(const SoftBodyState& state, VecX& f) {
    degenerate_ = 0;
    for (std::size_t s = 0; s < edges_.size(); ++s) {
        const auto& e = edges_[s];
        const Vec3 d = state.position(e.b) - state.position(e.a);
        const double len = d.norm();
        if (len == 0.0) {
            ++degenerate_;
            blocks_[s].setZero();
            continue;
        }
        const Vec3 dir = d / len;
        const Vec3 fa = k_ * (len - e.rest_length) * dir;
        f.segment<3>(3 * e.a) += fa;
        f.segment<3>(3 * e.b) -= fa;
        // Compressed springs drop the (negative) transverse term to keep K_s PSD.
        const Mat3 ddt = dir * dir.transpose();
        const double transverse = std::max(0.0, 1.0 - e.rest_length / len);
        blocks_[s] = -k_ * (ddt + transverse * (Mat3::Identity() - ddt));
    }
}

void SpringNetwork::add_stiffness_product(const VecX& dx, VecX& df) const {
    for (std::size_t s = 0; s < edges_.size(); ++s) {
        const auto& e = edges_[s];
        const Vec3 rel = dx.segment<3>(3 * e.a) - dx.segment<3>(3 * e.b);
        const Vec3 t = blocks_[s] * rel;
        df.segment<3>(3 * e.a) += t;
        df.segment<3>(3 * e.b) -= t;
    }
}

void SpringNetwork::add_stiffness_matrix(MatX& k) const {
    for (std::size_t s = 0; s < edges_.size(); ++s) {
        const auto& e = edges_[s];
        k.block<3, 3>(3 * e.a, 3 * e.a) += blocks_[s];
        k.block<3, 3>(3 * e.b, 3 * e.b) += blocks_[s];
        k.block<3, 3>(3 * e.a, 3 * e.b) -= blocks_[s];
        k.block<3, 3>(3 * e.b, 3 * e.a) -= blocks_[s];
    }
}

double SpringNetwork::energy(const SoftBodyState& state) const {
    double e = 0.0;
    for (const auto& s : edges_) {
        const double stretch = (state.position(s.b) - state.position(s.a)).norm() - s.rest_length;
        e += 0.5 * k_ * stretch * stretch;
    }
    return e;
}

VecX spring_forces(const SoftBodyState& state, std::span<const SpringEdge> edges, double stiffness) {
    SpringNetwork net(std::vector<SpringEdge>(edges.begin(), edges.end()), stiffness);
    VecX f = VecX::Zero(state.x.size());
    net.add_forces(state, f);
    return f;
}

// ---------------------------------------------------------------------------

void AnchorSprings::add_forces(const SoftBodyState& state, VecX& f) {
    for (const auto& a : anchors_) f.segment<3>(3 * a.node) += a.stiffness * (a.target - state.position(a.node));
}

void AnchorSprings::add_stiffness_product(const VecX& dx, VecX& df) const {
    for (const auto& a : anchors_) df.segment<3>(3 * a.node) -= a.stiffness * dx.segment<3>(3 * a.node);
}

void AnchorSprings::add_stiffness_matrix(MatX& k) const {
    for (const auto& a : anchors_) k.block<3, 3>(3 * a.node, 3 * a.node).diagonal().array() -= a.stiffness;
}

double AnchorSprings::energy(const SoftBodyState& state) const {
    double e = 0.0;
    for (const auto& a : anchors_) e += 0.5 * a.stiffness * (a.target - state.position(a.node)).squaredNorm();
    return e;
}

std::vector<double> lumped_masses(const TetMesh& mesh, double density) {
    std::vector<double> m(mesh.vertices.size(), 0.0);
    for (std::size_t e = 0; e < mesh.tets.size(); ++e)
        for (const Index i : mesh.tets[e]) m[i] += density * mesh.rest_volumes[e] / 4.0;
    return m;
}

// ---------------------------------------------------------------------------

void step_explicit_euler(SoftBodyState& state, const VecX& forces, double dt) {
    if (!(dt > 0.0)) throw Error("explicit euler: dt must be > 0");
    if (!forces.allFinite()) throw SolverError("explicit euler: non-finite force");
    const Index n = state.node_count();
    for (Index i = 0; i < n; ++i) {
        if (state.pinned[i]) continue;
        const bool kinematic = state.kinematic[i] != 0;
        for (int c = 0; c < 3; ++c) {
            const Eigen::Index k = 3 * i + c;
            const double v_old = state.v[k];
            if (!kinematic) state.v[k] = v_old + dt * (forces[k] / state.masses[i]);
            state.x[k] = state.x[k] + dt * v_old;
        }
    }
}

namespace {

void project(const SoftBodyState& state, VecX& vec) {
    for (Index i = 0; i < state.node_count(); ++i)
        if (state.is_constrained(i)) vec.segment<3>(3 * i).setZero();
}

}  // namespace

StepStats step_implicit_euler(SoftBodyState& state, std::span<ForceModel* const> forces, const VecX& external,
                              double dt, const SolverConfig& solver, const Damping& damping) {
    if (!(dt > 0.0)) throw Error("implicit euler: dt must be > 0");
    const Index n = state.node_count();
    const Eigen::Index dofs = 3 * n;

    VecX f = external;
    for (auto* model : forces) model->add_forces(state, f);
    if (!f.allFinite()) throw SolverError("implicit euler: non-finite force");

    VecX mass_diag(dofs);
    for (Index i = 0; i < n; ++i) mass_diag.segment<3>(3 * i).setConstant(state.masses[i]);

    auto stiffness_product = [&](const VecX& p, VecX& out) {
        out.setZero();
        for (auto* model : forces) model->add_stiffness_product(p, out);
    };

    // b = dt (f - alpha M v + (beta + dt) K v)
    VecX kv(dofs);
    stiffness_product(state.v, kv);
    VecX b = dt * (f - damping.mass * mass_diag.cwiseProduct(state.v) + (damping.stiffness + dt) * kv);
    project(state, b);

    const double mass_scale = 1.0 + dt * damping.mass;
    const double stiff_scale = dt * dt + dt * damping.stiffness;

    StepStats stats;
    VecX dv;
    if (solver.linear_solver == LinearSolverKind::cg) {
        VecX tmp(dofs);
        VecX kp(dofs);
        auto apply = [&](const VecX& p, VecX& out) {
            tmp = p;
            project(state, tmp);
            stiffness_product(tmp, kp);
            out = mass_scale * mass_diag.cwiseProduct(tmp) - stiff_scale * kp;
            project(state, out);
        };
        auto res = solve_cg(apply, b, solver);
        dv = std::move(res.x);
        stats.iterations = res.iterations;
        stats.residual = res.residual;
        stats.converged = res.converged;
    } else {
        if (dofs > kMaxCholeskyDofs)
            throw SolverError("cholesky solver limited to " + std::to_string(kMaxCholeskyDofs) + " DOF (system has " +
                              std::to_string(dofs) + ")");
        MatX k = MatX::Zero(dofs, dofs);
        for (auto* model : forces) model->add_stiffness_matrix(k);
        MatX a = -stiff_scale * k;
        a.diagonal() += mass_scale * mass_diag;
        for (Index i = 0; i < n; ++i) {
            if (!state.is_constrained(i)) continue;
            for (int c = 0; c < 3; ++c) {
                const Eigen::Index r = 3 * i + c;
                a.row(r).setZero();
                a.col(r).setZero();
                a(r, r) = 1.0;
            }
        }
        dv = solve_cholesky(a, b);
        stats.iterations = 1;
        stats.residual = b.norm() > 0.0 ? (a * dv - b).norm() / b.norm() : 0.0;
    }
    if (!dv.allFinite()) throw SolverError("implicit euler: linear solve produced non-finite values");

    for (Index i = 0; i < n; ++i) {
        if (state.pinned[i]) {
            state.v.segment<3>(3 * i).setZero();
            continue;
        }
        if (!state.kinematic[i]) state.v.segment<3>(3 * i) += dv.segment<3>(3 * i);
        state.x.segment<3>(3 * i) += dt * state.v.segment<3>(3 * i);
    }
    return stats;
}

}  // namespace rtsim
