#include "rtsim/fem.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace rtsim {

bool polar_rotation(const Mat3& f, Mat3& r) {
    if (!(f.determinant() > 0.0)) return false;
    Mat3 x = f;
    bool scaled = true;
    for (int it = 0; it < 40; ++it) {
        const Mat3 inv_t = x.inverse().transpose();
        double gamma = 1.0;
        if (scaled) gamma = std::sqrt(std::sqrt(inv_t.squaredNorm() / x.squaredNorm()));
        const Mat3 next = 0.5 * (gamma * x + inv_t / gamma);
        const double change = (next - x).norm();
        x = next;
        if (change < 1e-3) scaled = false;
        if (change < 1e-15) break;
    }
    r = x;
    return true;
}

namespace {

using Block = CorotationalFem::Block;
using Vec12 = Eigen::Matrix<double, 12, 1>;

// Voigt strain operator of one node with engineering shear strains.
Eigen::Matrix<double, 6, 3> strain_operator(const Vec3& g) {
    Eigen::Matrix<double, 6, 3> b = Eigen::Matrix<double, 6, 3>::Zero();
    b(0, 0) = g.x();
    b(1, 1) = g.y();
    b(2, 2) = g.z();
    b(3, 0) = g.y();
    b(3, 1) = g.x();
    b(4, 1) = g.z();
    b(4, 2) = g.y();
    b(5, 0) = g.z();
    b(5, 2) = g.x();
    return b;
}

Eigen::Matrix<double, 6, 6> elasticity(const LameParameters& lame) {
    Eigen::Matrix<double, 6, 6> c = Eigen::Matrix<double, 6, 6>::Zero();
    c.topLeftCorner<3, 3>().setConstant(lame.lambda);
    c.topLeftCorner<3, 3>().diagonal().array() += 2.0 * lame.mu;
    c.bottomRightCorner<3, 3>().diagonal().setConstant(lame.mu);
    return c;
}

}  // namespace

CorotationalFem::CorotationalFem(const TetMesh& rest, double young_modulus, double poisson_ratio)
    : lame_(LameParameters::from_young_poisson(young_modulus, poisson_ratio)) {
    if (!(young_modulus > 0.0)) throw ConfigError("young_modulus must be > 0");
    if (!(poisson_ratio >= 0.0 && poisson_ratio < 0.5)) throw ConfigError("poisson_ratio must lie in [0, 0.5)");
    const auto c = elasticity(lame_);
    elements_.resize(rest.tets.size());
    for (std::size_t e = 0; e < rest.tets.size(); ++e) {
        auto& el = elements_[e];
        el.tet = rest.tets[e];
        const auto& p = rest.vertices;
        Mat3 dm;
        for (int k = 0; k < 3; ++k) {
            el.rest_edges[k] = p[el.tet[k + 1]] - p[el.tet[0]];
            dm.col(k) = el.rest_edges[k];
        }
        el.dm_inv = dm.inverse();
        el.volume = std::abs(dm.determinant()) / 6.0;

        std::array<Vec3, 4> grads;
        for (int k = 0; k < 3; ++k) grads[k + 1] = el.dm_inv.row(k).transpose();
        grads[0] = -(grads[1] + grads[2] + grads[3]);
        Eigen::Matrix<double, 6, 12> b;
        for (int k = 0; k < 4; ++k) b.block<6, 3>(0, 3 * k) = strain_operator(grads[k]);
        el.k0 = el.volume * b.transpose() * c * b;
    }
}

void CorotationalFem::set_topology(const std::vector<Tet>& tets) {
    if (tets.size() != elements_.size()) throw Error("fem: element count changed");
    for (std::size_t e = 0; e < tets.size(); ++e) elements_[e].tet = tets[e];
}

Mat3 CorotationalFem::deformation_gradient(std::size_t e, const SoftBodyState& state) const {
    const auto& el = elements_[e];
    Mat3 ds;
    const Vec3 x0 = state.position(el.tet[0]);
    for (int k = 0; k < 3; ++k) ds.col(k) = state.position(el.tet[k + 1]) - x0;
    return ds * el.dm_inv;
}

Mat3 CorotationalFem::rotation_for(const Element& el, const SoftBodyState& state, bool* inverted) const {
    Mat3 ds;
    const Vec3 x0 = state.position(el.tet[0]);
    for (int k = 0; k < 3; ++k) ds.col(k) = state.position(el.tet[k + 1]) - x0;
    Mat3 r;
    if (polar_rotation(ds * el.dm_inv, r)) {
        if (inverted) *inverted = false;
        return r;
    }
    if (inverted) *inverted = true;
    return el.last_valid;
}

void CorotationalFem::add_forces(const SoftBodyState& state, VecX& f) {
    for (auto& el : elements_) {
        bool inverted = false;
        el.rotation = rotation_for(el, state, &inverted);
        if (inverted)
            ++inverted_warnings_;
        else
            el.last_valid = el.rotation;

        const Mat3& r = el.rotation;
        const Vec3 x0 = state.position(el.tet[0]);
        Vec12 u = Vec12::Zero();
        for (int k = 0; k < 3; ++k)
            u.segment<3>(3 * (k + 1)) = r.transpose() * (state.position(el.tet[k + 1]) - x0) - el.rest_edges[k];
        const Vec12 local = el.k0 * u;
        for (int k = 0; k < 4; ++k) f.segment<3>(3 * el.tet[k]) -= r * local.segment<3>(3 * k);
    }
}

void CorotationalFem::add_stiffness_product(const VecX& dx, VecX& df) const {
    for (const auto& el : elements_) {
        const Mat3& r = el.rotation;
        Vec12 local;
        for (int k = 0; k < 4; ++k) local.segment<3>(3 * k) = r.transpose() * dx.segment<3>(3 * el.tet[k]);
        const Vec12 kl = el.k0 * local;
        for (int k = 0; k < 4; ++k) df.segment<3>(3 * el.tet[k]) -= r * kl.segment<3>(3 * k);
    }
}

CorotationalFem::Block CorotationalFem::stiffness_block(std::size_t e) const {
    const auto& el = elements_[e];
    Block rot = Block::Zero();
    for (int k = 0; k < 4; ++k) rot.block<3, 3>(3 * k, 3 * k) = el.rotation;
    return -(rot * el.k0 * rot.transpose());
}

void CorotationalFem::add_stiffness_matrix(MatX& k) const {
    for (std::size_t e = 0; e < elements_.size(); ++e) {
        const Block blk = stiffness_block(e);
        const auto& t = elements_[e].tet;
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) k.block<3, 3>(3 * t[a], 3 * t[b]) += blk.block<3, 3>(3 * a, 3 * b);
    }
}

double CorotationalFem::energy(const SoftBodyState& state) const {
    double total = 0.0;
    for (const auto& el : elements_) {
        const Mat3 r = rotation_for(el, state, nullptr);
        const Vec3 x0 = state.position(el.tet[0]);
        Vec12 u = Vec12::Zero();
        for (int k = 0; k < 3; ++k)
            u.segment<3>(3 * (k + 1)) = r.transpose() * (state.position(el.tet[k + 1]) - x0) - el.rest_edges[k];
        total += 0.5 * u.dot(el.k0 * u);
    }
    return total;
}

Mat3 CorotationalFem::corotated_stress(std::size_t e, const SoftBodyState& state) const {
    const auto& el = elements_[e];
    const Mat3 r = rotation_for(el, state, nullptr);
    const Mat3 g = r.transpose() * deformation_gradient(e, state) - Mat3::Identity();
    const Mat3 strain = 0.5 * (g + g.transpose());
    return lame_.lambda * strain.trace() * Mat3::Identity() + 2.0 * lame_.mu * strain;
}

FemForces fem_forces(const SoftBodyState& state, const TetMesh& mesh, const MechanicalParams& params,
                     bool with_stiffness_blocks) {
    CorotationalFem fem(mesh, params.young_modulus, params.poisson_ratio);
    FemForces out;
    out.forces = VecX::Zero(state.x.size());
    fem.add_forces(state, out.forces);
    if (with_stiffness_blocks) {
        out.stiffness_blocks.emplace();
        for (std::size_t e = 0; e < fem.element_count(); ++e) out.stiffness_blocks->push_back(fem.stiffness_block(e));
    }
    return out;
}

}  // namespace rtsim
