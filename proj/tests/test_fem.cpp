#include "rtsim/fem.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <Eigen/SVD>

using namespace rtsim;
using namespace rtsim::testing;

namespace {

// Polar rotation via SVD, kept separate from the library's Newton iteration.
Mat3 svd_rotation(const Mat3& f) {
    Eigen::JacobiSVD<Mat3> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = svd.matrixU();
    const Mat3 v = svd.matrixV();
    if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
    return u * v.transpose();
}

// Corotated linear energy V (mu |S - I|^2 + lambda/2 tr(S - I)^2) with S the
// symmetric polar factor of F.
double corotated_energy_oracle(const TetMesh& rest, const VecX& x, double young, double poisson) {
    const auto lame = LameParameters::from_young_poisson(young, poisson);
    double total = 0.0;
    for (std::size_t e = 0; e < rest.tets.size(); ++e) {
        const auto& t = rest.tets[e];
        Mat3 dm, ds;
        for (int k = 0; k < 3; ++k) {
            dm.col(k) = rest.vertices[t[k + 1]] - rest.vertices[t[0]];
            ds.col(k) = x.segment<3>(3 * t[k + 1]) - x.segment<3>(3 * t[0]);
        }
        const Mat3 f = ds * dm.inverse();
        const Mat3 s = svd_rotation(f).transpose() * f;
        const Mat3 strain = s - Mat3::Identity();
        total += rest.rest_volumes[e] * (lame.mu * strain.squaredNorm() + 0.5 * lame.lambda * strain.trace() * strain.trace());
    }
    return total;
}

SoftBodyState state_for(const TetMesh& mesh) { return SoftBodyState(mesh.vertices, lumped_masses(mesh, 1000.0)); }

VecX fem_force(CorotationalFem& fem, const SoftBodyState& s) {
    VecX f = VecX::Zero(s.x.size());
    fem.add_forces(s, f);
    return f;
}

}  // namespace

TEST(PolarRotation, MatchesSvd) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 50; ++i) {
        Mat3 f = Mat3::Identity();
        for (int c = 0; c < 3; ++c) f.col(c) += 0.4 * random_vec(rng);
        f = random_rotation(rng).toRotationMatrix() * f;
        if (f.determinant() <= 0.0) continue;
        Mat3 r;
        ASSERT_TRUE(polar_rotation(f, r));
        EXPECT_LT((r - svd_rotation(f)).norm(), 1e-10);
    }
}

TEST(PolarRotation, RejectsInvertedInput) {
    Mat3 r;
    EXPECT_FALSE(polar_rotation(Vec3(1, 1, -1).asDiagonal(), r));
}

TEST(CorotationalFem, ZeroForceAtRest) {
    const auto mesh = grid_tet_mesh(2, 2, 2, 0.1);
    CorotationalFem fem(mesh, 5000.0, 0.3);
    EXPECT_LT(fem_force(fem, state_for(mesh)).norm(), 1e-12);
}

TEST(CorotationalFem, RigidRotationProducesNoForce) {
    const auto mesh = grid_tet_mesh(2, 1, 3, 0.1);
    CorotationalFem fem(mesh, 5000.0, 0.3);
    auto s = state_for(mesh);
    const Mat3 rz = Eigen::AngleAxisd(M_PI / 2, Vec3::UnitZ()).toRotationMatrix();
    for (Index i = 0; i < s.node_count(); ++i) s.x.segment<3>(3 * i) = rz * mesh.vertices[i] + Vec3(0.3, -1, 2);
    EXPECT_LT(fem_force(fem, s).norm(), 1e-9);
    // The same holds for every rotation, not only the axis-aligned one.
    std::mt19937_64 rng(8);
    const Mat3 r = random_rotation(rng).toRotationMatrix();
    for (Index i = 0; i < s.node_count(); ++i) s.x.segment<3>(3 * i) = r * mesh.vertices[i];
    EXPECT_LT(fem_force(fem, s).norm(), 1e-9);
}

TEST(CorotationalFem, UniaxialStretchStress) {
    const auto mesh = unit_tet();
    CorotationalFem fem(mesh, 5000.0, 0.3);
    auto s = state_for(mesh);
    const double e = 1e-3;
    for (Index i = 0; i < 4; ++i) s.x(3 * i) *= 1.0 + e;
    const Mat3 sigma = fem.corotated_stress(0, s);
    const auto lame = fem.lame();
    EXPECT_NEAR(sigma(0, 0), (lame.lambda + 2 * lame.mu) * e, 1e-9);
    EXPECT_NEAR(sigma(1, 1), lame.lambda * e, 1e-9);
    EXPECT_NEAR(sigma(2, 2), lame.lambda * e, 1e-9);
    EXPECT_NEAR(sigma(0, 1), 0.0, 1e-9);
}

TEST(CorotationalFem, ForceIsNegativeEnergyGradient) {
    const auto mesh = grid_tet_mesh(2, 2, 1, 0.1);
    CorotationalFem fem(mesh, 5000.0, 0.3);
    auto s = state_for(mesh);
    std::mt19937_64 rng(21);
    const Mat3 r = random_rotation(rng).toRotationMatrix();
    for (Index i = 0; i < s.node_count(); ++i)
        s.x.segment<3>(3 * i) = r * (mesh.vertices[i] + 0.01 * random_vec(rng));
    const VecX f = fem_force(fem, s);
    VecX fd(s.x.size());
    const double h = 1e-6;
    for (Eigen::Index k = 0; k < s.x.size(); ++k) {
        VecX xp = s.x, xm = s.x;
        xp(k) += h;
        xm(k) -= h;
        fd(k) = -(corotated_energy_oracle(mesh, xp, 5000.0, 0.3) - corotated_energy_oracle(mesh, xm, 5000.0, 0.3)) /
                (2 * h);
    }
    EXPECT_LT(relative_error(f, fd), 1e-5);
    EXPECT_NEAR(fem.energy(s), corotated_energy_oracle(mesh, s.x, 5000.0, 0.3), 1e-9 * fem.energy(s));
}

TEST(CorotationalFem, NoNetForceOrTorque) {
    const auto mesh = load_tet_mesh(asset("bunny_756.tet"));
    CorotationalFem fem(mesh, 5000.0, 0.3);
    auto s = state_for(mesh);
    std::mt19937_64 rng(4);
    for (Index i = 0; i < s.node_count(); ++i) s.x.segment<3>(3 * i) += 0.003 * random_vec(rng);
    const VecX f = fem_force(fem, s);
    Vec3 net = Vec3::Zero(), torque = Vec3::Zero();
    double scale = 0.0;
    for (Index i = 0; i < s.node_count(); ++i) {
        net += f.segment<3>(3 * i);
        torque += s.position(i).cross(f.segment<3>(3 * i));
        scale += f.segment<3>(3 * i).norm();
    }
    EXPECT_LT(net.norm(), 1e-10 * scale);
    EXPECT_LT(torque.norm(), 1e-10 * scale);
}

TEST(CorotationalFem, StiffnessBlockIsRotatedRestStiffness) {
    const auto mesh = unit_tet();
    CorotationalFem fem(mesh, 5000.0, 0.3);
    auto s = state_for(mesh);
    std::mt19937_64 rng(2);
    const Mat3 r = random_rotation(rng).toRotationMatrix();
    for (Index i = 0; i < 4; ++i) s.x.segment<3>(3 * i) = r * mesh.vertices[i];
    fem_force(fem, s);
    CorotationalFem::Block rot = CorotationalFem::Block::Zero();
    for (int k = 0; k < 4; ++k) rot.block<3, 3>(3 * k, 3 * k) = r;
    const CorotationalFem::Block expected = -rot * fem.rest_stiffness(0) * rot.transpose();
    EXPECT_LT((fem.stiffness_block(0) - expected).norm(), 1e-9 * expected.norm());
    EXPECT_LT((fem.stiffness_block(0) - fem.stiffness_block(0).transpose()).norm(), 1e-9 * expected.norm());
    // Matrix-free product agrees with the assembled matrix.
    MatX k = MatX::Zero(12, 12);
    fem.add_stiffness_matrix(k);
    VecX dx(12);
    for (int i = 0; i < 12; ++i) dx(i) = std::sin(1.0 + i);
    VecX df = VecX::Zero(12);
    fem.add_stiffness_product(dx, df);
    EXPECT_LT((df - k * dx).norm(), 1e-9 * df.norm());
}

TEST(CorotationalFem, InvertedElementWarnsAndStaysFinite) {
    const auto mesh = unit_tet();
    CorotationalFem fem(mesh, 5000.0, 0.3);
    auto s = state_for(mesh);
    s.x(3 * 3 + 2) = -0.5;  // push the apex through the base
    const VecX f = fem_force(fem, s);
    EXPECT_EQ(fem.inverted_warnings(), 1);
    EXPECT_TRUE(f.allFinite());
    // Restoring force pushes the apex back up.
    EXPECT_GT(f(3 * 3 + 2), 0.0);
}

TEST(CorotationalFem, WrapperMatchesModel) {
    const auto mesh = grid_tet_mesh(1, 1, 2, 0.05);
    auto s = state_for(mesh);
    s.x(5) += 0.01;
    MechanicalParams params;
    const auto out = fem_forces(s, mesh, params, true);
    CorotationalFem fem(mesh, params.young_modulus, params.poisson_ratio);
    EXPECT_LT((out.forces - fem_force(fem, s)).norm(), 1e-14);
    ASSERT_TRUE(out.stiffness_blocks.has_value());
    EXPECT_EQ(out.stiffness_blocks->size(), mesh.tet_count());
}

// Small-strain energy V (mu eps:eps + lambda/2 tr(eps)^2), eps = sym(F) - I.
TEST(CorotationalFem, LiftedApexMatchesSmallStrainEnergy) {
    const auto mesh = unit_tet();
    CorotationalFem fem(mesh, 5000.0, 0.3);
    auto s = state_for(mesh);
    s.x(3 * 3 + 2) += 1e-6;
    const auto lame = fem.lame();
    const Mat3 dm_inv = Mat3::Identity();  // unit tet: rest edges are the axes
    auto energy = [&](const VecX& x) {
        Mat3 ds;
        for (int k = 0; k < 3; ++k) ds.col(k) = x.segment<3>(3 * (k + 1)) - x.segment<3>(0);
        const Mat3 f = ds * dm_inv;
        const Mat3 eps = 0.5 * (f + f.transpose()) - Mat3::Identity();
        return (1.0 / 6.0) * (lame.mu * eps.squaredNorm() + 0.5 * lame.lambda * eps.trace() * eps.trace());
    };
    VecX fd(12);
    const double h = 1e-7;
    for (int k = 0; k < 12; ++k) {
        VecX xp = s.x, xm = s.x;
        xp(k) += h;
        xm(k) -= h;
        fd(k) = -(energy(xp) - energy(xm)) / (2 * h);
    }
    EXPECT_LT(relative_error(fem_force(fem, s), fd), 1e-4);
}
