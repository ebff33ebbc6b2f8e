#include "rtsim/topology.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <Eigen/SVD>

#include <cmath>
#include <numeric>
#include <sstream>

using namespace rtsim;
using namespace rtsim::testing;

namespace {

SoftBodyState state_of(const TetMesh& mesh, double density = 1000.0) {
    return SoftBodyState(mesh.vertices, lumped_masses(mesh, density));
}

void deform(SoftBodyState& s, const Mat3& f) {
    for (Index i = 0; i < s.node_count(); ++i) s.x.segment<3>(3 * i) = f * s.x.segment<3>(3 * i);
}

double total_mass(const SoftBodyState& s) { return std::accumulate(s.masses.begin(), s.masses.end(), 0.0); }

// Largest eigenvalue of a symmetric 3x3 matrix, closed form (trigonometric).
double largest_eigenvalue(const Mat3& a) {
    const double q = a.trace() / 3.0;
    const double p1 = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
    const double p2 = (a(0, 0) - q) * (a(0, 0) - q) + (a(1, 1) - q) * (a(1, 1) - q) + (a(2, 2) - q) * (a(2, 2) - q) +
                      2.0 * p1;
    if (p2 == 0.0) return q;
    const double p = std::sqrt(p2 / 6.0);
    const Mat3 b = (a - q * Mat3::Identity()) / p;
    const double r = std::clamp(b.determinant() / 2.0, -1.0, 1.0);
    return q + 2.0 * p * std::cos(std::acos(r) / 3.0);
}

// Surface pieces: triangles joined through shared vertices.
int surface_components(const SurfaceMesh& s) {
    std::vector<int> parent(s.vertices.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int v) {
        while (parent[v] != v) v = parent[v] = parent[parent[v]];
        return v;
    };
    std::vector<char> used(s.vertices.size(), 0);
    for (const auto& t : s.triangles) {
        for (const Index v : t) used[v] = 1;
        parent[find(t[1])] = find(t[0]);
        parent[find(t[2])] = find(t[0]);
    }
    int n = 0;
    for (std::size_t v = 0; v < parent.size(); ++v)
        if (used[v] && find(static_cast<int>(v)) == static_cast<int>(v)) ++n;
    return n;
}

// Stretches a 4x1x1 bar along x, stronger in the middle cube.
SoftBodyState stretched_bar(const TetMesh& mesh, double strain) {
    auto s = state_of(mesh);
    for (Index i = 0; i < s.node_count(); ++i) {
        const double x0 = mesh.vertices[i].x();
        s.x[3 * i] = x0 < 2.0 ? x0 : x0 + strain;
    }
    return s;
}

}  // namespace

TEST(ElementStress, ZeroAtRestAndUnderRotation) {
    const auto mesh = unit_tet();
    CorotationalFem fem(mesh, 1e5, 0.3);
    auto s = state_of(mesh);
    EXPECT_EQ(element_stress(fem, 0, s), 0.0);
    deform(s, Quat(Eigen::AngleAxisd(1.1, Vec3(1, 2, 3).normalized())).toRotationMatrix());
    EXPECT_LT(element_stress(fem, 0, s), 1e-9);
}

TEST(ElementStress, UniaxialStretchWithoutPoissonEffect) {
    const auto mesh = unit_tet();
    const double young = 2e5, eps = 0.02;
    CorotationalFem fem(mesh, young, 0.0);
    auto s = state_of(mesh);
    deform(s, Vec3(1.0 + eps, 1.0, 1.0).asDiagonal().toDenseMatrix());
    EXPECT_NEAR(element_stress(fem, 0, s), young * eps, 0.01 * young * eps);
}

TEST(ElementStress, CompressionIsClampedToZero) {
    const auto mesh = unit_tet();
    CorotationalFem fem(mesh, 1e5, 0.0);
    auto s = state_of(mesh);
    deform(s, 0.9 * Mat3::Identity());
    EXPECT_EQ(element_stress(fem, 0, s), 0.0);
}

TEST(ElementStress, MatchesIndependentPolarAndEigenOracle) {
    const auto mesh = unit_tet();
    const double young = 3e4, nu = 0.35;
    CorotationalFem fem(mesh, young, nu);
    const double lambda = young * nu / ((1 + nu) * (1 - 2 * nu)), mu = young / (2 * (1 + nu));
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        Mat3 g = Mat3::Identity();
        for (int c = 0; c < 3; ++c) g.col(c) += 0.3 * random_vec(rng);
        const Mat3 f = random_rotation(rng).toRotationMatrix() * g;
        if (f.determinant() <= 0.05) continue;
        auto s = state_of(mesh);
        deform(s, f);

        Eigen::JacobiSVD<Mat3> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const Mat3 r = svd.matrixU() * svd.matrixV().transpose();
        const Mat3 h = r.transpose() * f - Mat3::Identity();
        const Mat3 eps = 0.5 * (h + h.transpose());
        const Mat3 sigma = lambda * eps.trace() * Mat3::Identity() + 2 * mu * eps;
        const double expected = std::max(0.0, largest_eigenvalue(sigma));
        EXPECT_NEAR(element_stress(fem, 0, s), expected, 1e-8 * (std::abs(expected) + young * 1e-3)) << trial;
    }
}

TEST(DynamicTopology, InteriorFacesOfTwoTetBar) {
    DynamicTopology topo(two_tet_bar(), 1.0);
    EXPECT_EQ(topo.interior_face_count(), 1u);
    EXPECT_EQ(topo.component_count(), 1);
    EXPECT_THROW(DynamicTopology(two_tet_bar(), 0.0), ConfigError);
}

TEST(DynamicTopology, NothingSeparatesBelowThreshold) {
    const auto mesh = grid_tet_mesh(4, 1, 1, 1.0);
    DynamicTopology topo(mesh, 1e9);
    CorotationalFem fem(mesh, 1e5, 0.3);
    auto s = stretched_bar(mesh, 0.5);
    const auto before = s.x;
    const auto rec = topo.rupture_step(0, s, fem);
    EXPECT_TRUE(rec.faces.empty());
    EXPECT_EQ(topo.version(), 0u);
    EXPECT_EQ(s.x, before);
    EXPECT_TRUE(topo.log().empty());
}

TEST(DynamicTopology, TwoTetBarSplitsIntoTwoPieces) {
    const auto mesh = two_tet_bar();
    CorotationalFem fem(mesh, 1e5, 0.0);
    auto s = state_of(mesh);
    deform(s, Vec3(1.5, 1.0, 1.0).asDiagonal().toDenseMatrix());
    const double m0 = total_mass(s);
    DynamicTopology topo(mesh, 1.0);
    const auto rec = topo.rupture_step(7, s, fem);
    ASSERT_EQ(rec.faces.size(), 1u);
    EXPECT_EQ(rec.step, 7u);
    EXPECT_EQ(rec.duplicated.size(), 3u);
    EXPECT_EQ(s.node_count(), 8);
    EXPECT_EQ(topo.component_count(), 2);
    EXPECT_EQ(topo.version(), 1u);
    EXPECT_EQ(topo.boundary().triangles.size(), 8u);
    EXPECT_NEAR(total_mass(s), m0, 1e-12 * m0);
    // The lower element keeps the original nodes.
    EXPECT_EQ(topo.mesh().tets[0], (Tet{0, 1, 2, 3}));
    for (const auto& [src, dst] : rec.duplicated) {
        EXPECT_EQ(s.position(dst), s.position(src));
        EXPECT_EQ(topo.origin(dst), src);
    }
    EXPECT_EQ(fem.element(1), topo.mesh().tets[1]);
    // A separated face never separates twice.
    EXPECT_TRUE(topo.rupture_step(8, s, fem).faces.empty());
}

TEST(DynamicTopology, ThresholdBracketing) {
    const auto mesh = two_tet_bar();
    CorotationalFem fem(mesh, 1e5, 0.25);
    auto s = state_of(mesh);
    deform(s, Vec3(1.2, 0.95, 1.05).asDiagonal().toDenseMatrix());
    const double critical = std::min(element_stress(fem, 0, s), element_stress(fem, 1, s));
    ASSERT_GT(critical, 0.0);
    {
        DynamicTopology topo(mesh, 1.01 * critical);
        auto copy = s;
        EXPECT_TRUE(topo.rupture_step(0, copy, fem).faces.empty());
    }
    {
        DynamicTopology topo(mesh, 0.99 * critical);
        auto copy = s;
        CorotationalFem f2(mesh, 1e5, 0.25);
        EXPECT_EQ(topo.rupture_step(0, copy, f2).faces.size(), 1u);
    }
}

TEST(DynamicTopology, ScaledStressSeparatesSuperset) {
    const auto mesh = grid_tet_mesh(4, 2, 1, 1.0);
    std::mt19937_64 rng(5);
    auto s = state_of(mesh);
    for (Index i = 0; i < s.node_count(); ++i) {
        const Vec3 p = mesh.vertices[i];
        s.x.segment<3>(3 * i) = Vec3(p.x() * (1.0 + 0.1 * p.x()), p.y(), p.z()) + 0.05 * random_vec(rng);
    }
    std::vector<double> stresses;
    {
        CorotationalFem fem(mesh, 1e4, 0.3);
        for (std::size_t e = 0; e < fem.element_count(); ++e) stresses.push_back(element_stress(fem, e, s));
    }
    std::sort(stresses.begin(), stresses.end());
    const double threshold = stresses[stresses.size() / 2];
    std::vector<Index> base;
    for (const double c : {1.0, 1.3, 2.0}) {
        CorotationalFem fem(mesh, 1e4, 0.3);
        DynamicTopology topo(mesh, threshold);
        auto copy = s;
        const auto rec = topo.rupture_step(0, copy, fem, c);
        if (c > 1.0) EXPECT_TRUE(std::includes(rec.faces.begin(), rec.faces.end(), base.begin(), base.end()));
        EXPECT_TRUE(std::is_sorted(rec.faces.begin(), rec.faces.end()));
        if (c == 1.0) base = rec.faces;
    }
    EXPECT_FALSE(base.empty());
}

TEST(DynamicTopology, DeterministicLogAndMassConservation) {
    const auto mesh = grid_tet_mesh(4, 1, 1, 1.0);
    auto run = [&]() {
        CorotationalFem fem(mesh, 1e4, 0.3);
        DynamicTopology topo(mesh, 3000.0);
        auto s = state_of(mesh);
        const double m0 = total_mass(s);
        for (int step = 0; step < 4; ++step) {
            auto stretched = stretched_bar(mesh, 0.25 * (step + 1));
            // Keep the split copies on their sources.
            for (Index i = 0; i < s.node_count(); ++i)
                s.x.segment<3>(3 * i) = stretched.x.segment<3>(3 * topo.origin(i));
            topo.rupture_step(step, s, fem);
        }
        EXPECT_NEAR(total_mass(s), m0, 1e-12 * m0);
        std::ostringstream out;
        topo.write_log(out);
        return std::make_pair(out.str(), topo.component_count());
    };
    const auto a = run(), b = run();
    EXPECT_EQ(a.first, b.first);
    EXPECT_FALSE(a.first.empty());
    EXPECT_EQ(a.second, b.second);
}

TEST(DynamicTopology, LogFormat) {
    const auto mesh = two_tet_bar();
    CorotationalFem fem(mesh, 1e5, 0.0);
    auto s = state_of(mesh);
    deform(s, Vec3(1.5, 1.0, 1.0).asDiagonal().toDenseMatrix());
    DynamicTopology topo(mesh, 1.0);
    topo.rupture_step(3, s, fem);
    std::ostringstream out;
    topo.write_log(out);
    EXPECT_EQ(out.str(), "3;0:0-1;1>5 2>6 3>7\n");
}

TEST(DynamicVisual, UnchangedTopologyIsNoOp) {
    const auto mesh = grid_tet_mesh(3, 1, 1, 1.0);
    DynamicTopology topo(mesh, 1e9);
    auto visual = bind_dynamic_visual(boundary_surface(mesh), topo);
    const auto tris = visual.mesh.triangles;
    EXPECT_EQ(propagate_topology(topo, visual), 0u);
    EXPECT_EQ(visual.mesh.triangles, tris);
}

TEST(DynamicVisual, RejectsStaticScheme) {
    const auto mesh = grid_tet_mesh(2, 1, 1, 1.0);
    DynamicTopology topo(mesh, 1.0);
    auto visual = bind_dynamic_visual(boundary_surface(mesh), topo);
    visual.scheme = MappingScheme::barycentric;
    EXPECT_THROW(propagate_topology(topo, visual), ConfigError);
}

TEST(DynamicVisual, FollowsSplitPieces) {
    const auto mesh = grid_tet_mesh(4, 1, 1, 1.0);
    CorotationalFem fem(mesh, 1e4, 0.3);
    // Stretch only the cube between x = 1.5 and 2.5 strongly enough.
    double threshold = 0.0;
    auto s = stretched_bar(mesh, 0.6);
    for (std::size_t e = 0; e < fem.element_count(); ++e) threshold = std::max(threshold, element_stress(fem, e, s));
    DynamicTopology topo(mesh, 1e-3 * threshold);
    auto visual = bind_dynamic_visual(boundary_surface(mesh), topo);
    const auto nv0 = visual.mesh.vertices.size();

    topo.rupture_step(0, s, fem);
    ASSERT_GT(topo.component_count(), 1);
    EXPECT_THROW(visual.map.apply(topo.mesh().tets, s.x, topo.version()), StaleMapError);
    const auto added = propagate_topology(topo, visual);
    EXPECT_GT(added, 0u);
    EXPECT_EQ(visual.mesh.vertices.size(), nv0 + added);
    EXPECT_EQ(surface_components(visual.mesh), topo.component_count());

    // Move every piece rigidly by its own offset: every visual triangle must
    // keep its rest area, so none straddles two pieces.
    const auto [label, count] = tet_components(topo.mesh().tets, topo.mesh().vertices.size());
    std::vector<int> node_label(s.node_count(), -1);
    for (std::size_t e = 0; e < label.size(); ++e)
        for (const Index v : topo.mesh().tets[e]) node_label[v] = label[e];
    for (Index i = 0; i < s.node_count(); ++i)
        s.x.segment<3>(3 * i) = topo.mesh().vertices[i] + Vec3(0, 0, 5.0 * node_label[i]);
    std::vector<Vec3> out;
    ASSERT_NO_THROW(visual.map.apply(topo.mesh().tets, s.x, topo.version(), out));
    for (const auto& t : visual.mesh.triangles) {
        const auto& r = visual.mesh.vertices;
        const double rest = (r[t[1]] - r[t[0]]).cross(r[t[2]] - r[t[0]]).norm();
        const double now = (out[t[1]] - out[t[0]]).cross(out[t[2]] - out[t[0]]).norm();
        EXPECT_NEAR(now, rest, 1e-9);
    }
    EXPECT_EQ(propagate_topology(topo, visual), 0u);
}
