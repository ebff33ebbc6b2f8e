#pragma once

#include "rtsim/linear_solvers.hpp"
#include "rtsim/mesh.hpp"

#include <memory>
#include <optional>
#include <span>

namespace rtsim {

enum class MaterialModel { mass_spring, fem };

struct MechanicalParams {
    MaterialModel model = MaterialModel::fem;
    double stiffness = 1000.0;        // N/m, mass-spring
    double young_modulus = 5000.0;    // Pa, fem
    double poisson_ratio = 0.3;
    double density = 1000.0;          // kg/m^3, fem lumped masses
    double total_mass = 1.0;          // kg, mass-spring uniform masses
    double rayleigh_mass = 0.1;       // 1/s
    double rayleigh_stiffness = 0.01; // s
    std::optional<double> tearing_threshold;  // Pa

    void validate() const;
};

// 3-DOF nodes. Flat 3N layout: node i occupies entries [3i, 3i+3).
struct SoftBodyState {
    VecX x;
    VecX v;
    std::vector<double> masses;
    // Pinned nodes never move. Kinematic nodes follow the velocity written
    // into `v` by the caller; integrators leave that velocity untouched.
    std::vector<std::uint8_t> pinned;
    std::vector<std::uint8_t> kinematic;

    SoftBodyState() = default;
    SoftBodyState(const std::vector<Vec3>& positions, std::vector<double> node_masses);

    Index node_count() const { return static_cast<Index>(masses.size()); }
    Vec3 position(Index i) const { return x.segment<3>(3 * i); }
    Vec3 velocity(Index i) const { return v.segment<3>(3 * i); }
    bool is_pinned(Index i) const { return pinned[i] != 0; }
    bool is_constrained(Index i) const { return pinned[i] != 0 || kinematic[i] != 0; }
    void pin(Index i);
    std::vector<Index> pinned_nodes() const;
    void append_node(const Vec3& position, const Vec3& velocity, double mass);

    // Throws Error when the invariants (sizes, positive masses) do not hold.
    void validate() const;
};

struct SpringEdge {
    Index a = 0;
    Index b = 0;
    double rest_length = 0.0;
};

// Generic force contributor. add_forces() evaluates at the given state and
// caches whatever linearization add_stiffness_product() needs (K = df/dx).
class ForceModel {
public:
    virtual ~ForceModel() = default;

    virtual void add_forces(const SoftBodyState& state, VecX& f) = 0;
    virtual void add_stiffness_product(const VecX& dx, VecX& df) const = 0;
    virtual void add_stiffness_matrix(MatX& k) const = 0;
    virtual double energy(const SoftBodyState& state) const = 0;
};

class SpringNetwork final : public ForceModel {
public:
    SpringNetwork(std::vector<SpringEdge> edges, double stiffness);

    // Edges of a tet mesh with rest lengths taken from its vertices.
    static SpringNetwork from_mesh(const TetMesh& mesh, double stiffness);

    void add_forces(const SoftBodyState& state, VecX& f) override;
    void add_stiffness_product(const VecX& dx, VecX& df) const override;
    void add_stiffness_matrix(MatX& k) const override;
    double energy(const SoftBodyState& state) const override;

    // Edges whose endpoints coincided at the last evaluation.
    int degenerate_edges() const { return degenerate_; }
    const std::vector<SpringEdge>& edges() const { return edges_; }

private:
    std::vector<SpringEdge> edges_;
    double k_;
    std::vector<Mat3> blocks_;  // df_a/dx_a per edge
    int degenerate_ = 0;
};

// Nodes tied to moving anchor points by zero-rest-length springs.
class AnchorSprings final : public ForceModel {
public:
    struct Anchor {
        Index node = 0;
        Vec3 target = Vec3::Zero();
        double stiffness = 0.0;
    };

    std::vector<Anchor>& anchors() { return anchors_; }
    const std::vector<Anchor>& anchors() const { return anchors_; }

    void add_forces(const SoftBodyState& state, VecX& f) override;
    void add_stiffness_product(const VecX& dx, VecX& df) const override;
    void add_stiffness_matrix(MatX& k) const override;
    double energy(const SoftBodyState& state) const override;

private:
    std::vector<Anchor> anchors_;
};

// Hookean spring forces: node a receives k (|d| - L0) d/|d|, d = x_b - x_a.
VecX spring_forces(const SoftBodyState& state, std::span<const SpringEdge> edges, double stiffness);

// Per-node lumped mass: density * rest_volume / 4 from every incident tet.
std::vector<double> lumped_masses(const TetMesh& mesh, double density);

struct StepStats {
    int iterations = 0;
    double residual = 0.0;
    bool converged = true;
};

// Rayleigh damping D = -(alpha M + beta K_s), with K_s = -df/dx.
struct Damping {
    double mass = 0.0;
    double stiffness = 0.0;
};

// v <- v + dt M^-1 f ; x <- x + dt v_old. Pinned nodes are untouched.
// Throws SolverError (state unchanged) on non-finite forces.
void step_explicit_euler(SoftBodyState& state, const VecX& forces, double dt);

// Backward Euler linearized once:
//   (M - dt D - dt^2 K) dv = dt (f + dt K v),  v += dv,  x += dt v.
// `forces` are evaluated (and linearized) at the incoming state, `external`
// is added to the right-hand side. Constrained rows are projected out.
// Throws SolverError on solver failure; the state is then unchanged.
StepStats step_implicit_euler(SoftBodyState& state, std::span<ForceModel* const> forces, const VecX& external,
                              double dt, const SolverConfig& solver, const Damping& damping);

// Largest system the dense Cholesky path accepts.
inline constexpr Eigen::Index kMaxCholeskyDofs = 3000;

}  // namespace rtsim
