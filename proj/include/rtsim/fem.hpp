#pragma once

#include "rtsim/dynamics.hpp"

namespace rtsim {

struct LameParameters {
    double lambda = 0.0;
    double mu = 0.0;

    static LameParameters from_young_poisson(double young, double poisson) {
        return {young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson)), young / (2.0 * (1.0 + poisson))};
    }
};

// Rotation factor of the polar decomposition F = R S (scaled Newton
// iteration). Returns false for non-positive det(F).
bool polar_rotation(const Mat3& f, Mat3& r);

/// Corotational linear-elastic tetrahedra.
///
/// Each element keeps its rest stiffness K0 = V B^T C B. At every force
/// evaluation the element rotation R is extracted from the deformation
/// gradient and the force is f = -R K0 (R^T x - x0); the cached stiffness
/// used by the implicit integrator is -R K0 R^T. Inverted elements reuse
/// their last valid rotation and bump inverted_warnings().
class CorotationalFem final : public ForceModel {
public:
    using Block = Eigen::Matrix<double, 12, 12>;

    CorotationalFem(const TetMesh& rest, double young_modulus, double poisson_ratio);

    // Element order and rest data are unchanged by vertex splitting; only the
    // vertex indices of each element move.
    void set_topology(const std::vector<Tet>& tets);

    void add_forces(const SoftBodyState& state, VecX& f) override;
    void add_stiffness_product(const VecX& dx, VecX& df) const override;
    void add_stiffness_matrix(MatX& k) const override;
    double energy(const SoftBodyState& state) const override;

    std::size_t element_count() const { return elements_.size(); }
    const Tet& element(std::size_t e) const { return elements_[e].tet; }
    double rest_volume(std::size_t e) const { return elements_[e].volume; }
    const Mat3& rotation(std::size_t e) const { return elements_[e].rotation; }
    const Block& rest_stiffness(std::size_t e) const { return elements_[e].k0; }
    // df/dx block of element e at the last evaluation (12x12, node-major).
    Block stiffness_block(std::size_t e) const;

    Mat3 deformation_gradient(std::size_t e, const SoftBodyState& state) const;
    // Linear stress of the element measured in its corotated frame.
    Mat3 corotated_stress(std::size_t e, const SoftBodyState& state) const;

    int inverted_warnings() const { return inverted_warnings_; }
    const LameParameters& lame() const { return lame_; }

private:
    struct Element {
        Tet tet{};
        Mat3 dm_inv = Mat3::Identity();
        std::array<Vec3, 3> rest_edges{};
        double volume = 0.0;
        Block k0 = Block::Zero();
        Mat3 rotation = Mat3::Identity();
        Mat3 last_valid = Mat3::Identity();
    };

    Mat3 rotation_for(const Element& el, const SoftBodyState& state, bool* inverted) const;

    std::vector<Element> elements_;
    LameParameters lame_;
    int inverted_warnings_ = 0;
};

struct FemForces {
    VecX forces;
    std::optional<std::vector<CorotationalFem::Block>> stiffness_blocks;
};

FemForces fem_forces(const SoftBodyState& state, const TetMesh& mesh, const MechanicalParams& params,
                     bool with_stiffness_blocks = false);

}  // namespace rtsim
