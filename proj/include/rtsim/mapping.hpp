#pragma once

#include "rtsim/dynamics.hpp"
#include "rtsim/rigid.hpp"

#include <cmath>
#include <limits>

namespace rtsim {

// Weights of p with respect to the tet corners; they sum to one and
// reproduce p. Throws MeshError for a degenerate tet.
std::array<double, 4> barycentric_coords(const Vec3& p, const std::array<Vec3, 4>& corners);

/// Embedding of points in the elements of a tetrahedral mesh.
///
/// A point inside (or on) an element takes that element, lowest index first.
/// A point outside every element takes the element with the nearest
/// centroid, with negative weights clamped to zero and the rest renormalized.
/// The map remembers the topology version of the mesh it was bound against
/// and refuses to evaluate against any other.
class BarycentricMap {
public:
    struct Record {
        Index tet = 0;
        std::array<double, 4> weights{};
        bool inside = false;
    };

    BarycentricMap() = default;

    // Binds against `vertices` (usually rest positions) and `tets`. An
    // optional candidate list restricts the elements considered.
    static BarycentricMap bind(const std::vector<Vec3>& points, const std::vector<Vec3>& vertices,
                               const std::vector<Tet>& tets, std::uint64_t topology_version = 0,
                               const std::vector<Index>* candidates = nullptr);
    static BarycentricMap bind(const std::vector<Vec3>& points, const TetMesh& mesh, std::uint64_t topology_version = 0);

    std::size_t size() const { return records_.size(); }
    const Record& record(std::size_t i) const { return records_[i]; }
    const std::vector<Record>& records() const { return records_; }
    std::uint64_t topology_version() const { return version_; }

    // Rebinding of a single point, used when topology changes split a target.
    void set_record(std::size_t i, const Record& r) { records_.at(i) = r; }
    void append(const Record& r) { records_.push_back(r); }
    void set_topology_version(std::uint64_t v) { version_ = v; }

    // target_i = sum_j w_ij x_{tet_i[j]}. Throws StaleMapError when the
    // topology version differs from the one bound against.
    void apply(const std::vector<Tet>& tets, const VecX& x, std::uint64_t topology_version,
               std::vector<Vec3>& out) const;
    std::vector<Vec3> apply(const std::vector<Tet>& tets, const VecX& x, std::uint64_t topology_version) const;

    Vec3 evaluate(std::size_t i, const std::vector<Tet>& tets, const VecX& x) const;

private:
    std::vector<Record> records_;
    std::uint64_t version_ = 0;
};

inline constexpr double kPinStiffness = std::numeric_limits<double>::infinity();

struct AttachmentConfig {
    double stiffness = kPinStiffness;  // N/m; infinity pins
    std::vector<Index> node_indices;   // on the attached body
    bool barycentric = false;

    bool pins() const { return std::isinf(stiffness); }
    void validate(Index node_count) const;
};

enum class AttachmentTarget { world, soft_direct, soft_barycentric, rigid_frame };

/// Coupling of nodes of a soft body (side a) to world points, to nodes or
/// embedded proxies of another soft body, or to points fixed in a rigid
/// frame (side b). Proxies are massless: their position is evaluated from
/// side b and the spring reaction is handed back to side b.
struct Attachment {
    AttachmentTarget target = AttachmentTarget::world;
    Index body_a = 0;
    Index body_b = -1;
    double stiffness = kPinStiffness;
    std::vector<Index> nodes;         // on side a
    std::vector<Vec3> world_points;   // world
    std::vector<Index> counterparts;  // soft_direct: node on side b
    BarycentricMap proxies;           // soft_barycentric
    Index frame = 0;                  // rigid_frame
    std::vector<Vec3> local_points;   // rigid_frame, in frame coordinates

    bool pins() const { return std::isinf(stiffness); }
};

Attachment attach_to_world(Index body_a, const SoftBodyState& a, const AttachmentConfig& cfg);

// Direct mode couples every node to the nearest node of b (lowest index on
// ties); barycentric mode clones the nodes as proxies embedded in b's mesh.
Attachment attach_to_soft(Index body_a, const SoftBodyState& a, Index body_b, const SoftBodyState& b,
                          const TetMesh& b_mesh, std::uint64_t b_version, const AttachmentConfig& cfg);

// Barycentric mode requires a soft body on side b; asking for it here is a
// configuration error.
Attachment attach_to_rigid(Index body_a, const SoftBodyState& a, Index body_b, Index frame,
                           const RigidTransform& pose, const AttachmentConfig& cfg);

// Current positions and velocities the attached nodes are pulled towards.
// `b` / `b_tets` / `pose` are ignored for targets that do not use them.
struct AttachmentTargets {
    std::vector<Vec3> positions;
    std::vector<Vec3> velocities;
};
AttachmentTargets attachment_targets(const Attachment& att, const SoftBodyState* b, const std::vector<Tet>* b_tets,
                                     std::uint64_t b_version, const RigidTransform* pose, const Twist* twist);

// Spring reaction on side b for soft targets, implicit in b: every proxy
// pulls its embedding nodes towards the fixed point held by side a.
class ProxySprings final : public ForceModel {
public:
    struct Link {
        std::array<Index, 4> nodes{};
        std::array<double, 4> weights{};
        int count = 0;
        Vec3 anchor = Vec3::Zero();
        double stiffness = 0.0;
    };

    std::vector<Link>& links() { return links_; }
    const std::vector<Link>& links() const { return links_; }

    void add_forces(const SoftBodyState& state, VecX& f) override;
    void add_stiffness_product(const VecX& dx, VecX& df) const override;
    void add_stiffness_matrix(MatX& k) const override;
    double energy(const SoftBodyState& state) const override;

private:
    std::vector<Link> links_;
};

// Links for side b of a soft-to-soft spring attachment, anchored at the
// current side-a node positions.
std::vector<ProxySprings::Link> reaction_links(const Attachment& att, const SoftBodyState& a,
                                               const std::vector<Tet>& b_tets);

// How physical state reaches a visual body.
enum class MappingScheme { rigid_frame, identity, barycentric, dynamic_barycentric };

MappingScheme select_mapping_scheme(bool rigid_body, bool shares_vertex_indexing, bool dynamic_topology);

const char* to_string(MappingScheme s);

}  // namespace rtsim
