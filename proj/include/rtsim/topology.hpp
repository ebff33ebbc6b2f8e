#pragma once

#include "rtsim/fem.hpp"
#include "rtsim/mapping.hpp"

#include <iosfwd>

namespace rtsim {

// Largest principal value of the element's corotated stress, clamped at
// zero (tension only).
double element_stress(const CorotationalFem& fem, std::size_t e, const SoftBodyState& state);

struct SeparationRecord {
    std::uint64_t step = 0;
    std::vector<Index> faces;                       // interior face ids, ascending
    std::vector<std::pair<Index, Index>> elements;  // the two elements of each face
    std::vector<std::pair<Index, Index>> duplicated;  // (source node, new node)
};

/// Stress-driven tearing of a tetrahedral body.
///
/// Interior faces are numbered once, in order of their (lower, higher)
/// element pair. A face separates when the stress of both its elements
/// exceeds the threshold; all such faces of one step form a single wave.
/// After a wave, every vertex whose incident elements are no longer
/// connected through intact faces around it is duplicated: the group holding
/// the lowest element keeps the node, every other group gets a copy. Element
/// order and rest data never change, only corner indices. The mass of a
/// split vertex is shared among its groups by incident rest volume.
class DynamicTopology {
public:
    DynamicTopology(const TetMesh& rest, double tearing_threshold);

    const TetMesh& mesh() const { return mesh_; }  // rest positions, current corners
    std::uint64_t version() const { return version_; }
    double threshold() const { return threshold_; }
    std::size_t interior_face_count() const { return faces_.size(); }
    bool separated(Index face) const { return separated_[face] != 0; }
    const std::vector<SeparationRecord>& log() const { return log_; }
    // Original vertex each current node descends from.
    Index origin(Index node) const { return origin_[node]; }

    // One separation wave. `stress_scale` multiplies every element stress
    // before the comparison. Updates state (new nodes, masses), the FEM
    // corner indices and the version. Returns the wave's record (empty
    // faces when nothing separated).
    SeparationRecord rupture_step(std::uint64_t step, SoftBodyState& state, CorotationalFem& fem,
                                  double stress_scale = 1.0);

    // Boundary of the current topology, sharing node indexing.
    SurfaceMesh boundary() const { return boundary_surface(mesh_); }
    int component_count() const;

    // One line per wave: step;faces;duplicated pairs.
    void write_log(std::ostream& out) const;

private:
    struct Face {
        Index tet_a = 0, tet_b = 0;
        std::array<Index, 3> corners_a{};  // corner slots in tet_a
        std::array<Index, 3> corners_b{};  // matching slots in tet_b
    };

    void split_vertex_groups(const std::vector<Index>& touched_origins, SoftBodyState& state,
                             SeparationRecord& record);

    TetMesh mesh_;
    std::vector<Tet> original_tets_;
    double threshold_;
    std::vector<Face> faces_;
    std::vector<std::uint8_t> separated_;
    std::vector<std::vector<Index>> faces_of_tet_;
    std::vector<std::vector<Index>> tets_of_origin_;
    std::vector<Index> origin_;
    std::uint64_t version_ = 0;
    std::vector<SeparationRecord> log_;
};

// Visual surface that follows a tearing body.
struct DynamicVisual {
    MappingScheme scheme = MappingScheme::dynamic_barycentric;
    SurfaceMesh mesh;             // rest positions, current connectivity
    BarycentricMap map;
    std::vector<Index> host_tet;  // element hosting each triangle
};

DynamicVisual bind_dynamic_visual(const SurfaceMesh& surface, const DynamicTopology& topology);

// Splits visual vertices whose triangles now sit on different pieces and
// rebinds them inside their own piece. Returns the number of new vertices.
// Throws ConfigError unless the visual uses the dynamic scheme.
std::size_t propagate_topology(const DynamicTopology& topology, DynamicVisual& visual);

}  // namespace rtsim
