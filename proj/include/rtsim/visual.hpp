#pragma once

#include "rtsim/mesh.hpp"

#include <optional>

namespace rtsim {

/// Posed entities (visual bodies, cameras, lights) arranged in a forest.
/// A node is either parented to another node or mapped to a physical frame
/// whose pose is pushed in at every synchronization; roots without a
/// mapping sit in world coordinates.
class TransformTree {
public:
    Index add(const RigidTransform& local = RigidTransform::identity(), Index parent = -1);

    // Throws ConfigError when the new edge would close a cycle.
    void set_parent(Index node, Index parent);
    void set_local(Index node, const RigidTransform& local);
    void map_to_frame(Index node, const RigidTransform& frame_pose);
    void unmap(Index node);

    const RigidTransform& local(Index node) const { return nodes_.at(node).local; }
    Index parent(Index node) const { return nodes_.at(node).parent; }
    std::size_t size() const { return nodes_.size(); }

    RigidTransform world(Index node) const;

private:
    struct Node {
        RigidTransform local;
        Index parent = -1;
        std::optional<RigidTransform> mapped;
    };
    std::vector<Node> nodes_;
};

/// Loop subdivision compiled into a sparse stencil over the base vertices:
/// refined = W * base, with W stored row-compressed. Refined vertex order:
/// base vertices first, then one vertex per edge of each level in sorted
/// edge order.
struct SubdivisionCache {
    int level = 0;
    std::size_t base_vertex_count = 0;
    std::vector<Tri> triangles;  // refined connectivity
    std::vector<std::size_t> row_start;
    std::vector<Index> columns;
    std::vector<double> weights;

    std::size_t refined_vertex_count() const { return row_start.empty() ? 0 : row_start.size() - 1; }
};

inline constexpr int kMaxSubdivisionLevel = 3;

// Even vertex weight per neighbor for interior valence n.
double loop_beta(int valence);

// Throws MeshError listing every edge with more than two triangles, and
// ConfigError for a level outside 0..3.
SubdivisionCache build_subdivision(const SurfaceMesh& mesh, int level);

// refined = W * base. `out` is resized once and reused. Returns the number
// of multiply-adds performed, which depends only on the cache.
std::size_t refresh_positions(const SubdivisionCache& cache, const std::vector<Vec3>& base, std::vector<Vec3>& out);

// Area-weighted vertex normals (unnormalized face cross products summed).
std::vector<Vec3> vertex_normals(const std::vector<Vec3>& positions, const std::vector<Tri>& triangles);

/// A surface shown at some subdivision level. Base positions come from the
/// mapping; refined positions and normals follow on update().
class VisualBody {
public:
    VisualBody(SurfaceMesh base, int subdivision_level);

    void update(const std::vector<Vec3>& base_positions);

    int subdivision_level() const { return cache_.level; }
    const SurfaceMesh& base() const { return base_; }
    const SubdivisionCache& cache() const { return cache_; }
    const std::vector<Vec3>& base_positions() const { return base_positions_; }
    const std::vector<Vec3>& positions() const { return positions_; }
    const std::vector<Vec3>& normals() const { return normals_; }
    std::size_t last_operation_count() const { return last_ops_; }

    // Refined mesh with normals, for export.
    SurfaceMesh refined_mesh() const;

    // After a topology change of the base (vertex splits), rebuilds the cache.
    void rebuild(SurfaceMesh base);

private:
    SurfaceMesh base_;
    SubdivisionCache cache_;
    std::vector<Vec3> base_positions_;
    std::vector<Vec3> positions_;
    std::vector<Vec3> normals_;
    std::size_t last_ops_ = 0;
};

}  // namespace rtsim
