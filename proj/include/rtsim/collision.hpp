#pragma once

#include "rtsim/dynamics.hpp"

#include <limits>

namespace rtsim {

enum PrimitiveFlags : std::uint8_t {
    kPoint = 1,
    kLine = 2,
    kTriangle = 4,
    kAllPrimitives = kPoint | kLine | kTriangle,
};

// Group id that matches every other group.
inline constexpr int kAnyGroup = -1;

struct CollisionParams {
    std::uint8_t primitives = kAllPrimitives;
    double proximity = 0.0;  // m
    int group = 0;
    bool self_collision = false;
    bool cutting = false;  // report contacts only, no response

    void validate() const;
};

struct Aabb {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

    void extend(const Vec3& p) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    Aabb inflated(double r) const { return {lo - Vec3::Constant(r), hi + Vec3::Constant(r)}; }
    bool overlaps(const Aabb& o) const { return (lo.array() <= o.hi.array()).all() && (o.lo.array() <= hi.array()).all(); }
};

// Triangle shell bound to a body. Soft shells map vertex i to node nodes[i];
// rigid shells keep body-frame vertices and follow one frame.
struct CollisionModel {
    Index body = 0;
    bool rigid = false;
    Index frame = 0;
    CollisionParams params;
    std::vector<Tri> triangles;
    std::vector<std::pair<Index, Index>> edges;
    std::vector<Index> nodes;
    std::vector<Vec3> local;
    std::vector<Vec3> positions;  // current world positions
    Aabb box;                     // not inflated

    std::size_t vertex_count() const { return positions.size(); }
};

enum class ContactKind : std::uint8_t { point_triangle, edge_edge };

// Side a is the triangle (or first edge), side b the point (or second edge).
// distance = (p_b - p_a) . normal; negative means penetration.
struct Contact {
    std::size_t model_a = 0;
    std::size_t model_b = 0;
    ContactKind kind = ContactKind::point_triangle;
    Index feature_a = 0;  // triangle or edge index in model a
    Index feature_b = 0;  // vertex or edge index in model b
    std::array<double, 3> weights_a{};  // barycentric on the triangle / edge
    std::array<double, 2> weights_b{};  // 1 for a point, segment weights for an edge
    Vec3 p_a = Vec3::Zero();
    Vec3 p_b = Vec3::Zero();
    Vec3 normal = Vec3::UnitZ();
    double distance = 0.0;
    double threshold = 0.0;  // summed proximity
};

// Force applied at a point of a body. node >= 0 for soft-body nodes, -1 for
// a rigid frame (torque taken about the frame origin by the caller).
struct PointForce {
    Index body = 0;
    Index node = -1;
    Index frame = 0;
    Vec3 point = Vec3::Zero();
    Vec3 force = Vec3::Zero();
};

class CollisionWorld {
public:
    // Soft shell sharing the body's node indexing. Throws MeshError when a
    // triangle references a node the body does not have.
    std::size_t attach_soft(Index body, const SurfaceMesh& surface, Index node_count, const CollisionParams& params);
    // Rigid shell given in the frame's local coordinates.
    std::size_t attach_rigid(Index body, Index frame, const SurfaceMesh& local_surface, const CollisionParams& params);

    // Replace the connectivity of a soft shell (after topology changes).
    void rebind_soft(std::size_t model, const SurfaceMesh& surface, Index node_count);

    void update(std::size_t model, const SoftBodyState& state);
    void update(std::size_t model, const RigidTransform& frame);

    std::size_t size() const { return models_.size(); }
    const CollisionModel& model(std::size_t i) const { return models_[i]; }
    const std::vector<CollisionModel>& models() const { return models_; }

private:
    std::vector<CollisionModel> models_;
};

// Whether two models may interact at all (group and self-collision rules).
bool may_collide(const CollisionModel& a, const CollisionModel& b, bool same_model);

// Sweep-and-prune on x over boxes inflated by each model's proximity.
// Returns sorted (i, j) with i <= j; (i, i) only for self-colliding models.
std::vector<std::pair<std::size_t, std::size_t>> broad_phase(const std::vector<CollisionModel>& models);

// Every primitive pair closer than the summed proximities.
std::vector<Contact> narrow_phase(const std::vector<CollisionModel>& models, std::size_t a, std::size_t b);

// broad_phase + narrow_phase over the whole world, deterministic order.
std::vector<Contact> detect_contacts(const CollisionWorld& world);

// k (threshold - d) normal on side b, the opposite on side a, spread by the
// primitive weights. Contacts touching a cutting model are skipped.
std::vector<PointForce> penalty_response(const CollisionWorld& world, const std::vector<Contact>& contacts,
                                         double contact_stiffness);

// Closest point on triangle (a, b, c) to p, with its barycentric weights.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c,
                               std::array<double, 3>& weights);

// Closest points between segments [p0, p1] and [q0, q1]; s, t are the
// parameters along each segment.
void closest_points_segments(const Vec3& p0, const Vec3& p1, const Vec3& q0, const Vec3& q1, double& s, double& t);

}  // namespace rtsim
