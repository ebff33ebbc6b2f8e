#include "rtsim/mapping.hpp"

#include "rtsim/rigid.hpp"

#include <algorithm>

namespace rtsim {

std::array<double, 4> barycentric_coords(const Vec3& p, const std::array<Vec3, 4>& c) {
    Mat3 m;
    m << c[1] - c[0], c[2] - c[0], c[3] - c[0];
    const double scale = std::max({m.col(0).norm(), m.col(1).norm(), m.col(2).norm()});
    const double det = m.determinant();
    if (!(std::abs(det) > 1e-14 * scale * scale * scale)) throw MeshError("barycentric_coords: degenerate tetrahedron");
    const Vec3 l = m.inverse() * (p - c[0]);
    return {1.0 - l.x() - l.y() - l.z(), l.x(), l.y(), l.z()};
}

namespace {

struct ElementCache {
    Mat3 inv;
    Vec3 origin;
    Vec3 centroid;
    Vec3 lo, hi;
};

constexpr double kInsideTolerance = 1e-12;

}  // namespace

BarycentricMap BarycentricMap::bind(const std::vector<Vec3>& points, const std::vector<Vec3>& vertices,
                                    const std::vector<Tet>& tets, std::uint64_t topology_version,
                                    const std::vector<Index>* candidates) {
    std::vector<Index> elements;
    if (candidates) {
        elements = *candidates;
        std::sort(elements.begin(), elements.end());
    } else {
        elements.resize(tets.size());
        for (std::size_t e = 0; e < tets.size(); ++e) elements[e] = static_cast<Index>(e);
    }
    if (elements.empty()) throw MeshError("bind_points: mesh has no elements");

    std::vector<ElementCache> cache(elements.size());
    for (std::size_t k = 0; k < elements.size(); ++k) {
        const auto& t = tets.at(elements[k]);
        auto& c = cache[k];
        Mat3 m;
        m << vertices[t[1]] - vertices[t[0]], vertices[t[2]] - vertices[t[0]], vertices[t[3]] - vertices[t[0]];
        if (!(std::abs(m.determinant()) > 0.0))
            throw MeshError("bind_points: degenerate tetrahedron " + std::to_string(elements[k]));
        c.inv = m.inverse();
        c.origin = vertices[t[0]];
        c.centroid = 0.25 * (vertices[t[0]] + vertices[t[1]] + vertices[t[2]] + vertices[t[3]]);
        c.lo = c.hi = vertices[t[0]];
        for (int j = 1; j < 4; ++j) {
            c.lo = c.lo.cwiseMin(vertices[t[j]]);
            c.hi = c.hi.cwiseMax(vertices[t[j]]);
        }
    }

    auto weights_in = [&](std::size_t k, const Vec3& p) {
        const Vec3 l = cache[k].inv * (p - cache[k].origin);
        return std::array<double, 4>{1.0 - l.x() - l.y() - l.z(), l.x(), l.y(), l.z()};
    };

    BarycentricMap map;
    map.version_ = topology_version;
    map.records_.reserve(points.size());
    for (const auto& p : points) {
        Record r;
        bool found = false;
        for (std::size_t k = 0; k < elements.size() && !found; ++k) {
            const auto& c = cache[k];
            const double pad = 1e-9 * (c.hi - c.lo).norm();
            if ((p.array() < c.lo.array() - pad).any() || (p.array() > c.hi.array() + pad).any()) continue;
            const auto w = weights_in(k, p);
            if (*std::min_element(w.begin(), w.end()) >= -kInsideTolerance) {
                r.tet = elements[k];
                r.weights = w;
                r.inside = true;
                found = true;
            }
        }
        if (!found) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < elements.size(); ++k) {
                const double d = (cache[k].centroid - p).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = k;
                }
            }
            auto w = weights_in(best, p);
            double sum = 0.0;
            for (auto& x : w) {
                x = std::max(x, 0.0);
                sum += x;
            }
            for (auto& x : w) x /= sum;
            r.tet = elements[best];
            r.weights = w;
        }
        map.records_.push_back(r);
    }
    return map;
}

BarycentricMap BarycentricMap::bind(const std::vector<Vec3>& points, const TetMesh& mesh,
                                    std::uint64_t topology_version) {
    return bind(points, mesh.vertices, mesh.tets, topology_version);
}

Vec3 BarycentricMap::evaluate(std::size_t i, const std::vector<Tet>& tets, const VecX& x) const {
    const auto& r = records_[i];
    const auto& t = tets[r.tet];
    Vec3 out = Vec3::Zero();
    for (int j = 0; j < 4; ++j) out += r.weights[j] * x.segment<3>(3 * t[j]);
    return out;
}

void BarycentricMap::apply(const std::vector<Tet>& tets, const VecX& x, std::uint64_t topology_version,
                           std::vector<Vec3>& out) const {
    if (topology_version != version_)
        throw StaleMapError("barycentric map bound to topology version " + std::to_string(version_) +
                            ", source is at " + std::to_string(topology_version) + "; rebind required");
    out.resize(records_.size());
    for (std::size_t i = 0; i < records_.size(); ++i) out[i] = evaluate(i, tets, x);
}

std::vector<Vec3> BarycentricMap::apply(const std::vector<Tet>& tets, const VecX& x,
                                        std::uint64_t topology_version) const {
    std::vector<Vec3> out;
    apply(tets, x, topology_version, out);
    return out;
}

// ---------------------------------------------------------------------------

void AttachmentConfig::validate(Index node_count) const {
    if (node_indices.empty()) throw ConfigError("attachment needs at least one node index");
    for (const Index i : node_indices)
        if (i < 0 || i >= node_count)
            throw ConfigError("attachment node index " + std::to_string(i) + " out of range (body has " +
                              std::to_string(node_count) + " nodes)");
    if (!(stiffness > 0.0)) throw ConfigError("attachment stiffness must be > 0");
}

Attachment attach_to_world(Index body_a, const SoftBodyState& a, const AttachmentConfig& cfg) {
    cfg.validate(a.node_count());
    if (cfg.barycentric) throw ConfigError("barycentric attachment needs a soft body to attach to");
    Attachment att;
    att.target = AttachmentTarget::world;
    att.body_a = body_a;
    att.stiffness = cfg.stiffness;
    att.nodes = cfg.node_indices;
    for (const Index i : att.nodes) att.world_points.push_back(a.position(i));
    return att;
}

Attachment attach_to_soft(Index body_a, const SoftBodyState& a, Index body_b, const SoftBodyState& b,
                          const TetMesh& b_mesh, std::uint64_t b_version, const AttachmentConfig& cfg) {
    cfg.validate(a.node_count());
    Attachment att;
    att.body_a = body_a;
    att.body_b = body_b;
    att.stiffness = cfg.stiffness;
    att.nodes = cfg.node_indices;
    std::vector<Vec3> points;
    for (const Index i : att.nodes) points.push_back(a.position(i));
    if (cfg.barycentric) {
        att.target = AttachmentTarget::soft_barycentric;
        std::vector<Vec3> current(b.node_count());
        for (Index i = 0; i < b.node_count(); ++i) current[i] = b.position(i);
        att.proxies = BarycentricMap::bind(points, current, b_mesh.tets, b_version);
    } else {
        att.target = AttachmentTarget::soft_direct;
        for (const auto& p : points) {
            Index best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (Index j = 0; j < b.node_count(); ++j) {
                const double d = (b.position(j) - p).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = j;
                }
            }
            att.counterparts.push_back(best);
        }
    }
    return att;
}

Attachment attach_to_rigid(Index body_a, const SoftBodyState& a, Index body_b, Index frame,
                           const RigidTransform& pose, const AttachmentConfig& cfg) {
    cfg.validate(a.node_count());
    if (cfg.barycentric)
        throw ConfigError("barycentric attachment requires a soft body with a tetrahedral mesh on the other side");
    Attachment att;
    att.target = AttachmentTarget::rigid_frame;
    att.body_a = body_a;
    att.body_b = body_b;
    att.frame = frame;
    att.stiffness = cfg.stiffness;
    att.nodes = cfg.node_indices;
    const auto inv = pose.inverse();
    for (const Index i : att.nodes) att.local_points.push_back(inv.apply(a.position(i)));
    return att;
}

AttachmentTargets attachment_targets(const Attachment& att, const SoftBodyState* b, const std::vector<Tet>* b_tets,
                                     std::uint64_t b_version, const RigidTransform* pose, const Twist* twist) {
    AttachmentTargets out;
    const std::size_t n = att.nodes.size();
    out.positions.resize(n);
    out.velocities.assign(n, Vec3::Zero());
    switch (att.target) {
        case AttachmentTarget::world:
            out.positions = att.world_points;
            break;
        case AttachmentTarget::soft_direct:
            for (std::size_t i = 0; i < n; ++i) {
                out.positions[i] = b->position(att.counterparts[i]);
                out.velocities[i] = b->velocity(att.counterparts[i]);
            }
            break;
        case AttachmentTarget::soft_barycentric:
            att.proxies.apply(*b_tets, b->x, b_version, out.positions);
            for (std::size_t i = 0; i < n; ++i) out.velocities[i] = att.proxies.evaluate(i, *b_tets, b->v);
            break;
        case AttachmentTarget::rigid_frame:
            for (std::size_t i = 0; i < n; ++i) {
                out.positions[i] = pose->apply(att.local_points[i]);
                if (twist)
                    out.velocities[i] = twist->linear + twist->angular.cross(out.positions[i] - pose->translation);
            }
            break;
    }
    return out;
}

// ---------------------------------------------------------------------------

void ProxySprings::add_forces(const SoftBodyState& state, VecX& f) {
    for (const auto& l : links_) {
        Vec3 p = Vec3::Zero();
        for (int j = 0; j < l.count; ++j) p += l.weights[j] * state.position(l.nodes[j]);
        const Vec3 pull = l.stiffness * (l.anchor - p);
        for (int j = 0; j < l.count; ++j) f.segment<3>(3 * l.nodes[j]) += l.weights[j] * pull;
    }
}

void ProxySprings::add_stiffness_product(const VecX& dx, VecX& df) const {
    for (const auto& l : links_) {
        Vec3 dp = Vec3::Zero();
        for (int j = 0; j < l.count; ++j) dp += l.weights[j] * dx.segment<3>(3 * l.nodes[j]);
        for (int j = 0; j < l.count; ++j) df.segment<3>(3 * l.nodes[j]) -= l.stiffness * l.weights[j] * dp;
    }
}

void ProxySprings::add_stiffness_matrix(MatX& k) const {
    for (const auto& l : links_)
        for (int i = 0; i < l.count; ++i)
            for (int j = 0; j < l.count; ++j)
                k.block<3, 3>(3 * l.nodes[i], 3 * l.nodes[j]).diagonal().array() -=
                    l.stiffness * l.weights[i] * l.weights[j];
}

double ProxySprings::energy(const SoftBodyState& state) const {
    double e = 0.0;
    for (const auto& l : links_) {
        Vec3 p = Vec3::Zero();
        for (int j = 0; j < l.count; ++j) p += l.weights[j] * state.position(l.nodes[j]);
        e += 0.5 * l.stiffness * (l.anchor - p).squaredNorm();
    }
    return e;
}

std::vector<ProxySprings::Link> reaction_links(const Attachment& att, const SoftBodyState& a,
                                               const std::vector<Tet>& b_tets) {
    std::vector<ProxySprings::Link> out;
    for (std::size_t i = 0; i < att.nodes.size(); ++i) {
        ProxySprings::Link l;
        l.anchor = a.position(att.nodes[i]);
        l.stiffness = att.stiffness;
        if (att.target == AttachmentTarget::soft_barycentric) {
            const auto& r = att.proxies.record(i);
            l.nodes = b_tets[r.tet];
            l.weights = r.weights;
            l.count = 4;
        } else if (att.target == AttachmentTarget::soft_direct) {
            l.nodes[0] = att.counterparts[i];
            l.weights[0] = 1.0;
            l.count = 1;
        } else {
            continue;
        }
        out.push_back(l);
    }
    return out;
}

MappingScheme select_mapping_scheme(bool rigid_body, bool shares_vertex_indexing, bool dynamic_topology) {
    if (rigid_body) return MappingScheme::rigid_frame;
    if (dynamic_topology) return MappingScheme::dynamic_barycentric;
    return shares_vertex_indexing ? MappingScheme::identity : MappingScheme::barycentric;
}

const char* to_string(MappingScheme s) {
    switch (s) {
        case MappingScheme::rigid_frame: return "rigid_frame";
        case MappingScheme::identity: return "identity";
        case MappingScheme::barycentric: return "barycentric";
        case MappingScheme::dynamic_barycentric: return "dynamic_barycentric";
    }
    return "?";
}

}  // namespace rtsim
