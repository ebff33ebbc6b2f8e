#include "rtsim/collision.hpp"

#include <algorithm>
#include <cmath>

namespace rtsim {

void CollisionParams::validate() const {
    if ((primitives & kAllPrimitives) == 0) throw ConfigError("collision primitives must not be empty");
    if (!(proximity >= 0.0)) throw ConfigError("collision proximity must be >= 0");
    if (group < kAnyGroup) throw ConfigError("collision group must be >= -1");
}

namespace {

void check_binding(const SurfaceMesh& surface, Index node_count) {
    for (std::size_t t = 0; t < surface.triangles.size(); ++t)
        for (const Index i : surface.triangles[t])
            if (i < 0 || i >= node_count)
                throw MeshError("collision binding: triangle " + std::to_string(t) + " references node " +
                                std::to_string(i) + " but the body has " + std::to_string(node_count));
}

void recompute_box(CollisionModel& m) {
    m.box = Aabb{};
    for (const auto& t : m.triangles)
        for (const Index i : t) m.box.extend(m.positions[i]);
}

}  // namespace

std::size_t CollisionWorld::attach_soft(Index body, const SurfaceMesh& surface, Index node_count,
                                        const CollisionParams& params) {
    params.validate();
    CollisionModel m;
    m.body = body;
    m.params = params;
    models_.push_back(std::move(m));
    rebind_soft(models_.size() - 1, surface, node_count);
    return models_.size() - 1;
}

void CollisionWorld::rebind_soft(std::size_t model, const SurfaceMesh& surface, Index node_count) {
    check_binding(surface, node_count);
    auto& m = models_.at(model);
    m.triangles = surface.triangles;
    m.edges = unique_edges(m.triangles);
    m.nodes.resize(node_count);
    for (Index i = 0; i < node_count; ++i) m.nodes[i] = i;
    m.positions.resize(node_count, Vec3::Zero());
    for (Index i = 0; i < node_count && i < static_cast<Index>(surface.vertices.size()); ++i)
        m.positions[i] = surface.vertices[i];
    recompute_box(m);
}

std::size_t CollisionWorld::attach_rigid(Index body, Index frame, const SurfaceMesh& local_surface,
                                         const CollisionParams& params) {
    params.validate();
    validate(local_surface);
    CollisionModel m;
    m.body = body;
    m.rigid = true;
    m.frame = frame;
    m.params = params;
    m.triangles = local_surface.triangles;
    m.edges = unique_edges(m.triangles);
    m.local = local_surface.vertices;
    m.positions = m.local;
    recompute_box(m);
    models_.push_back(std::move(m));
    return models_.size() - 1;
}

void CollisionWorld::update(std::size_t model, const SoftBodyState& state) {
    auto& m = models_.at(model);
    if (m.rigid) throw Error("collision model " + std::to_string(model) + " is rigid");
    if (static_cast<Index>(m.nodes.size()) > state.node_count())
        throw StaleMapError("collision model " + std::to_string(model) + " bound to more nodes than the body has");
    for (std::size_t i = 0; i < m.nodes.size(); ++i) m.positions[i] = state.position(m.nodes[i]);
    recompute_box(m);
}

void CollisionWorld::update(std::size_t model, const RigidTransform& frame) {
    auto& m = models_.at(model);
    if (!m.rigid) throw Error("collision model " + std::to_string(model) + " is not rigid");
    for (std::size_t i = 0; i < m.local.size(); ++i) m.positions[i] = frame.apply(m.local[i]);
    recompute_box(m);
}

bool may_collide(const CollisionModel& a, const CollisionModel& b, bool same_model) {
    if (a.params.group != b.params.group && a.params.group != kAnyGroup && b.params.group != kAnyGroup) return false;
    if (a.body != b.body) return true;
    if (a.rigid || b.rigid) return false;
    if (same_model) return a.params.self_collision;
    return a.params.self_collision && b.params.self_collision;
}

std::vector<std::pair<std::size_t, std::size_t>> broad_phase(const std::vector<CollisionModel>& models) {
    std::vector<Aabb> boxes(models.size());
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < models.size(); ++i) {
        if (models[i].triangles.empty()) continue;
        boxes[i] = models[i].box.inflated(models[i].params.proximity);
        order.push_back(i);
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return boxes[a].lo.x() < boxes[b].lo.x() || (boxes[a].lo.x() == boxes[b].lo.x() && a < b);
    });

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<std::size_t> active;
    for (const std::size_t i : order) {
        std::erase_if(active, [&](std::size_t j) { return boxes[j].hi.x() < boxes[i].lo.x(); });
        for (const std::size_t j : active)
            if (boxes[i].overlaps(boxes[j]) && may_collide(models[i], models[j], false))
                pairs.emplace_back(std::min(i, j), std::max(i, j));
        if (may_collide(models[i], models[i], true)) pairs.emplace_back(i, i);
        active.push_back(i);
    }
    std::sort(pairs.begin(), pairs.end());
    return pairs;
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c,
                               std::array<double, 3>& w) {
    // Voronoi-region walk over vertices, edges and the face.
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) {
        w = {1.0, 0.0, 0.0};
        return a;
    }
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) {
        w = {0.0, 1.0, 0.0};
        return b;
    }
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        w = {1.0 - v, v, 0.0};
        return a + v * ab;
    }
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) {
        w = {0.0, 0.0, 1.0};
        return c;
    }
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double t = d2 / (d2 - d6);
        w = {1.0 - t, 0.0, t};
        return a + t * ac;
    }
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        w = {0.0, 1.0 - t, t};
        return b + t * (c - b);
    }
    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom, u = vc * denom;
    w = {1.0 - v - u, v, u};
    return a + v * ab + u * ac;
}

void closest_points_segments(const Vec3& p0, const Vec3& p1, const Vec3& q0, const Vec3& q1, double& s, double& t) {
    const Vec3 d1 = p1 - p0, d2 = q1 - q0, r = p0 - q0;
    const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
    constexpr double eps = 1e-300;
    if (a <= eps && e <= eps) {
        s = t = 0.0;
        return;
    }
    if (a <= eps) {
        s = 0.0;
        t = std::clamp(f / e, 0.0, 1.0);
        return;
    }
    const double c = d1.dot(r);
    if (e <= eps) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
        return;
    }
    const double b = d1.dot(d2);
    const double denom = a * e - b * b;
    s = denom > 0.0 ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
    t = (b * s + f) / e;
    if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
    } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
    }
}

namespace {

bool shares_node(const CollisionModel& a, const Tri& t, const CollisionModel& b, Index v) {
    if (a.rigid || b.rigid) return false;
    for (const Index i : t)
        if (a.nodes[i] == b.nodes[v]) return true;
    return false;
}

bool shares_node(const CollisionModel& a, std::pair<Index, Index> ea, const CollisionModel& b,
                 std::pair<Index, Index> eb) {
    if (a.rigid || b.rigid) return false;
    const Index x0 = a.nodes[ea.first], x1 = a.nodes[ea.second];
    const Index y0 = b.nodes[eb.first], y1 = b.nodes[eb.second];
    return x0 == y0 || x0 == y1 || x1 == y0 || x1 == y1;
}

// Vertices of b actually used by its triangles.
std::vector<Index> used_vertices(const CollisionModel& m) {
    std::vector<std::uint8_t> used(m.positions.size(), 0);
    for (const auto& t : m.triangles)
        for (const Index i : t) used[i] = 1;
    std::vector<Index> out;
    for (Index i = 0; i < static_cast<Index>(used.size()); ++i)
        if (used[i]) out.push_back(i);
    return out;
}

void points_vs_triangles(const std::vector<CollisionModel>& models, std::size_t ta, std::size_t pb, bool same_body,
                         double threshold, std::vector<Contact>& out) {
    const auto& mt = models[ta];
    const auto& mp = models[pb];
    const auto points = used_vertices(mp);
    for (Index f = 0; f < static_cast<Index>(mt.triangles.size()); ++f) {
        const auto& tri = mt.triangles[f];
        const Vec3& a = mt.positions[tri[0]];
        const Vec3& b = mt.positions[tri[1]];
        const Vec3& c = mt.positions[tri[2]];
        Aabb box;
        box.extend(a);
        box.extend(b);
        box.extend(c);
        box = box.inflated(threshold);
        const Vec3 n = (b - a).cross(c - a).normalized();
        for (const Index v : points) {
            const Vec3& p = mp.positions[v];
            if ((p.array() < box.lo.array()).any() || (p.array() > box.hi.array()).any()) continue;
            if (same_body && shares_node(mt, tri, mp, v)) continue;
            Contact k;
            const Vec3 q = closest_point_on_triangle(p, a, b, c, k.weights_a);
            const Vec3 d = p - q;
            const double u = d.norm();
            if (!(u < threshold)) continue;
            k.model_a = ta;
            k.model_b = pb;
            k.kind = ContactKind::point_triangle;
            k.feature_a = f;
            k.feature_b = v;
            k.weights_b = {1.0, 0.0};
            k.p_a = q;
            k.p_b = p;
            k.threshold = threshold;
            const bool interior = k.weights_a[0] > 0.0 && k.weights_a[1] > 0.0 && k.weights_a[2] > 0.0;
            if (interior || u == 0.0) {
                k.normal = n;
                k.distance = d.dot(n);
            } else {
                const double side = d.dot(n) >= 0.0 ? 1.0 : -1.0;
                k.normal = side * d / u;
                k.distance = side * u;
            }
            out.push_back(k);
        }
    }
}

void edges_vs_edges(const std::vector<CollisionModel>& models, std::size_t ea, std::size_t eb, bool same_model,
                    bool same_body, double threshold, std::vector<Contact>& out) {
    const auto& ma = models[ea];
    const auto& mb = models[eb];
    for (Index i = 0; i < static_cast<Index>(ma.edges.size()); ++i) {
        const auto e0 = ma.edges[i];
        const Vec3& p0 = ma.positions[e0.first];
        const Vec3& p1 = ma.positions[e0.second];
        Aabb box;
        box.extend(p0);
        box.extend(p1);
        box = box.inflated(threshold);
        for (Index j = same_model ? i + 1 : 0; j < static_cast<Index>(mb.edges.size()); ++j) {
            const auto e1 = mb.edges[j];
            const Vec3& q0 = mb.positions[e1.first];
            const Vec3& q1 = mb.positions[e1.second];
            Aabb other;
            other.extend(q0);
            other.extend(q1);
            if (!box.overlaps(other)) continue;
            if (same_body && shares_node(ma, e0, mb, e1)) continue;
            double s = 0.0, t = 0.0;
            closest_points_segments(p0, p1, q0, q1, s, t);
            Contact k;
            k.p_a = p0 + s * (p1 - p0);
            k.p_b = q0 + t * (q1 - q0);
            const Vec3 d = k.p_b - k.p_a;
            const double u = d.norm();
            if (!(u < threshold)) continue;
            k.model_a = ea;
            k.model_b = eb;
            k.kind = ContactKind::edge_edge;
            k.feature_a = i;
            k.feature_b = j;
            k.weights_a = {1.0 - s, s, 0.0};
            k.weights_b = {1.0 - t, t};
            k.threshold = threshold;
            if (u > 0.0) {
                k.normal = d / u;
                k.distance = u;
            } else {
                Vec3 n = (p1 - p0).cross(q1 - q0);
                if (n.norm() == 0.0) n = (p1 - p0).unitOrthogonal();
                k.normal = n.normalized();
                k.distance = 0.0;
            }
            out.push_back(k);
        }
    }
}

}  // namespace

std::vector<Contact> narrow_phase(const std::vector<CollisionModel>& models, std::size_t a, std::size_t b) {
    std::vector<Contact> out;
    const auto& ma = models.at(a);
    const auto& mb = models.at(b);
    const double threshold = ma.params.proximity + mb.params.proximity;
    const bool same_model = a == b;
    const bool same_body = ma.body == mb.body;
    const auto has = [](const CollisionModel& m, std::uint8_t p) { return (m.params.primitives & p) != 0; };
    if (has(ma, kTriangle) && has(mb, kPoint)) points_vs_triangles(models, a, b, same_body, threshold, out);
    if (!same_model && has(mb, kTriangle) && has(ma, kPoint)) points_vs_triangles(models, b, a, same_body, threshold, out);
    if (has(ma, kLine) && has(mb, kLine)) edges_vs_edges(models, a, b, same_model, same_body, threshold, out);
    return out;
}

std::vector<Contact> detect_contacts(const CollisionWorld& world) {
    std::vector<Contact> out;
    for (const auto& [a, b] : broad_phase(world.models())) {
        auto c = narrow_phase(world.models(), a, b);
        out.insert(out.end(), c.begin(), c.end());
    }
    return out;
}

std::vector<PointForce> penalty_response(const CollisionWorld& world, const std::vector<Contact>& contacts,
                                         double contact_stiffness) {
    if (!(contact_stiffness > 0.0)) throw ConfigError("contact stiffness must be > 0");
    std::vector<PointForce> out;
    for (const auto& c : contacts) {
        const auto& ma = world.model(c.model_a);
        const auto& mb = world.model(c.model_b);
        if (ma.params.cutting || mb.params.cutting) continue;
        const Vec3 f = contact_stiffness * (c.threshold - c.distance) * c.normal;

        auto emit = [&](const CollisionModel& m, const Vec3& point, const Vec3& force, const Index* vertices,
                        const double* weights, int count) {
            if (m.rigid) {
                out.push_back({m.body, -1, m.frame, point, force});
                return;
            }
            for (int k = 0; k < count; ++k) {
                const Index v = vertices[k];
                out.push_back({m.body, m.nodes[v], 0, m.positions[v], weights[k] * force});
            }
        };

        if (c.kind == ContactKind::point_triangle) {
            const auto& tri = ma.triangles[c.feature_a];
            emit(ma, c.p_a, -f, tri.data(), c.weights_a.data(), 3);
            const Index v = c.feature_b;
            emit(mb, c.p_b, f, &v, c.weights_b.data(), 1);
        } else {
            const auto ea = ma.edges[c.feature_a];
            const auto eb = mb.edges[c.feature_b];
            const Index va[2] = {ea.first, ea.second};
            const Index vb[2] = {eb.first, eb.second};
            emit(ma, c.p_a, -f, va, c.weights_a.data(), 2);
            emit(mb, c.p_b, f, vb, c.weights_b.data(), 2);
        }
    }
    return out;
}

}  // namespace rtsim
