#include "rtsim/visual.hpp"

#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace rtsim {

Index TransformTree::add(const RigidTransform& local, Index parent) {
    const auto id = static_cast<Index>(nodes_.size());
    nodes_.push_back({});
    set_local(id, local);
    if (parent >= 0) set_parent(id, parent);
    return id;
}

void TransformTree::set_parent(Index node, Index parent) {
    auto& n = nodes_.at(node);
    if (parent >= 0) {
        nodes_.at(parent);
        for (Index p = parent; p >= 0; p = nodes_[p].parent)
            if (p == node)
                throw ConfigError("transform " + std::to_string(node) + " cannot be attached to " +
                                  std::to_string(parent) + ": the graph would contain a cycle");
        n.mapped.reset();
    }
    n.parent = parent;
}

void TransformTree::set_local(Index node, const RigidTransform& local) {
    auto& n = nodes_.at(node);
    n.local = local;
    n.local.orientation.normalize();
}

void TransformTree::map_to_frame(Index node, const RigidTransform& frame_pose) {
    auto& n = nodes_.at(node);
    if (n.parent >= 0) throw ConfigError("transform " + std::to_string(node) + " has a parent and cannot be mapped");
    n.mapped = frame_pose;
    n.mapped->orientation.normalize();
}

void TransformTree::unmap(Index node) { nodes_.at(node).mapped.reset(); }

RigidTransform TransformTree::world(Index node) const {
    const auto& n = nodes_.at(node);
    if (n.parent >= 0) return world(n.parent) * n.local;
    if (n.mapped) return *n.mapped * n.local;
    return n.local;
}

// ---------------------------------------------------------------------------

double loop_beta(int valence) {
    const double n = valence;
    const double c = 3.0 / 8.0 + 0.25 * std::cos(2.0 * std::numbers::pi / n);
    return (5.0 / 8.0 - c * c) / n;
}

namespace {

using Sparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

struct EdgeUse {
    Index a, b;      // a < b
    Index opposite;  // third vertex of the triangle
};

// One Loop step. Returns the stencil over the previous level's vertices
// and replaces `tris` with the refined connectivity.
Sparse loop_step(std::vector<Tri>& tris, std::size_t nv) {
    std::vector<EdgeUse> uses;
    uses.reserve(3 * tris.size());
    for (const auto& t : tris)
        for (int k = 0; k < 3; ++k) {
            const Index a = t[k], b = t[(k + 1) % 3];
            uses.push_back({std::min(a, b), std::max(a, b), t[(k + 2) % 3]});
        }
    std::sort(uses.begin(), uses.end(), [](const EdgeUse& x, const EdgeUse& y) {
        return std::tie(x.a, x.b, x.opposite) < std::tie(y.a, y.b, y.opposite);
    });

    struct Edge {
        Index a, b;
        Index opp[2];
        int count;
    };
    std::vector<Edge> edges;
    std::vector<std::pair<Index, Index>> bad;
    for (std::size_t i = 0; i < uses.size();) {
        std::size_t j = i;
        while (j < uses.size() && uses[j].a == uses[i].a && uses[j].b == uses[i].b) ++j;
        const auto count = static_cast<int>(j - i);
        if (count > 2) bad.emplace_back(uses[i].a, uses[i].b);
        edges.push_back({uses[i].a, uses[i].b, {uses[i].opposite, count > 1 ? uses[i + 1].opposite : -1}, count});
        i = j;
    }
    if (!bad.empty()) {
        std::ostringstream msg;
        msg << "subdivision needs a manifold surface; edges with more than two triangles:";
        for (const auto& [a, b] : bad) msg << " (" << a << "," << b << ")";
        throw MeshError(msg.str());
    }

    std::vector<std::vector<Index>> neighbors(nv), boundary_neighbors(nv);
    for (const auto& e : edges) {
        neighbors[e.a].push_back(e.b);
        neighbors[e.b].push_back(e.a);
        if (e.count == 1) {
            boundary_neighbors[e.a].push_back(e.b);
            boundary_neighbors[e.b].push_back(e.a);
        }
    }

    std::vector<Triplet> entries;
    entries.reserve(nv * 7 + edges.size() * 4);
    for (std::size_t v = 0; v < nv; ++v) {
        const auto row = static_cast<Index>(v);
        const auto& bn = boundary_neighbors[v];
        const auto n = static_cast<int>(neighbors[v].size());
        if (bn.size() == 2) {
            entries.emplace_back(row, row, 0.75);
            entries.emplace_back(row, bn[0], 0.125);
            entries.emplace_back(row, bn[1], 0.125);
        } else if (!bn.empty() || n == 0) {
            entries.emplace_back(row, row, 1.0);  // corner or isolated vertex stays put
        } else {
            const double beta = loop_beta(n);
            entries.emplace_back(row, row, 1.0 - n * beta);
            for (const Index u : neighbors[v]) entries.emplace_back(row, u, beta);
        }
    }
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const auto row = static_cast<Index>(nv + i);
        const auto& e = edges[i];
        if (e.count == 1) {
            entries.emplace_back(row, e.a, 0.5);
            entries.emplace_back(row, e.b, 0.5);
        } else {
            entries.emplace_back(row, e.a, 0.375);
            entries.emplace_back(row, e.b, 0.375);
            entries.emplace_back(row, e.opp[0], 0.125);
            entries.emplace_back(row, e.opp[1], 0.125);
        }
    }
    Sparse s(static_cast<Eigen::Index>(nv + edges.size()), static_cast<Eigen::Index>(nv));
    s.setFromTriplets(entries.begin(), entries.end());

    auto edge_vertex = [&](Index a, Index b) {
        const Index lo = std::min(a, b), hi = std::max(a, b);
        const auto it = std::lower_bound(edges.begin(), edges.end(), std::make_pair(lo, hi),
                                         [](const Edge& e, const std::pair<Index, Index>& k) {
                                             return std::make_pair(e.a, e.b) < k;
                                         });
        return static_cast<Index>(nv + (it - edges.begin()));
    };
    std::vector<Tri> refined;
    refined.reserve(4 * tris.size());
    for (const auto& t : tris) {
        const Index ab = edge_vertex(t[0], t[1]), bc = edge_vertex(t[1], t[2]), ca = edge_vertex(t[2], t[0]);
        refined.push_back({t[0], ab, ca});
        refined.push_back({ab, t[1], bc});
        refined.push_back({ca, bc, t[2]});
        refined.push_back({ab, bc, ca});
    }
    tris = std::move(refined);
    return s;
}

}  // namespace

SubdivisionCache build_subdivision(const SurfaceMesh& mesh, int level) {
    if (level < 0 || level > kMaxSubdivisionLevel)
        throw ConfigError("subdivision level must be in 0.." + std::to_string(kMaxSubdivisionLevel) + ", got " +
                          std::to_string(level));
    validate(mesh);
    const auto nv = mesh.vertices.size();
    SubdivisionCache cache;
    cache.level = level;
    cache.base_vertex_count = nv;
    cache.triangles = mesh.triangles;

    Sparse w(static_cast<Eigen::Index>(nv), static_cast<Eigen::Index>(nv));
    w.setIdentity();
    for (int l = 0; l < level; ++l) {
        const Sparse s = loop_step(cache.triangles, static_cast<std::size_t>(w.rows()));
        w = Sparse(s * w);
    }
    w.makeCompressed();
    cache.row_start.assign(w.outerIndexPtr(), w.outerIndexPtr() + w.rows() + 1);
    cache.columns.assign(w.innerIndexPtr(), w.innerIndexPtr() + w.nonZeros());
    cache.weights.assign(w.valuePtr(), w.valuePtr() + w.nonZeros());
    return cache;
}

std::size_t refresh_positions(const SubdivisionCache& cache, const std::vector<Vec3>& base, std::vector<Vec3>& out) {
    if (base.size() != cache.base_vertex_count)
        throw MeshError("refresh_positions: expected " + std::to_string(cache.base_vertex_count) +
                        " base positions, got " + std::to_string(base.size()));
    const std::size_t rows = cache.refined_vertex_count();
    out.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        Vec3 p = Vec3::Zero();
        for (std::size_t k = cache.row_start[r]; k < cache.row_start[r + 1]; ++k)
            p += cache.weights[k] * base[cache.columns[k]];
        out[r] = p;
    }
    return cache.weights.size();
}

std::vector<Vec3> vertex_normals(const std::vector<Vec3>& positions, const std::vector<Tri>& triangles) {
    std::vector<Vec3> n(positions.size(), Vec3::Zero());
    for (const auto& t : triangles) {
        const Vec3 c = (positions[t[1]] - positions[t[0]]).cross(positions[t[2]] - positions[t[0]]);
        for (const Index v : t) n[v] += c;
    }
    for (auto& v : n) {
        const double len = v.norm();
        if (len > 0.0) v /= len;
    }
    return n;
}

// ---------------------------------------------------------------------------

VisualBody::VisualBody(SurfaceMesh base, int subdivision_level)
    : base_(std::move(base)), cache_(build_subdivision(base_, subdivision_level)) {
    update(base_.vertices);
}

void VisualBody::update(const std::vector<Vec3>& base_positions) {
    base_positions_ = base_positions;
    last_ops_ = refresh_positions(cache_, base_positions_, positions_);
    normals_ = vertex_normals(positions_, cache_.triangles);
}

SurfaceMesh VisualBody::refined_mesh() const {
    SurfaceMesh m;
    m.vertices = positions_;
    m.triangles = cache_.triangles;
    m.normals = normals_;
    return m;
}

void VisualBody::rebuild(SurfaceMesh base) {
    const int level = cache_.level;
    base_ = std::move(base);
    cache_ = build_subdivision(base_, level);
    update(base_.vertices);
}

}  // namespace rtsim
