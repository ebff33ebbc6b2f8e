#include "rtsim/topology.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <functional>
#include <tuple>
#include <map>
#include <numeric>
#include <ostream>

namespace rtsim {

double element_stress(const CorotationalFem& fem, std::size_t e, const SoftBodyState& state) {
    const Mat3 sigma = fem.corotated_stress(e, state);
    Eigen::SelfAdjointEigenSolver<Mat3> eig(sigma, Eigen::EigenvaluesOnly);
    return std::max(0.0, eig.eigenvalues().maxCoeff());
}

DynamicTopology::DynamicTopology(const TetMesh& rest, double tearing_threshold)
    : mesh_(rest), original_tets_(rest.tets), threshold_(tearing_threshold) {
    if (!(tearing_threshold > 0.0)) throw ConfigError("tearing_threshold must be > 0");
    const auto nv = static_cast<Index>(rest.vertices.size());
    origin_.resize(nv);
    std::iota(origin_.begin(), origin_.end(), 0);
    tets_of_origin_.resize(nv);
    for (std::size_t e = 0; e < rest.tets.size(); ++e)
        for (const Index v : rest.tets[e]) tets_of_origin_[v].push_back(static_cast<Index>(e));

    // Interior faces: sorted vertex key -> owners.
    struct Entry {
        std::array<Index, 3> key;
        Index tet;
        std::array<Index, 3> slots;
    };
    std::vector<Entry> entries;
    entries.reserve(4 * rest.tets.size());
    for (std::size_t e = 0; e < rest.tets.size(); ++e)
        for (int skip = 0; skip < 4; ++skip) {
            Entry en{};
            en.tet = static_cast<Index>(e);
            int n = 0;
            for (int k = 0; k < 4; ++k)
                if (k != skip) en.slots[n++] = k;
            std::array<std::pair<Index, Index>, 3> kv;
            for (int k = 0; k < 3; ++k) kv[k] = {rest.tets[e][en.slots[k]], en.slots[k]};
            std::sort(kv.begin(), kv.end());
            for (int k = 0; k < 3; ++k) {
                en.key[k] = kv[k].first;
                en.slots[k] = kv[k].second;
            }
            entries.push_back(en);
        }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return a.key < b.key || (a.key == b.key && a.tet < b.tet);
    });
    for (std::size_t i = 0; i + 1 < entries.size(); ++i) {
        if (entries[i].key != entries[i + 1].key) continue;
        if (i + 2 < entries.size() && entries[i + 2].key == entries[i].key)
            throw MeshError("dynamic topology: face shared by more than two elements");
        faces_.push_back({entries[i].tet, entries[i + 1].tet, entries[i].slots, entries[i + 1].slots});
        ++i;
    }
    std::sort(faces_.begin(), faces_.end(),
              [](const Face& a, const Face& b) { return std::tie(a.tet_a, a.tet_b) < std::tie(b.tet_a, b.tet_b); });
    separated_.assign(faces_.size(), 0);
    faces_of_tet_.resize(rest.tets.size());
    for (std::size_t f = 0; f < faces_.size(); ++f) {
        faces_of_tet_[faces_[f].tet_a].push_back(static_cast<Index>(f));
        faces_of_tet_[faces_[f].tet_b].push_back(static_cast<Index>(f));
    }
}

int DynamicTopology::component_count() const { return tet_components(mesh_.tets, mesh_.vertices.size()).second; }

void DynamicTopology::split_vertex_groups(const std::vector<Index>& touched, SoftBodyState& state,
                                          SeparationRecord& record) {
    for (const Index o : touched) {
        const auto& incident = tets_of_origin_[o];
        // Union-find over the elements around o, through intact faces that
        // contain o.
        std::map<Index, Index> parent;
        for (const Index e : incident) parent[e] = e;
        std::function<Index(Index)> find = [&](Index e) {
            while (parent[e] != e) e = parent[e] = parent[parent[e]];
            return e;
        };
        for (const Index e : incident)
            for (const Index f : faces_of_tet_[e]) {
                if (separated_[f]) continue;
                const auto& face = faces_[f];
                bool has = false;
                for (const Index s : face.corners_a) has |= original_tets_[face.tet_a][s] == o;
                if (!has) continue;
                const Index ra = find(face.tet_a), rb = find(face.tet_b);
                if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
            }
        // Groups keyed by their lowest element (the root is always the minimum).
        std::map<Index, std::vector<Index>> groups;
        for (const Index e : incident) groups[find(e)].push_back(e);
        if (groups.size() < 2) continue;

        auto slot_of = [&](Index e) {
            for (int k = 0; k < 4; ++k)
                if (original_tets_[e][k] == o) return k;
            return -1;
        };
        // Group the groups by the node they currently use.
        std::map<Index, std::vector<const std::vector<Index>*>> by_node;
        for (const auto& [root, members] : groups) {
            const Index node = mesh_.tets[members.front()][slot_of(members.front())];
            for (const Index e : members)
                if (mesh_.tets[e][slot_of(e)] != node)
                    throw Error("dynamic topology: inconsistent vertex groups around vertex " + std::to_string(o));
            by_node[node].push_back(&members);
        }
        for (const auto& [node, list] : by_node) {
            if (list.size() < 2) continue;
            // Mass shared by incident rest volume.
            std::vector<double> volume(list.size(), 0.0);
            double total_volume = 0.0;
            for (std::size_t g = 0; g < list.size(); ++g) {
                for (const Index e : *list[g]) volume[g] += mesh_.rest_volumes[e];
                total_volume += volume[g];
            }
            const double mass = state.masses[node];
            state.masses[node] = mass * (volume[0] / total_volume);
            for (std::size_t g = 1; g < list.size(); ++g) {
                const Index copy = state.node_count();
                state.append_node(state.position(node), state.velocity(node), mass * (volume[g] / total_volume));
                state.pinned[copy] = state.pinned[node];
                state.kinematic[copy] = state.kinematic[node];
                mesh_.vertices.push_back(mesh_.vertices[node]);
                origin_.push_back(o);
                for (const Index e : *list[g]) mesh_.tets[e][slot_of(e)] = copy;
                record.duplicated.emplace_back(node, copy);
            }
        }
    }
}

SeparationRecord DynamicTopology::rupture_step(std::uint64_t step, SoftBodyState& state, CorotationalFem& fem,
                                               double stress_scale) {
    SeparationRecord record;
    record.step = step;
    if (state.node_count() != static_cast<Index>(mesh_.vertices.size()))
        throw Error("dynamic topology: state and mesh node counts differ");
    std::vector<double> stress(mesh_.tets.size());
    for (std::size_t e = 0; e < stress.size(); ++e) stress[e] = stress_scale * element_stress(fem, e, state);

    std::vector<Index> touched;
    for (std::size_t f = 0; f < faces_.size(); ++f) {
        if (separated_[f]) continue;
        const auto& face = faces_[f];
        if (stress[face.tet_a] > threshold_ && stress[face.tet_b] > threshold_) {
            separated_[f] = 1;
            record.faces.push_back(static_cast<Index>(f));
            record.elements.emplace_back(face.tet_a, face.tet_b);
            for (const Index s : face.corners_a) touched.push_back(original_tets_[face.tet_a][s]);
        }
    }
    if (record.faces.empty()) return record;
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());

    split_vertex_groups(touched, state, record);
    if (!record.duplicated.empty()) {
        ++version_;
        fem.set_topology(mesh_.tets);
        const auto nv = static_cast<Index>(mesh_.vertices.size());
        for (std::size_t e = 0; e < mesh_.tets.size(); ++e) {
            const auto& t = mesh_.tets[e];
            for (const Index i : t)
                if (i < 0 || i >= nv) throw Error("dynamic topology: dangling index after separation");
            const double v = signed_volume(mesh_.vertices[t[0]], mesh_.vertices[t[1]], mesh_.vertices[t[2]],
                                           mesh_.vertices[t[3]]);
            if (!(v > 0.0)) throw Error("dynamic topology: non-positive rest volume after separation");
        }
    }
    log_.push_back(record);
    return record;
}

void DynamicTopology::write_log(std::ostream& out) const {
    for (const auto& r : log_) {
        out << r.step << ';';
        for (std::size_t i = 0; i < r.faces.size(); ++i)
            out << (i ? " " : "") << r.faces[i] << ':' << r.elements[i].first << '-' << r.elements[i].second;
        out << ';';
        for (std::size_t i = 0; i < r.duplicated.size(); ++i)
            out << (i ? " " : "") << r.duplicated[i].first << '>' << r.duplicated[i].second;
        out << '\n';
    }
}

// ---------------------------------------------------------------------------

DynamicVisual bind_dynamic_visual(const SurfaceMesh& surface, const DynamicTopology& topology) {
    validate(surface);
    DynamicVisual out;
    out.mesh = surface;
    out.mesh.normals.reset();
    const auto& m = topology.mesh();
    out.map = BarycentricMap::bind(surface.vertices, m.vertices, m.tets, topology.version());
    std::vector<Vec3> centroids;
    for (const auto& t : surface.triangles)
        centroids.push_back((surface.vertices[t[0]] + surface.vertices[t[1]] + surface.vertices[t[2]]) / 3.0);
    const auto hosts = BarycentricMap::bind(centroids, m.vertices, m.tets);
    for (const auto& r : hosts.records()) out.host_tet.push_back(r.tet);
    return out;
}

std::size_t propagate_topology(const DynamicTopology& topology, DynamicVisual& visual) {
    if (visual.scheme != MappingScheme::dynamic_barycentric)
        throw ConfigError(std::string("visual mapped with the '") + to_string(visual.scheme) +
                          "' scheme cannot follow topology changes; map it with 'dynamic_barycentric'");
    if (visual.map.topology_version() == topology.version()) return 0;

    const auto& m = topology.mesh();
    const auto [label, count] = tet_components(m.tets, m.vertices.size());
    std::vector<std::vector<Index>> tets_of(count);
    for (std::size_t e = 0; e < m.tets.size(); ++e) tets_of[label[e]].push_back(static_cast<Index>(e));

    const auto nv = visual.mesh.vertices.size();
    std::vector<std::vector<std::size_t>> tris_of(nv);
    for (std::size_t t = 0; t < visual.mesh.triangles.size(); ++t)
        for (const Index v : visual.mesh.triangles[t]) tris_of[v].push_back(t);

    auto rebind = [&](const Vec3& p, int component) {
        return BarycentricMap::bind({p}, m.vertices, m.tets, 0, &tets_of[component]).record(0);
    };

    std::size_t added = 0;
    for (std::size_t v = 0; v < nv; ++v) {
        std::vector<int> comps;
        for (const auto t : tris_of[v]) comps.push_back(label[visual.host_tet[t]]);
        std::sort(comps.begin(), comps.end());
        comps.erase(std::unique(comps.begin(), comps.end()), comps.end());
        if (comps.empty()) continue;
        const Vec3 rest = visual.mesh.vertices[v];
        const int bound = label[visual.map.record(v).tet];
        const int keeper = std::find(comps.begin(), comps.end(), bound) != comps.end() ? bound : comps.front();
        if (keeper != bound) visual.map.set_record(v, rebind(rest, keeper));
        for (const int c : comps) {
            if (c == keeper) continue;
            const auto copy = static_cast<Index>(visual.mesh.vertices.size());
            visual.mesh.vertices.push_back(rest);
            visual.map.append(rebind(rest, c));
            for (const auto t : tris_of[v])
                if (label[visual.host_tet[t]] == c)
                    for (auto& idx : visual.mesh.triangles[t])
                        if (idx == static_cast<Index>(v)) idx = copy;
            ++added;
        }
    }
    visual.map.set_topology_version(topology.version());
    visual.mesh.normals.reset();
    return added;
}

}  // namespace rtsim
