#include "rtsim/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

namespace rtsim {

namespace {

// Line reader that skips blank lines and '#' comments and tracks line numbers.
class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}

    bool next(std::istringstream& fields) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            fields.clear();
            fields.str(line);
            return true;
        }
        return false;
    }

    std::istringstream expect(const char* what) {
        std::istringstream fields;
        if (!next(fields)) throw ParseError(std::string("unexpected end of file, expected ") + what, line_ + 1);
        return fields;
    }

    int line() const { return line_; }

private:
    std::istream& in_;
    int line_ = 0;
};

Vec3 parse_vertex(LineReader& reader) {
    auto fields = reader.expect("vertex");
    Vec3 v;
    if (!(fields >> v.x() >> v.y() >> v.z())) throw ParseError("malformed vertex", reader.line());
    return v;
}

template <std::size_t N>
std::array<Index, N> parse_indices(std::istringstream& fields, LineReader& reader) {
    std::array<Index, N> out{};
    for (auto& i : out) {
        long long value = 0;
        if (!(fields >> value)) throw ParseError("malformed element", reader.line());
        if (value < 0) throw ParseError("negative vertex index", reader.line());
        i = static_cast<Index>(value);
    }
    return out;
}

std::size_t parse_count(LineReader& reader, const char* what) {
    auto fields = reader.expect(what);
    long long n = -1;
    if (!(fields >> n) || n < 0) throw ParseError(std::string("malformed ") + what, reader.line());
    return static_cast<std::size_t>(n);
}

void put_double(std::ostream& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, res.ptr - buf);
}

void put_vertex(std::ostream& out, const Vec3& v) {
    put_double(out, v.x());
    out << ' ';
    put_double(out, v.y());
    out << ' ';
    put_double(out, v.z());
    out << '\n';
}

using FaceKey = std::array<Index, 3>;

FaceKey sorted_key(const Tri& f) {
    FaceKey k = f;
    std::sort(k.begin(), k.end());
    return k;
}

struct DisjointSets {
    std::vector<int> parent;
    explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

template <class Element>
std::pair<std::vector<int>, int> element_components(const std::vector<Element>& elements, std::size_t vertex_count) {
    DisjointSets sets(elements.size());
    std::vector<int> owner(vertex_count, -1);
    for (std::size_t e = 0; e < elements.size(); ++e) {
        for (const Index v : elements[e]) {
            if (owner[v] < 0)
                owner[v] = static_cast<int>(e);
            else
                sets.unite(owner[v], static_cast<int>(e));
        }
    }
    std::vector<int> labels(elements.size());
    std::vector<int> relabel(elements.size(), -1);
    int count = 0;
    for (std::size_t e = 0; e < elements.size(); ++e) {
        const int root = sets.find(static_cast<int>(e));
        if (relabel[root] < 0) relabel[root] = count++;
        labels[e] = relabel[root];
    }
    return {labels, count};
}

}  // namespace

double signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

void validate(const SurfaceMesh& mesh) {
    const auto n = static_cast<Index>(mesh.vertices.size());
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        for (const Index i : tri) {
            if (i < 0 || i >= n)
                throw MeshError("triangle " + std::to_string(t) + " index " + std::to_string(i) +
                                " out of range (vertex count " + std::to_string(n) + ")");
        }
        if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
            throw MeshError("degenerate triangle " + std::to_string(t) + " (" + std::to_string(tri[0]) + ", " +
                            std::to_string(tri[1]) + ", " + std::to_string(tri[2]) + ")");
    }
    if (mesh.normals && mesh.normals->size() != mesh.vertices.size())
        throw MeshError("normal count does not match vertex count");
}

TetMesh make_tet_mesh(std::vector<Vec3> vertices, std::vector<Tet> tets) {
    TetMesh mesh;
    mesh.vertices = std::move(vertices);
    mesh.tets = std::move(tets);
    mesh.rest_volumes.resize(mesh.tets.size());
    const auto n = static_cast<Index>(mesh.vertices.size());
    for (std::size_t e = 0; e < mesh.tets.size(); ++e) {
        auto& t = mesh.tets[e];
        for (const Index i : t) {
            if (i < 0 || i >= n)
                throw MeshError("tet " + std::to_string(e) + " index " + std::to_string(i) +
                                " out of range (vertex count " + std::to_string(n) + ")");
        }
        const auto& p = mesh.vertices;
        double vol = signed_volume(p[t[0]], p[t[1]], p[t[2]], p[t[3]]);
        double longest = 0.0;
        for (int a = 0; a < 4; ++a)
            for (int b = a + 1; b < 4; ++b) longest = std::max(longest, (p[t[a]] - p[t[b]]).norm());
        if (!(std::abs(vol) > 1e-12 * longest * longest * longest))
            throw MeshError("zero-volume tet " + std::to_string(e));
        if (vol < 0.0) {
            std::swap(t[2], t[3]);
            vol = -vol;
        }
        mesh.rest_volumes[e] = vol;
    }
    return mesh;
}

SurfaceMesh read_surface_mesh(std::istream& in) {
    LineReader reader(in);
    {
        auto header = reader.expect("OFF header");
        std::string tag;
        header >> tag;
        if (tag != "OFF") throw ParseError("expected OFF header", reader.line());
    }
    auto counts = reader.expect("counts");
    long long nv = -1, nf = -1;
    if (!(counts >> nv >> nf) || nv < 0 || nf < 0) throw ParseError("malformed counts", reader.line());

    SurfaceMesh mesh;
    mesh.vertices.reserve(static_cast<std::size_t>(nv));
    for (long long i = 0; i < nv; ++i) mesh.vertices.push_back(parse_vertex(reader));
    mesh.triangles.reserve(static_cast<std::size_t>(nf));
    for (long long i = 0; i < nf; ++i) {
        auto fields = reader.expect("face");
        int arity = 0;
        if (!(fields >> arity)) throw ParseError("malformed face", reader.line());
        if (arity != 3) throw ParseError("only triangular faces are supported", reader.line());
        mesh.triangles.push_back(parse_indices<3>(fields, reader));
    }
    validate(mesh);
    return mesh;
}

TetMesh read_tet_mesh(std::istream& in) {
    LineReader reader(in);
    const auto nv = parse_count(reader, "vertex count");
    std::vector<Vec3> vertices;
    vertices.reserve(nv);
    for (std::size_t i = 0; i < nv; ++i) vertices.push_back(parse_vertex(reader));
    const auto nt = parse_count(reader, "tet count");
    std::vector<Tet> tets;
    tets.reserve(nt);
    for (std::size_t i = 0; i < nt; ++i) {
        auto fields = reader.expect("tet");
        tets.push_back(parse_indices<4>(fields, reader));
    }
    return make_tet_mesh(std::move(vertices), std::move(tets));
}

void write_surface_mesh(std::ostream& out, const SurfaceMesh& mesh) {
    out << "OFF\n" << mesh.vertices.size() << ' ' << mesh.triangles.size() << " 0\n";
    for (const auto& v : mesh.vertices) put_vertex(out, v);
    for (const auto& t : mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

void write_tet_mesh(std::ostream& out, const TetMesh& mesh) {
    out << mesh.vertices.size() << '\n';
    for (const auto& v : mesh.vertices) put_vertex(out, v);
    out << mesh.tets.size() << '\n';
    for (const auto& t : mesh.tets) out << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
}

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw AssetError("cannot open mesh file '" + path.string() + "'");
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw MeshError("cannot write mesh file '" + path.string() + "'");
    return out;
}

}  // namespace

SurfaceMesh load_surface_mesh(const std::filesystem::path& path) {
    auto in = open_input(path);
    try {
        return read_surface_mesh(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.reason(), e.line());
    }
}

TetMesh load_tet_mesh(const std::filesystem::path& path) {
    auto in = open_input(path);
    try {
        return read_tet_mesh(in);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.reason(), e.line());
    }
}

void save_surface_mesh(const std::filesystem::path& path, const SurfaceMesh& mesh) {
    auto out = open_output(path);
    write_surface_mesh(out, mesh);
}

void save_tet_mesh(const std::filesystem::path& path, const TetMesh& mesh) {
    auto out = open_output(path);
    write_tet_mesh(out, mesh);
}

std::array<Tri, 4> tet_faces(const Tet& t) {
    return {Tri{t[1], t[2], t[3]}, Tri{t[0], t[3], t[2]}, Tri{t[0], t[1], t[3]}, Tri{t[0], t[2], t[1]}};
}

SurfaceMesh boundary_surface(const TetMesh& mesh) {
    struct Entry {
        FaceKey key;
        std::uint32_t owner;  // 4 * tet + face
    };
    std::vector<Entry> entries;
    entries.reserve(4 * mesh.tets.size());
    for (std::size_t e = 0; e < mesh.tets.size(); ++e) {
        const auto faces = tet_faces(mesh.tets[e]);
        for (std::uint32_t f = 0; f < 4; ++f) entries.push_back({sorted_key(faces[f]), static_cast<std::uint32_t>(4 * e + f)});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return a.key != b.key ? a.key < b.key : a.owner < b.owner;
    });

    std::vector<std::uint32_t> owners;
    for (std::size_t i = 0; i < entries.size();) {
        std::size_t j = i + 1;
        while (j < entries.size() && entries[j].key == entries[i].key) ++j;
        if (j - i == 1) owners.push_back(entries[i].owner);
        i = j;
    }
    std::sort(owners.begin(), owners.end());

    SurfaceMesh out;
    out.vertices = mesh.vertices;
    out.triangles.reserve(owners.size());
    for (const auto o : owners) out.triangles.push_back(tet_faces(mesh.tets[o / 4])[o % 4]);
    return out;
}

double enclosed_volume(const SurfaceMesh& mesh) {
    double vol = 0.0;
    for (const auto& t : mesh.triangles)
        vol += mesh.vertices[t[0]].dot(mesh.vertices[t[1]].cross(mesh.vertices[t[2]]));
    return vol / 6.0;
}

std::vector<std::pair<Index, Index>> unique_edges(const std::vector<Tri>& triangles) {
    std::vector<std::pair<Index, Index>> edges;
    edges.reserve(3 * triangles.size());
    for (const auto& t : triangles)
        for (int k = 0; k < 3; ++k) edges.emplace_back(std::minmax(t[k], t[(k + 1) % 3]));
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

std::vector<std::pair<Index, Index>> unique_edges(const std::vector<Tet>& tets) {
    std::vector<std::pair<Index, Index>> edges;
    edges.reserve(6 * tets.size());
    for (const auto& t : tets)
        for (int a = 0; a < 4; ++a)
            for (int b = a + 1; b < 4; ++b) edges.emplace_back(std::minmax(t[a], t[b]));
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

std::pair<std::vector<int>, int> tet_components(const std::vector<Tet>& tets, std::size_t vertex_count) {
    return element_components(tets, vertex_count);
}

std::pair<std::vector<int>, int> triangle_components(const std::vector<Tri>& tris, std::size_t vertex_count) {
    return element_components(tris, vertex_count);
}

}  // namespace rtsim
