#pragma once

#include "rtsim/types.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <utility>

namespace rtsim {

// Triangulated surface. Vertices in meters; triangles index into vertices.
struct SurfaceMesh {
    std::vector<Vec3> vertices;
    std::vector<Tri> triangles;
    std::optional<std::vector<Vec3>> normals;

    std::size_t vertex_count() const { return vertices.size(); }
    std::size_t triangle_count() const { return triangles.size(); }
};

// Tetrahedral volume mesh. Every element is positively oriented and
// rest_volumes[e] > 0 once the mesh went through make_tet_mesh().
struct TetMesh {
    std::vector<Vec3> vertices;
    std::vector<Tet> tets;
    std::vector<double> rest_volumes;

    std::size_t vertex_count() const { return vertices.size(); }
    std::size_t tet_count() const { return tets.size(); }
};

double signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

// Throws MeshError on out-of-range or repeated indices.
void validate(const SurfaceMesh& mesh);

// Reorients negative elements (swaps the last two indices), computes rest
// volumes, and rejects zero-volume elements.
TetMesh make_tet_mesh(std::vector<Vec3> vertices, std::vector<Tet> tets);

// Surface meshes use the OFF format; volume meshes use the .tet format
// described in docs/formats.md.
SurfaceMesh read_surface_mesh(std::istream& in);
TetMesh read_tet_mesh(std::istream& in);
void write_surface_mesh(std::ostream& out, const SurfaceMesh& mesh);
void write_tet_mesh(std::ostream& out, const TetMesh& mesh);

SurfaceMesh load_surface_mesh(const std::filesystem::path& path);
TetMesh load_tet_mesh(const std::filesystem::path& path);
void save_surface_mesh(const std::filesystem::path& path, const SurfaceMesh& mesh);
void save_tet_mesh(const std::filesystem::path& path, const TetMesh& mesh);

// The four outward-oriented faces of a positively oriented tet, face k
// being opposite vertex k.
std::array<Tri, 4> tet_faces(const Tet& t);

// Faces owned by exactly one tetrahedron, oriented outward. Shares the
// vertex indexing of the input (interior vertices are kept, unreferenced).
SurfaceMesh boundary_surface(const TetMesh& mesh);

// Volume enclosed by a closed surface (divergence theorem).
double enclosed_volume(const SurfaceMesh& mesh);

// Unique undirected edges, each as (min, max), sorted.
std::vector<std::pair<Index, Index>> unique_edges(const std::vector<Tri>& triangles);
std::vector<std::pair<Index, Index>> unique_edges(const std::vector<Tet>& tets);

// Connected components of elements linked through shared vertices.
// Returns per-element labels (0..count-1, ordered by lowest element index).
std::pair<std::vector<int>, int> tet_components(const std::vector<Tet>& tets, std::size_t vertex_count);
std::pair<std::vector<int>, int> triangle_components(const std::vector<Tri>& tris, std::size_t vertex_count);

}  // namespace rtsim
