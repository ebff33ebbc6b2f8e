#!/usr/bin/env python3
"""Generate the procedural mesh assets shipped in assets/.

Volume meshes are voxel grids split into six tetrahedra per cube around the
main diagonal. The exact element count is hit by keeping the K cubes whose
centres lie deepest inside an implicit shape, plus a partial cube for the
remainder; candidates whose boundary is not a closed 2-manifold are
rejected. Output is deterministic.

    python3 tools/generate_assets.py [output_dir]
"""

import itertools
import math
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

KUHN_PERMS = [(0, 1, 2), (0, 2, 1), (2, 0, 1), (2, 1, 0), (1, 2, 0), (1, 0, 2)]


def ellipsoid(p, c, r):
    q = (p - np.asarray(c)) / np.asarray(r)
    return (np.linalg.norm(q, axis=-1) - 1.0) * min(r)


def bunny_volume(p):
    body = ellipsoid(p, (0.0, 0.045, 0.0), (0.075, 0.05, 0.05))
    head = ellipsoid(p, (0.065, 0.09, 0.0), (0.036, 0.034, 0.033))
    tail = ellipsoid(p, (-0.075, 0.06, 0.0), (0.016, 0.016, 0.016))
    return np.minimum(np.minimum(body, head), tail)


def bunny_visual(p):
    ear_l = ellipsoid(p, (0.058, 0.135, 0.016), (0.012, 0.04, 0.009))
    ear_r = ellipsoid(p, (0.058, 0.135, -0.016), (0.012, 0.04, 0.009))
    return np.minimum(bunny_volume(p), np.minimum(ear_l, ear_r))


def uterus_volume(p):
    outer = ellipsoid(p, (0.0, 0.0, 0.0), (0.036, 0.046, 0.026))
    cavity = ellipsoid(p, (0.0, 0.004, 0.0), (0.02, 0.03, 0.01))
    canal = np.maximum(np.hypot(p[..., 0], p[..., 2]) - 0.005, p[..., 1] + 0.01)
    return np.maximum(outer, -np.minimum(cavity, canal))


def cube_tets(i, j, k, vid):
    tets = []
    for n, perm in enumerate(KUHN_PERMS):
        c = [i, j, k]
        t = [vid(*c)]
        for axis in perm:
            c[axis] += 1
            t.append(vid(*c))
        if n % 2:  # odd permutations are negatively oriented
            t[2], t[3] = t[3], t[2]
        tets.append(t)
    return tets


def is_closed_manifold(tets):
    faces = defaultdict(list)
    for t in tets:
        a, b, c, d = t
        for f in ((b, c, d), (a, d, c), (a, b, d), (a, c, b)):
            faces[tuple(sorted(f))].append(f)
    boundary = [v[0] for v in faces.values() if len(v) == 1]
    edge_count = defaultdict(int)
    for f in boundary:
        for e in range(3):
            edge_count[tuple(sorted((f[e], f[(e + 1) % 3])))] += 1
    if any(n != 2 for n in edge_count.values()):
        return False
    # vertex links must be single cycles
    link = defaultdict(list)
    for f in boundary:
        for e in range(3):
            link[f[e]].append((f[(e + 1) % 3], f[(e + 2) % 3]))
    for v, edges in link.items():
        nxt = {a: b for a, b in edges}
        if len(nxt) != len(edges):
            return False
        start = edges[0][0]
        cur, steps = start, 0
        while True:
            cur = nxt.get(cur)
            steps += 1
            if cur is None or steps > len(edges):
                return False
            if cur == start:
                break
        if steps != len(edges):
            return False
    # single connected component
    parent = list(range(len(tets)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    owner = {}
    for e, t in enumerate(tets):
        for v in t:
            if v in owner:
                parent[find(e)] = find(owner[v])
            else:
                owner[v] = e
    return len({find(e) for e in range(len(tets))}) == 1


FACE_STEPS = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))
BLOCK = [(a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)]


def block_ok(occupied, vertex):
    # 2x2x2 cubes around a grid vertex: foreground and background must each
    # be face-connected, and no 2x2 square around an edge may be diagonal.
    cells = {d: tuple(np.subtract(vertex, 1) + d) in occupied for d in BLOCK}
    for value in (True, False):
        members = [d for d in BLOCK if cells[d] == value]
        if not members:
            continue
        seen = {members[0]}
        stack = [members[0]]
        while stack:
            d = stack.pop()
            for axis in range(3):
                e = list(d)
                e[axis] ^= 1
                e = tuple(e)
                if cells[e] == value and e not in seen:
                    seen.add(e)
                    stack.append(e)
        if len(seen) != len(members):
            return False
    for axis in range(3):
        for fixed in (0, 1):
            square = [d for d in BLOCK if d[axis] == fixed]
            occ = [d for d in square if cells[d]]
            if len(occ) == 2 and sum(x != y for x, y in zip(*occ)) == 2:
                return False
    return True


def voxel_mesh(shape, lo, hi, target, spacing, offset):
    lo = np.asarray(lo) + offset * spacing
    dims = np.ceil((np.asarray(hi) - lo) / spacing).astype(int) + 1
    nx, ny, nz = dims

    def vid(i, j, k):
        return (k * (ny + 1) + j) * (nx + 1) + i

    def value(c):
        return shape((lo + (np.asarray(c) + 0.5) * spacing)[None, :])[0]

    whole, rest = divmod(target, 6)
    idx = np.stack(np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"), axis=-1).reshape(-1, 3)
    vals = shape(lo + (idx + 0.5) * spacing)
    seed = tuple(idx[np.argmin(vals)])

    # Greedy face-connected growth, deepest candidate first, rejecting any
    # cube that would make the voxel boundary non-manifold.
    occupied = {seed}
    frontier = {}
    rejected = set()

    def push(c):
        for d in FACE_STEPS:
            n = tuple(np.add(c, d))
            if n in occupied or n in frontier or n in rejected:
                continue
            if min(n) < 0 or n[0] >= nx or n[1] >= ny or n[2] >= nz:
                continue
            frontier[n] = value(n)

    push(seed)
    while len(occupied) < whole:
        placed = False
        for c in sorted(frontier, key=lambda c: (frontier[c], c)):
            occupied.add(c)
            corners = [tuple(np.add(c, d)) for d in BLOCK]
            if all(block_ok(occupied, v) for v in corners):
                del frontier[c]
                push(c)
                placed = True
                break
            occupied.discard(c)
        if not placed:
            return None
        # rejected cubes may become valid later; retry them
        for c in list(rejected):
            frontier[c] = value(c)
        rejected.clear()
    if max(value(c) for c in occupied) >= 0.35 * spacing:
        return None

    chosen = sorted(occupied, key=lambda c: (c[2], c[1], c[0]))
    tets = [t for c in chosen for t in cube_tets(*c, vid)]
    if rest:
        done = False
        for c in sorted(frontier, key=lambda c: (frontier[c], c))[:60]:
            ct = cube_tets(*c, vid)
            for start in range(6):
                extra = [ct[(start + s) % 6] for s in range(rest)]
                if is_closed_manifold(tets + extra):
                    tets = tets + extra
                    done = True
                    break
            if done:
                break
        if not done:
            return None
    elif not is_closed_manifold(tets):
        return None

    used = sorted({v for t in tets for v in t})
    remap = {v: n for n, v in enumerate(used)}
    verts = []
    for v in used:
        i = v % (nx + 1)
        j = (v // (nx + 1)) % (ny + 1)
        k = v // ((nx + 1) * (ny + 1))
        verts.append(lo + spacing * np.array([i, j, k], dtype=float))
    return np.array(verts), [[remap[v] for v in t] for t in tets]


def search_mesh(shape, lo, hi, target, volume_guess):
    base = (volume_guess / (target / 6)) ** (1.0 / 3.0)
    for scale in np.linspace(0.9, 1.1, 21):
        for offset in itertools.product((0.0, 0.5), repeat=3):
            out = voxel_mesh(shape, lo, hi, target, base * scale, np.asarray(offset))
            if out is not None:
                return out
    raise RuntimeError(f"no manifold mesh with {target} tets")


def write_tet(path, verts, tets, comment):
    with open(path, "w") as f:
        f.write(f"# {comment}\n{len(verts)}\n")
        for v in verts:
            f.write(f"{repr(float(v[0]))} {repr(float(v[1]))} {repr(float(v[2]))}\n")
        f.write(f"{len(tets)}\n")
        for t in tets:
            f.write(" ".join(str(i) for i in t) + "\n")


def write_off(path, verts, tris):
    with open(path, "w") as f:
        f.write(f"OFF\n{len(verts)} {len(tris)} 0\n")
        for v in verts:
            f.write(f"{repr(float(v[0]))} {repr(float(v[1]))} {repr(float(v[2]))}\n")
        for t in tris:
            f.write(f"3 {t[0]} {t[1]} {t[2]}\n")


def icosphere(levels):
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [(-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0), (0, -1, phi), (0, 1, phi), (0, -1, -phi),
             (0, 1, -phi), (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    tris = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4), (11, 10, 2),
            (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9), (4, 9, 5), (2, 4, 11),
            (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    for _ in range(levels):
        mid = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in mid:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                mid[key] = len(verts) - 1
            return mid[key]

        new = []
        for a, b, c in tris:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
        tris = new
    return np.array(verts), tris


def project_star(shape, centre, directions, reach=0.2, samples=400):
    out = []
    ts = np.linspace(0.0, reach, samples)
    for d in directions:
        pts = centre + ts[:, None] * d
        vals = shape(pts)
        inside = np.nonzero(vals < 0)[0]
        k = inside[-1]
        a, b = ts[k], ts[k + 1]
        for _ in range(60):
            m = 0.5 * (a + b)
            if shape((centre + m * d)[None, :])[0] < 0:
                a = m
            else:
                b = m
        out.append(centre + 0.5 * (a + b) * d)
    return np.array(out)


def polyp():
    # 1x1x2 stalk under a 3x3x2 head; cube edge h, base face at z = 0.
    h = 0.003
    cubes = [(1, 1, 0), (1, 1, 1)] + [(i, j, k) for k in (2, 3) for j in range(3) for i in range(3)]
    nx = ny = 3
    nz = 4

    def vid(i, j, k):
        return (k * (ny + 1) + j) * (nx + 1) + i

    tets = [t for c in cubes for t in cube_tets(*c, vid)]
    assert is_closed_manifold(tets)
    used = sorted({v for t in tets for v in t})
    remap = {v: n for n, v in enumerate(used)}
    verts = []
    for v in used:
        i = v % (nx + 1)
        j = (v // (nx + 1)) % (ny + 1)
        k = v // ((nx + 1) * (ny + 1))
        verts.append(np.array([(i - 1.5) * h, (j - 1.5) * h, k * h]))
    return np.array(verts), [[remap[v] for v in t] for t in tets]


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "assets"
    out.mkdir(parents=True, exist_ok=True)

    for n in (756, 1492, 3004):
        verts, tets = search_mesh(bunny_volume, (-0.1, -0.01, -0.06), (0.11, 0.13, 0.06), n, 9.6e-4)
        write_tet(out / f"bunny_{n}.tet", verts, tets, f"procedural bunny, {n} tets")
        print(f"bunny_{n}.tet: {len(verts)} vertices, {len(tets)} tets")

    dirs, tris = icosphere(3)
    surface = project_star(bunny_visual, np.array([0.03, 0.065, 0.0]), dirs)
    write_off(out / "bunny_surface.off", surface, tris)
    print(f"bunny_surface.off: {len(surface)} vertices, {len(tris)} triangles")

    verts, tets = search_mesh(uterus_volume, (-0.05, -0.06, -0.04), (0.05, 0.06, 0.04), 1702, 1.5e-4)
    write_tet(out / "uterus_1702.tet", verts, tets, "procedural uterus, 1702 tets")
    print(f"uterus_1702.tet: {len(verts)} vertices, {len(tets)} tets")

    verts, tets = polyp()
    write_tet(out / "polyp.tet", verts, tets, "polyp: stalk + head, base face at z = 0")
    print(f"polyp.tet: {len(verts)} vertices, {len(tets)} tets")


if __name__ == "__main__":
    main()
