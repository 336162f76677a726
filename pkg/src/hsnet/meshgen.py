"""Procedural test geometry: icospheres, grids, discs, irregular spheres."""

from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh


def icosphere(subdivisions: int = 0, radius: float = 1.0) -> TriangleMesh:
    """Icosahedron subdivided `subdivisions` times, vertices on the sphere.

    Vertex counts: 12, 42, 162, 642, 2562, ...
    """
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)

    for _ in range(subdivisions):
        verts_list = list(verts)
        midpoint = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in midpoint:
                m = verts_list[a] + verts_list[b]
                m = m / np.linalg.norm(m)
                midpoint[key] = len(verts_list)
                verts_list.append(m)
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.array(verts_list)
        faces = np.array(new_faces, dtype=np.int64)

    return TriangleMesh(verts * radius, faces)


def _orient_up(verts: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Flip faces of a flat z=0 mesh so winding is CCW seen from +z."""
    p = verts[faces]
    z = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])[:, 2]
    faces = faces.copy()
    faces[z < 0] = faces[z < 0][:, [0, 2, 1]]
    return faces


def square_grid(n: int = 16, side: float = 1.0) -> TriangleMesh:
    """Flat n x n vertex grid in the xy-plane, diagonally split quads."""
    xs = np.linspace(-side / 2, side / 2, n)
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    verts = np.stack([xx.ravel(), yy.ravel(), np.zeros(n * n)], axis=1)
    faces = []
    for i in range(n - 1):
        for j in range(n - 1):
            a = i * n + j
            b = a + 1
            c = a + n
            d = c + 1
            faces += [[a, b, d], [a, d, c]]
    faces = np.array(faces, dtype=np.int64)
    return TriangleMesh(verts, _orient_up(verts, faces))


def equilateral_grid(nx: int = 12, ny: int = 12, edge: float = 1.0) -> TriangleMesh:
    """Flat triangulation of the plane into equilateral triangles."""
    h = edge * np.sqrt(3.0) / 2.0
    verts = []
    for j in range(ny):
        for i in range(nx):
            verts.append([(i + 0.5 * (j % 2)) * edge, j * h, 0.0])
    faces = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            a = j * nx + i
            b = a + 1
            c = a + nx
            d = c + 1
            if j % 2 == 0:
                faces += [[a, b, c], [b, d, c]]
            else:
                faces += [[a, b, d], [a, d, c]]
    verts = np.array(verts)
    faces = np.array(faces, dtype=np.int64)
    return TriangleMesh(verts, _orient_up(verts, faces))


def polar_disc(rings: int = 10, radius: float = 1.0) -> TriangleMesh:
    """Flat disc with 8k vertices on ring k.

    The connectivity and vertex positions are symmetric under rotations by
    multiples of 45 degrees: rotation maps the vertex set onto itself.
    """
    verts = [np.array([0.0, 0.0, 0.0])]
    ring_start = [None]  # ring 0 is the center vertex
    for k in range(1, rings + 1):
        ring_start.append(len(verts))
        nk = 8 * k
        ang = 2 * np.pi * np.arange(nk) / nk
        r = radius * k / rings
        for a in ang:
            verts.append(np.array([r * np.cos(a), r * np.sin(a), 0.0]))

    faces = []
    # center fan to ring 1
    s1 = ring_start[1]
    for i in range(8):
        faces.append([0, s1 + i, s1 + (i + 1) % 8])
    # strips between ring k and ring k+1
    for k in range(1, rings):
        n_in, n_out = 8 * k, 8 * (k + 1)
        si, so = ring_start[k], ring_start[k + 1]
        # per octant: k inner vertices vs k+1 outer vertices
        for o in range(8):
            for t in range(k):
                a = si + (o * k + t) % n_in
                b = si + (o * k + t + 1) % n_in
                c = so + (o * (k + 1) + t) % n_out
                d = so + (o * (k + 1) + t + 1) % n_out
                faces.append([a, c, d])
                faces.append([a, d, b])
            # closing triangle of the octant
            a = si + ((o + 1) * k) % n_in
            c = so + (o * (k + 1) + k) % n_out
            d = so + ((o + 1) * (k + 1)) % n_out
            faces.append([a, c, d])
    faces = np.array(faces, dtype=np.int64)
    verts = np.array(verts)
    return TriangleMesh(verts, _orient_up(verts, faces))


def rotation_permutation(mesh: TriangleMesh, eighths: int) -> np.ndarray:
    """Vertex permutation realizing rotation by eighths * 45 degrees about z.

    Only valid for meshes whose vertex set is exactly symmetric under that
    rotation (e.g. polar_disc). perm[i] is the vertex that position i maps to.
    """
    ang = eighths * np.pi / 4.0
    c, s = np.cos(ang), np.sin(ang)
    rot = mesh.vertices.copy()
    rot[:, 0] = c * mesh.vertices[:, 0] - s * mesh.vertices[:, 1]
    rot[:, 1] = s * mesh.vertices[:, 0] + c * mesh.vertices[:, 1]
    perm = np.empty(mesh.num_vertices, dtype=np.int64)
    for i, p in enumerate(rot):
        d = np.linalg.norm(mesh.vertices - p, axis=1)
        j = int(np.argmin(d))
        if d[j] > 1e-9:
            raise ValueError("mesh is not symmetric under the requested rotation")
        perm[i] = j
    return perm


def irregular_sphere(n_vertices: int = 500, seed: int = 7) -> TriangleMesh:
    """Irregular triangulated sphere: convex hull of random unit vectors."""
    from scipy.spatial import ConvexHull

    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((n_vertices, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    hull = ConvexHull(pts)
    faces = hull.simplices.astype(np.int64)
    # orient all faces outward
    p = pts[faces]
    centroid = p.mean(axis=1)
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    flip = np.einsum("ij,ij->i", n, centroid) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return TriangleMesh(pts, faces)
