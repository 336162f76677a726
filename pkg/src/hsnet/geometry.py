"""Sparse intrinsic operators: Laplacians, geodesic distances, index-diffusion
clustering, logarithmic map charts, and parallel transport.

Charts store, for neighbours j of a centre i, polar coordinates
(r_ij, theta_ij) in the frame of i and the transport angle phi_ji whose unit
complex factor e^{i phi_ji} carries tangent data from the frame of j to the
frame of i.

Radial coordinates come from a wavefront sweep that unfolds triangles
(exact on flat meshes); angular and transport data come from short-time
diffusion with the complex connection Laplacian, factorized once per mesh.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import GeometryError
from .mesh import TriangleMesh, TangentFrameField, lumped_vertex_areas, undirected_edges

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

_TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# operators

def _cotan_triplets(mesh: TriangleMesh):
    p = mesh.vertices[mesh.faces]
    ii, jj, ww = [], [], []
    for c in range(3):
        a = p[:, (c + 1) % 3] - p[:, c]
        b = p[:, (c + 2) % 3] - p[:, c]
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        cot = np.einsum("ij,ij->i", a, b) / np.maximum(cross, 1e-300)
        ii.append(mesh.faces[:, (c + 1) % 3])
        jj.append(mesh.faces[:, (c + 2) % 3])
        ww.append(0.5 * cot)
    return np.concatenate(ii), np.concatenate(jj), np.concatenate(ww)


def cotan_laplacian(mesh: TriangleMesh) -> sp.csr_matrix:
    """Positive semi-definite cotangent Laplacian.

    Off-diagonal (i, j) is -(cot a + cot b)/2 over the triangles sharing the
    edge; rows sum to zero.
    """
    V = mesh.num_vertices
    ii, jj, ww = _cotan_triplets(mesh)
    i = np.concatenate([ii, jj, ii, jj])
    j = np.concatenate([jj, ii, ii, jj])
    w = np.concatenate([-ww, -ww, ww, ww])
    L = sp.coo_matrix((w, (i, j)), shape=(V, V)).tocsr()
    L.sum_duplicates()
    return L


def mass_matrix(mesh: TriangleMesh) -> sp.dia_matrix:
    """Lumped (diagonal) vertex mass matrix."""
    return sp.diags(lumped_vertex_areas(mesh))


@dataclass(frozen=True)
class EdgeFrameAngles:
    """Frame-coordinate direction angles of outgoing edges.

    For the directed edge (i -> j), `angle` holds the direction of the edge
    at i measured in the frame of i, using intrinsic angles: corner angles
    around each vertex are rescaled to sum to 2*pi (pi on the boundary),
    which realizes the discrete Levi-Civita connection.

    Stored CSR-style: neighbours of vertex v sit in [indptr[v], indptr[v+1])
    sorted by neighbour index.
    """

    indptr: np.ndarray
    neighbor: np.ndarray
    angle: np.ndarray

    def of(self, i: int, j: int) -> float:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        k = lo + np.searchsorted(self.neighbor[lo:hi], j)
        if k >= hi or self.neighbor[k] != j:
            raise KeyError(f"no edge ({i}, {j})")
        return float(self.angle[k])

    def of_many(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        out = np.empty(len(i))
        for k in range(len(i)):
            out[k] = self.of(int(i[k]), int(j[k]))
        return out


def edge_frame_angles(mesh: TriangleMesh, frames: TangentFrameField) -> EdgeFrameAngles:
    V = mesh.num_vertices
    nxt = {}
    for f in mesh.faces:
        f0, f1, f2 = int(f[0]), int(f[1]), int(f[2])
        nxt[(f0, f1)] = f2
        nxt[(f1, f2)] = f0
        nxt[(f2, f0)] = f1

    nbrs = [set() for _ in range(V)]
    haspred = [set() for _ in range(V)]
    for (v, b), c in nxt.items():
        nbrs[v].add(b)
        nbrs[v].add(c)
        haspred[v].add(c)

    pos = mesh.vertices
    per_vertex = [None] * V
    counts = np.zeros(V + 1, dtype=np.int64)
    for v in range(V):
        if not nbrs[v]:
            raise GeometryError(f"vertex {v} has no neighbours")
        starts = sorted(nbrs[v] - haspred[v])
        boundary = bool(starts)
        cur = starts[0] if boundary else min(nbrs[v])
        order = [cur]
        while (v, cur) in nxt:
            cur = nxt[(v, cur)]
            if cur == order[0]:
                break
            order.append(cur)
        if len(order) != len(nbrs[v]):
            raise GeometryError(f"vertex {v}: incident faces do not form a single fan")

        d = pos[order] - pos[v]
        dn = d / np.linalg.norm(d, axis=1, keepdims=True)
        n_corners = len(order) - (1 if boundary else 0)
        gamma = np.empty(n_corners)
        for t in range(n_corners):
            a = dn[t]
            b = dn[(t + 1) % len(order)]
            gamma[t] = np.arccos(np.clip(np.dot(a, b), -1.0, 1.0))
        # interior cones are flattened to total angle 2*pi; boundary wedges
        # keep their raw angles (flat meshes then stay exactly flat)
        scale = 1.0 if boundary else _TWO_PI / gamma.sum()
        cumulative = np.concatenate([[0.0], np.cumsum(gamma[:len(order) - 1])]) * scale
        offset = np.arctan2(np.dot(dn[0], frames.e2[v]), np.dot(dn[0], frames.e1[v]))
        per_vertex[v] = (np.array(order, dtype=np.int64), cumulative + offset)
        counts[v + 1] = len(order)

    indptr = np.cumsum(counts)
    neighbor = np.empty(indptr[-1], dtype=np.int64)
    angle = np.empty(indptr[-1])
    for v in range(V):
        order, ang = per_vertex[v]
        sl = slice(indptr[v], indptr[v + 1])
        idx = np.argsort(order)
        neighbor[sl] = order[idx]
        angle[sl] = ang[idx]
    return EdgeFrameAngles(indptr, neighbor, angle)


def connection_laplacian(mesh: TriangleMesh, frames: TangentFrameField,
                         angles: EdgeFrameAngles | None = None) -> sp.csr_matrix:
    """Complex Hermitian connection Laplacian.

    Entry (i, j) is the cotan weight times e^{i rho_ij}, where rho_ij rotates
    the frame of j into the frame of i across edge (i, j).
    """
    V = mesh.num_vertices
    if angles is None:
        angles = edge_frame_angles(mesh, frames)
    L = cotan_laplacian(mesh)
    coo = sp.triu(L, k=1).tocoo()
    i, j, w = coo.row, coo.col, coo.data

    rho = (angles.of_many(i, j) + np.pi) - angles.of_many(j, i)
    off = w * np.exp(1j * rho)

    rows = np.concatenate([i, j, np.arange(V)])
    cols = np.concatenate([j, i, np.arange(V)])
    vals = np.concatenate([off, np.conj(off), L.diagonal().astype(np.complex128)])
    H = sp.coo_matrix((vals, (rows, cols)), shape=(V, V)).tocsr()
    H.sum_duplicates()
    return H


def transport_vector(phi: float | np.ndarray, x: complex | np.ndarray, order: int):
    """Parallel transport of an order-M tangent feature: e^{i M phi} * x."""
    return np.exp(1j * order * np.asarray(phi)) * x


# ---------------------------------------------------------------------------
# wavefront geodesic sweep

@njit(cache=True)
def _sweep_kernel(faces, pos, vf_indptr, vf_data,
                  ea_indptr, ea_nbr, ea_ang, source):
    V = pos.shape[0]
    INF = np.inf
    dist = np.full(V, INF)
    rad = np.zeros(V)  # frame angle at j of the outward radial direction
    done = np.zeros(V, dtype=np.uint8)

    cap = 64 * V + 64
    heap_d = np.empty(cap)
    heap_v = np.empty(cap, dtype=np.int64)
    size = 0

    def edge_angle(v, w):
        lo = ea_indptr[v]
        hi = ea_indptr[v + 1]
        while lo < hi:
            mid = (lo + hi) // 2
            if ea_nbr[mid] < w:
                lo = mid + 1
            else:
                hi = mid
        return ea_ang[lo]

    def push(dv, v):
        nonlocal size
        heap_d[size] = dv
        heap_v[size] = v
        k = size
        size += 1
        while k > 0:
            pth = (k - 1) // 2
            if (heap_d[pth] > heap_d[k]) or (heap_d[pth] == heap_d[k] and heap_v[pth] > heap_v[k]):
                heap_d[pth], heap_d[k] = heap_d[k], heap_d[pth]
                heap_v[pth], heap_v[k] = heap_v[k], heap_v[pth]
                k = pth
            else:
                break

    def pop():
        nonlocal size
        dv = heap_d[0]
        v = heap_v[0]
        size -= 1
        heap_d[0] = heap_d[size]
        heap_v[0] = heap_v[size]
        k = 0
        while True:
            l = 2 * k + 1
            r = l + 1
            small = k
            if l < size and ((heap_d[l] < heap_d[small]) or (heap_d[l] == heap_d[small] and heap_v[l] < heap_v[small])):
                small = l
            if r < size and ((heap_d[r] < heap_d[small]) or (heap_d[r] == heap_d[small] and heap_v[r] < heap_v[small])):
                small = r
            if small == k:
                break
            heap_d[small], heap_d[k] = heap_d[k], heap_d[small]
            heap_v[small], heap_v[k] = heap_v[k], heap_v[small]
            k = small
        return dv, v

    dist[source] = 0.0
    push(0.0, source)

    while size > 0:
        dv, v = pop()
        if done[v]:
            continue
        done[v] = 1
        for fe in range(vf_indptr[v], vf_indptr[v + 1]):
            fi = vf_data[fe]
            for k in range(3):
                c = faces[fi, k]
                if done[c]:
                    continue
                a = faces[fi, (k + 1) % 3]
                b = faces[fi, (k + 2) % 3]
                da = dist[a]
                db = dist[b]
                best = INF
                best_rad = 0.0
                # lengths in the triangle
                eb = np.sqrt((pos[c, 0] - pos[a, 0]) ** 2 + (pos[c, 1] - pos[a, 1]) ** 2 + (pos[c, 2] - pos[a, 2]) ** 2)
                ea_len = np.sqrt((pos[c, 0] - pos[b, 0]) ** 2 + (pos[c, 1] - pos[b, 1]) ** 2 + (pos[c, 2] - pos[b, 2]) ** 2)
                if da < INF:
                    cand = da + eb
                    if cand < best:
                        best = cand
                        best_rad = edge_angle(c, a) + np.pi
                if db < INF:
                    cand = db + ea_len
                    if cand < best:
                        best = cand
                        best_rad = edge_angle(c, b) + np.pi
                if da < INF and db < INF:
                    cab = np.sqrt((pos[b, 0] - pos[a, 0]) ** 2 + (pos[b, 1] - pos[a, 1]) ** 2 + (pos[b, 2] - pos[a, 2]) ** 2)
                    if cab > 1e-300:
                        # unfold: A=(0,0), B=(cab,0), C above, virtual source S below
                        sx = (da * da - db * db + cab * cab) / (2.0 * cab)
                        sy2 = da * da - sx * sx
                        if sy2 >= 0.0:
                            sy = -np.sqrt(sy2)
                            cx = (eb * eb - ea_len * ea_len + cab * cab) / (2.0 * cab)
                            cy2 = eb * eb - cx * cx
                            if cy2 > 0.0:
                                cy = np.sqrt(cy2)
                                denom = cy - sy
                                if denom > 1e-300:
                                    xstar = sx - sy * (cx - sx) / denom
                                    if 0.0 <= xstar <= cab:
                                        cand = np.sqrt((cx - sx) ** 2 + (cy - sy) ** 2)
                                        if cand < best:
                                            best = cand
                                            # radial direction at C relative to edge C->A,
                                            # signed in the surface orientation
                                            vax = -cx
                                            vay = -cy
                                            wx = -(sx - cx)
                                            wy = -(sy - cy)
                                            beta = np.arctan2(vax * wy - vay * wx,
                                                              vax * wx + vay * wy)
                                            best_rad = edge_angle(c, a) + beta
                if best < dist[c]:
                    dist[c] = best
                    rad[c] = best_rad
                    if size >= cap - 1:
                        raise RuntimeError("sweep heap overflow")
                    push(best, c)
    return dist, rad


# ---------------------------------------------------------------------------
# charts

@dataclass(frozen=True)
class LogMapChart:
    """Local polar coordinates around a centre vertex.

    vertices[0] is the centre itself with r = 0 and theta = phi = 0 stored.
    """

    center: int
    vertices: np.ndarray  # (K,) global vertex ids, centre first
    r: np.ndarray         # (K,) geodesic radius
    theta: np.ndarray     # (K,) angle of log(centre -> j) in the centre frame, [0, 2*pi)
    phi: np.ndarray       # (K,) transport angle: e^{i phi} maps frame j -> frame centre


class IntrinsicSolver:
    """Per-mesh geometry engine.

    Holds the sweep adjacency, the intrinsic edge angles, and the factorized
    short-time connection diffusion operator. Immutable after construction;
    per-centre computations are independent.
    """

    def __init__(self, mesh: TriangleMesh, frames: TangentFrameField | None = None,
                 t_scale: float = 1.0, t_abs: float | None = None):
        self.mesh = mesh
        self.frames = frames
        self.vertex_areas = lumped_vertex_areas(mesh)
        self.L = cotan_laplacian(mesh)
        self.M = sp.diags(self.vertex_areas)
        h = mesh.mean_edge_length()
        self.t_heat = t_abs if t_abs is not None else t_scale * h * h
        if self.t_heat <= 0:
            raise GeometryError("diffusion time must be positive")

        V = mesh.num_vertices
        counts = np.zeros(V + 1, dtype=np.int64)
        np.add.at(counts, mesh.faces.ravel() + 1, 1)
        self._vf_indptr = np.cumsum(counts)
        self._vf_data = np.empty(self._vf_indptr[-1], dtype=np.int64)
        cursor = self._vf_indptr[:-1].copy()
        for fi, f in enumerate(mesh.faces):
            for v in f:
                self._vf_data[cursor[v]] = fi
                cursor[v] += 1

        self._idx_factors = {}
        self._conn_factor = None
        if frames is not None:
            self.edge_angles = edge_frame_angles(mesh, frames)
            self.Lc = connection_laplacian(mesh, frames, self.edge_angles)
            Mc = self.M.astype(np.complex128)
            try:
                self._conn_factor = spla.splu((Mc + self.t_heat * self.Lc).tocsc())
            except RuntimeError as e:
                raise GeometryError(f"singular factorization: {e}") from e
        else:
            # the sweep needs edge direction angles even without frames
            from .mesh import build_tangent_frames
            self.edge_angles = edge_frame_angles(mesh, build_tangent_frames(mesh))

    # -- distances ----------------------------------------------------------

    def _sweep(self, source: int):
        return _sweep_kernel(self.mesh.faces, self.mesh.vertices,
                             self._vf_indptr, self._vf_data,
                             self.edge_angles.indptr, self.edge_angles.neighbor,
                             self.edge_angles.angle, source)

    def distance(self, source: int) -> np.ndarray:
        return self._sweep(int(source))[0]

    def heat_distance(self, sources) -> np.ndarray:
        """Geodesic distance to a vertex set: min over per-source sweeps."""
        sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
        if sources.size == 0:
            raise GeometryError("empty source set")
        d = np.full(self.mesh.num_vertices, np.inf)
        for s in sources:
            d = np.minimum(d, self.distance(int(s)))
        d[sources] = 0.0
        return d

    # -- clustering ---------------------------------------------------------

    def clusters(self, sampled, t: float = 1e-4) -> np.ndarray:
        """Assign every vertex to the index of its nearest sampled vertex.

        Short-time heat diffusion of per-sample indicators; argmax wins.
        """
        sampled = np.asarray(sampled, dtype=np.int64)
        if sampled.size == 0:
            raise GeometryError("empty sampled set")
        if t not in self._idx_factors:
            try:
                self._idx_factors[t] = spla.splu((self.M + t * self.L).tocsc())
            except RuntimeError as e:
                raise GeometryError(f"singular factorization: {e}") from e
        rhs = np.zeros((self.mesh.num_vertices, sampled.size))
        rhs[sampled, np.arange(sampled.size)] = 1.0
        u = self._idx_factors[t].solve(rhs)
        assign = np.argmax(u, axis=1)
        unresolved = u[np.arange(len(u)), assign] <= 0.0
        if np.any(unresolved):
            assign = self._bfs_fallback(assign, unresolved)
        assign[sampled] = np.arange(sampled.size)
        return assign

    def _bfs_fallback(self, assign, unresolved):
        """Hop-distance assignment for vertices the diffusion could not reach."""
        from collections import deque

        adj = [[] for _ in range(self.mesh.num_vertices)]
        for a, b in undirected_edges(self.mesh.faces):
            adj[a].append(b)
            adj[b].append(a)
        out = assign.copy()
        queue = deque(int(v) for v in np.nonzero(~unresolved)[0])
        seen = ~unresolved
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    out[w] = out[v]
                    queue.append(w)
        return out

    # -- log map ------------------------------------------------------------

    def logmap_fields(self, center: int):
        """Full-mesh logmap fields (r, theta, phi) around a centre vertex."""
        if self._conn_factor is None:
            raise GeometryError("solver was built without frames")
        center = int(center)
        r, rad_angle = self._sweep(center)

        rhs = np.zeros(self.mesh.num_vertices, dtype=np.complex128)
        rhs[center] = 1.0
        h = self._conn_factor.solve(rhs)
        mag = np.abs(h)
        unit = np.where(mag > 1e-300, h / np.maximum(mag, 1e-300), 1.0)

        # outward radial direction at j, carried back to the centre frame
        theta = (rad_angle - np.angle(unit)) % _TWO_PI
        phi = -np.angle(unit)
        theta[center] = 0.0
        phi[center] = 0.0
        return r, theta, phi

    def logmap(self, center: int, radius: float | None = None) -> LogMapChart:
        """Chart over all vertices with r <= radius (plus the centre)."""
        r, theta, phi = self.logmap_fields(center)
        if radius is None:
            keep = np.ones(len(r), dtype=bool)
        else:
            if radius <= 0:
                raise GeometryError("support radius must be positive")
            keep = r <= radius
        keep[center] = False
        ids = np.concatenate([[center], np.nonzero(keep)[0]])
        return LogMapChart(center, ids, r[ids], theta[ids], phi[ids])


# ---------------------------------------------------------------------------
# convenience wrappers (one-shot, build their own solver)

def heat_geodesic_distance(mesh: TriangleMesh, sources, t: float | None = None) -> np.ndarray:
    return IntrinsicSolver(mesh, None, t_abs=t).heat_distance(sources)


def index_diffusion_clusters(mesh: TriangleMesh, sampled, t: float = 1e-4) -> np.ndarray:
    return IntrinsicSolver(mesh, None).clusters(sampled, t=t)


def vector_heat_logmap(mesh: TriangleMesh, frames: TangentFrameField,
                       center: int, radius: float) -> LogMapChart:
    return IntrinsicSolver(mesh, frames).logmap(center, radius)
