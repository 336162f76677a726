"""Triangle mesh ingestion, validation, areas, and tangent frames.

Meshes are immutable after construction. Vertices are float64 3D positions,
faces are int64 index triples with consistent counter-clockwise winding.
Tangent data is encoded as complex numbers a+ib meaning a*e1 + b*e2 in the
per-vertex orthonormal frame (e1, e2, n).
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import MeshError, GeometryError

_DEGENERATE_REL_AREA = 1e-14


@dataclass(frozen=True)
class TriangleMesh:
    """An oriented, edge-manifold triangle mesh."""

    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray     # (F, 3) int64

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64))
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        _validate(v, f)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    def face_areas(self) -> np.ndarray:
        return _face_areas(self.vertices, self.faces)

    def face_normals(self) -> np.ndarray:
        n = _face_cross(self.vertices, self.faces)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def total_area(self) -> float:
        return float(self.face_areas().sum())

    def edge_lengths(self) -> np.ndarray:
        """Lengths of the three edges of every face, shape (F, 3)."""
        p = self.vertices[self.faces]
        return np.stack([
            np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
            np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
            np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
        ], axis=1)

    def mean_edge_length(self) -> float:
        ue = undirected_edges(self.faces)
        d = self.vertices[ue[:, 0]] - self.vertices[ue[:, 1]]
        return float(np.linalg.norm(d, axis=1).mean())

    def has_boundary(self) -> bool:
        e = np.sort(_directed_edges(self.faces), axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool(np.any(counts == 1))


def _face_cross(vertices, faces):
    p = vertices[faces]
    return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])


def _face_areas(vertices, faces):
    return 0.5 * np.linalg.norm(_face_cross(vertices, faces), axis=1)


def _directed_edges(faces):
    return np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])


def undirected_edges(faces) -> np.ndarray:
    """Unique undirected edges (i < j), shape (E, 2)."""
    e = np.sort(_directed_edges(faces), axis=1)
    return np.unique(e, axis=0)


def _validate(vertices, faces):
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise MeshError(f"vertices must be (V, 3), got {vertices.shape}")
    if faces.ndim != 2 or faces.shape[1] != 3:
        raise MeshError(f"faces must be (F, 3), got {faces.shape}")
    if faces.shape[0] == 0:
        raise MeshError("mesh has no faces")
    nv = vertices.shape[0]
    if faces.min() < 0 or faces.max() >= nv:
        bad = int(np.argmax((faces < 0) | (faces >= nv)))
        raise MeshError(f"face {bad // 1} references vertex out of range [0, {nv})")
    if not np.all(np.isfinite(vertices)):
        raise MeshError("non-finite vertex coordinate")

    repeated = (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])
    if np.any(repeated):
        raise MeshError(f"face {int(np.argmax(repeated))} reuses a vertex (degenerate face)")

    areas = _face_areas(vertices, faces)
    mean_area = areas.mean()
    degenerate = areas < _DEGENERATE_REL_AREA * mean_area
    if np.any(degenerate):
        raise MeshError(
            f"face {int(np.argmax(degenerate))} is degenerate "
            f"(area {areas[degenerate].min():.3e} < {_DEGENERATE_REL_AREA:.0e} of mean)")

    de = _directed_edges(faces)
    # Edge-manifold: each undirected edge in at most two faces.
    se = np.sort(de, axis=1)
    uniq, counts = np.unique(se, axis=0, return_counts=True)
    if np.any(counts > 2):
        i, j = uniq[np.argmax(counts > 2)]
        raise MeshError(f"non-manifold edge ({i}, {j}) shared by {counts.max()} faces")
    # Orientability with consistent winding: no directed edge may repeat.
    _, dcounts = np.unique(de, axis=0, return_counts=True)
    if np.any(dcounts > 1):
        raise MeshError("inconsistent winding: a directed edge appears twice")


# ---------------------------------------------------------------------------
# loading / saving

def load_mesh(data: bytes, fmt: str) -> TriangleMesh:
    """Parse raw file content in the given format ("obj", "off", or "ply")."""
    fmt = fmt.lower().lstrip(".")
    if fmt == "obj":
        return _parse_obj(data)
    if fmt == "off":
        return _parse_off(data)
    if fmt == "ply":
        return _parse_ply(data)
    raise MeshError(f"unsupported mesh format: {fmt!r}")


def load_mesh_file(path) -> TriangleMesh:
    path = str(path)
    with open(path, "rb") as f:
        data = f.read()
    return load_mesh(data, path.rsplit(".", 1)[-1])


def _parse_obj(data: bytes) -> TriangleMesh:
    verts, faces = [], []
    for ln, raw in enumerate(data.decode("utf-8", errors="replace").splitlines(), 1):
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            if len(parts) < 4:
                raise MeshError(f"OBJ line {ln}: vertex needs 3 coordinates")
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) for p in parts[1:]]
            if len(idx) != 3:
                raise MeshError(f"OBJ line {ln}: only triangle faces are supported")
            faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
    if not verts:
        raise MeshError("OBJ file contains no vertices")
    return TriangleMesh(np.array(verts), np.array(faces))


def _parse_off(data: bytes) -> TriangleMesh:
    tokens = []
    for raw in data.decode("utf-8", errors="replace").splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise MeshError("missing OFF header")
    try:
        nv, nf = int(tokens[1]), int(tokens[2])
        pos = 4  # skip edge count
        verts = np.array([float(t) for t in tokens[pos:pos + 3 * nv]],
                         dtype=np.float64).reshape(nv, 3)
        pos += 3 * nv
        faces = []
        for _ in range(nf):
            k = int(tokens[pos])
            if k != 3:
                raise MeshError("OFF: only triangle faces are supported")
            faces.append([int(t) for t in tokens[pos + 1:pos + 4]])
            pos += 1 + k
    except (ValueError, IndexError) as e:
        raise MeshError(f"malformed OFF file: {e}") from e
    return TriangleMesh(verts, np.array(faces))


_PLY_TYPES = {
    "char": ("b", 1), "int8": ("b", 1),
    "uchar": ("B", 1), "uint8": ("B", 1),
    "short": ("h", 2), "int16": ("h", 2),
    "ushort": ("H", 2), "uint16": ("H", 2),
    "int": ("i", 4), "int32": ("i", 4),
    "uint": ("I", 4), "uint32": ("I", 4),
    "float": ("f", 4), "float32": ("f", 4),
    "double": ("d", 8), "float64": ("d", 8),
}


def _parse_ply(data: bytes) -> TriangleMesh:
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise MeshError("missing PLY header")
    header = data[:end].decode("ascii", errors="replace").splitlines()
    body = data[end + len(b"end_header\n"):]

    if not any("binary_little_endian" in l for l in header):
        raise MeshError("PLY: only binary_little_endian 1.0 is supported")

    elements = []  # (name, count, [(prop_name, type, list_count_type|None)])
    for line in header:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property" and elements:
            if parts[1] == "list":
                elements[-1][2].append((parts[4], parts[3], parts[2]))
            else:
                elements[-1][2].append((parts[2], parts[1], None))

    verts = None
    faces = None
    buf = io.BytesIO(body)
    try:
        for name, count, props in elements:
            if name == "vertex":
                fmt = "<" + "".join(_PLY_TYPES[t][0] for _, t, lt in props)
                size = struct.calcsize(fmt)
                names = [p for p, _, _ in props]
                rows = np.array([struct.unpack(fmt, buf.read(size)) for _ in range(count)],
                                dtype=np.float64).reshape(count, len(props))
                verts = rows[:, [names.index("x"), names.index("y"), names.index("z")]]
            elif name == "face":
                (_, t, lt), = [p for p in props if p[2] is not None]
                cfmt, csz = _PLY_TYPES[lt]
                ifmt, isz = _PLY_TYPES[t]
                out = []
                for _ in range(count):
                    (k,) = struct.unpack("<" + cfmt, buf.read(csz))
                    if k != 3:
                        raise MeshError("PLY: only triangle faces are supported")
                    out.append(struct.unpack(f"<3{ifmt}", buf.read(3 * isz)))
                faces = np.array(out, dtype=np.int64)
            else:  # skip unknown fixed-size elements
                fmt = "<" + "".join(_PLY_TYPES[t][0] for _, t, lt in props)
                buf.read(struct.calcsize(fmt) * count)
    except struct.error as e:
        raise MeshError(f"truncated PLY body: {e}") from e
    if verts is None or faces is None:
        raise MeshError("PLY file lacks vertex or face element")
    return TriangleMesh(verts, faces)


def write_obj(mesh: TriangleMesh) -> bytes:
    out = []
    for v in mesh.vertices:
        out.append(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
    for f in mesh.faces:
        out.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    return ("\n".join(out) + "\n").encode()


def write_off(mesh: TriangleMesh) -> bytes:
    out = ["OFF", f"{mesh.num_vertices} {mesh.num_faces} 0"]
    for v in mesh.vertices:
        out.append(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}")
    for f in mesh.faces:
        out.append(f"3 {f[0]} {f[1]} {f[2]}")
    return ("\n".join(out) + "\n").encode()


def write_ply(mesh: TriangleMesh, vertex_props: dict | None = None) -> bytes:
    """Binary little-endian PLY. vertex_props maps name -> (type, array)."""
    vertex_props = vertex_props or {}
    lines = ["ply", "format binary_little_endian 1.0",
             f"element vertex {mesh.num_vertices}",
             "property float x", "property float y", "property float z"]
    for name, (t, arr) in vertex_props.items():
        lines.append(f"property {t} {name}")
        if len(arr) != mesh.num_vertices:
            raise ValueError(f"property {name} has wrong length")
    lines += [f"element face {mesh.num_faces}",
              "property list uchar int vertex_indices", "end_header"]
    out = io.BytesIO()
    out.write(("\n".join(lines) + "\n").encode("ascii"))
    cols = [("float", mesh.vertices[:, 0]), ("float", mesh.vertices[:, 1]),
            ("float", mesh.vertices[:, 2])] + list(vertex_props.values())
    for i in range(mesh.num_vertices):
        for t, arr in cols:
            out.write(struct.pack("<" + _PLY_TYPES[t][0], arr[i]))
    for f in mesh.faces:
        out.write(struct.pack("<B3i", 3, f[0], f[1], f[2]))
    return out.getvalue()


# ---------------------------------------------------------------------------
# geometry derived from the mesh

def normalize_area(mesh: TriangleMesh) -> TriangleMesh:
    """Uniformly scale so the total face area is 1."""
    area = mesh.total_area()
    if area <= 0:
        raise GeometryError("mesh has zero total area")
    return TriangleMesh(mesh.vertices / np.sqrt(area), mesh.faces)


def lumped_vertex_areas(mesh: TriangleMesh) -> np.ndarray:
    """Per-vertex integration weight: one third of incident triangle area."""
    areas = mesh.face_areas()
    w = np.zeros(mesh.num_vertices)
    np.add.at(w, mesh.faces.ravel(), np.repeat(areas / 3.0, 3))
    if np.any(w <= 0):
        raise GeometryError(f"vertex {int(np.argmax(w <= 0))} belongs to no face")
    return w


@dataclass(frozen=True)
class TangentFrameField:
    """Per-vertex orthonormal frames (e1, e2, n) spanning the tangent planes."""

    normals: np.ndarray  # (V, 3)
    e1: np.ndarray       # (V, 3)
    e2: np.ndarray       # (V, 3)

    def to_complex(self, vectors: np.ndarray) -> np.ndarray:
        """Express extrinsic 3D tangent vectors (V, 3) as complex coordinates."""
        return (np.einsum("ij,ij->i", vectors, self.e1)
                + 1j * np.einsum("ij,ij->i", vectors, self.e2))

    def to_extrinsic(self, z: np.ndarray) -> np.ndarray:
        """Push complex tangent coordinates back to 3D vectors."""
        return z.real[:, None] * self.e1 + z.imag[:, None] * self.e2


def build_tangent_frames(mesh: TriangleMesh) -> TangentFrameField:
    """Deterministic per-vertex frames.

    Normals are angle-weighted averages of incident face normals; e1 is the
    tangent-plane projection of the edge to the lowest-index neighbor.
    Any consistent choice works: the network commutes with frame changes.
    """
    V = mesh.num_vertices
    fnorm = _face_cross(mesh.vertices, mesh.faces)
    fnorm = fnorm / np.linalg.norm(fnorm, axis=1, keepdims=True)

    normals = np.zeros((V, 3))
    p = mesh.vertices[mesh.faces]
    for c in range(3):
        a = p[:, (c + 1) % 3] - p[:, c]
        b = p[:, (c + 2) % 3] - p[:, c]
        cosang = np.einsum("ij,ij->i", a, b) / (
            np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        ang = np.arccos(np.clip(cosang, -1.0, 1.0))
        np.add.at(normals, mesh.faces[:, c], ang[:, None] * fnorm)
    nrm = np.linalg.norm(normals, axis=1)
    if np.any(nrm < 1e-12):
        raise GeometryError(
            f"vertex {int(np.argmax(nrm < 1e-12))}: incident normals average to zero")
    normals /= nrm[:, None]

    # lowest-index neighbor of each vertex
    de = _directed_edges(mesh.faces)
    de = de[np.lexsort((de[:, 1], de[:, 0]))]
    src, first_idx = np.unique(de[:, 0], return_index=True)
    first = np.full(V, -1, dtype=np.int64)
    first[src] = de[first_idx, 1]
    if np.any(first < 0):
        raise GeometryError(f"vertex {int(np.argmax(first < 0))} has no neighbors")

    edge = mesh.vertices[first] - mesh.vertices
    e1 = edge - np.einsum("ij,ij->i", edge, normals)[:, None] * normals
    l1 = np.linalg.norm(e1, axis=1)
    if np.any(l1 < 1e-12):
        raise GeometryError(
            f"vertex {int(np.argmax(l1 < 1e-12))}: first edge is normal to tangent plane")
    e1 /= l1[:, None]
    e2 = np.cross(normals, e1)
    return TangentFrameField(normals, e1, e2)


def rotate_frames(frames: TangentFrameField, angles: np.ndarray) -> TangentFrameField:
    """Rotate each frame by angles[i] about its normal.

    Rotating the frame at a vertex by -phi multiplies the complex coordinates
    of fixed tangent vectors there by e^{i phi}.
    """
    c = np.cos(angles)[:, None]
    s = np.sin(angles)[:, None]
    e1 = c * frames.e1 + s * frames.e2
    e2 = -s * frames.e1 + c * frames.e2
    return TangentFrameField(frames.normals, e1, e2)
