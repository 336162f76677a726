"""Rotation-equivariant harmonic convolution networks on triangle meshes."""

__version__ = "0.1.0"

from .mesh import (
    TriangleMesh,
    TangentFrameField,
    load_mesh,
    load_mesh_file,
    normalize_area,
    lumped_vertex_areas,
    build_tangent_frames,
    rotate_frames,
)

__all__ = [
    "TriangleMesh",
    "TangentFrameField",
    "load_mesh",
    "load_mesh_file",
    "normalize_area",
    "lumped_vertex_areas",
    "build_tangent_frames",
    "rotate_frames",
]
