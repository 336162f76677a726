"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes: geometry errors -> 2,
I/O and cache errors -> 3, numerical failures -> 4.
"""


class HsnetError(Exception):
    """Base class for all package errors."""


class MeshError(HsnetError):
    """Invalid mesh input: parse failure, non-manifold edge, degenerate face."""


class GeometryError(HsnetError):
    """Geometric computation failed (singular factorization, empty support, ...)."""


class CacheError(HsnetError):
    """Precompute cache is unreadable: bad magic, version, truncation, checksum."""


class CheckpointError(HsnetError):
    """Checkpoint file is unreadable or inconsistent with the model config."""


class NumericalError(HsnetError):
    """Non-finite values encountered during training."""
