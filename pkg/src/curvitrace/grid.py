"""Dense 2D/3D scalar and multi-channel fields over a voxel lattice.

Voxel centers sit at integer coordinates; a grid with dims (n0, .., nD-1)
covers the closed box [0, n0-1] x .. x [0, nD-1]. Arrays are row-major with
the fastest-varying axis last; multi-channel data is channel-major.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

__all__ = ["Grid", "sample_linear", "sample_nearest", "voxel_of", "in_bounds"]


class GridError(ValueError):
    pass


@dataclass
class Grid:
    """Dense field; ``values`` has shape dims (scalar) or (channels, *dims)."""

    values: np.ndarray
    spacing: tuple[float, ...] | None = None
    channels: int = 1

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.channels < 1:
            raise GridError(f"channels must be >= 1, got {self.channels}")
        if self.channels > 1:
            if self.values.shape[0] != self.channels:
                raise GridError(
                    f"leading axis {self.values.shape[0]} != channels {self.channels}"
                )
            dims = self.values.shape[1:]
        else:
            dims = self.values.shape
        if len(dims) not in (2, 3):
            raise GridError(f"grids must be 2D or 3D, got dims {dims}")
        if self.spacing is None:
            self.spacing = (1.0,) * len(dims)
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != len(dims) or any(s <= 0 for s in self.spacing):
            raise GridError(f"bad spacing {self.spacing} for dims {dims}")
        if not np.all(np.isfinite(self.values)):
            raise GridError("grid contains non-finite values")

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape[1:] if self.channels > 1 else self.values.shape

    @property
    def dim(self) -> int:
        return len(self.dims)

    def in_bounds(self, point) -> bool:
        return in_bounds(point, self.dims)


def in_bounds(point, dims) -> bool:
    """True iff the continuous point lies inside the voxel-center bounding box."""
    p = np.asarray(point, dtype=np.float64)
    if p.size != len(dims):
        return False
    return bool(np.all(p >= 0.0) and np.all(p <= np.asarray(dims) - 1.0))


def voxel_of(point) -> tuple[int, ...]:
    """Index of the voxel whose center is nearest to the point."""
    p = np.asarray(point, dtype=np.float64)
    return tuple(int(v) for v in np.rint(p))


def sample_linear(arr: np.ndarray, points) -> np.ndarray | float:
    """Multilinear (bi/trilinear) interpolation at continuous points.

    ``points`` is a (D,) point or an (N, D) batch; coordinates are clamped to
    the grid so edge queries replicate border values.
    """
    p = np.asarray(points, dtype=np.float64)
    single = p.ndim == 1
    if single:
        p = p[None, :]
    coords = p.T.copy()
    for d in range(arr.ndim):
        np.clip(coords[d], 0.0, arr.shape[d] - 1.0, out=coords[d])
    out = map_coordinates(arr.astype(np.float64, copy=False), coords, order=1, mode="nearest")
    return float(out[0]) if single else out


def sample_nearest(arr: np.ndarray, points) -> np.ndarray | float:
    """Value of the nearest voxel, with indices clipped into the grid."""
    p = np.asarray(points, dtype=np.float64)
    single = p.ndim == 1
    if single:
        p = p[None, :]
    idx = np.rint(p).astype(np.int64)
    for d in range(arr.ndim):
        np.clip(idx[:, d], 0, arr.shape[d] - 1, out=idx[:, d])
    out = arr[tuple(idx.T)]
    return out[0] if single else out
