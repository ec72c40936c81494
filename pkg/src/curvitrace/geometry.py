"""Dimension-generic (2D/3D) points, directions, and centerline curves.

Positions are continuous grid coordinates in voxel units, stored as float64
numpy arrays of length D. All functions here are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CenterNode",
    "Branch",
    "BranchForest",
    "NormalFrame",
    "as_point",
    "as_unit_vector",
    "gamma",
    "step",
    "perpendicular_frame",
    "point_to_segment",
    "segment_distances",
    "resample",
    "branch_arc_length",
]

_UNIT_TOL = 1e-9


class GeometryError(ValueError):
    """Raised on degenerate geometric input (zero vectors, bad intervals)."""


def as_point(p) -> np.ndarray:
    """Coerce to a float64 coordinate array, checking finiteness and D in {2,3}."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size not in (2, 3):
        raise GeometryError(f"point must be a 2- or 3-vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise GeometryError(f"point has non-finite coordinates: {p}")
    return p


def as_unit_vector(v) -> np.ndarray:
    """Coerce to a float64 vector and verify unit norm to 1e-9."""
    v = as_point(v)
    n = float(np.sqrt((v * v).sum()))
    if abs(n - 1.0) > _UNIT_TOL:
        raise GeometryError(f"vector is not unit-norm (|v| = {n!r})")
    return v


def normalize(v) -> np.ndarray:
    """Unit vector along v; raises GeometryError if ||v|| < 1e-12."""
    v = np.asarray(v, dtype=np.float64)
    n = float(np.sqrt((v * v).sum()))
    if n < 1e-12:
        raise GeometryError("cannot normalize a (near-)zero vector")
    return v / n


@dataclass
class CenterNode:
    """One sampled centerline point: position, tube radius, optional unit tangent."""

    position: np.ndarray
    radius: float
    direction: np.ndarray | None = None

    def __post_init__(self):
        self.position = as_point(self.position)
        self.radius = float(self.radius)
        if self.radius <= 0:
            raise GeometryError(f"radius must be positive, got {self.radius}")
        if self.direction is not None:
            self.direction = as_unit_vector(self.direction)


@dataclass
class Branch:
    """Ordered polyline of CenterNodes; ``parent`` optionally attaches the first
    node to (branch_index, node_index) of another branch in the same forest."""

    nodes: list[CenterNode]
    parent: tuple[int, int] | None = None

    def __post_init__(self):
        if len(self.nodes) < 1:
            raise GeometryError("branch must contain at least one node")
        for a, b in zip(self.nodes, self.nodes[1:]):
            if np.array_equal(a.position, b.position):
                raise GeometryError("consecutive branch nodes must be distinct")

    def __len__(self):
        return len(self.nodes)

    @property
    def dim(self) -> int:
        return self.nodes[0].position.size

    def positions(self) -> np.ndarray:
        return np.stack([n.position for n in self.nodes])

    def radii(self) -> np.ndarray:
        return np.array([n.radius for n in self.nodes])


@dataclass
class BranchForest:
    """Collection of branches forming an acyclic tree via per-branch parent links."""

    branches: list[Branch] = field(default_factory=list)

    def __post_init__(self):
        for i, br in enumerate(self.branches):
            if br.parent is not None:
                pb, pn = br.parent
                if not (0 <= pb < len(self.branches)) or pb == i:
                    raise GeometryError(f"branch {i} has invalid parent branch {pb}")
                if not (0 <= pn < len(self.branches[pb].nodes)):
                    raise GeometryError(f"branch {i} parent node {pn} out of range")
        self._check_acyclic()

    def _check_acyclic(self):
        for i in range(len(self.branches)):
            j, path = i, set()
            while j is not None:
                if j in path:
                    raise GeometryError(f"parent links form a cycle through branch {j}")
                path.add(j)
                par = self.branches[j].parent
                j = par[0] if par is not None else None

    def __len__(self):
        return len(self.branches)

    def __iter__(self):
        return iter(self.branches)

    @property
    def dim(self) -> int:
        if not self.branches:
            raise GeometryError("empty forest has no dimension")
        return self.branches[0].dim

    def node_count(self) -> int:
        return sum(len(b) for b in self.branches)


@dataclass
class NormalFrame:
    """Orthonormal basis of the plane perpendicular to a tube axis.

    In 3D both ``nu`` and ``zeta`` are set; in 2D ``zeta`` is None and ``nu``
    is the 90-degree rotation of the axis.
    """

    nu: np.ndarray
    zeta: np.ndarray | None = None


def gamma(t: float, t_i: float, t_ip1: float) -> float:
    """Normalized position of t inside [t_i, t_ip1]."""
    if t_ip1 <= t_i:
        raise GeometryError(f"degenerate interval [{t_i}, {t_ip1}]")
    if not (t_i <= t <= t_ip1):
        raise GeometryError(f"t={t} outside [{t_i}, {t_ip1}]")
    return (t - t_i) / (t_ip1 - t_i)


def step(c, r: float, xi) -> np.ndarray:
    """Advance a point by r along the unit direction xi."""
    c = as_point(c)
    xi = as_unit_vector(xi)
    if r <= 0:
        raise GeometryError(f"step length must be positive, got {r}")
    return c + r * xi


def perpendicular_frame(axis) -> NormalFrame:
    """Deterministic orthonormal frame spanning the plane perpendicular to axis.

    3D: nu = normalize(axis x zhat) unless axis is near zhat (|axis.z| >= 0.9),
    in which case xhat is used; zeta = axis x nu. 2D: nu = 90-degree rotation.
    """
    axis = as_unit_vector(axis)
    if axis.size == 2:
        return NormalFrame(nu=np.array([-axis[1], axis[0]]))
    ref = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    nu = normalize(np.cross(axis, ref))
    zeta = np.cross(axis, nu)
    return NormalFrame(nu=nu, zeta=zeta)


def point_to_segment(p, a, b) -> tuple[float, float]:
    """Distance from p to segment [a, b] and the clamped projection parameter.

    Returns (distance, gamma) with gamma in [0, 1]; a degenerate segment
    (a == b) yields gamma 0.
    """
    p, a, b = as_point(p), as_point(a), as_point(b)
    d = b - a
    dd = float((d * d).sum())
    if dd == 0.0:
        diff = p - a
        return float(np.sqrt((diff * diff).sum())), 0.0
    g = float(((p - a) * d).sum()) / dd
    g = min(1.0, max(0.0, g))
    diff = p - (a + g * d)
    return float(np.sqrt((diff * diff).sum())), g


def segment_distances(points: np.ndarray, a, b) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized point_to_segment over an (N, D) array of points.

    Returns (distances, gammas), each of shape (N,). Uses the same arithmetic
    as point_to_segment so scalar and batched results agree bit-for-bit.
    """
    points = np.asarray(points, dtype=np.float64)
    a, b = as_point(a), as_point(b)
    d = b - a
    dd = float((d * d).sum())
    if dd == 0.0:
        diff = points - a
        return np.sqrt((diff * diff).sum(axis=-1)), np.zeros(len(points))
    g = ((points - a) * d).sum(axis=-1) / dd
    np.clip(g, 0.0, 1.0, out=g)
    diff = points - (a + g[:, None] * d)
    return np.sqrt((diff * diff).sum(axis=-1)), g


def branch_arc_length(branch: Branch) -> float:
    """Total polyline length of a branch (0 for a single node)."""
    pos = branch.positions()
    if len(pos) < 2:
        return 0.0
    seg = np.diff(pos, axis=0)
    return float(np.sqrt((seg * seg).sum(axis=-1)).sum())


def resample(branch: Branch, spacing: float) -> Branch:
    """Subdivide each polyline segment so node spacing never exceeds ``spacing``.

    Original vertices are kept (arc length is preserved exactly); radii are
    linearly interpolated on inserted nodes. Single-node branches pass through.
    """
    if spacing <= 0:
        raise GeometryError(f"spacing must be positive, got {spacing}")
    if len(branch.nodes) < 2:
        return Branch(nodes=list(branch.nodes), parent=branch.parent)
    out = [branch.nodes[0]]
    for a, b in zip(branch.nodes, branch.nodes[1:]):
        seg = b.position - a.position
        length = float(np.sqrt((seg * seg).sum()))
        pieces = max(1, int(np.ceil(length / spacing - 1e-12)))
        for j in range(1, pieces):
            g = j / pieces
            out.append(
                CenterNode(
                    position=a.position + g * seg,
                    radius=(1.0 - g) * a.radius + g * b.radius,
                )
            )
        out.append(b)
    return Branch(nodes=out, parent=branch.parent)
