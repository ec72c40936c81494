"""Rasterize branch forests into voxel masks and label grids.

A forest is treated as a union of per-segment solids: capsules (round caps,
the default) or axially-bounded cylinders (flat caps). Membership is decided
at voxel centers; the radial bound is phi * r with per-segment radius either
linearly interpolated or held constant at the start node.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import Branch, BranchForest, CenterNode
from .grid import Grid

__all__ = [
    "RasterConfig",
    "rasterize",
    "make_centerline_label",
    "make_boundary_label",
    "render_soft",
]


class RasterError(ValueError):
    pass


@dataclass(frozen=True)
class RasterConfig:
    """Controls the solid membership predicate.

    phi scales every radius (must lie in (0, 1]); cap_style "round" closes
    segment seams with spherical caps while "flat" keeps the strict
    per-segment cylinder; radius_mode "interpolate" blends node radii along
    the segment, "constant" freezes the start-node radius.
    """

    phi: float = 1.0
    cap_style: str = "round"
    radius_mode: str = "interpolate"
    label_radius_override: float | None = None

    def __post_init__(self):
        if not (0.0 < self.phi <= 1.0):
            raise RasterError(f"phi must lie in (0, 1], got {self.phi}")
        if self.cap_style not in ("round", "flat"):
            raise RasterError(f"unknown cap_style {self.cap_style!r}")
        if self.radius_mode not in ("interpolate", "constant"):
            raise RasterError(f"unknown radius_mode {self.radius_mode!r}")
        if self.label_radius_override is not None and self.label_radius_override <= 0:
            raise RasterError("label_radius_override must be positive")


def _segment_bbox(a, b, margin, dims):
    lo = np.floor(np.minimum(a, b) - margin).astype(int)
    hi = np.ceil(np.maximum(a, b) + margin).astype(int)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, np.asarray(dims) - 1)
    if np.any(hi < lo):
        return None
    return lo, hi

def _bbox_points(lo, hi):
    axes = [np.arange(l, h + 1) for l, h in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1).astype(np.float64)


def _segment_radial(points, a, b, ra, rb, cfg):
    """Per-point (distance-to-axis measure, radial bound, axial validity)."""
    d = b - a
    dd = float((d * d).sum())
    if dd == 0.0:
        diff = points - a
        dist = np.sqrt((diff * diff).sum(axis=-1))
        r = cfg.phi * ra
        return dist, np.full(len(points), r), np.ones(len(points), dtype=bool)
    g_raw = ((points - a) * d).sum(axis=-1) / dd
    if cfg.cap_style == "round":
        g = np.clip(g_raw, 0.0, 1.0)
        axial_ok = np.ones(len(points), dtype=bool)
    else:
        g = g_raw
        axial_ok = (g_raw >= 0.0) & (g_raw <= 1.0)
    diff = points - (a + g[:, None] * d)
    dist = np.sqrt((diff * diff).sum(axis=-1))
    if cfg.radius_mode == "interpolate":
        g_r = np.clip(g_raw, 0.0, 1.0)
        radius = cfg.phi * ((1.0 - g_r) * ra + g_r * rb)
    else:
        radius = np.full(len(points), cfg.phi * ra)
    return dist, radius, axial_ok


def _iter_segments(forest: BranchForest):
    for branch in forest:
        nodes = branch.nodes
        if len(nodes) == 1:
            yield nodes[0], nodes[0]
        for a, b in zip(nodes, nodes[1:]):
            yield a, b


def rasterize(forest: BranchForest, dims, cfg: RasterConfig | None = None) -> Grid:
    """Binary membership grid of the forest's solid over voxel centers."""
    cfg = cfg or RasterConfig()
    dims = tuple(int(n) for n in dims)
    if any(n <= 0 for n in dims):
        raise RasterError(f"dims must be positive, got {dims}")
    mask = np.zeros(dims, dtype=np.uint8)
    for a, b in _iter_segments(forest):
        rmax = cfg.phi * max(a.radius, b.radius)
        box = _segment_bbox(a.position, b.position, rmax + 1.0, dims)
        if box is None:
            continue
        lo, hi = box
        pts = _bbox_points(lo, hi)
        dist, radius, axial_ok = _segment_radial(pts, a.position, b.position, a.radius, b.radius, cfg)
        inside = (dist <= radius) & axial_ok
        shape = tuple(hi - lo + 1)
        sub = tuple(slice(l, h + 1) for l, h in zip(lo, hi))
        mask[sub] |= inside.reshape(shape).astype(np.uint8)
    return Grid(values=mask)


def _with_radius(forest: BranchForest, r: float) -> BranchForest:
    branches = [
        Branch(
            nodes=[CenterNode(position=n.position, radius=r, direction=n.direction) for n in b.nodes],
            parent=b.parent,
        )
        for b in forest
    ]
    return BranchForest(branches=branches)


def make_centerline_label(forest: BranchForest, dims, cfg: RasterConfig | None = None) -> Grid:
    """Rasterize with every node radius forced to 1 (or the configured override)."""
    cfg = cfg or RasterConfig()
    if not forest.branches:
        return Grid(values=np.zeros(tuple(int(n) for n in dims), dtype=np.uint8))
    r = cfg.label_radius_override if cfg.label_radius_override is not None else 1.0
    return rasterize(_with_radius(forest, r), dims, replace(cfg, label_radius_override=None))


def make_boundary_label(forest: BranchForest, dims, r_b: float, cfg: RasterConfig | None = None) -> Grid:
    """Rasterize with every node radius forced to r_b."""
    if r_b <= 0:
        raise RasterError(f"r_b must be positive, got {r_b}")
    cfg = cfg or RasterConfig()
    if not forest.branches:
        return Grid(values=np.zeros(tuple(int(n) for n in dims), dtype=np.uint8))
    return rasterize(_with_radius(forest, r_b), dims, cfg)


def render_soft(forest: BranchForest, dims, cfg: RasterConfig | None = None) -> Grid:
    """Soft-edged solid: 1 inside the radius, linear falloff over 1 voxel outside.

    Matches the binary mask on mask voxels exactly (value 1 wherever the
    rasterized solid is 1) so noiseless intensities stay at full contrast on
    the structure.
    """
    cfg = cfg or RasterConfig()
    dims = tuple(int(n) for n in dims)
    field = np.zeros(dims, dtype=np.float64)
    for a, b in _iter_segments(forest):
        rmax = cfg.phi * max(a.radius, b.radius)
        box = _segment_bbox(a.position, b.position, rmax + 2.0, dims)
        if box is None:
            continue
        lo, hi = box
        pts = _bbox_points(lo, hi)
        dist, radius, axial_ok = _segment_radial(pts, a.position, b.position, a.radius, b.radius, cfg)
        soft = np.clip(radius + 1.0 - dist, 0.0, 1.0)
        soft[~axial_ok] = 0.0
        shape = tuple(hi - lo + 1)
        sub = tuple(slice(l, h + 1) for l, h in zip(lo, hi))
        np.maximum(field[sub], soft.reshape(shape), out=field[sub])
    return Grid(values=field)
