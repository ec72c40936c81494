"""Random tube phantoms: smooth branch forests plus intensity and label grids.

Desk-scale stand-in for real microscopy / retina / aerial data. Everything is
driven by one seeded generator so identical configs reproduce bit-identical
outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Branch, BranchForest, CenterNode, normalize, perpendicular_frame
from .grid import Grid
from .raster import (
    RasterConfig,
    _bbox_points,
    _segment_bbox,
    make_boundary_label,
    make_centerline_label,
    render_soft,
)

__all__ = ["SynthConfig", "GroundTruthLabels", "synthesize"]

_MAX_ATTEMPTS = 100
_MIN_NODES = 5
_MAX_NODES = 200


class SynthError(RuntimeError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    """Phantom generation parameters; ranges are (low, high) inclusive-ish."""

    rng_seed: int = 0
    dims: tuple[int, ...] = (64, 64, 64)
    branch_count: tuple[int, int] = (2, 3)
    segment_length: tuple[float, float] = (1.5, 3.0)
    tortuosity: float = 0.15
    radius_range: tuple[float, float] = (1.5, 3.0)
    contrast: float = 0.8
    noise_sigma: float = 0.0
    gap_probability: float = 0.0
    gap_length: tuple[float, float] = (3.0, 6.0)
    boundary_radius: float = 3.0
    attach_probability: float = 0.0
    min_clearance: float = 2.0

    def __post_init__(self):
        if len(self.dims) not in (2, 3) or any(n < 8 for n in self.dims):
            raise SynthError(f"dims must be 2D/3D with sides >= 8, got {self.dims}")
        for name in ("branch_count", "segment_length", "radius_range", "gap_length"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise SynthError(f"{name} range is empty: {(lo, hi)}")
        for name in ("gap_probability", "attach_probability"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise SynthError(f"{name} must lie in [0, 1], got {v}")
        if not (0.0 < self.contrast <= 1.0):
            raise SynthError(f"contrast must lie in (0, 1], got {self.contrast}")
        if self.noise_sigma < 0 or self.tortuosity < 0:
            raise SynthError("noise_sigma and tortuosity must be non-negative")
        if self.radius_range[0] <= 0 or self.boundary_radius <= 0:
            raise SynthError("radii must be positive")


@dataclass
class GroundTruthLabels:
    """Per-voxel ground truth: binary labels plus radius/tangent fields."""

    centerline: Grid
    boundary: Grid
    radius_field: Grid
    direction_field: Grid  # (D, *dims), zero outside the solid


def _random_unit(rng, dim):
    while True:
        v = rng.normal(size=dim)
        n = np.sqrt((v * v).sum())
        if n > 1e-6:
            return v / n


def _perturb(rng, direction, max_angle):
    """Rotate by a uniform angle <= max_angle about a random perpendicular axis."""
    if max_angle <= 0:
        return direction
    angle = rng.uniform(0.0, max_angle)
    if direction.size == 2:
        sign = 1.0 if rng.uniform() < 0.5 else -1.0
        c, s = np.cos(sign * angle), np.sin(sign * angle)
        return np.array([c * direction[0] - s * direction[1], s * direction[0] + c * direction[1]])
    frame = perpendicular_frame(direction)
    phi = rng.uniform(0.0, 2.0 * np.pi)
    perp = np.cos(phi) * frame.nu + np.sin(phi) * frame.zeta
    return normalize(np.cos(angle) * direction + np.sin(angle) * perp)


def _walk(rng, cfg, start, heading, radius, max_nodes=_MAX_NODES):
    """Random smooth walk from start until the safe box is left."""
    dims = np.asarray(cfg.dims, dtype=np.float64)
    margin = radius + 2.0
    lo, hi = margin, dims - 1.0 - margin
    positions = [np.asarray(start, dtype=np.float64)]
    direction = heading
    for _ in range(max_nodes - 1):
        direction = _perturb(rng, direction, cfg.tortuosity)
        length = rng.uniform(*cfg.segment_length)
        nxt = positions[-1] + length * direction
        if np.any(nxt < lo) or np.any(nxt > hi):
            break
        positions.append(nxt)
    return positions


def _walk_both_ways(rng, cfg, start, heading, radius):
    """Extend a walk in both directions so branches span the volume."""
    half = _MAX_NODES // 2
    fwd = _walk(rng, cfg, start, heading, radius, max_nodes=half)
    bwd = _walk(rng, cfg, start, -heading, radius, max_nodes=half)
    return bwd[:0:-1] + fwd


def _node_directions(positions):
    tangents = [normalize(b - a) for a, b in zip(positions, positions[1:])]
    dirs = [tangents[0]]
    for t0, t1 in zip(tangents, tangents[1:]):
        dirs.append(normalize(t0 + t1))
    dirs.append(tangents[-1])
    return dirs


def _min_distance_to_branches(positions, branches):
    best = np.inf
    pts = np.asarray(positions)
    for br in branches:
        other = br.positions()
        d = np.sqrt(((pts[:, None, :] - other[None, :, :]) ** 2).sum(-1))
        best = min(best, float(d.min()))
    return best


def _build_forest(rng, cfg) -> BranchForest:
    dims = np.asarray(cfg.dims, dtype=np.float64)
    n_branches = int(rng.integers(cfg.branch_count[0], cfg.branch_count[1] + 1))
    branches: list[Branch] = []
    for b in range(n_branches):
        for _ in range(_MAX_ATTEMPTS):
            radius = float(rng.uniform(*cfg.radius_range))
            parent = None
            if branches and rng.uniform() < cfg.attach_probability:
                pb = int(rng.integers(0, len(branches)))
                pn = int(rng.integers(0, len(branches[pb].nodes)))
                parent = (pb, pn)
                start = branches[pb].nodes[pn].position
                heading = _random_unit(rng, len(cfg.dims))
            else:
                margin = radius + 2.0
                start = rng.uniform(margin, dims - 1.0 - margin)
                heading = _random_unit(rng, len(cfg.dims))
            if parent is None:
                positions = _walk_both_ways(rng, cfg, start, heading, radius)
            else:
                # attached branches grow away from the junction only
                positions = _walk(rng, cfg, start, heading, radius)[1:]
            if len(positions) < _MIN_NODES:
                continue
            if parent is None and branches:
                clearance = _min_distance_to_branches(positions, branches)
                prior_max_r = max(br.nodes[0].radius for br in branches)
                if clearance < radius + prior_max_r + cfg.min_clearance:
                    continue
            dirs = _node_directions(positions)
            nodes = [CenterNode(position=p, radius=radius, direction=d) for p, d in zip(positions, dirs)]
            branches.append(Branch(nodes=nodes, parent=parent))
            break
        else:
            raise SynthError(f"could not place branch {b} after {_MAX_ATTEMPTS} attempts")
    return BranchForest(branches=branches)


def _attribute_fields(forest, dims):
    """Nearest-segment radius and tangent per voxel, restricted to the solid."""
    D = len(dims)
    best = np.full(dims, np.inf)
    radius_field = np.zeros(dims)
    direction_field = np.zeros((D,) + tuple(dims))
    for branch in forest:
        nodes = branch.nodes
        for a, b in zip(nodes, nodes[1:]):
            rmax = max(a.radius, b.radius)
            box = _segment_bbox(a.position, b.position, rmax + 1.0, dims)
            if box is None:
                continue
            lo, hi = box
            pts = _bbox_points(lo, hi)
            d = b.position - a.position
            dd = float((d * d).sum())
            g = np.clip(((pts - a.position) * d).sum(-1) / dd, 0.0, 1.0)
            diff = pts - (a.position + g[:, None] * d)
            dist = np.sqrt((diff * diff).sum(-1))
            radius = (1.0 - g) * a.radius + g * b.radius
            tangent = d / np.sqrt(dd)
            shape = tuple(hi - lo + 1)
            sub = tuple(slice(l, h + 1) for l, h in zip(lo, hi))
            dist_g = dist.reshape(shape)
            inside = (dist_g <= radius.reshape(shape)) & (dist_g < best[sub])
            best[sub] = np.where(inside, dist_g, best[sub])
            radius_field[sub] = np.where(inside, radius.reshape(shape), radius_field[sub])
            for axis in range(D):
                direction_field[(axis,) + sub] = np.where(
                    inside, tangent[axis], direction_field[(axis,) + sub]
                )
    return radius_field, direction_field


def _gap_subpaths(rng, cfg, forest):
    """Sampled (point_a, point_b, radius) pieces where intensity is blanked."""
    gaps = []
    for branch in forest:
        positions = branch.positions()
        seg_vecs = np.diff(positions, axis=0)
        seg_lens = np.sqrt((seg_vecs**2).sum(-1))
        cum = np.concatenate([[0.0], np.cumsum(seg_lens)])
        total = cum[-1]
        for i, seg_len in enumerate(seg_lens):
            if rng.uniform() >= cfg.gap_probability:
                continue
            g_len = rng.uniform(*cfg.gap_length)
            s0 = cum[i] + rng.uniform(0.0, seg_len)
            s1 = min(s0 + g_len, total)
            gaps.append((_point_at_arc(positions, cum, s0), _point_at_arc(positions, cum, s1), branch.nodes[0].radius))
    return gaps


def _point_at_arc(positions, cum, s):
    i = int(np.searchsorted(cum, s, side="right") - 1)
    i = min(max(i, 0), len(positions) - 2)
    seg = positions[i + 1] - positions[i]
    seg_len = cum[i + 1] - cum[i]
    g = 0.0 if seg_len == 0 else (s - cum[i]) / seg_len
    return positions[i] + g * seg


def synthesize(cfg: SynthConfig):
    """Generate (forest, intensity, labels) for one seeded phantom."""
    rng = np.random.default_rng(cfg.rng_seed)
    forest = _build_forest(rng, cfg)
    dims = tuple(int(n) for n in cfg.dims)

    raster_cfg = RasterConfig()
    centerline = make_centerline_label(forest, dims, raster_cfg)
    boundary = make_boundary_label(forest, dims, cfg.boundary_radius, raster_cfg)
    radius_field, direction_field = _attribute_fields(forest, dims)

    soft = render_soft(forest, dims, raster_cfg).values
    intensity = cfg.contrast * soft
    for pa, pb, r in _gap_subpaths(rng, cfg, forest):
        blank = _capsule_mask(dims, pa, pb, r + 1.5)
        intensity[blank] = 0.0
    if cfg.noise_sigma > 0:
        intensity = intensity + rng.normal(0.0, cfg.noise_sigma, size=dims)
    intensity = np.clip(intensity, 0.0, 1.0)

    labels = GroundTruthLabels(
        centerline=centerline,
        boundary=boundary,
        radius_field=Grid(values=radius_field),
        direction_field=Grid(values=direction_field, channels=len(dims)),
    )
    return forest, Grid(values=intensity), labels


def _capsule_mask(dims, a, b, radius):
    mask = np.zeros(dims, dtype=bool)
    box = _segment_bbox(a, b, radius + 1.0, dims)
    if box is None:
        return mask
    lo, hi = box
    pts = _bbox_points(lo, hi)
    d = np.asarray(b, dtype=np.float64) - np.asarray(a, dtype=np.float64)
    dd = float((d * d).sum())
    if dd == 0.0:
        diff = pts - np.asarray(a, dtype=np.float64)
    else:
        g = np.clip(((pts - a) * d).sum(-1) / dd, 0.0, 1.0)
        diff = pts - (a + g[:, None] * d)
    dist = np.sqrt((diff * diff).sum(-1))
    sub = tuple(slice(l, h + 1) for l, h in zip(lo, hi))
    mask[sub] = (dist <= radius).reshape(tuple(hi - lo + 1))
    return mask
