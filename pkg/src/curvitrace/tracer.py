"""Iterative branch tracing: geometry step, centerline snap, boundary stop.

One step = query the provider at the current point, advance by the predicted
radius along the sign-resolved predicted direction, snap the landing point to
the strongest nearby centerline voxel, then keep it only while the boundary
probability supports tracing and the point has not been visited before.
Whole-image reconstruction seeds greedily from the centerline map and traces
each seed in both directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .direction import DegenerateDirectionError, decode, resolve_sign
from .geometry import Branch, BranchForest, CenterNode, normalize
from .grid import in_bounds, voxel_of
from .providers import FeatureQuery, GridFeatureProvider

__all__ = ["TraceConfig", "VisitedMap", "snap", "trace_branch", "generate_seeds", "trace_all"]

#: a node's own footprint and its immediate predecessors stay revisitable
_RECENT_EXEMPT = 4
#: forward-pass stamps near the seed that the reverse pass may cross
_SEED_EXEMPT = 4


@dataclass(frozen=True)
class TraceConfig:
    """Thresholds and stop rules for the tracing loop.

    use_geometry_step=False replaces the radius-length predicted-direction
    step with a unit-length inertial step (centerline-following ablation);
    use_snapping=False accepts the geometric step directly (geometry-only
    ablation).
    """

    t_c: float = 0.5
    t_b: float = 0.5
    history_len: int = 4
    max_steps: int = 10000
    revisit_radius: float = 1.0
    bidirectional: bool = True
    min_branch_nodes: int = 3
    use_geometry_step: bool = True
    use_snapping: bool = True
    inertial_step_length: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.t_c < 1.0) or not (0.0 < self.t_b < 1.0):
            raise ValueError("thresholds t_c, t_b must lie in (0, 1)")
        if self.history_len < 1 or self.max_steps < 1:
            raise ValueError("history_len and max_steps must be positive")
        if self.revisit_radius <= 0 or self.inertial_step_length <= 0:
            raise ValueError("revisit_radius and inertial_step_length must be positive")


class VisitedMap:
    """Sparse voxel occupancy of the solid traced so far.

    Each accepted node stamps the capsule of the given radius along its
    incoming step (a ball when it has no predecessor), i.e. the piece of
    reconstructed tube the step produced. Stamps remember the serial of the
    node that placed them so recent footprints can be exempted from the
    revisit test.
    """

    def __init__(self, dims):
        self.dims = tuple(int(n) for n in dims)
        self.stamps: dict[tuple[int, ...], int] = {}
        self._next_serial = 0

    def stamp(self, position, radius: float, prev=None) -> int:
        serial = self._next_serial
        self._next_serial += 1
        p = np.asarray(position, dtype=np.float64)
        a = p if prev is None else np.asarray(prev, dtype=np.float64)
        lo = np.maximum(np.floor(np.minimum(p, a) - radius).astype(int), 0)
        hi = np.minimum(np.ceil(np.maximum(p, a) + radius).astype(int), np.asarray(self.dims) - 1)
        if np.any(hi < lo):
            return serial
        axes = [np.arange(l, h + 1) for l, h in zip(lo, hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        vox = np.stack([m.ravel() for m in mesh], axis=-1).astype(np.float64)
        d = p - a
        dd = float((d * d).sum())
        if dd == 0.0:
            diff = vox - p
        else:
            g = np.clip(((vox - a) * d).sum(axis=-1) / dd, 0.0, 1.0)
            diff = vox - (a + g[:, None] * d)
        d2 = (diff * diff).sum(axis=-1)
        for v in vox[d2 <= radius * radius]:
            self.stamps.setdefault(tuple(int(x) for x in v), serial)
        return serial

    def lookup(self, voxel) -> int | None:
        return self.stamps.get(tuple(int(v) for v in voxel))

    def covers(self, position) -> bool:
        return self.lookup(voxel_of(position)) is not None


def _snap_window(r_hat: float) -> int:
    return max(int(math.ceil(2.0 * r_hat)), 2)


def snap(c_tilde, centerline: np.ndarray, r_hat: float, cfg: TraceConfig):
    """Move a point onto the nearest confident centerline voxel.

    Candidates are voxel centers within the snap window whose centerline
    probability exceeds t_c; the squared-distance argmin wins, ties broken by
    lexicographic voxel index. Returns (point, snapped); an empty candidate
    set keeps the input point and reports snapped=False.
    """
    p = np.asarray(c_tilde, dtype=np.float64)
    w = _snap_window(r_hat)
    center = np.rint(p).astype(int)
    lo = np.maximum(center - w, 0)
    hi = np.minimum(center + w, np.asarray(centerline.shape) - 1)
    if np.any(hi < lo):
        return p, False
    sub = tuple(slice(l, h + 1) for l, h in zip(lo, hi))
    values = centerline[sub]
    local = np.argwhere(values > cfg.t_c)
    if len(local) == 0:
        return p, False
    vox = local + lo
    d2 = ((vox - p) ** 2).sum(axis=-1)
    order = np.lexsort(tuple(vox.T[::-1]) + (d2,))
    best = vox[order[0]]
    return best.astype(np.float64), True


def _clamp_radius(r: float, dims) -> float:
    diag = float(np.sqrt((np.asarray(dims, dtype=np.float64) ** 2).sum()))
    return min(max(r, 0.5), diag / 4.0)


def trace_branch(
    seed,
    provider: GridFeatureProvider,
    cfg: TraceConfig | None = None,
    visited: VisitedMap | None = None,
    initial_heading=None,
    exempt: frozenset[int] = frozenset(),
):
    """Trace one direction from a seed; returns (nodes, stamp_serials).

    ``nodes`` is an ordered list of CenterNodes starting at the seed, empty
    when the seed itself fails the boundary test. ``exempt`` lists visited
    stamps the revisit criterion must ignore (used by the reverse pass).
    """
    cfg = cfg or TraceConfig()
    visited = visited if visited is not None else VisitedMap(provider.dims)
    seed = np.asarray(seed, dtype=np.float64)

    resp = provider.query(FeatureQuery(position=seed))
    if resp.out_of_bounds or resp.boundary_prob <= cfg.t_b:
        return [], []

    seed_radius = _clamp_radius(resp.radius, provider.dims)
    positions = [seed]
    nodes = [CenterNode(position=seed, radius=seed_radius)]
    serials = [visited.stamp(seed, max(cfg.revisit_radius, seed_radius))]
    prev_dir = initial_heading

    for _ in range(cfg.max_steps):
        current = positions[-1]
        try:
            xi = decode(resp.direction, provider.bins)
        except DegenerateDirectionError:
            break
        if prev_dir is not None:
            xi = resolve_sign(xi, prev_dir)
        r_hat = _clamp_radius(resp.radius, provider.dims)
        if cfg.use_geometry_step:
            c_tilde = current + r_hat * xi
        else:
            heading = prev_dir if prev_dir is not None else xi
            c_tilde = current + cfg.inertial_step_length * heading
        if cfg.use_snapping:
            c_hat, _snapped = snap(c_tilde, provider.centerline, r_hat, cfg)
        else:
            c_hat = c_tilde
        if float(((c_hat - current) ** 2).sum()) < 1e-18:
            c_hat = c_tilde  # zero-progress snap: fall back to the geometry step
        if not in_bounds(c_hat, provider.dims):
            break
        history = tuple(positions[-cfg.history_len:])
        resp_next = provider.query(FeatureQuery(position=c_hat, history=history))
        if resp_next.out_of_bounds or resp_next.boundary_prob <= cfg.t_b:
            break
        stamp = visited.lookup(voxel_of(c_hat))
        if stamp is not None and stamp not in exempt and stamp not in serials[-_RECENT_EXEMPT:]:
            break
        prev_dir = normalize(c_hat - current)
        r_next = _clamp_radius(resp_next.radius, provider.dims)
        positions.append(c_hat)
        nodes.append(CenterNode(position=c_hat, radius=r_next))
        serials.append(visited.stamp(c_hat, max(cfg.revisit_radius, r_next), prev=current))
        resp = resp_next
    return nodes, serials


def generate_seeds(provider: GridFeatureProvider, cfg: TraceConfig | None = None):
    """Candidate seed points: voxel centers above t_c, strongest first.

    Sorted by descending centerline probability, ties by voxel index, so the
    emission order is a total order. Coverage-based skipping happens during
    trace_all as traces accumulate.
    """
    cfg = cfg or TraceConfig()
    idx = np.argwhere(provider.centerline > cfg.t_c)
    if len(idx) == 0:
        return []
    vals = provider.centerline[tuple(idx.T)]
    order = np.lexsort(tuple(idx.T[::-1]) + (-vals,))
    return [idx[i].astype(np.float64) for i in order]


def trace_all(provider: GridFeatureProvider, cfg: TraceConfig | None = None) -> BranchForest:
    """Reconstruct every branch reachable from centerline seeds.

    Each surviving seed is traced along the provider direction and its
    negation, the two halves are concatenated, and runs shorter than
    min_branch_nodes are dropped. A shared visited map prevents re-tracing.
    """
    cfg = cfg or TraceConfig()
    visited = VisitedMap(provider.dims)
    branches: list[Branch] = []
    for seed in generate_seeds(provider, cfg):
        if visited.covers(seed):
            continue
        resp = provider.query(FeatureQuery(position=seed))
        if resp.out_of_bounds or resp.boundary_prob <= cfg.t_b:
            continue
        try:
            heading = decode(resp.direction, provider.bins)
        except DegenerateDirectionError:
            continue
        fwd, fwd_serials = trace_branch(
            seed, provider, cfg, visited=visited, initial_heading=heading
        )
        if not fwd:
            continue
        nodes = fwd
        if cfg.bidirectional:
            bwd, _ = trace_branch(
                seed,
                provider,
                cfg,
                visited=visited,
                initial_heading=-heading,
                exempt=frozenset(fwd_serials[:_SEED_EXEMPT]),
            )
            if len(bwd) > 1:
                nodes = bwd[:0:-1] + fwd
        if len(nodes) >= cfg.min_branch_nodes:
            branches.append(Branch(nodes=nodes))
    return BranchForest(branches=branches)
