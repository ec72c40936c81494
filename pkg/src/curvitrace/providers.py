"""Branch attribute providers: the pluggable replacement for a trained network.

Every provider answers point queries with the four attributes the tracer
consumes: centerline probability, boundary probability, radius estimate, and
a binned direction distribution. Three constructions are available:

* oracle    - reads ground-truth labels and attribute fields,
* classical - distance-transform ridge + structure-tensor directions from an
              intensity image,
* file      - serves maps loaded from grid files (external network output).

Providers are immutable after construction; queries are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt, gaussian_filter, maximum_filter

from .direction import BinScheme, DirectionDistribution, encode, one_hot_logits
from .geometry import BranchForest, as_point, normalize
from .grid import Grid, in_bounds, sample_linear
from .raster import _bbox_points, _segment_bbox
from .synth import GroundTruthLabels

__all__ = [
    "FeatureQuery",
    "FeatureResponse",
    "ProviderError",
    "GridFeatureProvider",
    "build_oracle",
    "build_classical",
    "build_file",
    "ClassicalParams",
]

#: weight of the history mean in the optional direction smoothing
HISTORY_SMOOTHING_WEIGHT = 0.3


class ProviderError(ValueError):
    pass


@dataclass
class FeatureQuery:
    """A continuous query position plus up to history_len prior trace points
    (ordered oldest to newest)."""

    position: np.ndarray
    history: tuple = ()

    def __post_init__(self):
        self.position = as_point(self.position)
        self.history = tuple(as_point(p) for p in self.history)


@dataclass
class FeatureResponse:
    centerline_prob: float
    boundary_prob: float
    radius: float
    direction: DirectionDistribution
    out_of_bounds: bool = False


def _history_heading(history, position):
    """Mean unit step direction over the history polyline, or None."""
    pts = list(history) + [position]
    if len(pts) < 2:
        return None
    diffs = []
    for a, b in zip(pts, pts[1:]):
        d = np.asarray(b) - np.asarray(a)
        n = float(np.sqrt((d * d).sum()))
        if n > 1e-9:
            diffs.append(d / n)
    if not diffs:
        return None
    m = np.mean(diffs, axis=0)
    n = float(np.sqrt((m * m).sum()))
    return m / n if n > 1e-9 else None


class GridFeatureProvider:
    """Serves interpolated attribute maps; concrete builders fill the maps.

    Direction is held either as a (D, *dims) unit-vector field (encoded into
    bins per query, sign resolved against the travel history) or as a
    (J*K, *dims) logits field served as-is.
    """

    def __init__(
        self,
        centerline: np.ndarray,
        boundary: np.ndarray,
        radius_map: np.ndarray,
        direction_vectors: np.ndarray | None = None,
        direction_logits: np.ndarray | None = None,
        bins: BinScheme | None = None,
        history_smoothing: bool = False,
    ):
        self.centerline = np.asarray(centerline, dtype=np.float64)
        self.boundary = np.asarray(boundary, dtype=np.float64)
        self.radius_map = np.asarray(radius_map, dtype=np.float64)
        self.dims = self.centerline.shape
        self.bins = bins or BinScheme(K=64)
        self.history_smoothing = history_smoothing
        if self.boundary.shape != self.dims or self.radius_map.shape != self.dims:
            raise ProviderError("provider maps must share one shape")
        if (direction_vectors is None) == (direction_logits is None):
            raise ProviderError("exactly one of direction_vectors/direction_logits required")
        self.direction_vectors = direction_vectors
        self.direction_logits = direction_logits
        if direction_vectors is not None and direction_vectors.shape != (len(self.dims),) + self.dims:
            raise ProviderError(f"direction_vectors shape {direction_vectors.shape} mismatch")
        if direction_logits is not None:
            if direction_logits.shape[1:] != self.dims:
                raise ProviderError(f"direction_logits shape {direction_logits.shape} mismatch")
            if direction_logits.shape[0] != len(self.dims) * self.bins.K:
                raise ProviderError(
                    f"logits channels {direction_logits.shape[0]} != J*K = "
                    f"{len(self.dims) * self.bins.K}"
                )

    @property
    def dim(self) -> int:
        return len(self.dims)

    def _uniform_distribution(self) -> DirectionDistribution:
        return DirectionDistribution(logits=np.zeros((self.dim, self.bins.K)))

    def _nearest_direction_vector(self, p):
        """Unit vector at the nearest voxel; falls back to the closest nonzero
        voxel in a radius-2 window (deterministic tie-break), else None."""
        field = self.direction_vectors
        idx = np.rint(p).astype(int)
        idx = np.minimum(np.maximum(idx, 0), np.asarray(self.dims) - 1)
        v = field[(slice(None),) + tuple(idx)]
        if float((v * v).sum()) > 1e-12:
            return normalize(v)
        lo = np.maximum(idx - 2, 0)
        hi = np.minimum(idx + 2, np.asarray(self.dims) - 1)
        cands = _bbox_points(lo, hi).astype(int)
        vecs = field[(slice(None),) + tuple(cands.T)].T
        norms = (vecs * vecs).sum(axis=-1)
        ok = norms > 1e-12
        if not ok.any():
            return None
        cands, vecs = cands[ok], vecs[ok]
        d2 = ((cands - p) ** 2).sum(axis=-1)
        order = np.lexsort(tuple(cands.T[::-1]) + (d2,))
        return normalize(vecs[order[0]])

    def _direction(self, p, history) -> DirectionDistribution:
        if self.direction_logits is not None:
            idx = np.rint(p).astype(int)
            idx = np.minimum(np.maximum(idx, 0), np.asarray(self.dims) - 1)
            rows = self.direction_logits[(slice(None),) + tuple(idx)]
            return DirectionDistribution(logits=rows.reshape(self.dim, self.bins.K))
        v = self._nearest_direction_vector(p)
        if v is None:
            return self._uniform_distribution()
        h = _history_heading(history, p)
        if h is not None:
            if float((v * h).sum()) < 0.0:
                v = -v
            if self.history_smoothing:
                v = normalize((1.0 - HISTORY_SMOOTHING_WEIGHT) * v + HISTORY_SMOOTHING_WEIGHT * h)
        return one_hot_logits(encode(v, self.bins))

    def query(self, q: FeatureQuery) -> FeatureResponse:
        p = q.position
        if p.size != self.dim or not in_bounds(p, self.dims):
            return FeatureResponse(
                centerline_prob=0.0,
                boundary_prob=0.0,
                radius=1.0,
                direction=self._uniform_distribution(),
                out_of_bounds=True,
            )
        cl = float(np.clip(sample_linear(self.centerline, p), 0.0, 1.0))
        bd = float(np.clip(sample_linear(self.boundary, p), 0.0, 1.0))
        r = max(float(sample_linear(self.radius_map, p)), 1e-3)
        return FeatureResponse(
            centerline_prob=cl,
            boundary_prob=bd,
            radius=r,
            direction=self._direction(p, q.history),
        )


def _axis_distance_field(forest: BranchForest, dims, cap: float) -> np.ndarray:
    """Distance to the nearest centerline segment, computed out to ``cap``."""
    best = np.full(dims, cap, dtype=np.float64)
    for branch in forest:
        nodes = branch.nodes
        pairs = zip(nodes, nodes[1:]) if len(nodes) > 1 else [(nodes[0], nodes[0])]
        for a, b in pairs:
            box = _segment_bbox(a.position, b.position, cap, dims)
            if box is None:
                continue
            lo, hi = box
            pts = _bbox_points(lo, hi)
            d = b.position - a.position
            dd = float((d * d).sum())
            if dd == 0.0:
                diff = pts - a.position
            else:
                g = np.clip(((pts - a.position) * d).sum(-1) / dd, 0.0, 1.0)
                diff = pts - (a.position + g[:, None] * d)
            dist = np.sqrt((diff * diff).sum(-1))
            sub = tuple(slice(l, h + 1) for l, h in zip(lo, hi))
            np.minimum(best[sub], dist.reshape(tuple(hi - lo + 1)), out=best[sub])
    return best


#: axis distance below which the oracle centerline map saturates at 1; wide
#: enough that trilinear queries anywhere on the true axis read ~1, narrow
#: enough that the > 0.5 candidate sleeve stays about one voxel wide
_ORACLE_CORE = 1.3
#: cap on the off-core skirt so the candidate set ends exactly at the core
_ORACLE_SKIRT = 0.45


def build_oracle(
    forest: BranchForest,
    labels: GroundTruthLabels,
    bins: BinScheme | None = None,
    smoothing_sigma: float = 0.7,
    history_smoothing: bool = False,
) -> GridFeatureProvider:
    """Provider that reads the ground truth.

    The boundary map is the binary label with a Gaussian (sigma 0.7) skirt.
    The centerline map saturates at 1 inside a thin core around the true axis
    and drops below threshold outside it, emulating a sharply peaked network
    output: interpolated queries on the centerline read ~1 while the snap
    candidate set stays tight. Radius and direction come from the stored
    ground-truth attribute fields.
    """
    for name in ("centerline", "boundary", "radius_field", "direction_field"):
        if getattr(labels, name, None) is None:
            raise ProviderError(f"labels missing field {name!r}")
    dims = labels.centerline.dims
    cl_label = labels.centerline.values.astype(np.float64)
    bd_label = labels.boundary.values.astype(np.float64)
    skirt = np.minimum(gaussian_filter(cl_label, smoothing_sigma), _ORACLE_SKIRT)
    centerline = np.maximum(skirt, cl_label * _ORACLE_SKIRT)
    if forest.branches:
        axis_dist = _axis_distance_field(forest, dims, cap=_ORACLE_CORE + 1.0)
        centerline = np.where(axis_dist <= _ORACLE_CORE, 1.0, centerline)
    boundary = np.maximum(gaussian_filter(bd_label, smoothing_sigma), bd_label)
    return GridFeatureProvider(
        centerline=centerline,
        boundary=boundary,
        radius_map=labels.radius_field.values,
        direction_vectors=labels.direction_field.values.astype(np.float64),
        bins=bins,
        history_smoothing=history_smoothing,
    )


@dataclass(frozen=True)
class ClassicalParams:
    """Knobs of the filter pipeline standing in for a trained network."""

    sigma_smooth: float = 1.0
    fg_threshold_scale: float = 0.5
    boundary_sigma: float = 1.0
    tensor_sigma: float = 1.0


def _structure_tensor_directions(smoothed: np.ndarray, sigma: float) -> np.ndarray:
    """Per-voxel eigenvector of the smallest structure-tensor eigenvalue.

    Intensity varies least along the tube, so this eigenvector tracks the
    local axis. The tensor is averaged over a 3^D Gaussian window.
    """
    D = smoothed.ndim
    grads = np.gradient(smoothed)
    tensor = np.empty(smoothed.shape + (D, D))
    for i in range(D):
        for j in range(i, D):
            # truncate=1.0 keeps the averaging kernel 3 voxels wide
            smoothed_prod = gaussian_filter(grads[i] * grads[j], sigma, truncate=1.0)
            tensor[..., i, j] = smoothed_prod
            tensor[..., j, i] = smoothed_prod
    _, vecs = np.linalg.eigh(tensor)
    axes = vecs[..., :, 0]
    return np.moveaxis(axes, -1, 0)


def build_classical(
    intensity: Grid | np.ndarray,
    params: ClassicalParams | None = None,
    bins: BinScheme | None = None,
    history_smoothing: bool = True,
) -> GridFeatureProvider:
    """Classical filter provider: ridge-ness from the distance transform,
    boundary from a soft foreground mask, directions from the structure tensor."""
    params = params or ClassicalParams()
    img = intensity.values if isinstance(intensity, Grid) else np.asarray(intensity)
    img = img.astype(np.float64)
    if img.min() < -1e-6 or img.max() > 1.0 + 1e-6:
        raise ProviderError(f"intensity must lie in [0,1], got [{img.min()}, {img.max()}]")
    smoothed = gaussian_filter(img, params.sigma_smooth)
    peak = float(smoothed.max())
    mask = smoothed > params.fg_threshold_scale * peak if peak > 0 else np.zeros_like(smoothed, bool)
    dt = distance_transform_edt(mask)
    local_max = maximum_filter(dt, size=3)
    with np.errstate(invalid="ignore", divide="ignore"):
        ridge = np.where(local_max > 0, dt / np.maximum(local_max, 1e-12), 0.0)
    centerline = np.where(mask, np.clip(ridge, 0.0, 1.0), 0.0)
    boundary = np.clip(gaussian_filter(mask.astype(np.float64), params.boundary_sigma), 0.0, 1.0)
    directions = _structure_tensor_directions(smoothed, params.tensor_sigma)
    return GridFeatureProvider(
        centerline=centerline,
        boundary=boundary,
        radius_map=dt.astype(np.float64),
        direction_vectors=directions,
        bins=bins,
        history_smoothing=history_smoothing,
    )


def _load_prob_map(path: str) -> np.ndarray:
    from .gridio import grid_read

    grid = grid_read(path)
    values = grid.values.astype(np.float64)
    if grid.channels != 1:
        raise ProviderError(f"{path}: probability map must be single-channel")
    lo, hi = float(values.min()), float(values.max())
    if lo < -1e-6 or hi > 1.0 + 1e-6:
        raise ProviderError(f"{path}: values outside [0,1] (min {lo}, max {hi})")
    return np.clip(values, 0.0, 1.0)


def build_file(
    centerline_path: str,
    boundary_path: str,
    radius_path: str,
    direction_path: str,
    bins: BinScheme | None = None,
    history_smoothing: bool = False,
) -> GridFeatureProvider:
    """Provider backed by grid files (the interchange point for any external
    model). Direction may be a D-channel unit-vector field (encoded per query)
    or a J*K-channel logits field (served as-is)."""
    from .gridio import grid_read

    bins = bins or BinScheme(K=64)
    centerline = _load_prob_map(centerline_path)
    boundary = _load_prob_map(boundary_path)
    radius_grid = grid_read(radius_path)
    radius = radius_grid.values.astype(np.float64)
    if radius_grid.channels != 1:
        raise ProviderError(f"{radius_path}: radius map must be single-channel")
    if float(radius.min()) < 0:
        raise ProviderError(f"{radius_path}: negative radius (min {float(radius.min())})")
    direction_grid = grid_read(direction_path)
    D = centerline.ndim
    shapes = {
        centerline_path: centerline.shape,
        boundary_path: boundary.shape,
        radius_path: radius.shape,
        direction_path: direction_grid.dims,
    }
    if len(set(shapes.values())) != 1:
        raise ProviderError(f"dimension mismatch across provider maps: {shapes}")
    dvalues = direction_grid.values.astype(np.float64)
    if direction_grid.channels == D:
        return GridFeatureProvider(
            centerline=centerline,
            boundary=boundary,
            radius_map=radius,
            direction_vectors=dvalues,
            bins=bins,
            history_smoothing=history_smoothing,
        )
    if direction_grid.channels == D * bins.K:
        return GridFeatureProvider(
            centerline=centerline,
            boundary=boundary,
            radius_map=radius,
            direction_logits=dvalues,
            bins=bins,
            history_smoothing=history_smoothing,
        )
    raise ProviderError(
        f"{direction_path}: {direction_grid.channels} channels is neither D={D} "
        f"(vector field) nor J*K={D * bins.K} (logits field)"
    )
