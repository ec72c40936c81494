"""Reference loss functions for branch attribute estimation.

These are pure numpy evaluations used to validate feature providers, label
generation, and externally produced prediction grids. No gradients, no
training loop; any external trainer can check itself against these.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .direction import BinScheme, DirectionDistribution, decode_expectation, encode
from .grid import Grid

__all__ = [
    "LossWeights",
    "weighted_bce",
    "class_loss",
    "sim_loss",
    "direction_loss",
    "radius_loss",
    "geo_loss",
    "img_loss",
    "total_loss",
]

#: probability clamp applied inside every log term
EPS = 1e-7


class LossError(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    """Balancing weights; defaults follow the reference hyperparameters."""

    lambda_d: float = 1.0
    lambda_r: float = 100.0
    lambda_c: float = 1.0
    lambda_b: float = 1.0
    w_c: float = 0.9
    w_b: float = 0.9

    def __post_init__(self):
        for name in ("lambda_d", "lambda_r", "lambda_c", "lambda_b"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise LossError(f"{name} must be finite and non-negative, got {v}")
        for name in ("w_c", "w_b"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise LossError(f"{name} must lie in (0, 1), got {v}")


def _values(x) -> np.ndarray:
    if isinstance(x, Grid):
        return x.values
    return np.asarray(x, dtype=np.float64)


def weighted_bce(pred, label, w: float) -> float:
    """Foreground-weighted binary cross entropy, averaged over voxels.

    ``pred`` holds probabilities in [0, 1], ``label`` is binary; the weight w
    scales the foreground term and (1 - w) the background term.
    """
    p = _values(pred).astype(np.float64)
    y = _values(label).astype(np.float64)
    if p.shape != y.shape:
        raise LossError(f"shape mismatch: pred {p.shape} vs label {y.shape}")
    if not (0.0 < w < 1.0):
        raise LossError(f"weight must lie in (0, 1), got {w}")
    p = np.clip(p, EPS, 1.0 - EPS)
    terms = w * y * np.log(p) + (1.0 - w) * (1.0 - y) * np.log(1.0 - p)
    return float(-terms.mean())


def class_loss(pred: DirectionDistribution, target_rows) -> float:
    """Mean over components of cross entropy between softmax(logits) and one-hot."""
    t = np.asarray(target_rows, dtype=np.float64)
    if t.shape != pred.logits.shape:
        raise LossError(f"shape mismatch: target {t.shape} vs logits {pred.logits.shape}")
    z = pred.logits - pred.logits.max(axis=-1, keepdims=True)
    log_softmax = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    probs = np.clip(np.exp(log_softmax), EPS, 1.0 - EPS)
    return float(-(t * np.log(probs)).sum(axis=-1).mean())


def sim_loss(xi, xi_hat_raw) -> float:
    """Sign-invariant cosine disparity: 1 - |cos(xi, xi_hat)|, in [0, 1]."""
    a = np.asarray(xi, dtype=np.float64)
    b = np.asarray(xi_hat_raw, dtype=np.float64)
    na = float(np.sqrt((a * a).sum()))
    nb = float(np.sqrt((b * b).sum()))
    if na < 1e-12 or nb < 1e-12:
        raise LossError("sim_loss requires two nonzero vectors")
    cos = float((a * b).sum()) / (na * nb)
    return 1.0 - min(abs(cos), 1.0)


def direction_loss(xi, pred: DirectionDistribution, scheme: BinScheme) -> float:
    """Bin classification loss plus cosine similarity loss of the decoded vector.

    A degenerate decode (near-zero expectation) contributes the maximal
    similarity penalty 1.0 so the total stays finite.
    """
    cls = class_loss(pred, encode(xi, scheme))
    raw = decode_expectation(pred, scheme)
    norm = float(np.sqrt((raw * raw).sum()))
    if norm < 1e-6:
        sim = 1.0
    else:
        sim = sim_loss(xi, raw)
    return cls + sim


def radius_loss(r: float, r_hat: float) -> float:
    """Squared radius error."""
    return float((r - r_hat) ** 2)


def geo_loss(direction: float, radius: float, w: LossWeights) -> float:
    """Weighted geometric term: lambda_d * direction + lambda_r * radius."""
    return w.lambda_d * direction + w.lambda_r * radius


def img_loss(centerline: float, boundary: float, w: LossWeights) -> float:
    """Weighted image term: lambda_c * centerline + lambda_b * boundary."""
    return w.lambda_c * centerline + w.lambda_b * boundary


def total_loss(geo_terms, img_terms) -> float:
    """Sum over points of per-point geometric and image terms."""
    g = np.asarray(geo_terms, dtype=np.float64)
    m = np.asarray(img_terms, dtype=np.float64)
    if g.shape != m.shape:
        raise LossError(f"shape mismatch: geo {g.shape} vs img {m.shape}")
    return float((g + m).sum())
