"""Per-component direction binning: encode unit vectors into K-bin classes and
decode bin distributions back to vectors via softmax expectation.

Each of the J spatial components is binned independently over [-1, 1]. Bin
membership follows the half-open convention [edge_k, edge_k+1) with the last
bin closed at +1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import as_unit_vector

__all__ = [
    "BinScheme",
    "DirectionDistribution",
    "DegenerateDirectionError",
    "encode",
    "decode",
    "decode_expectation",
    "resolve_sign",
    "one_hot_logits",
]

#: logit magnitude that makes a one-hot row effectively certain under softmax
ONE_HOT_LOGIT_SCALE = 40.0


class DegenerateDirectionError(ValueError):
    """Decoded expectation is (near-)zero and carries no direction."""


@dataclass(frozen=True)
class BinScheme:
    """Uniform K-bin partition of [-1, 1] per vector component."""

    K: int = 5
    bin_edges: np.ndarray = field(init=False, repr=False)
    bin_centers: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"bin count must be positive, got {self.K}")
        object.__setattr__(self, "bin_edges", np.linspace(-1.0, 1.0, self.K + 1))
        centers = -1.0 + (2.0 * np.arange(1, self.K + 1) - 1.0) / self.K
        object.__setattr__(self, "bin_centers", centers)

    def bin_index(self, x: float) -> int:
        """0-based bin of a component value in [-1, 1]; +1 falls in the last bin."""
        k = int(np.floor((x + 1.0) * 0.5 * self.K))
        return min(max(k, 0), self.K - 1)


@dataclass
class DirectionDistribution:
    """J x K logits, one row of bin scores per spatial component."""

    logits: np.ndarray

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        if self.logits.ndim != 2 or self.logits.shape[0] not in (2, 3):
            raise ValueError(f"logits must be (J, K) with J in {{2,3}}, got {self.logits.shape}")
        if not np.all(np.isfinite(self.logits)):
            raise ValueError("logits contain non-finite values")

    @property
    def J(self) -> int:
        return self.logits.shape[0]

    @property
    def K(self) -> int:
        return self.logits.shape[1]


def _softmax(rows: np.ndarray) -> np.ndarray:
    z = rows - rows.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def encode(xi, scheme: BinScheme) -> np.ndarray:
    """One-hot (J, K) target rows for a unit direction vector."""
    xi = as_unit_vector(xi)
    rows = np.zeros((xi.size, scheme.K))
    for j, x in enumerate(xi):
        rows[j, scheme.bin_index(float(x))] = 1.0
    return rows


def one_hot_logits(rows: np.ndarray, scale: float = ONE_HOT_LOGIT_SCALE) -> DirectionDistribution:
    """Lift one-hot target rows to logits whose softmax is one-hot to ~1e-17."""
    return DirectionDistribution(logits=np.asarray(rows, dtype=np.float64) * scale)


def decode_expectation(dist: DirectionDistribution, scheme: BinScheme) -> np.ndarray:
    """Raw per-component expectation of bin centers under softmax(logits)."""
    if dist.K != scheme.K:
        raise ValueError(f"distribution has {dist.K} bins, scheme has {scheme.K}")
    return _softmax(dist.logits) @ scheme.bin_centers


def decode(dist: DirectionDistribution, scheme: BinScheme) -> np.ndarray:
    """Unit direction from a bin distribution.

    Raises DegenerateDirectionError when the raw expectation norm is < 1e-6
    (e.g. uniform logits), since no direction can be recovered.
    """
    raw = decode_expectation(dist, scheme)
    norm = float(np.sqrt((raw * raw).sum()))
    if norm < 1e-6:
        raise DegenerateDirectionError(f"expectation norm {norm:.2e} carries no direction")
    return raw / norm


def resolve_sign(xi_hat, reference) -> np.ndarray:
    """Orient xi_hat to agree with a reference direction.

    Returns xi_hat when xi_hat . reference >= 0, else -xi_hat; an exactly
    perpendicular pair keeps xi_hat (deterministic tie-break).
    """
    xi_hat = as_unit_vector(xi_hat)
    reference = as_unit_vector(reference)
    return xi_hat if float((xi_hat * reference).sum()) >= 0.0 else -xi_hat
