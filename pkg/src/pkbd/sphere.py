"""Geometry primitives on the unit hypersphere S^{d-1}.

Points are plain float64 numpy arrays; a batch of n points is an (n, d)
array.  The :class:`Dataset` container is the validated ingestion boundary.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import DimensionMismatch, InvalidDimension, ZeroVector

UNIT_TOL = 1e-10
RENORMALIZE_TOL = 1e-6
ZERO_NORM = 1e-300


def normalize(v) -> np.ndarray:
    """Scale a vector (or each row of a matrix) to unit Euclidean norm."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] < 2:
        raise InvalidDimension(f"dimension must be >= 2, got {v.shape[-1]}")
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    bad = norms[..., 0] <= ZERO_NORM
    if np.any(bad):
        rows = np.flatnonzero(np.atleast_1d(bad))
        raise ZeroVector(f"zero-norm vector(s) at rows {rows.tolist()}", rows=rows)
    return v / norms


def log_surface_area(d: int) -> float:
    if d < 2:
        raise InvalidDimension(f"dimension must be >= 2, got {d}")
    return float(np.log(2.0) + 0.5 * d * np.log(np.pi) - gammaln(0.5 * d))


def surface_area(d: int) -> float:
    """Area of S^{d-1}: 2 pi^{d/2} / Gamma(d/2)."""
    return float(np.exp(log_surface_area(d)))


def dot(x, y) -> np.ndarray | float:
    """Inner product clamped to [-1, 1]; broadcasts over leading axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != y.shape[-1]:
        raise DimensionMismatch(f"dimensions differ: {x.shape[-1]} vs {y.shape[-1]}")
    out = np.clip(np.sum(x * y, axis=-1), -1.0, 1.0)
    return float(out) if out.ndim == 0 else out


def is_unit(v, tol: float = UNIT_TOL) -> bool:
    v = np.asarray(v, dtype=float)
    return bool(np.all(np.abs(np.linalg.norm(v, axis=-1) - 1.0) <= tol))


def random_rotation(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian matrix)."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def householder_to(mu: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Map points expressed around e_1 to points around ``mu``.

    Uses the reflection that swaps e_1 and mu, so x.e_1 == (Hx).mu.
    """
    mu = np.asarray(mu, dtype=float)
    e1 = np.zeros_like(mu)
    e1[0] = 1.0
    u = e1 - mu
    nu = np.linalg.norm(u)
    if nu < 1e-12:
        return points
    u /= nu
    return points - 2.0 * np.outer(points @ u, u)


@dataclass(frozen=True)
class Dataset:
    """n points on S^{d-1} with optional labels.

    Rows within ``RENORMALIZE_TOL`` of unit norm are silently re-normalized;
    anything further off is rejected so that raw data has to go through
    :meth:`from_raw` explicitly.
    """

    points: np.ndarray
    labels: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim == 1:
            pts = pts[None, :]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("points must be a non-empty (n, d) array")
        if pts.shape[1] < 2:
            raise InvalidDimension(f"dimension must be >= 2, got {pts.shape[1]}")
        norms = np.linalg.norm(pts, axis=1)
        off = np.abs(norms - 1.0)
        if np.any(off > RENORMALIZE_TOL):
            bad = np.flatnonzero(off > RENORMALIZE_TOL)
            raise ValueError(f"rows {bad[:10].tolist()} are not unit vectors; use Dataset.from_raw")
        pts /= norms[:, None]
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (pts.shape[0],):
                raise ValueError("labels must have one entry per point")
            labels = labels.copy()
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @classmethod
    def from_raw(cls, rows, labels=None) -> "Dataset":
        """Project arbitrary nonzero rows onto the sphere."""
        return cls(normalize(np.atleast_2d(np.asarray(rows, dtype=float))), labels)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n


def as_points(data: Dataset | np.ndarray | Sequence) -> np.ndarray:
    if isinstance(data, Dataset):
        return data.points
    return np.atleast_2d(np.asarray(data, dtype=float))
