"""Labelled synthetic data: spherical mixtures with controlled centroid
geometry, and LDA-style text corpora projected onto the sphere."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from .densities import PkbdComponent, VmfComponent
from .errors import InvalidParameter
from .rng import RngLike, resolve_rng
from .samplers import _uniform_points, sample_pkbd, sample_vmf
from .sphere import Dataset, normalize

Kind = Literal["pkbd", "vmf", "uniform"]

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class ComponentSpec:
    kind: Kind
    weight: float
    mu: Optional[np.ndarray] = None
    concentration: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("pkbd", "vmf", "uniform"):
            raise InvalidParameter(f"unknown component kind {self.kind!r}")
        if not self.weight > 0:
            raise InvalidParameter("component weight must be positive")
        if self.kind != "uniform":
            if self.mu is None or self.concentration is None:
                raise InvalidParameter(f"{self.kind} component needs mu and a concentration")
            object.__setattr__(self, "mu", normalize(np.asarray(self.mu, dtype=float)))

    def dimension(self) -> Optional[int]:
        return None if self.mu is None else self.mu.size

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "weight": self.weight,
            "mu": None if self.mu is None else self.mu.tolist(),
            "concentration": self.concentration,
        }


@dataclass(frozen=True)
class LdaSpec:
    k_topics: int = 3
    vocab_size: int = 50
    avg_doc_size: float = 200.0
    n_docs: int = 100
    dirichlet_alpha: Optional[Sequence[float]] = None
    word_prior: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.k_topics < 1 or self.vocab_size < 2 or self.n_docs < 1 or not self.avg_doc_size > 0:
            raise InvalidParameter("LDA spec sizes must be positive (vocab_size >= 2)")
        alpha = (
            np.full(self.k_topics, 1.0 / 3.0)
            if self.dirichlet_alpha is None
            else np.asarray(self.dirichlet_alpha, dtype=float)
        )
        lam = (
            np.full(self.vocab_size, 1.0 / self.vocab_size)
            if self.word_prior is None
            else np.broadcast_to(np.asarray(self.word_prior, dtype=float), (self.vocab_size,)).copy()
        )
        if alpha.shape != (self.k_topics,):
            raise InvalidParameter("dirichlet_alpha must have k_topics entries")
        if np.any(alpha <= 0) or np.any(lam <= 0):
            raise InvalidParameter("Dirichlet parameters must be positive")
        object.__setattr__(self, "dirichlet_alpha", alpha)
        object.__setattr__(self, "word_prior", lam)

    def to_dict(self) -> dict:
        return {
            "k_topics": self.k_topics,
            "vocab_size": self.vocab_size,
            "avg_doc_size": self.avg_doc_size,
            "n_docs": self.n_docs,
            "dirichlet_alpha": self.dirichlet_alpha.tolist(),
            "word_prior": self.word_prior.tolist(),
        }


def _check_weights(spec: Sequence[ComponentSpec]) -> np.ndarray:
    if len(spec) == 0:
        raise InvalidParameter("mixture spec is empty")
    w = np.array([c.weight for c in spec], dtype=float)
    if abs(w.sum() - 1.0) > WEIGHT_TOL:
        raise InvalidParameter(f"component weights sum to {w.sum()!r}, not 1")
    return w


def sample_mixture(spec: Sequence[ComponentSpec], n: int, d: int, rng: RngLike = None) -> Dataset:
    """Draw n labelled points; label j means the point came from spec[j]."""
    w = _check_weights(spec)
    for c in spec:
        if c.dimension() not in (None, d):
            raise InvalidParameter(f"component dimension {c.dimension()} does not match d={d}")
    gen, _ = resolve_rng(rng)
    labels = gen.choice(len(spec), size=n, p=w / w.sum())
    points = np.empty((n, d))
    streams = gen.spawn(len(spec))
    for j, (c, stream) in enumerate(zip(spec, streams)):
        idx = np.flatnonzero(labels == j)
        if idx.size == 0:
            continue
        if c.kind == "uniform":
            points[idx] = _uniform_points(d, idx.size, stream)
        elif c.kind == "pkbd":
            points[idx] = sample_pkbd(PkbdComponent(c.mu, c.concentration), idx.size, stream).points
        else:
            points[idx] = sample_vmf(VmfComponent(c.mu, c.concentration), idx.size, stream).points
    return Dataset(points, labels)


def centroids_pair(a: float) -> tuple[np.ndarray, np.ndarray]:
    """(1,0,0) and (a,0,sqrt(1-a^2)): unit vectors whose cosine is a."""
    if not -1.0 <= a <= 1.0:
        raise InvalidParameter(f"a must lie in [-1, 1], got {a}")
    return np.array([1.0, 0.0, 0.0]), np.array([a, 0.0, math.sqrt(1.0 - a * a)])


def triple_cosine(a: float) -> float:
    return (2.0 * a * a - 1.0) / (2.0 * (a * a + 1.0))


def centroids_triple(a: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Three centroids on a cone around e3; pairwise cosine (2a^2-1)/(2(a^2+1)).

    Larger ``a`` tightens the cone (cosine -> 1); a -> 0 spreads the three
    directions 120 degrees apart on the equator (cosine -> -1/2).
    """
    if not a > 0 or not math.isfinite(a):
        raise InvalidParameter(f"a must be positive and finite, got {a}")
    r = 1.0 / a
    s = math.sqrt(3.0) / 2.0
    raw = np.array([[r, 0.0, 1.0], [-0.5 * r, s * r, 1.0], [-0.5 * r, -s * r, 1.0]])
    mus = normalize(raw)
    return mus[0], mus[1], mus[2]


def lda_counts(spec: LdaSpec, rng: RngLike = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Raw LDA term counts.

    Returns (counts (n_docs, v), theta (n_docs, k), B (k, v)).  B is drawn
    once per corpus; each document gets N ~ Poisson(xi) words (0 redrawn).
    Given theta, the word counts of a document are multinomial with
    probabilities theta @ B, which is what drawing a topic then a word per
    token amounts to.
    """
    gen, _ = resolve_rng(rng)
    B = gen.dirichlet(spec.word_prior, size=spec.k_topics)
    counts = np.zeros((spec.n_docs, spec.vocab_size), dtype=np.int64)
    theta = np.empty((spec.n_docs, spec.k_topics))
    for i in range(spec.n_docs):
        size = 0
        while size == 0:
            size = int(gen.poisson(spec.avg_doc_size))
        th = gen.dirichlet(spec.dirichlet_alpha)
        topics = gen.multinomial(size, th)
        for z, cnt in enumerate(topics):
            if cnt:
                counts[i] += gen.multinomial(cnt, B[z])
        theta[i] = th
    return counts, theta, B


def lda_corpus(spec: LdaSpec, rng: RngLike = None) -> Dataset:
    """LDA documents as unit-norm term-count vectors, labelled by argmax theta."""
    counts, theta, _ = lda_counts(spec, rng)
    return Dataset(normalize(counts.astype(float)), np.argmax(theta, axis=1))


def sparsity(points: np.ndarray) -> float:
    """Mean fraction of exactly-zero coordinates per row."""
    return float(np.mean(np.asarray(points) == 0.0))
