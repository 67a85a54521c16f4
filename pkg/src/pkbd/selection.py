"""Poisson-kernel quadratic distance between the data and a fitted mixture,
the distance-vs-M profile, and elbow rules for picking the number of clusters.

With the Poisson kernel K_beta and PKBD components, every integral against
the fitted mixture collapses by the convolution identity
int K_a(x, y) K_b(y, z) dsigma(y) = K_{ab}(x, z), so the distance is a finite
sum of kernel evaluations.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .densities import MixtureModel, log_poisson_kernel_t, poisson_kernel_diagonal
from .em import FitConfig, aic, bic, fit
from .errors import InvalidParameter, NoElbowWarning, NoiseComponentUnsupported, TooFewEntries
from .rng import RngLike, resolve_rng
from .sphere import as_points

Variant = Literal["as_printed", "full_cross"]

BLOCK_ROWS = 512
FLAT_RATIO = 10.0
DEFAULT_RULE = "scaled_change"


@dataclass
class ProfileEntry:
    m: int
    distance: float
    loglik: float
    aic: float = float("nan")
    bic: float = float("nan")


@dataclass
class DistanceProfile:
    beta: float
    entries: list[ProfileEntry]
    estimated_m: int
    rule: str
    no_elbow: bool = False
    alternative: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise InvalidParameter("beta must lie in (0, 1)")
        ms = [e.m for e in self.entries]
        if ms != sorted(set(ms)):
            raise ValueError("profile entries must have distinct, ascending M")

    @property
    def ms(self) -> np.ndarray:
        return np.array([e.m for e in self.entries])

    @property
    def distances(self) -> np.ndarray:
        return np.array([e.distance for e in self.entries])


def kernel_mean(points: np.ndarray, beta: float, block_rows: int = BLOCK_ROWS) -> float:
    """(1/n^2) sum_i sum_j K_beta(x_i, x_j), diagonal included.

    Row blocks are reduced with numpy's pairwise sum and the block partial
    sums combined with ``math.fsum`` in a fixed order.
    """
    n, d = points.shape
    partial = []
    for start in range(0, n, block_rows):
        block = points[start : start + block_rows]
        k = np.exp(log_poisson_kernel_t(block @ points.T, beta, d))
        partial.append(float(np.sum(k)))
    return math.fsum(partial) / (n * n)


def quadratic_distance(data, model: MixtureModel, beta: float, variant: Variant = "full_cross") -> float:
    """Empirical quadratic distance D_{K_beta}(F_n, G).

    ``as_printed``: the fitted-model self term is sum_k pi_k K_{beta rho_k^2}(mu_k, mu_k).
    ``full_cross``: it is the full double sum sum_k sum_l pi_k pi_l K_{beta rho_k rho_l}(mu_k, mu_l).
    The two agree for a single component.
    """
    if not 0.0 < beta < 1.0:
        raise InvalidParameter(f"beta must lie in (0, 1), got {beta}")
    if model.has_noise:
        raise NoiseComponentUnsupported("distance is only defined for noise-free mixtures")
    pts = as_points(data)
    n, d = pts.shape
    pi, mus, rhos = model.weights, model.mus, model.rhos

    term1 = kernel_mean(pts, beta)
    cross = np.exp(log_poisson_kernel_t(pts @ mus.T, (beta * rhos)[None, :], d))
    term2 = 2.0 * math.fsum(pi * cross.sum(axis=0)) / n
    if variant == "as_printed":
        term3 = math.fsum(pi * poisson_kernel_diagonal(beta * rhos**2, d))
    elif variant == "full_cross":
        gam = beta * np.outer(rhos, rhos)
        kk = np.exp(log_poisson_kernel_t(mus @ mus.T, gam, d))
        term3 = math.fsum((np.outer(pi, pi) * kk).ravel())
    else:
        raise InvalidParameter(f"unknown variant {variant!r}")
    return term1 - term2 + term3


def _relative_drop(ms, ds, tau, eps):
    for i in range(len(ds) - 1):
        if (ds[i] - ds[i + 1]) / max(ds[i], eps) < tau:
            return int(ms[i]), True
    return int(ms[-1]), False


def _scaled_change(ms, ds, tau, flat_ratio):
    # A profile whose largest value is within flat_ratio of its smallest has no
    # structure worth splitting on, so the smallest M is returned.
    lo = float(np.min(ds))
    if lo > 0 and float(np.max(ds)) < flat_ratio * lo:
        return int(ms[0]), True
    top = -np.inf
    for i in range(len(ds) - 1):
        top = max(top, ds[i])
        if abs(ds[i] - ds[i + 1]) < tau * top:
            return int(ms[i]), True
    return int(ms[-1]), False


def _max_second_difference(ms, ds):
    curv = ds[:-2] - 2.0 * ds[1:-1] + ds[2:]
    return int(ms[1 + int(np.argmax(curv))])


def estimate_k(
    entries,
    rule: str = "relative_drop",
    tau: float = 0.1,
    eps: float = 1e-15,
    flat_ratio: float = FLAT_RATIO,
) -> int:
    """First elbow of a distance profile.

    ``entries`` is a sequence of ProfileEntry or (M, distance) pairs.

    relative_drop: smallest M with (D_M - D_{M+1}) / max(D_M, eps) < tau.
    A rise counts as a small drop, so a profile that climbs from M=1 to M=2
    stops at 1.

    scaled_change: smallest M with |D_M - D_{M+1}| < tau * max_{m<=M} D_m,
    so changes are judged against the height the profile has reached rather
    than the current value.  A profile with max/min below ``flat_ratio``
    returns its smallest M.

    Both return the largest M with a NoElbowWarning when nothing qualifies.
    max_second_difference: interior M maximizing D_{M-1} - 2 D_M + D_{M+1}.
    """
    pairs = [(e.m, e.distance) if isinstance(e, ProfileEntry) else tuple(e)[:2] for e in entries]
    if len(pairs) < 3:
        raise TooFewEntries(f"need at least 3 profile entries, got {len(pairs)}")
    pairs.sort()
    ms = np.array([p[0] for p in pairs])
    ds = np.array([p[1] for p in pairs], dtype=float)
    if rule == "relative_drop":
        m, found = _relative_drop(ms, ds, tau, eps)
        if not found:
            warnings.warn("no elbow found; returning the largest M", NoElbowWarning, stacklevel=2)
        return m
    if rule == "scaled_change":
        m, found = _scaled_change(ms, ds, tau, flat_ratio)
        if not found:
            warnings.warn("no elbow found; returning the largest M", NoElbowWarning, stacklevel=2)
        return m
    if rule == "max_second_difference":
        return _max_second_difference(ms, ds)
    raise InvalidParameter(f"unknown elbow rule {rule!r}")


def distance_profile(
    data,
    m_max: int,
    beta: float = 0.1,
    fit_config: FitConfig = FitConfig(),
    rng: RngLike = None,
    variant: Variant = "full_cross",
    rule: str = DEFAULT_RULE,
    tau: float = 0.1,
    m_min: int = 1,
) -> DistanceProfile:
    """Fit M = m_min..m_max (no noise component) and record distance and log-likelihood."""
    if m_max < 2:
        raise InvalidParameter("m_max must be >= 2")
    pts = as_points(data)
    n, d = pts.shape
    gen, _ = resolve_rng(rng)
    streams = gen.spawn(m_max - m_min + 1)
    entries = []
    for m, stream in zip(range(m_min, m_max + 1), streams):
        res = fit(pts, m, with_noise=False, config=fit_config, rng=stream)
        entries.append(
            ProfileEntry(
                m=m,
                distance=quadratic_distance(pts, res.model, beta, variant),
                loglik=res.loglik,
                aic=aic(res.loglik, m, d),
                bic=bic(res.loglik, m, d, n),
            )
        )
    ms = np.array([e.m for e in entries])
    ds = np.array([e.distance for e in entries])
    no_elbow = False
    alternative = {}
    if len(entries) >= 3:
        if rule == "relative_drop":
            est, found = _relative_drop(ms, ds, tau, 1e-15)
            no_elbow = not found
        elif rule == "scaled_change":
            est, found = _scaled_change(ms, ds, tau, FLAT_RATIO)
            no_elbow = not found
        else:
            est = estimate_k(entries, rule, tau)
        alternative["max_second_difference"] = _max_second_difference(ms, ds)
    else:
        est = int(ms[int(np.argmin(ds))])
    return DistanceProfile(beta, entries, est, rule, no_elbow, alternative)
