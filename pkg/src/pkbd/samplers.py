"""Random generation on the sphere: uniform, von Mises-Fisher and PKBD.

PKBD draws use exact inversion on the circle and accept/reject with either
a vMF or a uniform envelope in higher dimensions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .densities import PkbdComponent, VmfComponent, log_poisson_kernel_t, log_vmf_normalizer
from .errors import EfficiencyTooLow, InvalidDimension, InvalidParameter
from .rng import RngLike, resolve_rng
from .sphere import householder_to, log_surface_area

Envelope = Literal["vmf", "uniform"]

MIN_EFFICIENCY = 1e-6
PROPOSAL_CAP_FACTOR = 10_000


@dataclass(frozen=True)
class SampleBatch:
    points: np.ndarray
    proposals_used: int
    seed: Optional[int]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def acceptance_rate(self) -> float:
        return self.n / self.proposals_used if self.proposals_used else float("nan")


@dataclass(frozen=True)
class EnvelopeConstants:
    kappa_rho: float
    m_rho: float
    efficiency: float
    log_m_rho: float


def _check_rho(rho):
    if not 0.0 < rho < 1.0:
        raise InvalidParameter(f"rho must lie in (0, 1), got {rho}")


def _check_d(d):
    if d < 2:
        raise InvalidDimension(f"dimension must be >= 2, got {d}")


def _uniform_points(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def sample_uniform(d: int, n: int, rng: RngLike = None) -> SampleBatch:
    _check_d(d)
    gen, seed = resolve_rng(rng)
    return SampleBatch(_uniform_points(d, n, gen), n, seed)


# -- von Mises-Fisher (Wood 1994 / Ulrich tangent-normal construction) -----


def _vmf_cosines(kappa: float, d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n values of t = x.mu under vMF(kappa) on S^{d-1}."""
    m1 = d - 1.0
    b = m1 / (2.0 * kappa + math.sqrt(4.0 * kappa * kappa + m1 * m1))
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + m1 * math.log1p(-x0 * x0) if x0 < 1 else 0.0
    out = np.empty(n)
    filled = 0
    while filled < n:
        k = max(16, int(1.3 * (n - filled)))
        z = rng.beta(0.5 * m1, 0.5 * m1, size=k)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.random(k)
        ok = kappa * w + m1 * np.log1p(-x0 * w) - c >= np.log(u)
        got = w[ok][: n - filled]
        out[filled : filled + got.size] = got
        filled += got.size
    return out


def _around_mu(t: np.ndarray, mu: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Assemble points with prescribed cosines t to mu, uniform tangent part."""
    d = mu.size
    n = t.size
    if d == 2:
        tangent = rng.choice([-1.0, 1.0], size=(n, 1))
    else:
        tangent = _uniform_points(d - 1, n, rng)
    s = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    pts = np.hstack([t[:, None], s[:, None] * tangent])
    return householder_to(mu, pts)


def _vmf_points(mu: np.ndarray, kappa: float, n: int, rng: np.random.Generator) -> np.ndarray:
    if kappa == 0.0:
        return _uniform_points(mu.size, n, rng)
    return _around_mu(_vmf_cosines(kappa, mu.size, n, rng), mu, rng)


def sample_vmf(c: VmfComponent, n: int, rng: RngLike = None) -> SampleBatch:
    gen, seed = resolve_rng(rng)
    return SampleBatch(_vmf_points(c.mu, c.kappa, n, gen), n, seed)


# -- circle: exact inversion -------------------------------------------------


def pkbd_cdf_circle(theta, rho: float):
    """CDF of the angle (measured from the mode) of the d=2 PKBD.

    The arctangent form is only valid on [0, pi); the other half follows by
    symmetry, F(theta) = 1 - F(2 pi - theta), which keeps F continuous.
    """
    if not 0.0 <= rho < 1.0:
        raise InvalidParameter(f"rho must lie in [0, 1), got {rho}")
    theta = np.mod(np.asarray(theta, dtype=float), 2 * np.pi)
    ratio = (1.0 + rho) / (1.0 - rho)
    half = np.minimum(theta, 2 * np.pi - theta)
    f = np.arctan(ratio * np.tan(0.5 * half)) / np.pi
    f = np.where(half >= np.pi, 0.5, f)
    out = np.where(theta <= np.pi, f, 1.0 - f)
    return float(out) if out.ndim == 0 else out


def pkbd_inverse_cdf_circle(u, rho: float):
    """Closed-form inverse of :func:`pkbd_cdf_circle`, returns angles in [0, 2 pi)."""
    u = np.asarray(u, dtype=float)
    ratio = (1.0 - rho) / (1.0 + rho)
    theta = 2.0 * np.arctan(ratio * np.tan(np.pi * u))
    return np.mod(theta, 2 * np.pi)


def sample_pkbd_circle(c: PkbdComponent, n: int, rng: RngLike = None) -> SampleBatch:
    if c.d != 2:
        raise InvalidDimension(f"circle sampler needs d = 2, got {c.d}")
    gen, seed = resolve_rng(rng)
    theta = pkbd_inverse_cdf_circle(gen.random(n), c.rho) + math.atan2(c.mu[1], c.mu[0])
    pts = np.column_stack([np.cos(theta), np.sin(theta)])
    return SampleBatch(pts, n, seed)


# -- rejection ---------------------------------------------------------------


def envelope_constants(rho: float, d: int) -> EnvelopeConstants:
    """vMF envelope: kappa_rho = d rho / (1 + rho^2) and the dominating constant."""
    _check_rho(rho)
    _check_d(d)
    kappa = d * rho / (1.0 + rho * rho)
    log_m = (
        -log_vmf_normalizer(d, kappa)
        - log_surface_area(d)
        - kappa
        + math.log1p(rho)
        - (d - 1) * math.log1p(-rho)
    )
    return EnvelopeConstants(kappa, math.exp(log_m), math.exp(-log_m), log_m)


def uniform_envelope_constant(rho: float, d: int) -> float:
    """M = (1 + rho) / (1 - rho)^{d-1}; its reciprocal is the efficiency."""
    _check_rho(rho)
    _check_d(d)
    return math.exp(math.log1p(rho) - (d - 1) * math.log1p(-rho))


def _log_uniform_m(rho, d):
    return math.log1p(rho) - (d - 1) * math.log1p(-rho)


def predicted_efficiency(rho: float, d: int, envelope: Envelope = "vmf") -> float:
    if envelope == "vmf":
        return envelope_constants(rho, d).efficiency
    if envelope == "uniform":
        return 1.0 / uniform_envelope_constant(rho, d)
    raise InvalidParameter(f"unknown envelope {envelope!r}")


def log_acceptance_ratio(points: np.ndarray, c: PkbdComponent, envelope: Envelope = "vmf") -> np.ndarray:
    """log f(y) - log(M g(y)); never positive up to rounding."""
    t = points @ c.mu
    log_f = log_poisson_kernel_t(t, c.rho, c.d)
    if envelope == "vmf":
        env = envelope_constants(c.rho, c.d)
        log_g = log_vmf_normalizer(c.d, env.kappa_rho) + env.kappa_rho * t
        return log_f - env.log_m_rho - log_g
    if envelope == "uniform":
        return log_f - _log_uniform_m(c.rho, c.d) + log_surface_area(c.d)
    raise InvalidParameter(f"unknown envelope {envelope!r}")


def _propose(c: PkbdComponent, k: int, envelope: Envelope, rng: np.random.Generator):
    if envelope == "vmf":
        y = _vmf_points(c.mu, envelope_constants(c.rho, c.d).kappa_rho, k, rng)
    else:
        y = _uniform_points(c.d, k, rng)
    accept = np.log(rng.random(k)) <= log_acceptance_ratio(y, c, envelope)
    return y, accept


def rejection_trial(c: PkbdComponent, proposals: int, envelope: Envelope = "vmf", rng: RngLike = None):
    """Run exactly ``proposals`` accept/reject steps; returns (accepted points, count)."""
    gen, _ = resolve_rng(rng)
    y, accept = _propose(c, proposals, envelope, gen)
    return y[accept], int(accept.sum())


def sample_pkbd_rejection(
    c: PkbdComponent, n: int, envelope: Envelope = "vmf", rng: RngLike = None
) -> SampleBatch:
    """Accept/reject sampler.

    Proposals are generated in vectorized batches, but ``proposals_used`` is
    the count a sequential loop would have needed: the tail of the final
    batch after the n-th acceptance is discarded and not counted.
    """
    eff = predicted_efficiency(c.rho, c.d, envelope)
    if eff < MIN_EFFICIENCY:
        raise EfficiencyTooLow(
            f"predicted efficiency {eff:.3g} for d={c.d}, rho={c.rho} with {envelope} envelope"
        )
    gen, seed = resolve_rng(rng)
    cap = PROPOSAL_CAP_FACTOR * max(n, 1)
    chunks = []
    have = 0
    used = 0
    while have < n:
        if used >= cap:
            raise EfficiencyTooLow(f"proposal cap {cap} exhausted with {have}/{n} accepted")
        k = min(cap - used, max(64, int(1.2 * (n - have) / eff) + 16))
        y, accept = _propose(c, k, envelope, gen)
        need = n - have
        idx = np.flatnonzero(accept)
        if idx.size >= need:
            last = idx[need - 1]
            chunks.append(y[idx[:need]])
            used += last + 1
            have = n
        else:
            chunks.append(y[idx])
            used += k
            have += idx.size
    pts = np.vstack(chunks) if chunks else np.empty((0, c.d))
    return SampleBatch(pts, int(used), seed)


def sample_pkbd(c: PkbdComponent, n: int, rng: RngLike = None, method: str = "auto") -> SampleBatch:
    """Dispatch: ``auto`` uses inversion on the circle and the vMF envelope otherwise."""
    if method == "auto":
        method = "inverse" if c.d == 2 else "reject-vmf"
    if method == "inverse":
        return sample_pkbd_circle(c, n, rng)
    if method == "reject-vmf":
        return sample_pkbd_rejection(c, n, "vmf", rng)
    if method == "reject-uniform":
        return sample_pkbd_rejection(c, n, "uniform", rng)
    raise InvalidParameter(f"unknown sampling method {method!r}")
