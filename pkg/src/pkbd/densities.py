"""PKBD / vMF densities and the Poisson kernel family.

Everything is evaluated in log space.  The PKBD density with mean direction
mu and concentration rho is

    f(x) = (1 - rho^2) / (omega_d * (1 + rho^2 - 2 rho x.mu)^{d/2})

which coincides with the Poisson kernel K_rho(x, mu).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, ive, logsumexp

from .errors import ClampWarning, DimensionMismatch, InvalidDimension, InvalidParameter
from .sphere import log_surface_area, normalize

RHO_MIN = 1e-8
RHO_MAX = 1.0 - 1e-8


def clamp_rho(rho: float) -> float:
    r = float(np.clip(rho, RHO_MIN, RHO_MAX))
    if r != rho:
        warnings.warn(f"rho={rho!r} clamped to {r!r}", ClampWarning, stacklevel=3)
    return r


@dataclass(frozen=True)
class PkbdComponent:
    mu: np.ndarray
    rho: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.ndim != 1 or mu.size < 2:
            raise InvalidDimension("mu must be a vector of dimension >= 2")
        if not np.isfinite(self.rho) or not 0.0 <= self.rho <= 1.0:
            raise InvalidParameter(f"rho must lie in (0, 1), got {self.rho}")
        mu = normalize(mu)
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "rho", clamp_rho(float(self.rho)))

    @property
    def d(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class VmfComponent:
    mu: np.ndarray
    kappa: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.ndim != 1 or mu.size < 2:
            raise InvalidDimension("mu must be a vector of dimension >= 2")
        if not np.isfinite(self.kappa) or self.kappa < 0:
            raise InvalidParameter(f"kappa must be >= 0, got {self.kappa}")
        mu = normalize(mu)
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "kappa", float(self.kappa))

    @property
    def d(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class MixtureModel:
    """Mixture of PKBD components plus an optional uniform noise term.

    ``weights`` holds alpha_1..alpha_M, ``noise_weight`` holds alpha_0.  The
    total is renormalized to exactly one on construction.
    """

    mus: np.ndarray
    rhos: np.ndarray
    weights: np.ndarray
    noise_weight: float = 0.0

    def __post_init__(self):
        mus = np.atleast_2d(np.asarray(self.mus, dtype=float))
        rhos = np.atleast_1d(np.asarray(self.rhos, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        a0 = float(self.noise_weight)
        m = mus.shape[0]
        if m < 1 or rhos.shape != (m,) or w.shape != (m,):
            raise ValueError("mus, rhos and weights must describe the same M >= 1 components")
        if mus.shape[1] < 2:
            raise InvalidDimension("dimension must be >= 2")
        if np.any(w < 0) or a0 < 0:
            raise InvalidParameter("weights must be nonnegative")
        total = w.sum() + a0
        if abs(total - 1.0) > 1e-6:
            raise InvalidParameter(f"weights sum to {total}, expected 1")
        if np.any(~np.isfinite(rhos)) or np.any(rhos < 0) or np.any(rhos > 1):
            raise InvalidParameter("rho values must lie in (0, 1)")
        clipped = np.clip(rhos, RHO_MIN, RHO_MAX)
        if np.any(clipped != rhos):
            warnings.warn("rho values clamped into (0, 1)", ClampWarning, stacklevel=3)
        mus = normalize(mus)
        for arr in (mus, clipped):
            arr.setflags(write=False)
        w = w / total
        w.setflags(write=False)
        object.__setattr__(self, "mus", mus)
        object.__setattr__(self, "rhos", clipped)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "noise_weight", a0 / total)

    @classmethod
    def from_components(cls, components, weights, noise_weight=0.0) -> "MixtureModel":
        return cls(
            np.array([c.mu for c in components]),
            np.array([c.rho for c in components]),
            np.asarray(weights, dtype=float),
            noise_weight,
        )

    @property
    def d(self) -> int:
        return self.mus.shape[1]

    @property
    def n_components(self) -> int:
        return self.mus.shape[0]

    @property
    def has_noise(self) -> bool:
        return self.noise_weight > 0

    @property
    def components(self) -> list[PkbdComponent]:
        return [PkbdComponent(mu, rho) for mu, rho in zip(self.mus, self.rhos)]


def _check_dim(points: np.ndarray, d: int):
    if points.shape[-1] != d:
        raise DimensionMismatch(f"point dimension {points.shape[-1]} != model dimension {d}")


def _sq_dist_term(t, gamma):
    # 1 + g^2 - 2 g t written to stay accurate when g -> 1 and t -> 1
    return (1.0 - gamma) ** 2 + 2.0 * gamma * (1.0 - t)


def log_poisson_kernel_t(t, gamma, d: int):
    """log K_gamma as a function of the cosine t = x.y (vectorized)."""
    t = np.clip(t, -1.0, 1.0)
    gamma = np.asarray(gamma, dtype=float)
    return (
        np.log1p(-gamma * gamma)
        - log_surface_area(d)
        - 0.5 * d * np.log(_sq_dist_term(t, gamma))
    )


def sq_dist_to_scaled(points: np.ndarray, mus: np.ndarray, rhos) -> np.ndarray:
    """||x_i - rho_k mu_k||^2 for unit x, mu as (1 - rho)^2 + rho ||x - mu||^2.

    Explicit differences keep this accurate for x close to mu, where the
    cosine form loses everything once (1 - rho)^2 reaches ~1e-16.
    """
    diff = points[:, None, :] - mus[None, :, :]
    chord = np.einsum("nmd,nmd->nm", diff, diff)
    rhos = np.asarray(rhos, dtype=float)[None, :]
    return (1.0 - rhos) ** 2 + rhos * chord


def log_pkbd_matrix(points: np.ndarray, mus: np.ndarray, rhos) -> np.ndarray:
    """(n, M) matrix of log PKBD densities."""
    d = points.shape[-1]
    rhos = np.asarray(rhos, dtype=float)
    return (
        np.log1p(-rhos * rhos)[None, :]
        - log_surface_area(d)
        - 0.5 * d * np.log(sq_dist_to_scaled(points, mus, rhos))
    )


def pkbd_log_density(x, c: PkbdComponent):
    pts = np.asarray(x, dtype=float)
    _check_dim(pts, c.d)
    out = log_pkbd_matrix(np.atleast_2d(pts), c.mu[None, :], [c.rho])[:, 0]
    return float(out[0]) if pts.ndim == 1 else out


def pkbd_density(x, c: PkbdComponent):
    return np.exp(pkbd_log_density(x, c))


def pkbd_density_bounds(rho: float, d: int) -> tuple[float, float]:
    """Strict lower/upper bounds of the PKBD density over the sphere."""
    if not 0.0 < rho < 1.0:
        raise InvalidParameter(f"rho must lie in (0, 1), got {rho}")
    if d < 2:
        raise InvalidDimension(f"dimension must be >= 2, got {d}")
    lw = log_surface_area(d)
    lower = np.log1p(-rho) - lw - (d - 1) * np.log1p(rho)
    upper = np.log1p(rho) - lw - (d - 1) * np.log1p(-rho)
    return float(np.exp(lower)), float(np.exp(upper))


def poisson_kernel(x, y, gamma: float):
    """K_gamma(x, y) = (1 - g^2) / (omega_d (1 + g^2 - 2 g x.y)^{d/2})."""
    if not 0.0 <= gamma < 1.0:
        raise InvalidParameter(f"gamma must lie in [0, 1), got {gamma}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != y.shape[-1]:
        raise DimensionMismatch(f"dimensions differ: {x.shape[-1]} vs {y.shape[-1]}")
    t = np.sum(x * y, axis=-1)
    out = np.exp(log_poisson_kernel_t(t, gamma, x.shape[-1]))
    return float(out) if np.ndim(out) == 0 else out


def poisson_kernel_diagonal(gamma, d: int):
    """K_gamma(x, x) = (1 + g) / (omega_d (1 - g)^{d-1})."""
    gamma = np.asarray(gamma, dtype=float)
    return np.exp(np.log1p(gamma) - (d - 1) * np.log1p(-gamma) - log_surface_area(d))


def log_bessel_iv(nu: float, x: float) -> float:
    """log I_nu(x) for nu >= 0, x >= 0.

    Exponentially scaled scipy Bessel for ordinary arguments; the ascending
    series when that underflows (x << nu, large d).
    """
    if x < 0:
        raise InvalidParameter("Bessel argument must be >= 0")
    if x == 0.0:
        return 0.0 if nu == 0 else -np.inf
    v = ive(nu, x)
    if np.isfinite(v) and v > 1e-280:
        return float(np.log(v) + x)
    q = 0.25 * x * x
    term, total, k = 1.0, 1.0, 0
    while term > 1e-17 * total:
        k += 1
        term *= q / (k * (nu + k))
        total += term
    return float(nu * np.log(0.5 * x) - gammaln(nu + 1.0) + np.log(total))


def log_vmf_normalizer(d: int, kappa: float) -> float:
    """log c_d(kappa), with c_d(0) = 1/omega_d."""
    if kappa == 0.0:
        return -log_surface_area(d)
    nu = 0.5 * d - 1.0
    return float(nu * np.log(kappa) - 0.5 * d * np.log(2 * np.pi) - log_bessel_iv(nu, kappa))


def vmf_log_density(x, c: VmfComponent):
    pts = np.asarray(x, dtype=float)
    _check_dim(pts, c.d)
    out = log_vmf_normalizer(c.d, c.kappa) + c.kappa * np.clip(pts @ c.mu, -1.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def component_log_terms(points: np.ndarray, model: MixtureModel) -> np.ndarray:
    """(n, M[+1]) matrix of log(alpha_j f_j(x_i)); noise column first when present."""
    _check_dim(points, model.d)
    with np.errstate(divide="ignore"):
        logw = np.log(model.weights)
    terms = log_pkbd_matrix(points, model.mus, model.rhos) + logw[None, :]
    if model.has_noise:
        noise = np.full((points.shape[0], 1), np.log(model.noise_weight) - log_surface_area(model.d))
        terms = np.hstack([noise, terms])
    return terms


def mixture_log_density(x, model: MixtureModel):
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    out = logsumexp(component_log_terms(np.atleast_2d(pts), model), axis=1)
    return float(out[0]) if single else out


__all__ = [
    "PkbdComponent",
    "VmfComponent",
    "MixtureModel",
    "pkbd_log_density",
    "log_pkbd_matrix",
    "sq_dist_to_scaled",
    "pkbd_density",
    "pkbd_density_bounds",
    "poisson_kernel",
    "poisson_kernel_diagonal",
    "log_poisson_kernel_t",
    "log_bessel_iv",
    "log_vmf_normalizer",
    "vmf_log_density",
    "mixture_log_density",
    "component_log_terms",
]
