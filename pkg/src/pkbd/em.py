"""EM-type fitting of PKBD mixtures, optionally with a uniform noise term.

One iteration:

* E step: posteriors p(k|x_i) by log-sum-exp, and the re-weighting
  w_ik = p(k|x_i) / (1 + rho_k^2 - 2 rho_k x_i.mu_k).
* M step: alpha_k = mean posterior; mu_k = normalized sum_i w_ik x_i;
  rho_k moved by Newton on g_k (the derivative of the w-weighted surrogate).

The surrogate in rho is concave, so a Newton step that overshoots is pulled
back until the surrogate does not decrease; this keeps the log-likelihood
trace monotone.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Literal, Optional

import numpy as np
from scipy.special import logsumexp

from .densities import RHO_MAX, RHO_MIN, MixtureModel, component_log_terms, sq_dist_to_scaled
from .errors import (
    AllRunsDegenerate,
    DegenerateResultant,
    DimensionMismatch,
    InvalidParameter,
    NonFiniteUpdate,
    TooManyClusters,
)
from .rng import RngLike, resolve_rng
from .sphere import as_points

StopRule = Literal["loglik_delta", "membership_stable", "max_iter"]

DEGENERATE_WEIGHT = 1e-8
NOISE_FLOOR = 1e-300


@dataclass(frozen=True)
class FitConfig:
    num_restarts: int = 10
    max_iterations: int = 500
    loglik_tolerance: float = 1e-6
    stop_rule: StopRule = "loglik_delta"
    rho_init: float = 0.5
    newton_steps_per_mstep: int = 1
    seed: Optional[int] = None
    n_jobs: int = 1

    def __post_init__(self):
        if self.num_restarts < 1:
            raise InvalidParameter("num_restarts must be >= 1")
        if self.max_iterations < 1:
            raise InvalidParameter("max_iterations must be >= 1")
        if not self.loglik_tolerance > 0:
            raise InvalidParameter("loglik_tolerance must be > 0")
        if not 0.0 < self.rho_init < 1.0:
            raise InvalidParameter("rho_init must lie in (0, 1)")
        if self.stop_rule not in ("loglik_delta", "membership_stable", "max_iter"):
            raise InvalidParameter(f"unknown stop rule {self.stop_rule!r}")
        if self.newton_steps_per_mstep < 1:
            raise InvalidParameter("newton_steps_per_mstep must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EStepState:
    """Posteriors for the PKBD components (n, M), the noise posterior (n,) or
    None, the w_ik matrix (n, M), and the log-likelihood of the model the
    state was computed from."""

    posteriors: np.ndarray
    weights_w: np.ndarray
    noise_posterior: Optional[np.ndarray]
    loglik: float
    log_density: np.ndarray

    def full_posteriors(self) -> np.ndarray:
        if self.noise_posterior is None:
            return self.posteriors
        return np.hstack([self.noise_posterior[:, None], self.posteriors])

    def assignments(self) -> np.ndarray:
        """Hard labels: 1..M for components, 0 for the noise component."""
        if self.noise_posterior is None:
            return np.argmax(self.posteriors, axis=1) + 1
        return np.argmax(self.full_posteriors(), axis=1)


@dataclass
class FitResult:
    model: MixtureModel
    posteriors: np.ndarray
    assignments: np.ndarray
    loglik_trace: list[float]
    iterations: int
    restart_index: int
    converged: bool = False
    reseed_iterations: list[int] = field(default_factory=list)
    restart_logliks: list[float] = field(default_factory=list)

    @property
    def loglik(self) -> float:
        return self.loglik_trace[-1]


def n_free_params(m: int, d: int, with_noise: bool = False) -> int:
    """M*d + M - 1 (+1 for the noise weight)."""
    return m * d + m - 1 + (1 if with_noise else 0)


def aic(loglik: float, m: int, d: int, with_noise: bool = False) -> float:
    return 2.0 * n_free_params(m, d, with_noise) - 2.0 * loglik


def bic(loglik: float, m: int, d: int, n: int, with_noise: bool = False) -> float:
    return math.log(n) * n_free_params(m, d, with_noise) - 2.0 * loglik


def log_likelihood(data, model: MixtureModel) -> float:
    pts = as_points(data)
    if pts.shape[1] != model.d:
        raise DimensionMismatch(f"data dimension {pts.shape[1]} != model dimension {model.d}")
    return float(np.sum(logsumexp(component_log_terms(pts, model), axis=1)))


def init_params(
    data, m: int, config: FitConfig = FitConfig(), rng: RngLike = None, with_noise: bool = False
) -> MixtureModel:
    """Random distinct data points as centroids, common rho, equal weights."""
    pts = as_points(data)
    n = pts.shape[0]
    if m < 1:
        raise InvalidParameter("number of clusters must be >= 1")
    if m > n:
        raise TooManyClusters(f"M={m} exceeds the number of points n={n}")
    gen, _ = resolve_rng(rng)
    idx = gen.choice(n, size=m, replace=False)
    share = 1.0 / (m + 1) if with_noise else 1.0 / m
    return MixtureModel(
        pts[idx].copy(),
        np.full(m, config.rho_init),
        np.full(m, share),
        share if with_noise else 0.0,
    )


def e_step(data, model: MixtureModel) -> EStepState:
    pts = as_points(data)
    if pts.shape[1] != model.d:
        raise DimensionMismatch(f"data dimension {pts.shape[1]} != model dimension {model.d}")
    terms = component_log_terms(pts, model)
    log_dens = logsumexp(terms, axis=1)
    post = np.exp(terms - log_dens[:, None])
    post /= post.sum(axis=1, keepdims=True)
    noise = None
    if model.has_noise:
        noise, post = post[:, 0], post[:, 1:]
    denom = sq_dist_to_scaled(pts, model.mus, model.rhos)
    return EStepState(post, post / denom, noise, float(np.sum(log_dens)), log_dens)


def m_step_weights(state: EStepState) -> tuple[np.ndarray, float]:
    """Column means of the posterior matrix; returns (alpha_1..M, alpha_0)."""
    full = state.full_posteriors()
    alpha = full.mean(axis=0)
    alpha = alpha / alpha.sum()
    if state.noise_posterior is None:
        return alpha, 0.0
    return alpha[1:], float(alpha[0])


def m_step_mu(data, state: EStepState, k: int) -> np.ndarray:
    pts = as_points(data)
    return _resultant_direction(pts, state.weights_w[:, k])[0]


def _resultant_direction(pts: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, float]:
    r = w @ pts
    norm = float(np.linalg.norm(r))
    if not np.isfinite(norm) or norm <= 1e-300:
        raise DegenerateResultant("weighted resultant is numerically zero")
    return r / norm, norm


def rho_g(y, alpha_n: float, sum_w: float, resultant_norm: float, d: int):
    """g(y) = -2 n alpha y / (1 - y^2) + d ||sum w x|| - d y sum w."""
    return -2.0 * alpha_n * y / (1.0 - y * y) + d * resultant_norm - d * y * sum_w


def rho_g_prime(y, alpha_n: float, sum_w: float, d: int):
    return -2.0 * alpha_n * (1.0 + y * y) / (1.0 - y * y) ** 2 - d * sum_w


def rho_surrogate(y, alpha_n: float, sum_w: float, resultant_norm: float, d: int):
    """Antiderivative of g (up to a constant); concave on (0, 1)."""
    return alpha_n * np.log1p(-y * y) - 0.5 * d * (1.0 + y * y) * sum_w + d * y * resultant_norm


def rho_update(
    alpha_n: float,
    sum_w: float,
    resultant_norm: float,
    d: int,
    rho_prev: float,
    steps: int = 1,
) -> float:
    """Apply ``steps`` safeguarded Newton iterations rho <- rho - g/g'.

    A step leaving (RHO_MIN, RHO_MAX) is replaced by bisection between the
    current point and the boundary it crossed (the root lies there since g
    changes sign across (0, 1)).  A step that lowers the surrogate is halved
    until it does not.
    """
    y = float(np.clip(rho_prev, RHO_MIN, RHO_MAX))
    for _ in range(steps):
        g = rho_g(y, alpha_n, sum_w, resultant_norm, d)
        gp = rho_g_prime(y, alpha_n, sum_w, d)
        if not (np.isfinite(g) and np.isfinite(gp)):
            raise NonFiniteUpdate(f"g={g}, g'={gp} at rho={y}")
        if g == 0.0:
            break
        cand = y - g / gp
        if not cand < RHO_MAX:
            cand = 0.5 * (y + RHO_MAX)
        elif not cand > RHO_MIN:
            cand = 0.5 * (y + RHO_MIN)
        s0 = rho_surrogate(y, alpha_n, sum_w, resultant_norm, d)
        for _ in range(60):
            if rho_surrogate(cand, alpha_n, sum_w, resultant_norm, d) >= s0:
                break
            cand = 0.5 * (y + cand)
        else:
            cand = y
        if cand == y:
            break
        y = cand
    return y


def m_step(
    data,
    state: EStepState,
    model: MixtureModel,
    config: FitConfig,
) -> tuple[MixtureModel, list[int]]:
    """Full M step.  Returns the new model and indices of re-seeded components."""
    pts = as_points(data)
    n, d = pts.shape
    alpha, alpha0 = m_step_weights(state)
    if model.has_noise:
        alpha0 = max(alpha0, NOISE_FLOOR)
    m = model.n_components
    mus = np.empty_like(model.mus)
    rhos = np.empty(m)
    reseeded = []
    for k in range(m):
        w = state.weights_w[:, k]
        try:
            if alpha[k] < DEGENERATE_WEIGHT:
                raise DegenerateResultant("component weight vanished")
            mu_k, rnorm = _resultant_direction(pts, w)
        except DegenerateResultant:
            reseeded.append(k)
            continue
        mus[k] = mu_k
        rhos[k] = rho_update(
            n * alpha[k], float(w.sum()), rnorm, d, float(model.rhos[k]), config.newton_steps_per_mstep
        )
    if reseeded:
        # lowest-density points under the current model, one per collapsed component
        order = np.argsort(state.log_density)
        for j, k in enumerate(reseeded):
            mus[k] = pts[order[j % n]]
            rhos[k] = config.rho_init
            alpha[k] = 1.0 / n
    total = alpha.sum() + alpha0
    return MixtureModel(mus, rhos, alpha / total, alpha0 / total), reseeded


def _run_once(pts, m, with_noise, config, gen) -> FitResult:
    model = init_params(pts, m, config, gen, with_noise)
    state = e_step(pts, model)
    trace = [state.loglik]
    labels = state.assignments()
    reseeds: list[int] = []
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        model, reseeded = m_step(pts, state, model, config)
        if reseeded:
            reseeds.append(it)
        state = e_step(pts, model)
        trace.append(state.loglik)
        if not np.isfinite(state.loglik):
            raise NonFiniteUpdate(f"log-likelihood became {state.loglik} at iteration {it}")
        new_labels = state.assignments()
        if config.stop_rule == "loglik_delta":
            prev = trace[-2]
            if abs(trace[-1] - prev) <= config.loglik_tolerance * max(abs(prev), 1e-300):
                converged = True
        elif config.stop_rule == "membership_stable":
            converged = bool(np.array_equal(new_labels, labels))
        labels = new_labels
        if converged and not reseeded:
            break
        converged = False
    return FitResult(
        model=model,
        posteriors=state.full_posteriors(),
        assignments=labels,
        loglik_trace=trace,
        iterations=it,
        restart_index=0,
        converged=converged,
        reseed_iterations=reseeds,
    )


def fit(
    data,
    m: int,
    with_noise: bool = False,
    config: FitConfig = FitConfig(),
    rng: RngLike = None,
) -> FitResult:
    """Best of ``config.num_restarts`` independent EM runs by final log-likelihood."""
    pts = as_points(data)
    if m > pts.shape[0]:
        raise TooManyClusters(f"M={m} exceeds the number of points n={pts.shape[0]}")
    if rng is None and config.seed is not None:
        rng = config.seed
    gen, _ = resolve_rng(rng)
    streams = gen.spawn(config.num_restarts)

    def attempt(g):
        try:
            return _run_once(pts, m, with_noise, config, g)
        except (NonFiniteUpdate, FloatingPointError):
            return None

    if config.n_jobs > 1:
        with ThreadPoolExecutor(config.n_jobs) as pool:
            runs = list(pool.map(attempt, streams))
    else:
        runs = [attempt(g) for g in streams]
    finals = [r.loglik if r is not None else -np.inf for r in runs]
    if not np.any(np.isfinite(finals)):
        raise AllRunsDegenerate(f"all {config.num_restarts} restarts failed")
    best = int(np.argmax(finals))
    result = runs[best]
    result.restart_index = best
    result.restart_logliks = [float(v) for v in finals]
    return result

