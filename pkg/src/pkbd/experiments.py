"""Desk-scale simulation grids behind ``pkbd replicate``.

Each experiment returns a list of flat dict rows (one CSV line each) with
means and standard deviations over replications.  Replication r of grid
point g always uses the same child stream of the root seed, so any single
cell can be rerun in isolation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .em import FitConfig, aic, bic, fit
from .metrics import adjusted_rand_index, contingency, macro_precision_recall
from .samplers import envelope_constants, uniform_envelope_constant
from .selection import FLAT_RATIO, _scaled_change, quadratic_distance
from .synth import ComponentSpec, LdaSpec, centroids_pair, centroids_triple, lda_corpus, sample_mixture

EFFICIENCY_GRID = ((3, 0.1), (3, 0.4), (5, 0.1), (5, 0.3), (10, 0.1), (10, 0.3), (50, 0.1), (50, 0.2), (100, 0.1))
SELECTION_RHOS = (0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2)
SELECTION_BETAS = (0.1, 0.2, 0.5)
NOISE_PROPORTIONS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
PAIR_COSINES = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
TRIPLE_COSINES = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
# (documents, average document size xi, vocabulary size v)
LDA_GRID = (
    (150, 200, 50),
    (100, 150, 50),
    (100, 200, 75),
    (100, 20, 50),
    (50, 200, 50),
    (50, 30, 60),
    (50, 15, 75),
    (40, 100, 20),
    (40, 30, 60),
)


@dataclass
class ExperimentOptions:
    replications: int = 10
    seed: int = 0
    restarts: int = 10
    max_iterations: int = 500
    rhos: Sequence[float] = SELECTION_RHOS
    m_max: int = 9
    progress: Optional[Callable[[str], None]] = None
    extra: dict = field(default_factory=dict)

    def fit_config(self) -> FitConfig:
        return FitConfig(num_restarts=self.restarts, max_iterations=self.max_iterations)


def _mean_sd(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return float(v.mean()), sd


def _grid_streams(seed: int, n_points: int, reps: int) -> list[list[np.random.Generator]]:
    root = np.random.SeedSequence(seed)
    return [[np.random.default_rng(s) for s in g.spawn(reps)] for g in root.spawn(n_points)]


def _say(opts: ExperimentOptions, msg: str):
    if opts.progress is not None:
        opts.progress(msg)


def score(truth, predicted) -> dict:
    mp, mr = macro_precision_recall(contingency(truth, predicted))
    return {"ari": adjusted_rand_index(truth, predicted), "macro_precision": mp, "macro_recall": mr}


def _summarize(rows_of_scores: list[dict], keys=("ari", "macro_precision", "macro_recall")) -> dict:
    out = {}
    for k in keys:
        m, s = _mean_sd([r[k] for r in rows_of_scores])
        out[f"{k}_mean"] = m
        out[f"{k}_sd"] = s
    return out


# -- individual experiments --------------------------------------------------


def efficiency_table(opts: ExperimentOptions | None = None) -> list[dict]:
    rows = []
    for d, rho in EFFICIENCY_GRID:
        rows.append(
            {
                "d": d,
                "rho": rho,
                "efficiency_vmf": round(envelope_constants(rho, d).efficiency, 5),
                "efficiency_uniform": round(1.0 / uniform_envelope_constant(rho, d), 5),
            }
        )
    return rows


def selection_replicate(rho: float, rng: np.random.Generator, opts: ExperimentOptions, n: int = 100) -> dict:
    """One replication of the three-cluster selection design.

    Returns per-M arrays of distances (one per beta), log-likelihoods and the
    elbow estimate at beta = 0.1.
    """
    spec = [ComponentSpec("pkbd", 1.0 / 3.0, np.eye(3)[j], rho) for j in range(3)]
    data_rng, fit_rng = rng.spawn(2)
    data = sample_mixture(spec, n, 3, data_rng)
    ms = list(range(1, opts.m_max + 1))
    cfg = opts.fit_config()
    dist = {b: [] for b in SELECTION_BETAS}
    ll = []
    for m, stream in zip(ms, fit_rng.spawn(len(ms))):
        res = fit(data, m, config=cfg, rng=stream)
        ll.append(res.loglik)
        for b in SELECTION_BETAS:
            dist[b].append(quadratic_distance(data, res.model, b))
    est, _ = _scaled_change(np.array(ms), np.array(dist[0.1]), 0.1, FLAT_RATIO)
    return {"ms": ms, "distances": dist, "loglik": ll, "estimated_m": est}


def selection_table(opts: ExperimentOptions) -> list[dict]:
    rows = []
    streams = _grid_streams(opts.seed, len(opts.rhos), opts.replications)
    for rho, reps in zip(opts.rhos, streams):
        results = []
        for r, g in enumerate(reps):
            _say(opts, f"tableA1 rho={rho} replication {r + 1}/{len(reps)}")
            results.append(selection_replicate(rho, g, opts))
        ests = np.array([res["estimated_m"] for res in results])
        for i, m in enumerate(results[0]["ms"]):
            row = {"rho": rho, "m": m}
            for b, tag in zip(SELECTION_BETAS, ("ed1", "ed2", "ed5")):
                row[f"{tag}_mean"], row[f"{tag}_sd"] = _mean_sd([res["distances"][b][i] for res in results])
            lls = [res["loglik"][i] for res in results]
            row["loglik_mean"], row["loglik_sd"] = _mean_sd(lls)
            row["aic_mean"] = _mean_sd([aic(v, m, 3) for v in lls])[0]
            row["bic_mean"] = _mean_sd([bic(v, m, 3, 100) for v in lls])[0]
            row["share_estimated"] = float(np.mean(ests == m))
            rows.append(row)
    return rows


def _noise_fit_scores(data, m: int, rng, opts: ExperimentOptions) -> dict:
    res = fit(data, m, with_noise=True, config=opts.fit_config(), rng=rng)
    return score(data.labels, res.assignments)


def noise_proportion_grid(opts: ExperimentOptions) -> list[dict]:
    """Uniform noise (label 0) plus one PKBD(0.9) on S^4, n = 200."""
    mu = np.eye(5)[0]
    rows = []
    streams = _grid_streams(opts.seed, len(NOISE_PROPORTIONS), opts.replications)
    for p, reps in zip(NOISE_PROPORTIONS, streams):
        scores = []
        for r, g in enumerate(reps):
            _say(opts, f"fig3 noise={p} replication {r + 1}/{len(reps)}")
            spec = [ComponentSpec("uniform", p), ComponentSpec("pkbd", 1.0 - p, mu, 0.9)]
            dg, fg = g.spawn(2)
            data = sample_mixture(spec, 200, 5, dg)
            scores.append(_noise_fit_scores(data, 1, fg, opts))
        rows.append({"noise_proportion": p, **_summarize(scores)})
    return rows


def pair_overlap_grid(opts: ExperimentOptions) -> list[dict]:
    """50% uniform noise plus two equal PKBD(0.9) with centroid cosine a, d = 3."""
    rows = []
    streams = _grid_streams(opts.seed, len(PAIR_COSINES), opts.replications)
    for a, reps in zip(PAIR_COSINES, streams):
        mu1, mu2 = centroids_pair(a)
        spec = [
            ComponentSpec("uniform", 0.5),
            ComponentSpec("pkbd", 0.25, mu1, 0.9),
            ComponentSpec("pkbd", 0.25, mu2, 0.9),
        ]
        scores = []
        for r, g in enumerate(reps):
            _say(opts, f"fig4 cosine={a} replication {r + 1}/{len(reps)}")
            dg, fg = g.spawn(2)
            data = sample_mixture(spec, 200, 3, dg)
            scores.append(_noise_fit_scores(data, 2, fg, opts))
        rows.append({"cosine": a, **_summarize(scores)})
    return rows


def triple_a_for_cosine(c: float) -> float:
    """Invert cos = (2a^2 - 1) / (2(a^2 + 1)) for c in (-1/2, 1)."""
    return math.sqrt((1.0 + 2.0 * c) / (2.0 - 2.0 * c))


def triple_overlap_grid(opts: ExperimentOptions) -> list[dict]:
    """Three equal PKBD(0.9) centroids at common pairwise cosine, d = 3, no noise."""
    rows = []
    streams = _grid_streams(opts.seed, len(TRIPLE_COSINES), opts.replications)
    for c, reps in zip(TRIPLE_COSINES, streams):
        mus = centroids_triple(triple_a_for_cosine(c))
        spec = [ComponentSpec("pkbd", 1.0 / 3.0, mu, 0.9) for mu in mus]
        scores = []
        for r, g in enumerate(reps):
            _say(opts, f"fig5 cosine={c} replication {r + 1}/{len(reps)}")
            dg, fg = g.spawn(2)
            data = sample_mixture(spec, 200, 3, dg)
            res = fit(data, 3, config=opts.fit_config(), rng=fg)
            scores.append(score(data.labels, res.assignments))
        rows.append({"cosine": c, **_summarize(scores)})
    return rows


def lda_grid(opts: ExperimentOptions) -> list[dict]:
    """Three-topic LDA corpora, labelled by dominant topic, fitted with M = 3."""
    rows = []
    streams = _grid_streams(opts.seed, len(LDA_GRID), opts.replications)
    for (n_docs, xi, v), reps in zip(LDA_GRID, streams):
        spec = LdaSpec(k_topics=3, vocab_size=v, avg_doc_size=xi, n_docs=n_docs)
        scores, zeros = [], []
        for r, g in enumerate(reps):
            _say(opts, f"table4 N={n_docs} xi={xi} v={v} replication {r + 1}/{len(reps)}")
            dg, fg = g.spawn(2)
            data = lda_corpus(spec, dg)
            zeros.append(float(np.mean(data.points == 0.0)))
            res = fit(data, 3, config=opts.fit_config(), rng=fg)
            scores.append(score(data.labels, res.assignments))
        rows.append(
            {"n_docs": n_docs, "xi": xi, "v": v, "v_over_xi": v / xi, "sparsity": float(np.mean(zeros)), **_summarize(scores)}
        )
    return rows


EXPERIMENTS: dict[str, Callable[[ExperimentOptions], list[dict]]] = {
    "tableA1": selection_table,
    "tableA6": efficiency_table,
    "fig3": noise_proportion_grid,
    "fig4": pair_overlap_grid,
    "fig5": triple_overlap_grid,
    "table4": lda_grid,
}


def run_experiment(name: str, opts: ExperimentOptions) -> list[dict]:
    try:
        runner = EXPERIMENTS[name]
    except KeyError:
        raise KeyError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}") from None
    return runner(opts)
