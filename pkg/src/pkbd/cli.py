"""``pkbd`` command line: sample, fit, select-k, eval, datagen, replicate.

Exit codes: 0 ok, 2 bad usage or input, 3 sampling infeasible, 4 numerical
failure.  With the same flags and seed, single-threaded runs write
byte-identical primary outputs (manifests carry wall-clock time and so
differ).
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .densities import PkbdComponent, VmfComponent
from .em import FitConfig, aic, bic, fit
from .errors import (
    AllRunsDegenerate,
    DegenerateResultant,
    EfficiencyTooLow,
    NonFiniteUpdate,
    PkbdError,
    ZeroVector,
)
from .experiments import EXPERIMENTS, ExperimentOptions, run_experiment
from .io import (
    InputError,
    RunManifest,
    dump_json,
    model_to_dict,
    read_labels,
    read_points,
    svg_line_plot,
    write_csv,
    write_dict_rows,
)
from .metrics import evaluate
from .rng import resolve_rng
from .samplers import predicted_efficiency, sample_pkbd, sample_uniform, sample_vmf
from .selection import distance_profile
from .sphere import Dataset, normalize
from .synth import ComponentSpec, LdaSpec, lda_corpus, sample_mixture

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 2, 3, 4


def _seed(args) -> int:
    _, seed = resolve_rng(args.seed)
    return seed


def _parse_mu(text: str, d: int) -> np.ndarray:
    if text in ("e1", "", None):
        mu = np.zeros(d)
        mu[0] = 1.0
        return mu
    vals = np.array([float(v) for v in text.split(",")])
    if vals.size != d:
        raise InputError(f"--mu has {vals.size} entries but --d is {d}")
    return normalize(vals)


def _manifest(args, seed, inputs, outputs, started) -> RunManifest:
    params = {k: v for k, v in vars(args).items() if k not in ("func",)}
    return RunManifest(
        subcommand=args.command,
        parameters=params,
        seed=seed,
        inputs=[str(p) for p in inputs],
        outputs=[str(p) for p in outputs],
        duration_s=round(time.perf_counter() - started, 3),
        version=__version__,
    )


def _load_sphere_points(path, label_column=None) -> tuple[Dataset, Optional[np.ndarray]]:
    raw, labels, lines = read_points(path, label_column)
    try:
        data = Dataset.from_raw(raw)
    except ZeroVector as exc:
        bad = [lines[i] for i in exc.rows]
        raise InputError(f"{path}: zero rows cannot be normalized (lines {bad[:20]})") from None
    return data, labels


def _point_rows(points, labels=None):
    for i, p in enumerate(points):
        row = list(p)
        if labels is not None:
            row.append(labels[i])
        yield row


def _point_header(d, with_label=False):
    return [f"x{j + 1}" for j in range(d)] + (["label"] if with_label else [])


# -- subcommands -------------------------------------------------------------


def cmd_sample(args) -> int:
    started = time.perf_counter()
    seed = _seed(args)
    if args.dist == "uniform":
        batch = sample_uniform(args.d, args.n, seed)
        eff = 1.0
    elif args.dist == "vmf":
        if args.kappa is None:
            raise InputError("--kappa is required for --dist vmf")
        batch = sample_vmf(VmfComponent(_parse_mu(args.mu, args.d), args.kappa), args.n, seed)
        eff = 1.0
    else:
        if args.rho is None:
            raise InputError("--rho is required for --dist pkbd")
        comp = PkbdComponent(_parse_mu(args.mu, args.d), args.rho)
        method = args.method
        if method == "auto":
            method = "inverse" if args.d == 2 else "reject-vmf"
        if method == "inverse":
            eff = 1.0
        else:
            eff = predicted_efficiency(args.rho, args.d, "vmf" if method == "reject-vmf" else "uniform")
        batch = sample_pkbd(comp, args.n, seed, method)
    text = write_csv(args.out, _point_header(args.d), _point_rows(batch.points))
    info = f"predicted efficiency {eff:.5f}  observed acceptance {batch.acceptance_rate:.5f}  ({batch.n} accepted / {batch.proposals_used} proposals)"
    if args.out is None:
        sys.stdout.write(text)
        print(info, file=sys.stderr)
    else:
        print(info)
        _manifest(args, seed, [], [args.out], started).write(f"{args.out}.manifest.json")
    return EXIT_OK


_STOP = {"loglik": "loglik_delta", "membership": "membership_stable", "max-iter": "max_iter"}


def cmd_fit(args) -> int:
    started = time.perf_counter()
    seed = _seed(args)
    data, _ = _load_sphere_points(args.input, args.label_column)
    cfg = FitConfig(
        num_restarts=args.restarts,
        max_iterations=args.max_iter,
        loglik_tolerance=args.tol,
        stop_rule=_STOP[args.stop],
        n_jobs=args.threads,
    )
    res = fit(data, args.clusters, with_noise=args.noise, config=cfg, rng=seed)
    prefix = args.out_prefix
    model_doc = model_to_dict(res.model)
    model_doc.update(
        {
            "loglik": res.loglik,
            "iterations": res.iterations,
            "converged": res.converged,
            "restart_index": res.restart_index,
            "aic": aic(res.loglik, args.clusters, data.d, args.noise),
            "bic": bic(res.loglik, args.clusters, data.d, data.n, args.noise),
        }
    )
    outputs = [f"{prefix}.model.json", f"{prefix}.assignments.csv", f"{prefix}.trace.csv"]
    dump_json(outputs[0], model_doc)
    write_csv(outputs[1], ["row", "cluster"], ((i, int(c)) for i, c in enumerate(res.assignments)))
    write_csv(outputs[2], ["iteration", "loglik"], enumerate(res.loglik_trace))
    _manifest(args, seed, [args.input], outputs, started).write(f"{prefix}.manifest.json")
    print(f"log-likelihood {res.loglik:.6f} after {res.iterations} iterations (restart {res.restart_index})")
    return EXIT_OK


def cmd_select_k(args) -> int:
    started = time.perf_counter()
    seed = _seed(args)
    data, _ = _load_sphere_points(args.input, args.label_column)
    cfg = FitConfig(num_restarts=args.restarts, max_iterations=args.max_iter, n_jobs=args.threads)
    prof = distance_profile(
        data,
        args.max_clusters,
        beta=args.beta,
        fit_config=cfg,
        rng=seed,
        variant=args.variant.replace("-", "_"),
        rule=args.rule.replace("-", "_"),
        tau=args.tau,
    )
    prefix = args.out_prefix
    outputs = [f"{prefix}.profile.csv"]
    write_csv(outputs[0], ["m", "distance", "loglik", "aic", "bic"], ((e.m, e.distance, e.loglik, e.aic, e.bic) for e in prof.entries))
    if args.svg:
        svg = svg_line_plot(
            prof.ms, prof.distances, f"Empirical distance, beta = {args.beta:g}", "number of clusters M", "distance"
        )
        Path(args.svg).write_text(svg)
        outputs.append(args.svg)
    _manifest(args, seed, [args.input], outputs, started).write(f"{prefix}.manifest.json")
    if prof.no_elbow:
        print("no elbow found; reporting the largest M", file=sys.stderr)
    print(prof.estimated_m)
    return EXIT_OK


def cmd_eval(args) -> int:
    truth = read_labels(args.truth)
    pred = read_labels(args.pred)
    report = evaluate(truth, pred)
    text = dump_json(args.out, report)
    if args.out is None:
        sys.stdout.write(text)
    return EXIT_OK


def _parse_component(text: str, d: int) -> ComponentSpec:
    """``kind:weight[:concentration[:mu]]`` e.g. ``pkbd:0.5:0.9:1,0,0``."""
    parts = text.split(":")
    kind = parts[0]
    try:
        weight = float(parts[1])
    except (IndexError, ValueError):
        raise InputError(f"bad component {text!r}; expected kind:weight[:concentration[:mu]]") from None
    if kind == "uniform":
        return ComponentSpec("uniform", weight)
    if len(parts) < 3:
        raise InputError(f"component {text!r} needs a concentration")
    mu = _parse_mu(parts[3] if len(parts) > 3 else "e1", d)
    return ComponentSpec(kind, weight, mu, float(parts[2]))


def cmd_datagen(args) -> int:
    started = time.perf_counter()
    seed = _seed(args)
    if args.kind == "lda":
        spec = LdaSpec(k_topics=args.topics, vocab_size=args.vocab, avg_doc_size=args.xi, n_docs=args.docs)
        data = lda_corpus(spec, seed)
        spec_doc = spec.to_dict()
    else:
        if not args.component:
            raise InputError("--component is required for --kind mixture")
        comps = [_parse_component(c, args.d) for c in args.component]
        data = sample_mixture(comps, args.n, args.d, seed)
        spec_doc = {"components": [c.to_dict() for c in comps], "n": args.n, "d": args.d}
    write_csv(args.out, _point_header(data.d, True), _point_rows(data.points, data.labels))
    man = _manifest(args, seed, [], [args.out], started)
    man.parameters["spec"] = spec_doc
    man.write(f"{args.out}.manifest.json")
    return EXIT_OK


def cmd_replicate(args) -> int:
    started = time.perf_counter()
    seed = _seed(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    opts = ExperimentOptions(
        replications=args.replications,
        seed=seed,
        restarts=args.restarts,
        rhos=tuple(float(r) for r in args.rhos.split(",")) if args.rhos else ExperimentOptions().rhos,
        progress=(lambda msg: print(msg, file=sys.stderr)) if args.verbose else None,
    )
    rows = run_experiment(args.experiment, opts)
    out = out_dir / f"{args.experiment}.csv"
    write_dict_rows(out, rows)
    _manifest(args, seed, [], [out], started).write(out_dir / f"{args.experiment}.manifest.json")
    print(out)
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pkbd", description="Clustering on the sphere with Poisson kernel-based mixtures.")
    p.add_argument("--version", action="version", version=f"pkbd {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="draw random points")
    s.add_argument("--dist", choices=["pkbd", "vmf", "uniform"], default="pkbd")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--rho", type=float)
    s.add_argument("--kappa", type=float)
    s.add_argument("--mu", default="e1", help='comma list or "e1"')
    s.add_argument("--n", type=_positive_int, required=True)
    s.add_argument("--method", choices=["auto", "inverse", "reject-vmf", "reject-uniform"], default="auto")
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sample)

    f = sub.add_parser("fit", help="fit a PKBD mixture")
    f.add_argument("--input", required=True)
    f.add_argument("--label-column", help="column (name or index) to ignore as a label")
    f.add_argument("--clusters", type=_positive_int, required=True)
    f.add_argument("--noise", action="store_true")
    f.add_argument("--restarts", type=_positive_int, default=10)
    f.add_argument("--max-iter", type=_positive_int, default=500)
    f.add_argument("--tol", type=float, default=1e-6)
    f.add_argument("--stop", choices=sorted(_STOP), default="loglik")
    f.add_argument("--seed", type=int)
    f.add_argument("--threads", type=_positive_int, default=1)
    f.add_argument("--out-prefix", required=True)
    f.set_defaults(func=cmd_fit)

    k = sub.add_parser("select-k", help="distance profile over M and elbow estimate")
    k.add_argument("--input", required=True)
    k.add_argument("--label-column")
    k.add_argument("--max-clusters", type=_positive_int, default=9)
    k.add_argument("--beta", type=float, default=0.1)
    k.add_argument("--variant", choices=["as-printed", "full-cross"], default="full-cross")
    k.add_argument("--rule", choices=["scaled-change", "relative-drop", "max-second-difference"], default="scaled-change")
    k.add_argument("--tau", type=float, default=0.1)
    k.add_argument("--restarts", type=_positive_int, default=10)
    k.add_argument("--max-iter", type=_positive_int, default=500)
    k.add_argument("--seed", type=int)
    k.add_argument("--threads", type=_positive_int, default=1)
    k.add_argument("--out-prefix", required=True)
    k.add_argument("--svg")
    k.set_defaults(func=cmd_select_k)

    e = sub.add_parser("eval", help="compare two labelings")
    e.add_argument("--truth", required=True, help="FILE or FILE:COLUMN (default: last column)")
    e.add_argument("--pred", required=True, help="FILE or FILE:COLUMN (default: last column)")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("datagen", help="generate labelled synthetic data")
    g.add_argument("--kind", choices=["mixture", "lda"], default="mixture")
    g.add_argument("--component", action="append", help="kind:weight[:concentration[:mu]], repeatable")
    g.add_argument("--d", type=int, default=3)
    g.add_argument("--n", type=_positive_int, default=200)
    g.add_argument("--topics", type=_positive_int, default=3)
    g.add_argument("--vocab", type=_positive_int, default=50)
    g.add_argument("--xi", type=float, default=200.0)
    g.add_argument("--docs", type=_positive_int, default=100)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_datagen)

    r = sub.add_parser("replicate", help="run a simulation grid")
    r.add_argument("--experiment", choices=sorted(EXPERIMENTS), required=True)
    r.add_argument("--replications", type=_positive_int, default=10)
    r.add_argument("--restarts", type=_positive_int, default=10)
    r.add_argument("--rhos", help="comma list of concentrations for tableA1")
    r.add_argument("--seed", type=int)
    r.add_argument("--out-dir", default=".")
    r.add_argument("--verbose", action="store_true")
    r.set_defaults(func=cmd_replicate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EfficiencyTooLow as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (AllRunsDegenerate, NonFiniteUpdate, DegenerateResultant, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (PkbdError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
