#!/usr/bin/env python3
"""Run the simulation grids and write one CSV (plus an SVG for the curve
grids) per experiment into an output directory.

    python scripts/run_experiments.py --out results
    python scripts/run_experiments.py --only fig3 fig5 --replications 20
    python scripts/run_experiments.py --quick          # minutes, not hours

Every run is seeded; the same flags reproduce the same CSV files.
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from pkbd.experiments import EXPERIMENTS, ExperimentOptions, run_experiment
from pkbd.io import svg_line_plot, write_dict_rows

# x column and title for the experiments that are naturally plotted as curves
CURVES = {
    "fig3": ("noise_proportion", "ARI vs proportion of uniform noise (d = 5)"),
    "fig4": ("cosine", "ARI vs centroid cosine, two clusters plus 50% noise"),
    "fig5": ("cosine", "ARI vs pairwise centroid cosine, three clusters"),
}


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--only", nargs="+", choices=sorted(EXPERIMENTS), help="subset of experiments")
    p.add_argument("--replications", type=int, default=100)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true", help="3 replications, 2 restarts, M up to 5")
    p.add_argument("--verbose", action="store_true")
    args = p.parse_args(argv)

    opts = ExperimentOptions(replications=args.replications, seed=args.seed, restarts=args.restarts)
    if args.quick:
        opts.replications, opts.restarts, opts.m_max = 3, 2, 5
    if args.verbose:
        opts.progress = lambda msg: print(msg, file=sys.stderr)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.only or sorted(EXPERIMENTS):
        t0 = time.perf_counter()
        rows = run_experiment(name, opts)
        csv_path = out / f"{name}.csv"
        write_dict_rows(csv_path, rows)
        if name in CURVES:
            xcol, title = CURVES[name]
            svg = svg_line_plot([r[xcol] for r in rows], [r["ari_mean"] for r in rows], title, xcol, "mean ARI")
            (out / f"{name}.svg").write_text(svg)
        print(f"{name}: {len(rows)} rows -> {csv_path} ({time.perf_counter() - t0:.1f} s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
