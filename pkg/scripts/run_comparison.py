"""Run several configs over their seeds, then write the CSV report.

Usage::

    python3 scripts/run_comparison.py configs/obstacle_*.json --out results/obstacle --jobs 4
    python3 scripts/run_comparison.py configs/gorilla_like_*.json --out results/gorilla_like

Records go to ``<out>/run_<hash>_<seed>.json`` and tables to ``<out>/report``.
A per-algorithm median summary is printed at the end.
"""
from __future__ import annotations

import argparse
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from safecoverage.harness.config import load_config, parse_seeds
from safecoverage.harness.report import convergence_table, load_records, write_report
from safecoverage.harness.runner import record_path, run_one, write_record


def _job(args):
    cfg, seed, out = args
    path = record_path(out, cfg, seed)
    if not path.exists():
        write_record(run_one(cfg, seed), path)
    return str(path)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="+")
    ap.add_argument("--out", required=True)
    ap.add_argument("--seeds", help="override every config's seeds, e.g. '0..9'")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    jobs = []
    for path in args.configs:
        cfg = load_config(path)
        seeds = parse_seeds(args.seeds) if args.seeds else cfg.seeds
        jobs += [(cfg, s, args.out) for s in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            list(pool.map(_job, jobs))
    else:
        for j in jobs:
            _job(j)

    for p in write_report(args.out, Path(args.out) / "report"):
        print(p)
    for row in convergence_table(load_records(args.out)):
        print(json.dumps({k: row[k] for k in ("algorithm", "n_runs", "n_converged", "safety_violations",
                                              "coverage_median", "samples_median")}))


if __name__ == "__main__":
    main()
