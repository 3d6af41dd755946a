"""Fold RunRecord files into CSV tables and plot-ready series."""
from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path
from typing import Iterable

import numpy as np

CONVERGENCE_COLUMNS = [
    "algorithm", "environment", "config_hash", "n_runs", "n_converged", "n_timed_out", "safety_violations",
    "coverage_median", "coverage_q25", "coverage_q75",
    "samples_median", "samples_q25", "samples_q75",
    "samples_rho_median", "samples_q_median", "rounds_median",
]
SAMPLES_COLUMNS = ["algorithm", "environment", "n_instances", "normalized_samples_mean",
                   "normalized_samples_median"]
SERIES_COLUMNS = ["algorithm", "environment", "config_hash", "seed", "round", "samples_total", "coverage",
                  "recommendation_coverage"]


def load_records(directory: str | Path) -> list[dict]:
    """Every record in ``run_*.json`` and ``*.jsonl`` files, in sorted file order."""
    directory = Path(directory)
    files = sorted(set(directory.glob("run_*.json")) | set(directory.glob("*.jsonl")))
    records = []
    for path in files:
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                records.append(json.loads(line))
    return records


def _quartiles(values: list[float]) -> tuple[float | None, float | None, float | None]:
    if not values:
        return None, None, None
    q25, q50, q75 = np.percentile(np.asarray(values, dtype=float), [25, 50, 75])
    return float(q50), float(q25), float(q75)


def _completed(records: Iterable[dict]) -> list[dict]:
    return [r for r in records if not r.get("timed_out")]


def convergence_table(records: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = defaultdict(list)
    for r in records:
        groups[(r["algorithm"], r["environment"], r["config_hash"])].append(r)
    rows = []
    for (alg, env, h), rs in sorted(groups.items()):
        done = _completed(rs)
        cov = [r["final_coverage_normalized"] for r in done if r.get("final_coverage_normalized") is not None]
        tot = [r["samples_total"] for r in done]
        c50, c25, c75 = _quartiles(cov)
        s50, s25, s75 = _quartiles(tot)
        rows.append({
            "algorithm": alg, "environment": env, "config_hash": h, "n_runs": len(rs),
            "n_converged": sum(bool(r.get("converged")) for r in rs),
            "n_timed_out": sum(bool(r.get("timed_out")) for r in rs),
            "safety_violations": sum(r.get("safety_violations") or 0 for r in done),
            "coverage_median": c50, "coverage_q25": c25, "coverage_q75": c75,
            "samples_median": s50, "samples_q25": s25, "samples_q75": s75,
            "samples_rho_median": _quartiles([r["samples_rho"] for r in done])[0],
            "samples_q_median": _quartiles([r["samples_q"] for r in done])[0],
            "rounds_median": _quartiles([r["n_rounds"] for r in done])[0],
        })
    return rows


def normalized_samples_table(records: list[dict]) -> list[dict]:
    """Samples divided by the largest count any algorithm needed on the same instance, then averaged."""
    by_instance: dict[tuple, list[dict]] = defaultdict(list)
    for r in _completed(records):
        by_instance[(r["environment"], r["seed"])].append(r)
    per_alg: dict[tuple, list[float]] = defaultdict(list)
    for (env, _), rs in by_instance.items():
        top = max(r["samples_total"] for r in rs)
        if top <= 0:
            continue
        for r in rs:
            per_alg[(r["algorithm"], env)].append(r["samples_total"] / top)
    rows = []
    for (alg, env), vals in sorted(per_alg.items()):
        rows.append({"algorithm": alg, "environment": env, "n_instances": len(vals),
                     "normalized_samples_mean": float(np.mean(vals)),
                     "normalized_samples_median": float(np.median(vals))})
    return rows


def coverage_series(records: list[dict]) -> list[dict]:
    rows = []
    for r in sorted(_completed(records), key=lambda r: (r["algorithm"], r["config_hash"], r["seed"])):
        for rd in r["rounds"]:
            rows.append({"algorithm": r["algorithm"], "environment": r["environment"],
                         "config_hash": r["config_hash"], "seed": r["seed"], "round": rd["round"],
                         "samples_total": rd["samples_rho"] + rd["samples_q"], "coverage": rd["coverage"],
                         "recommendation_coverage": rd["recommendation_coverage"]})
    return rows


def write_csv(path: Path, columns: list[str], rows: list[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row[k]) for k in columns})
    return path


def write_report(in_dir: str | Path, out_dir: str | Path) -> list[Path]:
    records = load_records(in_dir)
    out = Path(out_dir)
    return [
        write_csv(out / "convergence.csv", CONVERGENCE_COLUMNS, convergence_table(records)),
        write_csv(out / "samples_normalized.csv", SAMPLES_COLUMNS, normalized_samples_table(records)),
        write_csv(out / "coverage_vs_samples.csv", SERIES_COLUMNS, coverage_series(records)),
    ]
